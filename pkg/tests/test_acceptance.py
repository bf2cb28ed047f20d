"""Acceptance criteria, one test (and one printed PASS/FAIL line) per criterion.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they are produced; they are also collected into the terminal summary.
"""

import random
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from conftest import ACCEPTANCE_LINES
from wl3lab import exponents as ex
from wl3lab.flows import (
    X1,
    X2,
    X3,
    landau_flow,
    rotating_counterexample,
    serrin_flow,
    serrin_scaled,
    stationary_residual,
    very_weak_residual,
    weak_residual,
)
from wl3lab.grid import GridSpec, ScalarField, SpaceTimeField, TimeGrid, VectorField, ball_mask, div, integrate, sample_function
from wl3lab.kernels import (
    decay_scan,
    heat_kernel,
    oseen_derivative,
    oseen_sample,
    oseen_tensor,
    tail_exponent,
)
from wl3lab.localization import localize
from wl3lab.lorentz import lorentz_norm, rearrange, weak_norm
from wl3lab.picard import (
    PicardConfig,
    PicardProblem,
    contraction_threshold_scan,
    flow_epsilon,
    iterate,
    lambda_map,
    uniqueness_probe,
)
from wl3lab.stokes import (
    DuhamelConfig,
    build_v0,
    duhamel_phi,
    phi_boundedness_probe,
    random_stress_battery,
    yamazaki_probe,
)

pytestmark = pytest.mark.slow


def record(suite: str, name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {suite:<12} {name:<34} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# ---------------------------------------------------------------------------
# kernels


class TestKernelSuite:
    def test_heat_unit_mass(self):
        g = GridSpec(16.0, 64)
        errs = []
        for t in (0.05, 0.2, 0.5):
            gam = sample_function(lambda x: heat_kernel(np.moveaxis(x, 0, -1), t), g)
            errs.append(abs(integrate(gam) - 1.0))
        assert record("kernel", "heat kernel unit mass", max(errs) <= 1e-8, f"max |mass - 1| = {max(errs):.2e} (tol 1e-8)")

    def test_oseen_vs_quadrature(self):
        rng = np.random.default_rng(0)
        errs = []
        for _ in range(20):
            x = rng.uniform(-3, 3, 3)
            t = float(10 ** rng.uniform(-1, 0.5))
            a = oseen_sample(x, t).value
            b = oseen_sample(x, t, "quadrature_oracle").value
            errs.append(np.abs(a - b).max() / np.abs(b).max())
        worst = max(errs)
        assert record("kernel", "Oseen closed form vs quadrature", worst <= 1e-6, f"20 points, max rel err {worst:.2e} (tol 1e-6)")

    def test_trace_and_divergence(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-4, 4, (200, 3))
        t = 10 ** rng.uniform(-2, 1, 200)
        S = oseen_tensor(x, t)
        # relative to the tensor scale: far out Γ underflows while S ~ |x|^-3
        scale = np.abs(S).reshape(200, -1).max(axis=-1)
        tr_err = np.max(np.abs(np.trace(S, axis1=-2, axis2=-1) - 2 * heat_kernel(x, t)) / scale)
        D = oseen_derivative(x, t)
        div_err = np.max(np.abs(np.einsum("...ijj->...i", D)).max(axis=-1) / np.abs(D).reshape(200, -1).max(axis=-1))
        ok = tr_err <= 1e-8 and div_err <= 1e-8
        assert record("kernel", "trace law and row divergence", ok, f"trace rel {tr_err:.1e}, div rel {div_err:.1e} (tol 1e-8)")

    def test_decay_scan_stability(self):
        reps = [decay_scan(l, k) for l in (0, 1) for k in (0, 1)]
        ok = all(r.stable for r in reps) and [r.weight_exponent for r in reps] == [3, 5, 4, 6]
        detail = ", ".join(f"(l,k)=({r.l},{r.k}) C={r.C_emp:.3g} d={r.stability_pct:.1f}%" for r in reps)
        assert record("kernel", "decay constants stable (<=10%)", ok, detail)


# ---------------------------------------------------------------------------
# Lorentz


class TestLorentzSuite:
    def test_ball_indicator(self):
        exact = (4 * np.pi / 3) ** (1 / 3)
        errs = {}
        for N in (32, 64, 128):
            g = GridSpec(8.0, N)
            errs[N] = abs(weak_norm(ScalarField(g, ball_mask(g, 1.0).astype(float))) - exact) / exact
        ok = errs[64] <= 0.02 and errs[32] > errs[64] > errs[128]
        detail = ", ".join(f"N={n}: {100 * e:.2f}%" for n, e in errs.items())
        assert record("lorentz", "weak-L3 norm of unit-ball indicator", ok, detail + " (tol 2% at N=64, decreasing)")

    def test_inverse_radius_R_independent(self):
        # The discrete sup sits on the eight cells touching the singularity
        # (value 4/sqrt(3) on the half-shifted grid), so R-independence of the
        # norm alone is cheap. The profile s^{1/3} f*(s) away from those cells
        # must also sit on the continuum plateau (4 pi / 3)^{1/3} for every R.
        g = GridSpec.half_shifted(8.0, 64)
        f = sample_function(lambda x: 1 / np.sqrt(np.sum(x**2, axis=0)), g)
        plateau = (4 * np.pi / 3) ** (1 / 3)
        vals, dev = [], []
        for R in (1.0, 2.0, 3.0, 3.9):
            prof = rearrange(f, ball_mask(g, R), g.cell_volume)
            vals.append(weak_norm(f, ball_mask(g, R)))
            dev.append(abs(np.median((prof.volumes ** (1 / 3) * prof.magnitudes)[1000:]) / plateau - 1))
        spread = (max(vals) - min(vals)) / max(vals)
        ok = spread <= 0.01 and max(dev) <= 0.01
        detail = f"values {[round(v, 4) for v in vals]}, spread {100 * spread:.3f}%, plateau dev {max(dev):.1e} (tol 1%)"
        assert record("lorentz", "weak-L3 norm of 1/|x| vs radius", ok, detail)

    def test_quasinorm_ordering(self):
        rng = np.random.default_rng(2024)
        violations = 0
        for _ in range(100):
            n = int(rng.integers(10, 2000))
            f = rng.standard_normal(n) * rng.exponential(1.0, n) ** int(rng.integers(1, 4))
            q = float(rng.uniform(1.1, 6.0))
            cv = float(rng.uniform(1e-3, 1.0))
            rs = sorted(rng.uniform(1.0, 12.0, 3), reverse=True)
            chain = [lorentz_norm(f, None, q, np.inf, cv).value]
            chain += [lorentz_norm(f, None, q, r, cv).value for r in rs]
            chain.append(lorentz_norm(f, None, q, 1.0, cv).value)
            violations += sum(a > b * (1 + 1e-12) for a, b in zip(chain, chain[1:]))
        assert record("lorentz", "L^{q,inf} <= L^{q,r} <= L^{q,1}", violations == 0, f"100 random fields, {violations} violations")


# ---------------------------------------------------------------------------
# localization


@pytest.fixture(scope="module")
def serrin_l4():
    """Localized Serrin flow on L = 4 at three resolutions (final frame kept)."""
    tg = TimeGrid(0, 1, 8)
    out = {}
    for N in (64, 96, 128):
        g = GridSpec(4.0, N)
        u, _ = serrin_flow().sample(g, tg)
        st = localize(u, None, forcing=False)
        out[N] = (g, st.u_tilde.frame(-1), st.eta)
        del u, st
    return out


class TestLocalizationSuite:
    def test_divergence_order(self, serrin_l4):
        Ns = sorted(serrin_l4)
        errs = [np.abs(div(serrin_l4[N][1]).values).max() for N in Ns]
        orders = [np.log(errs[i] / errs[i + 1]) / np.log(Ns[i + 1] / Ns[i]) for i in range(2)]
        fit = -np.polyfit(np.log(Ns), np.log(errs), 1)[0]
        ok = fit >= 2 and min(orders) >= 2
        detail = f"max|div| {[f'{e:.3g}' for e in errs]} at N={Ns}, orders {[round(float(o), 2) for o in orders]}, fit {fit:.2f}"
        assert record("localization", "div u~ converges at order >= 2", ok, detail)

    def test_zero_before_switch_on(self):
        g, tg = GridSpec(4.0, 32), TimeGrid(0, 1, 40)
        u, _ = serrin_flow().sample(g, tg)
        st = localize(u, None, forcing=False)
        early = tg.nodes < 1 / 20
        top = float(np.abs(st.u_tilde.values[early]).max())
        assert record("localization", "u~ = 0 for t < 1/20", top == 0.0, f"{early.sum()} frames, max |u~| = {top}")

    def test_eta_harmonic(self, serrin_l4):
        g, _, eta = serrin_l4[64]
        mask = ball_mask(g, 0.9)
        worst = 0.0
        for m in range(eta.nframes):
            e = eta.values[m]
            top = np.abs(e).max()
            if top == 0:
                continue
            lap = g.ifft(-g.k_squared * g.fft(e))
            worst = max(worst, np.abs(lap[mask]).max() / top)
        assert record("localization", "eta harmonic on B_0.9", worst <= 1e-8, f"max |lap eta| / max |eta| = {worst:.2e} (tol 1e-8)")

    @pytest.mark.xfail(strict=True, reason="grad eta decays like |x|^-3 or faster: the source is a divergence with zero mean")
    def test_eta_gradient_tail(self):
        g = GridSpec(8.0, 64)
        u, _ = serrin_flow().sample(g, TimeGrid(0, 1, 8))
        eta = localize(u, None, forcing=False).eta.values[-1]
        spec = g.fft(eta)
        grad_mag = np.sqrt(sum(g.ifft(1j * k * spec) ** 2 for k in g.derivative_wavenumbers))
        slope, _ = tail_exponent(grad_mag, g.radius(), 2.0, g.L / 2)
        ok = abs(slope + 2) <= 0.1
        record("localization", "|grad eta| tail exponent -2 +- 0.1", ok, f"fitted slope {slope:.2f} on 2 < |x| < {g.L / 2:g}")
        assert ok


# ---------------------------------------------------------------------------
# Picard


@pytest.fixture(scope="module")
def small_data_run():
    g, tg = GridSpec(8.0, 48), TimeGrid(0, 1, 64)
    u1, _ = serrin_scaled(1.0).sample(g, tg)
    amp = 0.99e-2 / flow_epsilon(u1)
    del u1
    u, p = serrin_scaled(amp).sample(g, tg)
    eps = flow_epsilon(u)
    problem = PicardProblem.from_flow(u, p)
    del u, p
    v, trace = iterate(problem, PicardConfig())
    return eps, problem, v, trace


class TestPicardSuite:
    def test_small_data_convergence(self, small_data_run):
        eps, problem, _, tr = small_data_run
        rep, _ = uniqueness_probe(problem, PicardConfig())
        ok = (
            eps <= 1e-2
            and tr.verdict == "converged"
            and tr.max_ratio < 0.5
            and tr.residual <= 1e-8
            and rep.spread <= 1e-8
            and all(v == "converged" for v in rep.verdicts)
        )
        detail = (
            f"eps {eps:.4g}, {tr.verdict} in {tr.iterations}, max ratio {tr.max_ratio:.2e}, "
            f"residual {tr.residual:.1e}, uniqueness spread {rep.spread:.1e}"
        )
        assert record("picard", "small-data convergence and uniqueness", ok, detail)

    def test_lambda_affine(self, small_data_run):
        _, problem, _, _ = small_data_run
        g, tg = problem.v0.grid, problem.v0.time
        rng = np.random.default_rng(5)
        v = SpaceTimeField(tg, g, rng.standard_normal((tg.size, 3, *g.shape)))
        w = SpaceTimeField(tg, g, rng.standard_normal((tg.size, 3, *g.shape)))
        a = 0.37
        lhs = lambda_map(v * a + w * (1 - a), problem).values
        rhs = (lambda_map(v, problem) * a + lambda_map(w, problem) * (1 - a)).values
        err = np.abs(lhs - rhs).max() / np.abs(rhs).max()
        assert record("picard", "Lambda affinity", err <= 1e-13, f"rel err {err:.1e} (machine precision)")

    def test_geometric_decay(self, small_data_run):
        _, _, _, tr = small_data_run
        ok = tr.geometric_decay_ok(tail_start=1, slack=0.05)
        ratios = ", ".join(f"{r:.2e}" for _, r in tr.ratios)
        assert record("picard", "geometric decay within 5%", ok, f"ratios {ratios}")

    def test_threshold_scan(self):
        tg = TimeGrid(0, 1, 16)
        stars, mono = {}, {}
        for N in (32, 48):
            g = GridSpec(8.0, N)
            rep = contraction_threshold_scan(
                lambda a: serrin_scaled(a).sample(g, tg), [0, 1, 3, 10, 30, 100], PicardConfig(max_iters=3), bisection_steps=6
            )
            stars[N], mono[N] = rep.epsilon_star, rep.monotone
        gap = abs(stars[32] - stars[48]) / stars[48]
        ok = all(mono.values()) and np.isfinite(gap) and gap <= 0.2
        detail = f"eps* N=32: {stars[32]:.4g}, N=48: {stars[48]:.4g}, gap {100 * gap:.1f}% (tol 20%), monotone {all(mono.values())}"
        assert record("picard", "amplitude scan threshold", ok, detail)


# ---------------------------------------------------------------------------
# exponent ledger


def _admissible_pairs(n, seed):
    rnd = random.Random(seed)
    out = []
    while len(out) < n:
        q = ex.INF if rnd.random() < 0.1 else ex.ext(3 + Fraction(rnd.randint(1, 400), rnd.randint(1, 20)))
        room = 1 - 3 * q.reciprocal()
        frac = Fraction(rnd.randint(1, 99), 100)
        inv_s = min(room.fraction * frac / 2, Fraction(1, 3))
        s = ex.INF if rnd.random() < 0.1 else ex.ext(1 / inv_s)
        out.append((q, s))
    return out


class TestLedgerSuite:
    def test_nine_nine(self):
        led = ex.bootstrap_schedule(9, 9)
        chain = tuple(str(p) for p in led["p"])
        want = ("3/2", "12/7", "2", "12/5", "3", "4", "6", "12", "inf")
        ok = led["K"] == 8 and led["sigma"] == Fraction(1, 12) and chain == want
        assert record("ledger", "(9,9) bootstrap schedule", ok, f"K={led['K']}, sigma={led['sigma']}, p=({', '.join(chain)})")

    def test_random_schedules(self):
        bad = 0
        for q, s in _admissible_pairs(50, 7):
            led = ex.bootstrap_schedule(q, s)
            gap = (1 - 3 * q.reciprocal() - 2 * s.reciprocal()).fraction
            K = 1
            while not Fraction(2, 3 * K) < gap / 5:
                K += 1
            bad += not (led["K"] == K and led["p_K"] == ex.INF and led.ok)
        assert record("ledger", "p_K = inf and K minimal", bad == 0, f"50 admissible pairs, {bad} failures")

    def test_source_equivalence(self):
        rnd = random.Random(11)
        bad = 0
        for _ in range(100):
            q = 3 + Fraction(rnd.randint(1, 300), rnd.randint(1, 30))
            s = 2 * q / (q - 3)
            m = 1 + (s - 1) * Fraction(rnd.randint(0, 50), 50)
            delta = Fraction(rnd.randint(0, 100), rnd.randint(1, 10))
            led = ex.source_exponent_conditions(q, s, m, delta)
            c = {k.name: k.holds for k in led.conditions}
            # independent restatement of the reduced form
            direct = 1 / m < 3 / s + Fraction(3, 2) / (q + delta)
            bad += not (c["time_integrability"] == c["reduced_form"] == direct)
        assert record("ledger", "time-integrability <=> reduced form", bad == 0, f"100 exact tuples, {bad} failures")

    def test_m_threshold(self):
        at4 = ex.pressure_m_condition(4)["threshold"]
        rnd = random.Random(3)
        qs = [6 + Fraction(rnd.randint(1, 10**4), rnd.randint(1, 100)) for _ in range(200)] + [ex.INF]
        below = all(ex.pressure_m_condition(q)["threshold"] < 1 for q in qs)
        ok = at4 == Fraction(4, 3) and below
        assert record("ledger", "pressure m-threshold", ok, f"q=4: {at4}; q>6 (201 samples) all below 1: {below}")


# ---------------------------------------------------------------------------
# residuals


class TestResidualSuite:
    def test_serrin_weak_residual(self):
        res = {m: weak_residual(serrin_flow(), n=48, m=m, tol=1e-6) for m in (16, 32, 64)}
        e = [res[m].max_residual for m in (16, 32, 64)]
        orders = [np.log2(e[0] / e[1]), np.log2(e[1] / e[2])]
        ok = res[64].verdict == "pass" and min(orders) >= 2
        detail = f"max residual {[f'{x:.2g}' for x in e]} at m=16/32/64, orders {[round(float(o), 1) for o in orders]}"
        assert record("residual", "Serrin flow weak residual", ok, detail)

    def test_non_solutions_fail(self):
        tol = 1e-6
        rot = very_weak_residual(rotating_counterexample(), n=48, m=64, tol=tol).max_residual
        flip = weak_residual(serrin_flow(), n=48, m=64, tol=tol, nonlinear_sign=-1.0).max_residual
        ok = min(rot, flip) >= 10 * tol
        assert record("residual", "non-solutions fail by >= 10x tol", ok, f"rotating {rot:.2e}, sign-flipped Serrin {flip:.2e}")

    def test_landau(self):
        flow = landau_flow(2.0)
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((3, 500))
        pts /= np.linalg.norm(pts, axis=0)
        res, scale = stationary_residual(flow, pts)
        worst = float(np.abs(res).max())
        # exact homogeneity: λ u(λx) - u(x) and λ² p(λx) - p(x) vanish symbolically
        exact = landau_flow(sp.Rational(3, 2))
        lam = sp.Symbol("lam", positive=True)
        sub = {X1: lam * X1, X2: lam * X2, X3: lam * X3}
        hom = all(sp.simplify(lam * c.xreplace(sub) - c) == 0 for c in exact.symbolic["u"])
        hom &= sp.simplify(lam**2 * exact.symbolic["p"].xreplace(sub) - exact.symbolic["p"]) == 0
        ok = worst <= 1e-6 and hom
        detail = f"max |residual| on unit sphere {worst:.1e} (term scale {scale.max():.2g}), homogeneity exact: {hom}"
        assert record("residual", "Landau stationary and homogeneous", ok, detail)


# ---------------------------------------------------------------------------
# operators


class TestOperatorSuite:
    def test_single_mode_phi(self):
        g, tg = GridSpec(8.0, 32), TimeGrid(0, 1, 128)
        kap = 2 * np.pi / g.L
        x2 = g.coords[1]
        F = np.zeros((tg.size, 3, 3, *g.shape))
        F[:, 0, 1] = np.sin(kap * x2)
        out = duhamel_phi(SpaceTimeField(tg, g, F), DuhamelConfig(tg))
        amp = (1 - np.exp(-(kap**2) * tg.nodes)) / kap**2 * kap
        exact = np.zeros_like(out.values)
        exact[:, 0] = amp[:, None, None, None] * np.cos(kap * x2)
        err = np.abs(out.values - exact).max() / np.abs(exact).max()
        assert record("operator", "Phi single-mode closed form", err <= 1e-6, f"M=128, rel err {err:.1e} (tol 1e-6)")

    def test_v0_paths_agree(self):
        g, tg = GridSpec(8.0, 32), TimeGrid(0, 1, 32)
        w = 0.6

        def f0(x, t):
            b = np.exp(-np.sum(x**2, axis=0) / w**2)
            db = -2 * x * b / w**2
            # ∇b + ∇×(b e3): compactly concentrated, with a compactly concentrated solenoidal part
            return np.stack([db[0] + db[1], db[1] - db[0], db[2]]) * (1 + np.sin(3 * t))

        F0 = sample_function(f0, g, tg)
        spec = build_v0(F0, None, DuhamelConfig(tg))
        frames = (8, 16, 32)
        osn = build_v0(F0, None, DuhamelConfig(tg, path="oseen_quadrature", frames=frames))
        mask = ball_mask(g, 2.0)
        errs = []
        for m in frames:
            a, b = spec.values[m][:, mask], osn[m].values[:, mask]
            errs.append(np.linalg.norm(b - a) / np.linalg.norm(a))
        worst = max(errs)
        assert record("operator", "v0 spectral vs Oseen quadrature", worst <= 1e-3, f"N=32, rel L2 on B_2 at t=1/4,1/2,1: {worst:.1e} (tol 1e-3)")

    def test_phi_boundedness(self):
        g, tg = GridSpec(8.0, 48), TimeGrid(0, 1, 64)
        rep = phi_boundedness_probe(random_stress_battery(g, tg, 20, seed=0), DuhamelConfig(tg))
        ok = np.isfinite(rep.C_emp) and rep.stability_pct <= 20
        detail = f"20 histories, C_emp {rep.C_emp:.4g}, first-half {rep.C_half:.4g}, change {rep.stability_pct:.1f}% (tol 20%)"
        assert record("operator", "Phi weak-type boundedness", ok, detail)

    def test_yamazaki_tail(self):
        g = GridSpec(2 * np.pi, 32)
        x2 = g.coords[1]
        u = VectorField(g, np.stack([np.sin(2 * np.pi * x2 / g.L), 0 * x2, 0 * x2]))
        rep = yamazaki_probe(u, 1.5, 3.0, 10.0)
        rel = rep.tail_increment / rep.value
        assert record("operator", "time-weighted integral tail", rel <= 1e-4, f"value {rep.value:.4g}, tail/value {rel:.1e} (tol 1e-4)")
