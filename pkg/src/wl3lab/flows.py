"""Closed-form test flows and weak/strong residual checkers.

Flows are closed-form callables ``u(x, t)`` and ``p(x, t)`` with ``x`` of
shape ``(3, ...)``. Residuals are evaluated on local quadrature grids
around each test function rather than on a global box, so they measure the
equations and not a periodic surrogate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from .grid import GridSpec, SpaceTimeField, TimeGrid, VectorField, sample_function
from .localization import smoothstep
from .stokes import ProjectionOperator

__all__ = [
    "TestFlow",
    "serrin_flow",
    "serrin_scaled",
    "rotating_counterexample",
    "landau_flow",
    "random_solenoidal",
    "TestFunction",
    "default_battery",
    "ResidualReport",
    "weak_residual",
    "very_weak_residual",
    "linearized_residual",
    "divergence_residual",
]

X1, X2, X3, T = sp.symbols("x1 x2 x3 t", real=True)
_XS = (X1, X2, X3)


@dataclass(frozen=True, eq=False)
class TestFlow:
    __test__ = False  # not a pytest class

    name: str
    velocity: Callable
    pressure: Callable | None = None
    properties: dict = field(default_factory=dict)
    symbolic: dict = field(default_factory=dict, repr=False)

    def u(self, x, t=0.0):
        return self.velocity(np.asarray(x, dtype=float), t)

    def p(self, x, t=0.0):
        if self.pressure is None:
            raise ValueError(f"flow {self.name!r} has no pressure")
        return self.pressure(np.asarray(x, dtype=float), t)

    def sample(self, grid: GridSpec, time: TimeGrid):
        u = sample_function(self.velocity, grid, time)
        p = sample_function(self.pressure, grid, time) if self.pressure is not None else None
        return u, p


def _lambdify_vec(exprs):
    f = sp.lambdify((X1, X2, X3, T), list(exprs), "numpy")

    def call(x, t):
        x = np.asarray(x, dtype=float)
        out = f(x[0], x[1], x[2], t)
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape[1:]) for c in out])

    return call


def _lambdify_scalar(expr):
    f = sp.lambdify((X1, X2, X3, T), expr, "numpy")

    def call(x, t):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x[0], x[1], x[2], t), dtype=float), x.shape[1:]).copy()

    return call


def _strong_residual(u, p, time_dependent=True):
    res = []
    for i in range(3):
        conv = sum(u[j] * sp.diff(u[i], _XS[j]) for j in range(3))
        lap = sum(sp.diff(u[i], v, 2) for v in _XS)
        dt = sp.diff(u[i], T) if time_dependent else 0
        res.append(dt + conv + sp.diff(p, _XS[i]) - lap)
    return res


def serrin_flow(g="t", h="x1*x2") -> TestFlow:
    """``u = g(t)∇h(x)``, ``p = -g'(t)h - g(t)²|∇h|²/2`` for harmonic polynomial ``h``."""
    loc = {"x1": X1, "x2": X2, "x3": X3, "t": T}
    g_e = sp.sympify(g, locals=loc)
    h_e = sp.sympify(h, locals=loc)
    if not h_e.is_polynomial(*_XS) or sp.Poly(h_e, *_XS).total_degree() > 4:
        raise ValueError("h must be a polynomial of degree at most 4")
    if sp.simplify(sum(sp.diff(h_e, v, 2) for v in _XS)) != 0:
        raise ValueError(f"h = {h_e} is not harmonic")
    if g_e.free_symbols - {T}:
        raise ValueError("g may depend on t only")
    gh = [sp.diff(h_e, v) for v in _XS]
    u = [g_e * c for c in gh]
    p = -sp.diff(g_e, T) * h_e - g_e**2 * sum(c**2 for c in gh) / 2
    res = [sp.simplify(r) for r in _strong_residual(u, p)]
    div = sp.simplify(sum(sp.diff(u[i], _XS[i]) for i in range(3)))
    props = {"divergence_free": div == 0, "strong_residual_zero": all(r == 0 for r in res), "g": str(g_e), "h": str(h_e)}
    if not (props["divergence_free"] and props["strong_residual_zero"]):
        raise RuntimeError("Serrin flow failed its symbolic self-check")
    return TestFlow(f"serrin[g={g_e}, h={h_e}]", _lambdify_vec(u), _lambdify_scalar(p), props, {"u": u, "p": p})


def serrin_scaled(amplitude: float) -> TestFlow:
    """``u = a t (x2, x1, 0)``, the amplitude family used by the Picard experiments."""
    return serrin_flow(g=f"({float(amplitude)!r})*t", h="x1*x2")


def rotating_counterexample() -> TestFlow:
    """``u = t (x2, -x1, 0)``: solenoidal but ``∂_t u`` is not a gradient, so no
    pressure makes it a solution."""
    u = [T * X2, -T * X1, sp.Integer(0)]
    return TestFlow("rotating_counterexample", _lambdify_vec(u), None, {"divergence_free": True, "solution": False}, {"u": u})


def landau_flow(a: float) -> TestFlow:
    """Landau jet with axis ``e3`` and parameter ``a > 1`` (unit viscosity).

    In spherical coordinates with ``c = cos θ``::

        u_r = (2/r) ((a²-1)/(a-c)² - 1),   u_θ = -2 sin θ / (r (a-c)),
        p   = 4 (a c - 1) / (r² (a-c)²).
    """
    if not a > 1:
        raise ValueError(f"Landau parameter must exceed 1, got {a}")
    A = sp.Float(a, 30) if not isinstance(a, sp.Basic) else a
    r = sp.sqrt(X1**2 + X2**2 + X3**2)
    c = X3 / r
    er = [X1 / r, X2 / r, X3 / r]
    e3 = [0, 0, 1]
    radial = (2 / r) * ((A**2 - 1) / (A - c) ** 2 - 1)
    polar = -2 / (r * (A - c))
    u = [radial * er[i] + polar * (c * er[i] - e3[i]) for i in range(3)]
    p = 4 * (A * c - 1) / (r**2 * (A - c) ** 2)
    return TestFlow(f"landau[a={a}]", _lambdify_vec(u), _lambdify_scalar(p), {"stationary": True, "homogeneity": -1, "a": float(a)}, {"u": u, "p": p})


def stationary_residual(flow: TestFlow, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``u·∇u + ∇p - Δu`` from exact symbolic derivatives.

    Returns ``(residual, scale)`` with ``scale`` the sum of the term
    magnitudes at each point.
    """
    u, p = flow.symbolic["u"], flow.symbolic["p"]
    conv = [sum(u[j] * sp.diff(u[i], _XS[j]) for j in range(3)) for i in range(3)]
    gp = [sp.diff(p, v) for v in _XS]
    lap = [sum(sp.diff(u[i], v, 2) for v in _XS) for i in range(3)]
    f = sp.lambdify((X1, X2, X3), [conv, gp, lap], "numpy")
    pts = np.asarray(points, dtype=float)
    C, G, Lp = (np.array(v, dtype=float) for v in f(pts[0], pts[1], pts[2]))
    res = C + G - Lp
    scale = np.abs(C) + np.abs(G) + np.abs(Lp)
    return res, scale


def random_solenoidal(grid: GridSpec, seed: int = 0, shells=(1, 4), amplitude: float = 1.0) -> VectorField:
    """Leray-projected random field with energy on ``shells[0] <= |n| <= shells[1]``
    (integer wavenumbers ``n = k L / 2π``), below the Nyquist index."""
    lo, hi = shells
    if hi >= grid.N // 2:
        raise ValueError("band limit must stay below the Nyquist index")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((3, *grid.shape))
    spec = grid.fft(raw)
    n = np.sqrt(grid.k_squared) * grid.L / (2 * np.pi)
    band = (n >= lo - 1e-9) & (n <= hi + 1e-9)
    spec = ProjectionOperator(grid).apply_spectrum(spec * band)
    vals = grid.ifft(spec)
    top = np.abs(vals).max()
    vals = amplitude * vals / top if top > 0 else vals
    return VectorField(grid, vals, meta={"seed": seed, "shells": [lo, hi]})


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """``ζ(x, t) = χ((t - t_c)/w) · B((x - c)/ρ)`` with ``B = β e_k``
    (plain) or ``B = ∇β × e_k`` (solenoidal), ``β(y) = ψ(1 - |y|²)``, ``χ(τ) = ψ(1 - τ²)``."""

    __test__ = False

    center: tuple
    scale: float
    component: int
    t_center: float = 0.5
    t_width: float = 0.25
    solenoidal: bool = False

    def fits(self, radius: float = np.inf, t_range=(0.0, 1.0)) -> bool:
        return (np.linalg.norm(self.center) + self.scale <= radius) and (
            t_range[0] <= self.t_center - self.t_width and self.t_center + self.t_width <= t_range[1]
        )

    def time_profile(self, t):
        tau = (np.asarray(t, dtype=float) - self.t_center) / self.t_width
        s = 1 - tau**2
        chi = smoothstep(s)
        dchi = smoothstep(s, 1) * (-2 * tau) / self.t_width
        return chi, dchi

    def spatial(self, x):
        """Return ``(ζ, div ζ, ∇ζ, Δζ)`` of the spatial factor; ``∇ζ[i, j] = ∂_i ζ_j``."""
        rho = self.scale
        y = (np.asarray(x, dtype=float) - np.reshape(self.center, (3,) + (1,) * (np.ndim(x) - 1))) / rho
        y2 = np.sum(y**2, axis=0)
        s = 1 - y2
        d1, d2, d3 = (smoothstep(s, k) for k in (1, 2, 3))
        k = self.component
        # derivatives of β(y) = ψ(1 - |y|²) with respect to y
        gb = -2 * d1 * y  # ∂_i β
        hb = 4 * d2 * y[:, None] * y[None, :] - 2 * d1 * np.eye(3).reshape(3, 3, *([1] * y2.ndim))  # ∂_i∂_j β
        if not self.solenoidal:
            beta = smoothstep(s)
            zeta = np.zeros((3, *y2.shape))
            zeta[k] = beta
            grad = np.zeros((3, 3, *y2.shape))
            grad[:, k] = gb / rho
            lap = np.zeros_like(zeta)
            lap[k] = (4 * y2 * d2 - 6 * d1) / rho**2
            divz = gb[k] / rho
            return zeta, divz, grad, lap
        # ζ = ∇β × e_k: ζ_j = ε_{j a k} ∂_a β
        eps = np.zeros((3, 3, 3))
        for (i, j, l) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
            eps[i, j, l], eps[j, i, l] = 1, -1
        zeta = np.einsum("ja,a...->j...", eps[:, :, k], gb) / rho
        grad = np.einsum("ja,ia...->ij...", eps[:, :, k], hb) / rho**2
        # ∂_a Δβ = y_a (20 ψ'' - 8 |y|² ψ''')
        glap = y * (20 * d2 - 8 * y2 * d3)
        lap = np.einsum("ja,a...->j...", eps[:, :, k], glap) / rho**3
        return zeta, np.zeros(y2.shape), grad, lap

    def as_dict(self) -> dict:
        return {
            "center": list(self.center),
            "scale": self.scale,
            "component": self.component,
            "t_center": self.t_center,
            "t_width": self.t_width,
            "solenoidal": self.solenoidal,
        }


def default_battery(solenoidal: bool = False, radius: float = 1.0) -> list[TestFunction]:
    """21 test functions: scales {0.2, 0.4, 0.8}, 7 lattice centres, supports inside ``B_radius``."""
    out = []
    tcs = (0.3, 0.5, 0.7)
    i = 0
    for rho in (0.2, 0.4, 0.8):
        off = max(0.0, min(0.5, radius - rho) * 0.8)
        centres = [(0.0, 0.0, 0.0)] + [tuple(s * off * e) for e in np.eye(3) for s in (1, -1)]
        for c in centres:
            out.append(TestFunction(tuple(float(v) for v in c), rho, i % 3, tcs[i % 3], 0.25, solenoidal))
            i += 1
    return out


# ---------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ResidualReport:
    flow: str
    battery_id: str
    residuals: np.ndarray
    raw: np.ndarray
    tol: float
    n_space: int
    n_time: int

    @property
    def verdict(self) -> str:
        return "pass" if np.all(np.abs(self.residuals) <= self.tol) else "fail"

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    def to_json(self) -> str:
        return json.dumps(
            {"flow": self.flow, "battery_id": self.battery_id, "residuals": self.residuals.tolist(), "tol": self.tol, "verdict": self.verdict}
        )


def _local_grid(tf: TestFunction, n: int, m: int):
    """Quadrature on ``B(c, ρ) × (t_c - w, t_c + w)``.

    Space: Gauss-Legendre in ``r`` and ``cos θ`` (``n`` nodes each) and the
    trapezoid rule in the azimuth (``n`` nodes); the test functions vanish
    to all orders on the sphere, where Cartesian grids converge slowly.
    Time: ``m``-point midpoint rule. Returns ``(x, weights, t, dt)``.
    """
    xg, wg = np.polynomial.legendre.leggauss(n)
    r = 0.5 * tf.scale * (xg + 1)
    wr = 0.5 * tf.scale * wg * r**2
    ct, wc = xg, wg
    st = np.sqrt(1 - ct**2)
    ph = 2 * np.pi * np.arange(n) / n
    wp = np.full(n, 2 * np.pi / n)
    R, C, P = np.meshgrid(r, ct, ph, indexing="ij")
    S = np.sqrt(1 - C**2)
    x = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C]) + np.reshape(tf.center, (3, 1, 1, 1))
    w = wr[:, None, None] * wc[None, :, None] * wp[None, None, :]
    dt = 2 * tf.t_width / m
    t = tf.t_center - tf.t_width + (np.arange(m) + 0.5) * dt
    return x, w, t, dt


def _residual_terms(u_fn, p_fn, tf: TestFunction, n: int, m: int, nonlinear_sign: float = 1.0, w_fn=None):
    """Integrals of the linear, nonlinear and pressure terms, and the
    integral of the sum of their absolute integrands (the scale)."""
    x, dv, ts, dt = _local_grid(tf, n, m)
    zeta, divz, grad, lap = tf.spatial(x)
    chi, dchi = tf.time_profile(ts)
    terms = np.zeros(3)
    scale = 0.0
    for t, c, dc in zip(ts, chi, dchi):
        if c == 0 and dc == 0:
            continue
        u = np.asarray(u_fn(x, t), dtype=float)
        if w_fn is None:
            lin = np.sum(u * (-dc * zeta - c * lap), axis=0)
            nl = -nonlinear_sign * c * np.einsum("i...,j...,ij...->...", u, u, grad)
        else:
            w = np.asarray(w_fn(x, t), dtype=float)
            lin = np.sum(w * (-dc * zeta - c * lap), axis=0)
            nl = -c * (np.einsum("i...,j...,ij...->...", u, w, grad) + np.einsum("i...,j...,ij...->...", w, u, grad))
        pr = np.zeros(())
        if p_fn is not None and not tf.solenoidal:
            pr = -c * np.asarray(p_fn(x, t), dtype=float) * divz
        terms += np.array([np.sum(lin * dv), np.sum(nl * dv), np.sum(pr * dv)]) * dt
        scale += (np.sum(np.abs(lin) * dv) + np.sum(np.abs(nl) * dv) + np.sum(np.abs(pr) * dv)) * dt
    return terms, scale


def _report(flow_name, battery, u_fn, p_fn, n, m, tol, battery_id, nonlinear_sign=1.0):
    res, raw = [], []
    for tf in battery:
        terms, scale = _residual_terms(u_fn, p_fn, tf, n, m, nonlinear_sign)
        total = float(terms.sum())
        raw.append(total)
        res.append(total / scale if scale > 0 else 0.0)
    return ResidualReport(flow_name, battery_id, np.array(res), np.array(raw), tol, n, m)


def _fn(flow, attr):
    if isinstance(flow, TestFlow):
        return getattr(flow, attr)
    return flow


def weak_residual(flow, battery=None, n: int = 48, m: int = 64, tol: float = 1e-6, pressure="flow", nonlinear_sign: float = 1.0, domain_radius: float = np.inf) -> ResidualReport:
    """``∫∫ u·(-∂_tζ - Δζ) - u_i u_j ∂_iζ_j - p div ζ`` per test function.

    Each entry of ``residuals`` is normalised by ``∫∫`` of the summed
    absolute integrands of the three terms; ``raw`` keeps the unnormalised
    values.
    """
    battery = default_battery() if battery is None else battery
    for tf in battery:
        if not tf.fits(domain_radius):
            raise ValueError(f"test function support {tf.as_dict()} leaves the domain")
    name = flow.name if isinstance(flow, TestFlow) else "callable"
    u_fn = _fn(flow, "velocity")
    p_fn = None
    if pressure == "flow":
        p_fn = flow.pressure if isinstance(flow, TestFlow) else None
    elif pressure is not None:
        p_fn = pressure
    return _report(name, battery, u_fn, p_fn, n, m, tol, "plain" if not battery[0].solenoidal else "solenoidal", nonlinear_sign)


def very_weak_residual(flow, battery=None, n: int = 48, m: int = 64, tol: float = 1e-6, nonlinear_sign: float = 1.0) -> ResidualReport:
    """Weak residual against solenoidal test fields; no pressure enters."""
    battery = default_battery(solenoidal=True) if battery is None else battery
    if not all(tf.solenoidal for tf in battery):
        raise ValueError("very_weak_residual needs a solenoidal battery")
    name = flow.name if isinstance(flow, TestFlow) else "callable"
    return _report(name, battery, _fn(flow, "velocity"), None, n, m, tol, "solenoidal", nonlinear_sign)


def linearized_residual(flow, w_fn, tf: TestFunction, n: int = 48, m: int = 64) -> float:
    """First-order change of the weak residual along ``u -> u + δ w``:
    ``∫∫ w·(-∂_tζ - Δζ) - (u_i w_j + w_i u_j) ∂_iζ_j``."""
    terms, _ = _residual_terms(_fn(flow, "velocity"), None, tf, n, m, w_fn=w_fn)
    return float(terms.sum())


def raw_weak_residual(u_fn, p_fn, tf: TestFunction, n: int = 48, m: int = 64) -> float:
    terms, _ = _residual_terms(u_fn, p_fn, tf, n, m)
    return float(terms.sum())


def divergence_residual(u_fn, battery=None, times=(0.5,), n: int = 48) -> ResidualReport:
    """``∫ u·∇φ dx`` per frame and scalar test function ``φ = β((x - c)/ρ)``."""
    battery = default_battery() if battery is None else battery
    res = []
    for tf in battery:
        x, dv, _, _ = _local_grid(tf, n, 2)
        _, divz, grad, _ = TestFunction(tf.center, tf.scale, 0).spatial(x)
        gphi = grad[:, 0]
        for t in times:
            u = np.asarray(u_fn(x, t), dtype=float)
            res.append(float(np.sum(np.sum(u * gphi, axis=0) * dv)))
    res = np.array(res)
    return ResidualReport("callable", "scalar", res, res, 1e-12, n, len(times))
