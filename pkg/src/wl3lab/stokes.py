"""Leray projection, Stokes semigroup, Duhamel operator and source solution.

Everything acts on the periodic box through Fourier multipliers. Odd-order
derivatives use wavenumbers with the Nyquist entries removed, so the
discrete divergence of a projected field vanishes to rounding error.

History integrals are advanced with exponential product integration: the
forcing is linear in time between frames and each Fourier mode is
integrated exactly against ``exp(-|k|²(t - τ))``.

``build_v0`` additionally exposes a whole-space path that convolves the
forcing with the sampled Oseen kernel in real space (zero padding, no
periodic images). The kernel cannot be sampled on the grid for
``s < layer_factor·h²``; that initial layer is added as the exact Fourier
multiplier of the same short time interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import kernels
from .grid import Field, GridSpec, SpaceTimeField, TimeGrid, VectorField, make_field
from .lorentz import lorentz_norm

__all__ = [
    "ProjectionOperator",
    "DuhamelConfig",
    "leray_project",
    "heat_semigroup",
    "stokes_semigroup",
    "projected_divergence_spectrum",
    "duhamel_phi",
    "duhamel_from_spectra",
    "build_v0",
    "pressure_from_velocity",
    "YamazakiReport",
    "yamazaki_probe",
    "BoundednessReport",
    "phi_boundedness_probe",
    "random_stress_battery",
]


@dataclass(frozen=True)
class ProjectionOperator:
    """Leray projection ``P̂(k) = I - k kᵀ/|k|²`` (identity where ``k = 0``)."""

    grid: GridSpec

    def multiplier(self):
        k = self.grid.derivative_wavenumbers
        k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
        inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
        return k, inv

    def apply_spectrum(self, spec: np.ndarray) -> np.ndarray:
        """Project spectra with component axis ``-4`` (shape ``(..., 3, n, n, m)``)."""
        k, inv = self.multiplier()
        kdot = k[0] * spec[..., 0, :, :, :] + k[1] * spec[..., 1, :, :, :] + k[2] * spec[..., 2, :, :, :]
        kdot = kdot * inv
        return np.stack([spec[..., i, :, :, :] - k[i] * kdot for i in range(3)], axis=-4)

    def __call__(self, v: Field) -> Field:
        if v.rank != 1:
            raise ValueError("projection acts on vector fields")
        g = self.grid
        return v.with_values(g.ifft(self.apply_spectrum(g.fft(v.values))))


def leray_project(v: Field) -> Field:
    return ProjectionOperator(v.grid)(v)


def heat_semigroup(v: Field, t: float) -> Field:
    if t < 0:
        raise ValueError("semigroup time must be non-negative")
    g = v.grid
    return v.with_values(g.ifft(g.fft(v.values) * np.exp(-g.k_squared * t)))


def stokes_semigroup(v: Field, t: float) -> Field:
    """``e^{-tA} P v``; ``t = 0`` returns ``P v`` (``v`` itself if solenoidal)."""
    if t < 0:
        raise ValueError("semigroup time must be non-negative")
    if v.rank != 1:
        raise ValueError("Stokes semigroup acts on vector fields")
    g = v.grid
    spec = ProjectionOperator(g).apply_spectrum(g.fft(v.values))
    return v.with_values(g.ifft(spec * np.exp(-g.k_squared * t)))


def projected_divergence_spectrum(grid: GridSpec, F: np.ndarray | None = None, f: np.ndarray | None = None) -> np.ndarray:
    """Spectrum of ``P(f + div F)`` with ``(div F)_i = Σ_j ∂_j F_ij``."""
    acc = None
    if F is not None:
        spec = grid.fft(F)
        k = grid.derivative_wavenumbers
        acc = sum(1j * k[j] * spec[:, j] for j in range(3))
    if f is not None:
        fs = grid.fft(f)
        acc = fs if acc is None else acc + fs
    if acc is None:
        raise ValueError("no forcing given")
    return ProjectionOperator(grid).apply_spectrum(acc)


# ---------------------------------------------------------------------------
# Duhamel integrals


@dataclass(frozen=True)
class DuhamelConfig:
    time: TimeGrid
    rule: str = "exponential_linear"
    path: str = "spectral"
    gauss_nodes: int = 6
    layer_factor: float = 0.3
    frames: tuple | None = None  # output frames for the whole-space path

    def __post_init__(self):
        if self.rule != "exponential_linear":
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.path not in ("spectral", "oseen_quadrature"):
            raise ValueError(f"unknown path {self.path!r}")
        if self.gauss_nodes < 1 or self.layer_factor <= 0:
            raise ValueError("invalid whole-space quadrature parameters")

    def as_dict(self) -> dict:
        return {
            "time": self.time.as_dict(),
            "rule": self.rule,
            "path": self.path,
            "gauss_nodes": self.gauss_nodes,
            "layer_factor": self.layer_factor,
        }


def _phi_weights(z: np.ndarray):
    """``e^{-z}``, ``c0 = (1-(1+z)e^{-z})/z²`` and ``c1 = (z-1+e^{-z})/z²``."""
    e = np.exp(-z)
    small = z < 1e-3
    zs = np.where(small, 1.0, z)
    c0 = (1 - (1 + zs) * np.exp(-zs)) / zs**2
    c1 = (zs - 1 + np.exp(-zs)) / zs**2
    # Taylor: c0 = 1/2 - z/3 + z²/8 - z³/30, c1 = 1/2 - z/6 + z²/24 - z³/120
    c0s = 0.5 - z / 3 + z**2 / 8 - z**3 / 30
    c1s = 0.5 - z / 6 + z**2 / 24 - z**3 / 120
    return e, np.where(small, c0s, c0), np.where(small, c1s, c1)


def duhamel_from_spectra(source, time: TimeGrid, grid: GridSpec, store: bool = True):
    """Solve ``∂_t w = Δw + g``, ``w(0) = 0``, for solenoidal ``g`` given per frame.

    ``source(m)`` returns the spectrum of ``g`` at node ``m``. Returns the
    space-time field of ``w`` (or just the final frame when ``store`` is
    false).
    """
    dt = time.dt
    z = grid.k_squared * dt
    e, c0, c1 = _phi_weights(z)
    g_prev = source(0)
    w = np.zeros_like(g_prev)
    out = [np.zeros((3, *grid.shape))] if store else None
    for m in range(1, time.size):
        g_next = source(m)
        w = e * w + dt * (c0 * g_prev + c1 * g_next)
        g_prev = g_next
        if store:
            out.append(grid.ifft(w))
    if store:
        return SpaceTimeField(time, grid, np.stack(out))
    return grid.ifft(w)


def _check_stack(F: SpaceTimeField, time: TimeGrid, rank: int, name: str):
    if F.time != time:
        raise ValueError(f"time-grid mismatch for {name}")
    if F.rank != rank:
        raise ValueError(f"{name} must have tensor rank {rank}, got {F.rank}")


def duhamel_phi(F, cfg: DuhamelConfig) -> SpaceTimeField:
    """``Φ(F)(t) = ∫_0^t e^{-(t-τ)A} P div F(τ) dτ`` for a tensor history ``F``.

    ``F`` is a rank-2 :class:`SpaceTimeField`, or a pair ``(grid, frame_fn)``
    where ``frame_fn(m)`` returns the ``(3, 3, N, N, N)`` array at node ``m``
    (used to avoid materialising large tensor stacks).
    """
    if isinstance(F, SpaceTimeField):
        _check_stack(F, cfg.time, 2, "F")
        grid = F.grid
        frame_fn = lambda m: F.values[m]
    else:
        grid, frame_fn = F
    if cfg.path != "spectral":
        raise ValueError("duhamel_phi supports the spectral path only; see build_v0 for the whole-space path")
    return duhamel_from_spectra(lambda m: projected_divergence_spectrum(grid, F=frame_fn(m)), cfg.time, grid)


def build_v0(f0: SpaceTimeField | None, f1: SpaceTimeField | None, cfg: DuhamelConfig, grid: GridSpec | None = None):
    """Source solution ``∂_t v - Δv + ∇q = f0 + div f1``, ``v(0) = 0``, ``div v = 0``.

    ``path="spectral"`` integrates on the periodic box. ``path=
    "oseen_quadrature"`` evaluates the whole-space Oseen representation at
    the frames listed in ``cfg.frames`` (default: every frame) and returns
    ``{frame_index: VectorField}``.
    """
    if f0 is None and f1 is None:
        if grid is None:
            raise ValueError("grid required when both forcings are absent")
    if f0 is not None:
        _check_stack(f0, cfg.time, 1, "f0")
        grid = f0.grid
    if f1 is not None:
        _check_stack(f1, cfg.time, 2, "f1")
        if grid is not None and f1.grid != grid:
            raise ValueError("f0 and f1 live on different grids")
        grid = f1.grid
    _support_warning(grid, f0, f1)
    if cfg.path == "spectral":
        if f0 is None and f1 is None:
            return SpaceTimeField.zeros(cfg.time, grid)

        def src(m):
            return projected_divergence_spectrum(
                grid, F=None if f1 is None else f1.values[m], f=None if f0 is None else f0.values[m]
            )

        return duhamel_from_spectra(src, cfg.time, grid)
    return _oseen_v0(f0, f1, cfg, grid)


def _support_warning(grid, f0, f1):
    import warnings

    edge = grid.radius() >= 0.5 * grid.L - 2 * grid.h
    for name, st in (("f0", f0), ("f1", f1)):
        if st is None:
            continue
        mag = st.magnitude()
        top = float(mag.max())
        if top > 0 and float(mag[:, edge].max()) > 1e-12 * top:
            warnings.warn(f"{name} does not vanish near the box boundary; periodic images are not negligible", stacklevel=3)


# whole-space path -----------------------------------------------------------


def _padded_offsets(grid: GridSpec) -> np.ndarray:
    n = 2 * grid.N
    idx = sfft.fftfreq(n, 1.0 / n)  # 0..N-1, -N..-1
    z = idx * grid.h
    Z = np.stack(np.meshgrid(z, z, z, indexing="ij"), axis=-1)
    return Z


def _kernel_spectra(Z, s, grid, need_S, need_D):
    vol = grid.cell_volume
    out = {}
    if need_S:
        S = kernels.oseen_tensor(Z, s) * vol
        out["S"] = {(i, j): sfft.rfftn(S[..., i, j]) for i in range(3) for j in range(i, 3)}
    if need_D:
        D = kernels.oseen_derivative(Z, s) * vol
        out["D"] = {(i, j, k): sfft.rfftn(D[..., i, j, k]) for i in range(3) for j in range(i, 3) for k in range(3)}
    return out


def _sym(d, i, j, *rest):
    return d[(min(i, j), max(i, j), *rest)]


def _oseen_v0(f0, f1, cfg: DuhamelConfig, grid: GridSpec):
    time = cfg.time
    N = grid.N
    frames = tuple(range(time.size)) if cfg.frames is None else tuple(cfg.frames)
    if f0 is None and f1 is None:
        return {m: VectorField(grid, np.zeros((3, *grid.shape))) for m in frames}
    dt = time.dt
    s_c = min(cfg.layer_factor * grid.h**2, dt)
    xg, wg = np.polynomial.legendre.leggauss(cfg.gauss_nodes)
    Z = _padded_offsets(grid)
    pad = (2 * N,) * 3

    cache = {}

    def fhat(j):
        if j not in cache:
            ent = {}
            if f0 is not None:
                ent["f0"] = [sfft.rfftn(f0.values[j, a], s=pad) for a in range(3)]
            if f1 is not None:
                ent["f1"] = [[sfft.rfftn(f1.values[j, a, b], s=pad) for b in range(3)] for a in range(3)]
            cache[j] = ent
        return cache[j]

    acc = {m: [0, 0, 0] for m in frames}
    mmax = max(frames)
    # sub-intervals of [0, t_m]: [s_c, dt] then [i dt, (i+1) dt]; the first
    # few are graded because the kernel varies fastest at small s
    for i in range(mmax):
        lo, hi = (s_c, dt) if i == 0 else (i * dt, (i + 1) * dt)
        if hi <= lo:
            continue
        if i < 3:
            cuts = np.geomspace(lo, hi, 5) if i == 0 else np.linspace(lo, hi, 3)
        else:
            cuts = np.array([lo, hi])
        targets = [m for m in frames if m >= i + 1]
        if not targets:
            continue
        for a, b in zip(cuts[:-1], cuts[1:]):
            for xi, wi in zip(xg, wg):
                s = 0.5 * (b - a) * xi + 0.5 * (a + b)
                w = 0.5 * (b - a) * wi
                ker = _kernel_spectra(Z, s, grid, f0 is not None, f1 is not None)
                lam = s / dt - i  # position inside the interval
                for m in targets:
                    # forcing at t_m - s: linear between frames m-i and m-i-1
                    fa, fb = fhat(m - i), fhat(m - i - 1)
                    for c in range(3):
                        term = 0
                        if f0 is not None:
                            for j in range(3):
                                fv = (1 - lam) * fa["f0"][j] + lam * fb["f0"][j]
                                term = term + _sym(ker["S"], c, j) * fv
                        if f1 is not None:
                            for j in range(3):
                                for k in range(3):
                                    fv = (1 - lam) * fa["f1"][j][k] + lam * fb["f1"][j][k]
                                    term = term + _sym(ker["D"], c, j, k) * fv
                        acc[m][c] = acc[m][c] + w * term
        # later intervals only touch frames at or below mmax - i - 1
        for j in [j for j in cache if j > mmax - i - 1]:
            del cache[j]
    out = {}
    z_layer = grid.k_squared * s_c
    for m in frames:
        vals = np.zeros((3, *grid.shape))
        if m > 0:
            for c in range(3):
                if not isinstance(acc[m][c], int):
                    vals[c] = sfft.irfftn(acc[m][c], s=pad)[:N, :N, :N]
            vals += _initial_layer(f0, f1, grid, m, s_c, dt, z_layer)
        out[m] = VectorField(grid, vals, meta={"path": "oseen_quadrature", "t": float(time.nodes[m])})
    return out


def _initial_layer(f0, f1, grid, m, s_c, dt, z):
    """``∫_0^{s_c} e^{sΔ} P g(t_m - s) ds`` with ``g`` linear between frames."""
    gm = projected_divergence_spectrum(grid, F=None if f1 is None else f1.values[m], f=None if f0 is None else f0.values[m])
    gp = projected_divergence_spectrum(
        grid, F=None if f1 is None else f1.values[m - 1], f=None if f0 is None else f0.values[m - 1]
    )
    # g(t_m - s) = g_m + (s/dt)(g_{m-1} - g_m); integrate exactly against e^{-|k|² s}
    zs = np.where(z > 1e-8, z, 1.0)
    i0 = np.where(z > 1e-8, -np.expm1(-zs) / zs, 1 - z / 2) * s_c
    i1 = np.where(z > 1e-8, (1 - (1 + zs) * np.exp(-zs)) / zs**2, 0.5 - z / 3) * s_c**2
    spec = i0 * gm + (i1 / dt) * (gp - gm)
    return grid.ifft(spec)


# ---------------------------------------------------------------------------
# pressure


def pressure_from_velocity(u: Field) -> Field:
    """Zero-mean ``p`` with ``-Δp = ∂_i ∂_j (u_i u_j)``."""
    if u.rank != 1:
        raise ValueError("pressure recovery needs a velocity field")
    g = u.grid
    k = g.derivative_wavenumbers
    k2 = g.k_squared
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    acc = 0
    for i in range(3):
        for j in range(3):
            acc = acc + k[i] * k[j] * g.fft(u.values[i] * u.values[j])
    # -Δp = ∂i∂j(u_i u_j)  ⇒  |k|² p̂ = -k_i k_j (u_i u_j)^
    return make_field(g, g.ifft(-acc * inv))


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class YamazakiReport:
    p: float
    q: float
    T: float
    value: float
    tail_increment: float
    n_nodes: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


def _grad_magnitude_at(spec, grid, t):
    k = grid.derivative_wavenumbers
    decay = np.exp(-grid.k_squared * t)
    acc = np.zeros(grid.shape)
    for i in range(3):
        si = spec[i] * decay
        for j in range(3):
            acc += grid.ifft(1j * k[j] * si) ** 2
    return np.sqrt(acc)


def _power_product_integral(t, g, beta):
    """Exact ``∫ t^β ĝ(t) dt`` for ``ĝ`` the linear interpolant of ``g`` on nodes ``t``."""
    a, b = t[:-1], t[1:]
    ga, gb = g[:-1], g[1:]
    slope = (gb - ga) / (b - a)
    icpt = ga - slope * a
    m0 = (b ** (beta + 1) - a ** (beta + 1)) / (beta + 1)
    m1 = (b ** (beta + 2) - a ** (beta + 2)) / (beta + 2)
    return float(np.sum(icpt * m0 + slope * m1))


def yamazaki_probe(u: Field, p: float, q: float, T: float, nodes_per_unit: int = 16, t_min: float = 1e-8) -> YamazakiReport:
    """``∫_0^T t^{3/(2p) - 3/(2q) - 1/2} ||∇ e^{-tA} u||_{L^{q,1}} dt`` on the box.

    Product integration against the power weight on a node set that is
    geometric near ``t = 0`` and uniform afterwards; the piece on
    ``[0, t_min]`` uses the ``t = 0`` norm. Also reports the increment of
    the integral from ``T`` to ``2T``.
    """
    if not (1 < p <= q < np.inf):
        raise ValueError(f"need 1 < p <= q < inf, got p={p}, q={q}")
    if u.rank != 1:
        raise ValueError("yamazaki_probe needs a vector field")
    g = u.grid
    spec = g.fft(u.values)
    mean = np.abs(spec[:, 0, 0, 0]).max() / g.N**3
    if mean > 1e-10 * max(np.abs(u.values).max(), 1e-300):
        raise ValueError("yamazaki_probe requires a mean-zero field")
    beta = 1.5 / p - 1.5 / q - 0.5
    head = np.geomspace(t_min, min(1.0, T), 60)
    body = np.linspace(min(1.0, T), 2 * T, max(int(nodes_per_unit * 2 * T), 2))
    t = np.unique(np.concatenate([head, body]))
    vals = np.array([lorentz_norm(_grad_magnitude_at(spec, g, ti), None, q, 1, g.cell_volume).value for ti in t])
    g0 = lorentz_norm(_grad_magnitude_at(spec, g, 0.0), None, q, 1, g.cell_volume).value
    start = g0 * t_min ** (beta + 1) / (beta + 1)
    inside = t <= T + 1e-12
    value = start + _power_product_integral(t[inside], vals[inside], beta)
    k = np.searchsorted(t, T)
    tail = _power_product_integral(t[k:], vals[k:], beta)
    return YamazakiReport(p, q, T, value, tail, int(t.size))


@dataclass(frozen=True)
class BoundednessReport:
    ratios: np.ndarray = field(repr=False)
    C_emp: float = 0.0
    C_half: float = 0.0

    @property
    def stability_pct(self) -> float:
        return 100.0 * abs(self.C_emp - self.C_half) / self.C_emp

    def to_json(self) -> str:
        return json.dumps(
            {"ratios": self.ratios.tolist(), "C_emp": self.C_emp, "C_half": self.C_half, "stability_pct": self.stability_pct}
        )


def _weak_sup(st: SpaceTimeField, q: float) -> float:
    cv = st.grid.cell_volume
    mag = st.magnitude()
    return max(lorentz_norm(mag[m], None, q, np.inf, cv).value for m in range(st.nframes))


def phi_boundedness_probe(battery, cfg: DuhamelConfig, r: float = 3.0) -> BoundednessReport:
    """Ratios ``||Φ F||_{L^∞ L^{r,∞}} / ||F||_{L^∞ L^{s,∞}}``, ``s = 3r/(r+3)``.

    ``C_emp`` is the maximum over the whole battery and ``C_half`` the
    maximum over its first half; their relative gap measures stability.
    """
    s = 3 * r / (r + 3)
    ratios = []
    for F in battery:
        den = _weak_sup(F, s)
        if den == 0:
            continue
        ratios.append(_weak_sup(duhamel_phi(F, cfg), r) / den)
    if not ratios:
        raise ValueError("battery has no non-zero member")
    ratios = np.array(ratios)
    return BoundednessReport(ratios, float(ratios.max()), float(ratios[: max(1, len(ratios) // 2)].max()))


def random_stress_battery(grid: GridSpec, time: TimeGrid, n: int = 20, seed: int = 0, radius: float = 1.5):
    """Seeded compactly supported tensor histories ``F_ij = a(t) B(|x - c|/ρ) M_ij``.

    ``B(s) = exp(-1/(1 - s²))`` on ``s < 1``; ``M`` is a standard normal
    matrix, ``a(t) = 1 + α sin(ωt)``, and ``B(c, ρ)`` stays inside ``B_radius``.
    """
    rng = np.random.default_rng(seed)
    x = grid.coords
    for _ in range(n):
        rho = rng.uniform(0.3, 1.0)
        c = rng.uniform(-1, 1, 3)
        c *= rng.uniform(0, radius - rho) / max(np.linalg.norm(c), 1e-12)
        s2 = np.sum((x - c[:, None, None, None]) ** 2, axis=0) / rho**2
        bump = np.where(s2 < 1, np.exp(-1 / np.where(s2 < 1, 1 - s2, 1.0)), 0.0)
        M = rng.standard_normal((3, 3))
        alpha, omega = rng.uniform(0, 1), rng.uniform(1, 10)
        amp = 1 + alpha * np.sin(omega * time.nodes)
        yield SpaceTimeField(time, grid, amp[:, None, None, None, None, None] * (M[:, :, None, None, None] * bump)[None])
