"""Heat kernel, Oseen tensor and derivatives, Newtonian potential.

The Oseen tensor is evaluated in closed form. With ``Psi(., t)`` the
Newtonian potential of the Gaussian ``Gamma(., t)``,

    Psi(r, t) = erf(r / 2√t) / (4π r),

its Hessian is radial, so at unit time

    S_ij(y) = a(r) δ_ij + b(r) ω_i ω_j,   ω = y / r,
    a = Γ + A,  b = -(Γ + 3A),  A = Psi'(r) / r = -G(r) / (4π r^3),
    G(r) = erf(r/2) - (r/√π) exp(-r²/4).

General times follow from parabolic scaling
``S(x, t) = t^{-3/2} S(x/√t, 1)``. Near ``r = 0`` the radial profiles are
summed from their Taylor series in ``r²`` to avoid cancellation.

A second, slow evaluation path (``*_quadrature``) computes ``Psi`` by
radial quadrature and differentiates it numerically; it shares no code
with the closed form and serves as the cross-check oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sint
from scipy.special import erf

from .grid import ScalarField

__all__ = [
    "KernelSample",
    "DecayScanReport",
    "heat_kernel",
    "newtonian_of_gaussian",
    "oseen_tensor",
    "oseen_derivative",
    "oseen_time_derivative",
    "oseen_time_space_derivative",
    "oseen_sample",
    "psi_quadrature",
    "oseen_tensor_quadrature",
    "heat_convolution_quadrature",
    "decay_scan",
    "newtonian_potential",
    "tail_exponent",
]

_SERIES_CUT = 2.0
_NTERMS = 40


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("kernel time must be positive")
    return t


def heat_kernel(x, t):
    """``Γ(x, t) = (4πt)^{-3/2} exp(-|x|²/4t)``; ``x`` has shape ``(..., 3)``."""
    t = _check_time(t)
    r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    return (4 * np.pi * t) ** -1.5 * np.exp(-r2 / (4 * t))


def newtonian_of_gaussian(r, t):
    """``Psi(r, t)``, the Newtonian potential of ``Γ(., t)`` (closed form)."""
    t = _check_time(t)
    r = np.asarray(r, dtype=float)
    rho = r / (2 * np.sqrt(t))
    small = rho < 1e-4
    safe = np.where(small, 1.0, r)
    out = erf(rho) / (4 * np.pi * safe)
    lim = 1.0 / (4 * np.pi ** 1.5 * np.sqrt(t)) * (1 - rho**2 / 3)
    return np.where(small, lim, out)


# ---------------------------------------------------------------------------
# radial profiles at unit time


def _series_coefficients():
    n = np.arange(_NTERMS + 1)
    fact = np.array([math.factorial(int(i)) for i in n], dtype=float)
    gamma = (4 * np.pi) ** -1.5 * (-1.0) ** n / (4.0**n * fact)
    # G(r) = sum_{n>=1} g_n r^{2n+1}
    g = np.zeros(_NTERMS + 2)
    for m in range(1, _NTERMS + 2):
        g[m] = (2 / math.sqrt(math.pi)) * (-1) ** (m + 1) * (2 * m) / (math.factorial(m) * (2 * m + 1) * 2.0 ** (2 * m + 1))
    A = -g[1 : _NTERMS + 2] / (4 * np.pi)
    alpha = gamma + A
    beta = -gamma - 3 * A
    beta[0] = 0.0  # exact cancellation
    return alpha, beta


_ALPHA, _BETA = _series_coefficients()


def _poly(coef, r2, shift=0):
    # sum_m coef[m] r^(2m) evaluated by Horner in r²
    acc = np.zeros_like(r2)
    for c in coef[::-1]:
        acc = acc * r2 + c
    return acc


def _series_profiles(r):
    r2 = r * r
    m = np.arange(_NTERMS + 1, dtype=float)
    a = _poly(_ALPHA, r2)
    b = _poly(_BETA, r2)
    # a' = sum 2m alpha_m r^(2m-1) = r * sum_{m>=1} 2m alpha_m r^(2m-2)
    a1 = r * _poly((2 * m * _ALPHA)[1:], r2)
    a2 = _poly((2 * m * (2 * m - 1) * _ALPHA)[1:], r2)
    b1 = r * _poly((2 * m * _BETA)[1:], r2)
    b2 = _poly((2 * m * (2 * m - 1) * _BETA)[1:], r2)
    b_over_r = r * _poly(_BETA[1:], r2)
    return a, a1, a2, b, b1, b2, b_over_r


def _closed_profiles(r):
    e = np.exp(-r * r / 4)
    gam = (4 * np.pi) ** -1.5 * e
    gam1 = -(r / 2) * gam
    gam2 = (r * r / 4 - 0.5) * gam
    sq = math.sqrt(math.pi)
    G = erf(r / 2) - (r / sq) * e
    G1 = (r * r / (2 * sq)) * e
    G2 = (2 * r - r**3 / 2) / (2 * sq) * e
    c = 4 * np.pi
    A = -G / (c * r**3)
    A1 = -G1 / (c * r**3) + 3 * G / (c * r**4)
    A2 = -G2 / (c * r**3) + 6 * G1 / (c * r**4) - 12 * G / (c * r**5)
    a, a1, a2 = gam + A, gam1 + A1, gam2 + A2
    b, b1, b2 = -(gam + 3 * A), -(gam1 + 3 * A1), -(gam2 + 3 * A2)
    return a, a1, a2, b, b1, b2, b / r


def _profiles(r):
    r = np.asarray(r, dtype=float)
    out = [np.empty_like(r) for _ in range(7)]
    small = r < _SERIES_CUT
    if small.any():
        for o, v in zip(out, _series_profiles(r[small])):
            o[small] = v
    if (~small).any():
        for o, v in zip(out, _closed_profiles(r[~small])):
            o[~small] = v
    return out


def _unit_direction(y):
    r = np.sqrt(np.sum(y * y, axis=-1))
    safe = np.where(r > 0, r, 1.0)
    w = np.where(r[..., None] > 0, y / safe[..., None], 0.0)
    return r, w


_I3 = np.eye(3)


def _scaled(x, t):
    x = np.asarray(x, dtype=float)
    t = _check_time(t)
    sq = np.sqrt(t)
    y = x / np.asarray(sq)[..., None]
    r, w = _unit_direction(y)
    return t, r, w


def _S_unit(r, w, prof=None):
    a, a1, a2, b, b1, b2, e = prof if prof is not None else _profiles(r)
    return a[..., None, None] * _I3 + b[..., None, None] * w[..., :, None] * w[..., None, :]


def _D_unit(r, w, prof=None):
    a, a1, a2, b, b1, b2, e = prof if prof is not None else _profiles(r)
    c = b1 - 2 * e
    wi = w[..., :, None, None]
    wj = w[..., None, :, None]
    wk = w[..., None, None, :]
    dij = _I3[:, :, None]
    dik = _I3[:, None, :]
    djk = _I3[None, :, :]
    return (
        a1[..., None, None, None] * wk * dij
        + c[..., None, None, None] * wi * wj * wk
        + e[..., None, None, None] * (dik * wj + djk * wi)
    )


def oseen_tensor(x, t):
    """``S_ij(x, t)``, shape ``(..., 3, 3)``. Finite at ``x = 0`` (limit value)."""
    t, r, w = _scaled(x, t)
    return np.asarray(t)[..., None, None] ** -1.5 * _S_unit(r, w)


def oseen_derivative(x, t, k=None):
    """Spatial derivative ``∂_k S_ij(x, t)``.

    With ``k=None`` the full array indexed ``[..., i, j, k]`` is returned.
    """
    t, r, w = _scaled(x, t)
    D = np.asarray(t)[..., None, None, None] ** -2.0 * _D_unit(r, w)
    return D if k is None else D[..., k]


def oseen_time_derivative(x, t):
    """``∂_t S_ij`` from Euler's relation for the degree ``-3`` homogeneity."""
    t, r, w = _scaled(x, t)
    prof = _profiles(r)
    a, a1, a2, b, b1, b2, e = prof
    S = _S_unit(r, w, prof)
    rdr = (r * a1)[..., None, None] * _I3 + (r * b1)[..., None, None] * w[..., :, None] * w[..., None, :]
    tt = np.asarray(t)[..., None, None]
    return -(3 * S + rdr) * tt**-2.5 / 2


def oseen_time_space_derivative(x, t):
    """``∂_t ∂_k S_ij`` indexed ``[..., i, j, k]``."""
    t, r, w = _scaled(x, t)
    prof = _profiles(r)
    a, a1, a2, b, b1, b2, e = prof
    D = _D_unit(r, w, prof)
    r_e1 = b1 - e
    r_c1 = r * b2 - 2 * r_e1
    wi = w[..., :, None, None]
    wj = w[..., None, :, None]
    wk = w[..., None, None, :]
    dij = _I3[:, :, None]
    dik = _I3[:, None, :]
    djk = _I3[None, :, :]
    rdr = (
        (r * a2)[..., None, None, None] * wk * dij
        + r_c1[..., None, None, None] * wi * wj * wk
        + r_e1[..., None, None, None] * (dik * wj + djk * wi)
    )
    tt = np.asarray(t)[..., None, None, None]
    return -(4 * D + rdr) * tt**-3.0 / 2


@dataclass(frozen=True)
class KernelSample:
    x: tuple
    t: float
    value: np.ndarray
    kind: str  # "heat" | "oseen" | "oseen_derivative"
    method: str  # "closed_form" | "quadrature_oracle"


def oseen_sample(x, t, method: str = "closed_form") -> KernelSample:
    x = tuple(float(v) for v in x)
    if method == "closed_form":
        val = oseen_tensor(np.array(x), t)
    elif method == "quadrature_oracle":
        val = oseen_tensor_quadrature(np.array(x), t)
    else:
        raise ValueError(f"unknown method {method!r}")
    return KernelSample(x, float(t), val, "oseen", method)


# ---------------------------------------------------------------------------
# slow oracle path


def psi_quadrature(r: float, t: float) -> float:
    """Newtonian potential of ``Γ(., t)`` at radius ``r`` by 1D quadrature.

    Shell theorem: ``Psi(r) = (1/r) ∫_0^r Γ s² ds + ∫_r^∞ Γ s ds``.
    """
    t = float(t)
    if t <= 0:
        raise ValueError("kernel time must be positive")

    def gam(s):
        return (4 * np.pi * t) ** -1.5 * math.exp(-s * s / (4 * t))

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    outer = sint.quad(lambda s: gam(s) * s, r, np.inf, **opts)[0]
    if r == 0:
        return outer
    inner = sint.quad(lambda s: gam(s) * s * s, 0.0, r, **opts)[0]
    return inner / r + outer


def oseen_tensor_quadrature(x, t, step: float | None = None) -> np.ndarray:
    """``Γ δ_ij + ∂_i∂_j Psi`` with ``Psi`` by quadrature and fourth-order differences."""
    x = np.asarray(x, dtype=float)
    h = step if step is not None else 0.02 * math.sqrt(t)

    def psi(y):
        return psi_quadrature(float(np.linalg.norm(y)), t)

    c1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
    c2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}
    H = np.zeros((3, 3))
    e = np.eye(3)
    for i in range(3):
        H[i, i] = sum(c * psi(x + s * h * e[i]) for s, c in c2.items()) / h**2
        for j in range(i + 1, 3):
            acc = 0.0
            for si, ci in c1.items():
                for sj, cj in c1.items():
                    acc += ci * cj * psi(x + si * h * e[i] + sj * h * e[j])
            H[i, j] = H[j, i] = acc / h**2
    return heat_kernel(x, t) * np.eye(3) + H


def heat_convolution_quadrature(x, t: float, s: float) -> float:
    """``(Γ(., t) * Γ(., s))(x)`` by quadrature, factorised over axes."""
    out = 1.0
    for xi in np.asarray(x, dtype=float):
        g = lambda y, tt: math.exp(-y * y / (4 * tt)) / math.sqrt(4 * np.pi * tt)
        val = sint.quad(lambda y: g(xi - y, t) * g(y, s), -np.inf, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
        out *= val
    return out


# ---------------------------------------------------------------------------
# decay scan


@dataclass(frozen=True)
class DecayScanReport:
    l: int
    k: int
    C_emp: float
    n_samples: int
    stability_pct: float
    weight_exponent: int

    @property
    def stable(self) -> bool:
        return self.stability_pct <= 10.0

    def to_json(self) -> str:
        return json.dumps(
            {"l": self.l, "k": self.k, "C_emp": self.C_emp, "n_samples": self.n_samples, "stability_pct": self.stability_pct}
        )


def _kernel_for(l: int, k: int):
    table = {
        (0, 0): oseen_tensor,
        (1, 0): oseen_derivative,
        (0, 1): oseen_time_derivative,
        (1, 1): oseen_time_space_derivative,
    }
    try:
        return table[(l, k)]
    except KeyError:
        raise ValueError(f"derivative orders (l, k) = ({l}, {k}) not supported") from None


def _scan_constant(l, k, n_r, n_t, n_dir, r_range, t_range, seed):
    if min(n_r, n_t, n_dir) < 1:
        raise ValueError("empty sample set")
    f = _kernel_for(l, k)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_dir, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.geomspace(*r_range, n_r)
    times = np.geomspace(*t_range, n_t)
    R, T = np.meshgrid(radii, times, indexing="ij")
    pts = R[..., None, None] * dirs  # (n_r, n_t, n_dir, 3)
    TT = np.broadcast_to(T[..., None], pts.shape[:-1])
    vals = f(pts, TT)
    mag = np.sqrt(np.sum(vals.reshape(vals.shape[:3] + (-1,)) ** 2, axis=-1))
    weight = (R[..., None] + np.sqrt(TT)) ** (3 + l + 2 * k)
    return float(np.max(mag * weight)), pts.shape[0] * pts.shape[1] * pts.shape[2]


def decay_scan(l: int = 0, k: int = 0, n_r: int = 41, n_t: int = 41, n_dir: int = 4, r_range=(0.1, 10.0), t_range=(1e-3, 10.0), seed: int = 0) -> DecayScanReport:
    """Empirical constant in ``|D^l ∂_t^k S| <= C (|x| + √t)^{-3-l-2k}``.

    Samples are log-uniform in ``|x|`` and ``t``; the scan is repeated on
    the refined set (``2n - 1`` nodes per axis, old nodes kept) and the
    relative change of ``C_emp`` is reported as ``stability_pct``.
    """
    c1, n1 = _scan_constant(l, k, n_r, n_t, n_dir, r_range, t_range, seed)
    c2, n2 = _scan_constant(l, k, 2 * n_r - 1, 2 * n_t - 1, n_dir, r_range, t_range, seed)
    pct = 100.0 * abs(c2 - c1) / c2
    return DecayScanReport(l, k, c2, n2, pct, 3 + l + 2 * k)


# ---------------------------------------------------------------------------
# Poisson solve on the periodic box


def newtonian_potential(source: ScalarField, rtol: float = 1e-9) -> ScalarField:
    """Zero-mean periodic solution of ``-Δη = source``.

    The source must have zero mean up to ``rtol`` times its mean absolute
    value; the residual mean is projected out.
    """
    if source.rank != 0:
        raise ValueError("newtonian_potential expects a scalar field")
    vals = source.values
    mean = float(np.mean(vals))
    scale = float(np.mean(np.abs(vals)))
    if abs(mean) > rtol * max(scale, 1e-300) and scale > 0:
        raise ValueError(f"source is not mean-zero on the periodic box (mean {mean:.3e}, mean |source| {scale:.3e})")
    g = source.grid
    spec = g.fft(vals)
    k2 = g.k_squared.copy()
    k2[0, 0, 0] = 1.0
    spec = spec / k2
    spec[0, 0, 0] = 0.0
    return source.with_values(g.ifft(spec))


def tail_exponent(magnitude: np.ndarray, radius: np.ndarray, r_min: float, r_max: float, nbins: int = 12):
    """Power-law exponent of the shell-wise maximum of ``magnitude``.

    Returns ``(slope, intercept)`` of a least-squares fit of
    ``log max_{shell}|f|`` against ``log r``.
    """
    edges = np.geomspace(r_min, r_max, nbins + 1)
    rc, mx = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (radius >= lo) & (radius < hi)
        if sel.any():
            m = magnitude[sel].max()
            if m > 0:
                rc.append(np.sqrt(lo * hi))
                mx.append(m)
    if len(rc) < 3:
        raise ValueError("not enough populated shells for a tail fit")
    slope, intercept = np.polyfit(np.log(rc), np.log(mx), 1)
    return float(slope), float(intercept)
