"""Smooth cut-offs and the localized pair ``(ũ, p̃)`` with its forcing terms.

All cut-offs are built from the smoothstep

    ψ(s) = e^{-1/s} / (e^{-1/s} + e^{-1/(1-s)}),   0 < s < 1,

with ψ = 0 for s <= 0 and ψ = 1 for s >= 1, rescaled to each transition
interval. Analytic derivatives up to third order are provided (third order
is needed to build solenoidal test fields as curls).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels
from .grid import GridSpec, ScalarField, SpaceTimeField, TimeGrid, ball_mask, make_field
from .lorentz import lorentz_norm, lp_norm

__all__ = [
    "smoothstep",
    "RadialProfile",
    "TimeCutoff",
    "CutoffFamily",
    "build_cutoffs",
    "LocalizedState",
    "eta_correction",
    "localize",
    "SupportAudit",
    "forcing_support_audit",
]

# Outside this window the smoothstep is within e^{-500} of its plateau
# value and is set to the plateau exactly.
_EDGE = 2e-3


def smoothstep(s, order: int = 0):
    """ψ and its derivatives of order 1..3, vectorised over ``s``."""
    s = np.asarray(s, dtype=float)
    inner = (s > _EDGE) & (s < 1 - _EDGE)
    base = np.where(s >= 1 - _EDGE, 1.0, 0.0) if order == 0 else np.zeros_like(s)
    if not inner.any():
        return base
    x = s[inner]
    y = 1 - x
    psi = expit(1 / y - 1 / x)
    if order == 0:
        out = psi
    else:
        P = psi * (1 - psi)
        w = 1 / x**2 + 1 / y**2
        d1 = P * w
        if order == 1:
            out = d1
        else:
            w1 = -2 / x**3 + 2 / y**3
            P1 = (1 - 2 * psi) * d1
            d2 = P1 * w + P * w1
            if order == 2:
                out = d2
            elif order == 3:
                w2 = 6 / x**4 + 6 / y**4
                P2 = -2 * d1**2 + (1 - 2 * psi) * d2
                out = P2 * w + 2 * P1 * w1 + P * w2
            else:
                raise ValueError("smoothstep derivatives are available up to order 3")
    res = base.copy()
    res[inner] = out
    return res


@dataclass(frozen=True)
class RadialProfile:
    """``f(|x|) = 1 - ψ((|x| - r0)/width)``: 1 on ``B_{r0}``, 0 outside ``B_{r0+width}``."""

    r0: float
    width: float

    def value(self, r, order: int = 0):
        s = (np.asarray(r, dtype=float) - self.r0) / self.width
        sign = 1.0 if order == 0 else -1.0
        out = sign * smoothstep(s, order) / self.width**order
        return 1.0 - smoothstep(s) if order == 0 else out

    def __call__(self, x):
        return self.value(np.sqrt(np.sum(np.asarray(x) ** 2, axis=0)))

    def gradient(self, x):
        """``f'(r) x / r`` for ``x`` with components on axis 0."""
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x**2, axis=0))
        d1 = self.value(r, 1)
        safe = np.where(r > 0, r, 1.0)
        return d1 * x / safe

    def laplacian(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x**2, axis=0))
        safe = np.where(r > 0, r, 1.0)
        return self.value(r, 2) + 2 * self.value(r, 1) / safe


@dataclass(frozen=True)
class TimeCutoff:
    """``θ(t) = ψ((t - t_off)/width)``: 0 for ``t <= t_off``, 1 for ``t >= t_off + width``."""

    t_off: float = 0.05
    width: float = 0.05

    def value(self, t, order: int = 0):
        s = (np.asarray(t, dtype=float) - self.t_off) / self.width
        return smoothstep(s, order) / self.width**order

    def __call__(self, t):
        return self.value(t)


@dataclass(frozen=True)
class CutoffFamily:
    theta: TimeCutoff = field(default_factory=TimeCutoff)
    phi0: RadialProfile = field(default_factory=lambda: RadialProfile(1.0, 0.25))
    phi_tilde: RadialProfile = field(default_factory=lambda: RadialProfile(1.25, 0.25))

    # φ(x, t) = θ(t) φ0(x) and its derivatives ---------------------------
    def phi(self, x, t):
        return self.theta(t) * self.phi0(x)

    def phi_t(self, x, t):
        return self.theta.value(t, 1) * self.phi0(x)

    def grad_phi(self, x, t):
        return self.theta(t) * self.phi0.gradient(x)

    def lap_phi(self, x, t):
        return self.theta(t) * self.phi0.laplacian(x)

    def as_dict(self) -> dict:
        return {
            "theta": {"t_off": self.theta.t_off, "width": self.theta.width},
            "phi0": {"r0": self.phi0.r0, "width": self.phi0.width},
            "phi_tilde": {"r0": self.phi_tilde.r0, "width": self.phi_tilde.width},
        }


def build_cutoffs(profile: str = "smoothstep") -> CutoffFamily:
    """Default family: θ switches on over ``[1/20, 1/10]``, φ0 over ``[1, 5/4]``, φ̃ over ``[5/4, 3/2]``."""
    if profile != "smoothstep":
        raise ValueError(f"unknown smoothness profile {profile!r}")
    return CutoffFamily()


# ---------------------------------------------------------------------------
# localization


@dataclass(frozen=True, eq=False)
class LocalizedState:
    u: SpaceTimeField
    u_tilde: SpaceTimeField
    eta: SpaceTimeField
    p_tilde: SpaceTimeField | None
    f0: SpaceTimeField | None
    f1: SpaceTimeField | None
    phi_tilde: np.ndarray = field(repr=False)
    cutoffs: CutoffFamily = field(default_factory=CutoffFamily)
    source_mean: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def time(self) -> TimeGrid:
        return self.u.time

    def f2(self, v: SpaceTimeField) -> SpaceTimeField:
        """``f²_ij(v) = -φ̃ u_i v_j``."""
        return self.u.with_values(-np.einsum("m i ..., m j ... -> m i j ...", self.u.values * self.phi_tilde, v.values))

    def f2_frame(self, m: int, v_frame: np.ndarray, scale_u: float = 1.0) -> np.ndarray:
        return -scale_u * (self.phi_tilde * self.u.values[m])[:, None] * v_frame[None, :]


def _source(u: SpaceTimeField, cut: CutoffFamily):
    x = u.grid.coords
    return np.stack([np.sum(cut.grad_phi(x, t) * u.values[m], axis=0) for m, t in enumerate(u.time.nodes)])


def eta_correction(u: SpaceTimeField, cutoffs: CutoffFamily | None = None, rtol: float = 1e-3):
    """Per-frame periodic Newtonian potential of ``∇φ · u``.

    Returns ``(η, worst relative source mean)``. The source has zero mean
    for solenoidal ``u``; a relative mean above ``rtol`` is rejected.
    """
    cut = cutoffs or build_cutoffs()
    if u.rank != 1:
        raise ValueError("eta_correction needs a velocity stack")
    src = _source(u, cut)
    g = u.grid
    worst = 0.0
    out = np.empty_like(src)
    for m in range(src.shape[0]):
        s = src[m]
        scale = float(np.mean(np.abs(s)))
        mean = float(np.mean(s))
        if scale == 0.0:
            out[m] = 0.0
            continue
        rel = abs(mean) / scale
        worst = max(worst, rel)
        if rel > rtol:
            raise ValueError(
                f"source ∇φ·u has relative mean {rel:.3e} at t={u.time.nodes[m]:.4f} (tolerance {rtol:.1e}); "
                "the velocity is not solenoidal"
            )
        out[m] = kernels.newtonian_potential(ScalarField(g, s - mean), rtol=1e-9).values
    return SpaceTimeField(u.time, g, out), worst


def localize(u: SpaceTimeField, p: SpaceTimeField | None = None, cutoffs: CutoffFamily | None = None, rtol: float = 1e-3, forcing: bool = True) -> LocalizedState:
    """Build ``ũ = φu + ∇η``, ``p̃ = φp - ∂_tη + Δη`` and the forcing terms.

    ``f0 = u(φ_t + Δφ) + p∇φ + (∇φ·u)u``, ``f1_ij = -2 ∂_jφ u_i + ∂_jη φ̃ u_i``.
    ``p̃`` and ``f0`` are omitted when ``p`` is not given; ``forcing=False``
    skips ``f0`` and ``f1`` (they dominate memory on fine grids).
    """
    cut = cutoffs or build_cutoffs()
    if u.nframes < 8:
        raise ValueError(f"time grid too coarse for ∂_t η: {u.nframes} frames, need at least 8")
    if p is not None and (p.time != u.time or p.grid != u.grid or p.rank != 0):
        raise ValueError("pressure must be a scalar stack on the velocity grids")
    g, tg = u.grid, u.time
    x = g.coords
    eta, mean = eta_correction(u, cut, rtol)
    k = g.derivative_wavenumbers
    phit = cut.phi_tilde(x)
    ut, f1, f0, pt = [], [], [], []
    eta_t = np.gradient(eta.values, tg.dt, axis=0, edge_order=2)
    for m, t in enumerate(tg.nodes):
        um = u.values[m]
        spec = g.fft(eta.values[m])
        geta = np.stack([g.ifft(1j * kk * spec) for kk in k])
        phi = cut.phi(x, t)
        gphi = cut.grad_phi(x, t)
        ut.append(phi * um + geta)
        if forcing:
            f1.append(-2 * um[:, None] * gphi[None, :] + (phit * um)[:, None] * geta[None, :])
        if p is not None:
            pm = p.values[m]
            lap_eta = g.ifft(-g.k_squared * spec)
            pt.append(phi * pm - eta_t[m] + lap_eta)
            if forcing:
                f0.append(um * (cut.phi_t(x, t) + cut.lap_phi(x, t)) + pm * gphi + np.sum(gphi * um, axis=0) * um)
    mk = lambda arr: SpaceTimeField(tg, g, np.stack(arr))
    return LocalizedState(
        u=u,
        u_tilde=mk(ut),
        eta=eta,
        p_tilde=mk(pt) if p is not None else None,
        f0=mk(f0) if f0 else None,
        f1=mk(f1) if f1 else None,
        phi_tilde=phit,
        cutoffs=cut,
        source_mean=mean,
    )


@dataclass(frozen=True)
class SupportAudit:
    radius: float
    max_outside: dict
    norms: dict

    @property
    def ok(self) -> bool:
        return all(v == 0.0 for v in self.max_outside.values())

    def to_json(self) -> str:
        return json.dumps({"radius": self.radius, "max_outside": self.max_outside, "norms": self.norms, "ok": self.ok})


def forcing_support_audit(state: LocalizedState, radius: float = 1.5, m: float = 3.0) -> SupportAudit:
    """Largest forcing magnitudes at cells with ``|x| >= radius`` plus the
    ``L^m_t (L¹ ∩ L^{3/2,∞})_x`` norm of ``f0`` (sum of the two spatial norms)."""
    g = state.grid
    outside = ~ball_mask(g, radius)
    res = {}
    for name in ("f0", "f1"):
        st = getattr(state, name)
        if st is not None:
            res[name] = float(st.magnitude()[:, outside].max(initial=0.0))
    # f² = -φ̃ u ⊗ v vanishes wherever φ̃ does, whatever v is
    res["f2"] = float(np.abs(state.phi_tilde[outside]).max(initial=0.0))
    norms = {}
    if state.f0 is not None:
        mag = state.f0.magnitude()
        per = np.array(
            [lp_norm(mag[j], None, 1.0, g.cell_volume) + lorentz_norm(mag[j], None, 1.5, np.inf, g.cell_volume).value for j in range(mag.shape[0])]
        )
        w = state.time.trapezoid_weights()
        norms["f0_Lm_L1_cap_L32w"] = float(np.sum(w * per**m) ** (1 / m))
        norms["m"] = m
    return SupportAudit(radius, res, norms)
