"""Decreasing rearrangements and Lorentz norms of cell-wise constant fields.

A discrete field is identified with the function that is constant on each
grid cell, so its decreasing rearrangement is the step function with
heights ``f*_1 >= f*_2 >= ...`` on ``(V_{k-1}, V_k]``, ``V_k = k h^3``.
Every norm below is evaluated exactly for that step function.

Convention (fixed throughout the package)::

    ||f||_{q,r} = ( (r/q) ∫_0^∞ (s^{1/q} f*(s))^r ds/s )^{1/r},   r < ∞
    ||f||_{q,∞} = sup_s s^{1/q} f*(s)

The ``r/q`` normalisation makes ``||f||_{q,q}`` the plain ``L^q`` norm and
makes the norms non-increasing in ``r``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Field, GridSpec, SpaceTimeField, TimeGrid, ball_mask, sample_function

__all__ = [
    "RearrangementProfile",
    "LorentzNormResult",
    "MixedNormResult",
    "rearrange",
    "lorentz_norm",
    "weak_norm",
    "lp_norm",
    "weak_norm_scan",
    "mixed_norm",
    "weak_scaling_check",
    "write_profile_csv",
    "norm_record",
]


def _as_exponent(x) -> float:
    if isinstance(x, str) and x.lower() in ("inf", "infinity", "∞"):
        return np.inf
    return float(x)


@dataclass(frozen=True)
class RearrangementProfile:
    magnitudes: np.ndarray  # non-increasing
    cell_volume: float

    @property
    def volumes(self) -> np.ndarray:
        return self.cell_volume * np.arange(1, self.magnitudes.size + 1)

    @property
    def total_volume(self) -> float:
        return self.cell_volume * self.magnitudes.size


@dataclass(frozen=True)
class LorentzNormResult:
    q: float
    r: float
    value: float
    attaining_level: int | None = None  # 1-based k for weak norms


@dataclass(frozen=True)
class MixedNormResult:
    s: float
    q: float
    r: float
    value: float
    frame_values: np.ndarray = field(repr=False)


def _magnitude(f) -> np.ndarray:
    if isinstance(f, Field):
        return f.magnitude()
    return np.abs(np.asarray(f, dtype=float))


def rearrange(f, mask=None, cell_volume: float | None = None) -> RearrangementProfile:
    """Decreasing rearrangement of ``|f|`` over the cells selected by ``mask``.

    Ties are broken by linear index, so the result does not depend on the
    sorting algorithm.
    """
    mag = _magnitude(f)
    if cell_volume is None:
        if not isinstance(f, Field):
            raise ValueError("cell_volume is required for raw arrays")
        cell_volume = f.grid.cell_volume
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), mag.shape)
        mag = mag[mask]
    else:
        mag = mag.ravel()
    if mag.size == 0:
        raise ValueError("empty mask: rearrangement needs positive volume")
    order = np.lexsort((np.arange(mag.size), -mag))
    return RearrangementProfile(mag[order], float(cell_volume))


def _increment_weights(n: int, alpha: float) -> np.ndarray:
    """``k^alpha - (k-1)^alpha`` for ``k = 1..n`` without cancellation."""
    k = np.arange(1, n + 1, dtype=float)
    if alpha == 1.0:
        return np.ones(n)
    w = np.empty(n)
    w[0] = 1.0
    kk = k[1:]
    w[1:] = -(kk**alpha) * np.expm1(alpha * np.log1p(-1.0 / kk))
    return w


def _profile_norm(prof: RearrangementProfile, q: float, r: float) -> LorentzNormResult:
    f = prof.magnitudes
    top = f[0]
    if top == 0.0:
        return LorentzNormResult(q, r, 0.0, 1 if r == np.inf else None)
    if q == np.inf:
        if r != np.inf:
            raise ValueError("L^{inf,r} with r < inf is not supported")
        return LorentzNormResult(q, r, float(top), 1)
    if r == np.inf:
        vals = f * prof.volumes ** (1.0 / q)
        k = int(np.argmax(vals[::-1]))
        k = f.size - k  # last maximiser: ties resolved towards larger volume
        return LorentzNormResult(q, r, float(vals[k - 1]), k)
    alpha = r / q
    w = _increment_weights(f.size, alpha) * prof.cell_volume**alpha
    s = np.sum((f / top) ** r * w)
    return LorentzNormResult(q, r, float(top * s ** (1.0 / r)))


def lorentz_norm(f, mask=None, q=3.0, r=np.inf, cell_volume: float | None = None) -> LorentzNormResult:
    """``||f||_{L^{q,r}}`` on the masked region (see module docstring)."""
    q, r = _as_exponent(q), _as_exponent(r)
    if not q > 1:
        raise ValueError(f"Lorentz exponent q must exceed 1, got {q}")
    if not r >= 1:
        raise ValueError(f"Lorentz exponent r must be >= 1, got {r}")
    prof = f if isinstance(f, RearrangementProfile) else rearrange(f, mask, cell_volume)
    return _profile_norm(prof, q, r)


def weak_norm(f, mask=None, q=3.0) -> float:
    return lorentz_norm(f, mask, q, np.inf).value


def lp_norm(f, mask=None, p=1.0, cell_volume: float | None = None) -> float:
    """Plain Lebesgue norm of the cell representative (``p = 1`` allowed)."""
    p = _as_exponent(p)
    mag = _magnitude(f)
    if cell_volume is None:
        cell_volume = f.grid.cell_volume
    if mask is not None:
        mag = mag[np.broadcast_to(mask, mag.shape)]
    if p == np.inf:
        return float(mag.max(initial=0.0))
    return float((cell_volume * np.sum(mag**p)) ** (1.0 / p))


def weak_norm_scan(f, mask=None, q=3.0, levels=None, cell_volume: float | None = None) -> float:
    """``sup_λ λ |{|f| > λ}|^{1/q}`` by direct counting (independent oracle).

    Besides the optional dense ``levels``, every distinct magnitude ``v`` is
    probed from just below, where ``|{|f| > λ}|`` equals ``|{|f| >= v}|``.
    """
    mag = _magnitude(f)
    if cell_volume is None:
        cell_volume = f.grid.cell_volume
    if mask is not None:
        mag = mag[np.broadcast_to(mask, mag.shape)]
    mag = mag.ravel()
    best = 0.0
    for v in np.unique(mag[mag > 0]):
        vol = cell_volume * np.count_nonzero(mag >= v)
        best = max(best, v * vol ** (1.0 / q))
    if levels is not None:
        for lam in np.asarray(levels, dtype=float):
            vol = cell_volume * np.count_nonzero(mag > lam)
            best = max(best, lam * vol ** (1.0 / q))
    return best


def mixed_norm(st: SpaceTimeField, mask=None, s=np.inf, q=3.0, r=np.inf) -> MixedNormResult:
    """``L^s_t L^{q,r}_x`` norm: per-frame Lorentz norms, trapezoid rule in time."""
    s = _as_exponent(s)
    if not s >= 1:
        raise ValueError(f"time exponent must be >= 1, got {s}")
    vals = np.array([lorentz_norm(fr, mask, q, r).value for fr in st.frames()])
    return MixedNormResult(s, _as_exponent(q), _as_exponent(r), _time_norm(vals, st.time, s), vals)


def _time_norm(vals: np.ndarray, time: TimeGrid, s: float) -> float:
    if s == np.inf:
        return float(np.max(vals))
    w = time.trapezoid_weights()
    top = np.max(vals)
    if top == 0:
        return 0.0
    return float(top * np.sum(w * (vals / top) ** s) ** (1.0 / s))


@dataclass(frozen=True)
class ScalingReport:
    lam: float
    norm_original: float
    norm_rescaled: float
    mode: str

    @property
    def ratio(self) -> float:
        return self.norm_rescaled / self.norm_original


def weak_scaling_check(f, lam: float, grid: GridSpec, radius: float = 2.0, q: float = 3.0, mode: str = "rescaled_grid") -> ScalingReport:
    """Compare ``||f||_{L^{q,∞}(B_R)}`` with ``||λ f(λ·)||_{L^{q,∞}(B_{R/λ})}``.

    ``f`` is a closed-form function of ``x`` with shape ``(3, ...)``.
    ``mode="rescaled_grid"`` samples the rescaled function on the grid
    shrunk by ``λ`` (superlevel volumes then scale exactly);
    ``mode="resample"`` reuses ``grid``.
    """
    if lam <= 0:
        raise ValueError("scale must be positive")
    base = sample_function(f, grid)
    n0 = weak_norm(base, ball_mask(grid, radius), q)
    if mode == "rescaled_grid":
        g2 = GridSpec(grid.L / lam, grid.N, tuple(np.asarray(grid.offset) / lam))
    elif mode == "resample":
        g2 = grid
    else:
        raise ValueError(f"unknown mode {mode!r}")
    scaled = sample_function(lambda x: lam * np.asarray(f(lam * x)), g2)
    n1 = weak_norm(scaled, ball_mask(g2, radius / lam), q)
    return ScalingReport(lam, n0, n1, mode)


def write_profile_csv(prof: RearrangementProfile, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "volume", "magnitude"])
        for k, (v, m) in enumerate(zip(prof.volumes, prof.magnitudes), start=1):
            w.writerow([k, repr(float(v)), repr(float(m))])
    return path


def _exp_str(x: float):
    return "inf" if x == np.inf else x


def norm_record(result, mask_label: str, s=None) -> dict:
    """JSON-ready record ``{q, r, s, mask, value}``."""
    if isinstance(result, MixedNormResult):
        s = result.s
    return {
        "q": _exp_str(result.q),
        "r": _exp_str(result.r),
        "s": None if s is None else _exp_str(s),
        "mask": mask_label,
        "value": result.value,
    }


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)
