"""Uniform periodic grids, discrete fields and spectral calculus.

Fields store their values with the component axes first and the three
spatial axes last, so a vector field on an ``N``-point grid has shape
``(3, N, N, N)`` and a space-time stack of tensors has shape
``(M + 1, 3, 3, N, N, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "TimeGrid",
    "Field",
    "ScalarField",
    "VectorField",
    "TensorField",
    "SpaceTimeField",
    "make_field",
    "sample_function",
    "derivative",
    "partial",
    "grad",
    "div",
    "curl",
    "laplacian",
    "integrate",
    "ball_mask",
    "restrict_to_ball",
    "rescale_field",
    "aligned_rescale_grid",
]

_COMPONENT_SHAPES = {0: (), 1: (3,), 2: (3, 3)}


@dataclass(frozen=True)
class GridSpec:
    """Periodic box ``[-L/2, L/2)^3 + offset`` sampled at ``N`` points per axis."""

    L: float = 8.0
    N: int = 48
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError(f"box side must be positive, got {self.L}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"points per axis must be even and >= 8, got {self.N}")
        off = tuple(float(o) for o in np.broadcast_to(self.offset, (3,)))
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def half_shifted(cls, L: float = 8.0, N: int = 48) -> "GridSpec":
        """Grid whose nodes avoid the origin by half a cell on every axis."""
        h = L / N
        return cls(L, N, (h / 2, h / 2, h / 2))

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.N, self.N, self.N)

    @property
    def volume(self) -> float:
        return self.L**3

    def axis(self, i: int) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.N) + self.offset[i]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(3, N, N, N)``."""
        return np.stack(np.meshgrid(*(self.axis(i) for i in range(3)), indexing="ij"))

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
        return np.sqrt(np.sum((self.coords - c) ** 2, axis=0))

    def contains_ball(self, center, radius: float) -> bool:
        c = np.asarray(center, dtype=float)
        lo = -self.L / 2 + np.asarray(self.offset)
        hi = lo + self.L
        return bool(np.all(c - radius >= lo - 1e-12) and np.all(c + radius <= hi + 1e-12))

    def covered_by_ball(self, center, radius: float) -> bool:
        c = np.asarray(center, dtype=float)
        lo = -self.L / 2 + np.asarray(self.offset)
        hi = lo + self.L
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        return bool(np.sqrt(np.sum(far**2)) <= radius)

    # Fourier data for the real-to-complex transform over the spatial axes.
    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full wavenumbers (Nyquist kept), broadcastable to the rfft shape."""
        k = 2 * np.pi / self.L
        kx = sfft.fftfreq(self.N, 1.0 / self.N) * k
        kz = sfft.rfftfreq(self.N, 1.0 / self.N) * k
        return (kx[:, None, None], kx[None, :, None], kz[None, None, :])

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers for odd-order derivatives: Nyquist entries zeroed."""
        out = []
        for i, k in enumerate(self.wavenumbers):
            k = k.copy()
            idx = [0, 0, 0]
            idx[i] = self.N // 2
            k[tuple(idx)] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, axes=(-3, -2, -1))

    def ifft(self, spectrum: np.ndarray) -> np.ndarray:
        return sfft.irfftn(spectrum, s=self.shape, axes=(-3, -2, -1))

    def as_dict(self) -> dict:
        return {"L": self.L, "N": self.N, "offset": list(self.offset)}


@dataclass(frozen=True)
class TimeGrid:
    """``steps + 1`` uniform nodes on ``[t0, t1]``."""

    t0: float = 0.0
    t1: float = 1.0
    steps: int = 64

    def __post_init__(self):
        if not (0.0 <= self.t0 < self.t1 <= 1.0):
            raise ValueError(f"need 0 <= t0 < t1 <= 1, got t0={self.t0}, t1={self.t1}")
        if self.steps < 2:
            raise ValueError(f"need at least 2 time steps, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.steps

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.steps + 1)

    @property
    def size(self) -> int:
        return self.steps + 1

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.size, self.dt)
        w[0] = w[-1] = self.dt / 2
        return w

    def as_dict(self) -> dict:
        return {"t0": self.t0, "t1": self.t1, "steps": self.steps}


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on a grid; rank 0, 1 or 2 inferred from the leading axes."""

    grid: GridSpec
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[-3:] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not end with grid shape {self.grid.shape}")
        if v.shape[:-3] not in _COMPONENT_SHAPES.values():
            raise ValueError(f"unsupported component shape {v.shape[:-3]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> int:
        return len(self.values.shape) - 3

    @property
    def ncomp(self) -> int:
        return int(np.prod(self.values.shape[:-3], dtype=int))

    def magnitude(self) -> np.ndarray:
        """Pointwise absolute value (Euclidean / Frobenius over components)."""
        if self.rank == 0:
            return np.abs(self.values)
        axes = tuple(range(self.rank))
        return np.sqrt(np.sum(self.values**2, axis=axes))

    def with_values(self, values: np.ndarray, **meta) -> "Field":
        return make_field(self.grid, values, **meta)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other, self.grid))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other, self.grid))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


class ScalarField(Field):
    pass


class VectorField(Field):
    pass


class TensorField(Field):
    pass


_RANK_TYPES = {0: ScalarField, 1: VectorField, 2: TensorField}


def make_field(grid: GridSpec, values, **meta) -> Field:
    values = np.asarray(values, dtype=float)
    rank = values.ndim - 3
    if rank not in _RANK_TYPES:
        raise ValueError(f"cannot infer field rank from shape {values.shape}")
    return _RANK_TYPES[rank](grid, values, dict(meta))


def _vals(other, grid: GridSpec):
    if isinstance(other, Field):
        if other.grid != grid:
            raise ValueError("grid mismatch")
        return other.values
    return other


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """One spatial field per node of a :class:`TimeGrid`, all on one grid."""

    time: TimeGrid
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.time.size:
            raise ValueError(f"expected {self.time.size} frames, got {v.shape[0]}")
        if v.shape[-3:] != self.grid.shape:
            raise ValueError("frames do not share the grid shape")
        if not np.all(np.isfinite(v)):
            raise ValueError("space-time field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rank(self) -> int:
        return self.values.ndim - 4

    @property
    def nframes(self) -> int:
        return self.values.shape[0]

    def frame(self, m: int) -> Field:
        return make_field(self.grid, self.values[m])

    def frames(self):
        for m in range(self.nframes):
            yield self.frame(m)

    def magnitude(self) -> np.ndarray:
        if self.rank == 0:
            return np.abs(self.values)
        axes = tuple(range(1, 1 + self.rank))
        return np.sqrt(np.sum(self.values**2, axis=axes))

    def with_values(self, values) -> "SpaceTimeField":
        return SpaceTimeField(self.time, self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _st_vals(other, self))

    def __sub__(self, other):
        return self.with_values(self.values - _st_vals(other, self))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    @classmethod
    def zeros(cls, time: TimeGrid, grid: GridSpec, components=(3,)) -> "SpaceTimeField":
        return cls(time, grid, np.zeros((time.size, *components, *grid.shape)))

    @classmethod
    def from_frames(cls, time: TimeGrid, frames) -> "SpaceTimeField":
        frames = list(frames)
        grids = {f.grid for f in frames}
        if len(grids) != 1:
            raise ValueError("frames do not share one grid")
        return cls(time, frames[0].grid, np.stack([f.values for f in frames]))


def _st_vals(other, st: SpaceTimeField):
    if isinstance(other, SpaceTimeField):
        if other.grid != st.grid or other.time != st.time:
            raise ValueError("grid or time-grid mismatch")
        return other.values
    return other


def _check_finite(values: np.ndarray, grid: GridSpec, t=None):
    bad = ~np.isfinite(values)
    if bad.any():
        flat = np.argwhere(bad)[0]
        node = tuple(int(i) for i in flat[-3:])
        x = grid.coords[(slice(None),) + node]
        when = "" if t is None else f" at t={t}"
        raise ValueError(f"non-finite sample at node {node} (x={tuple(np.round(x, 6))}){when}")


def sample_function(f: Callable, grid: GridSpec, time: TimeGrid | None = None):
    """Evaluate ``f(x)`` (or ``f(x, t)``) at the grid nodes.

    ``x`` is passed as an array of shape ``(3, N, N, N)``; ``f`` returns
    values whose trailing shape is the grid shape (a scalar broadcasts).
    """
    x = grid.coords
    if time is None:
        return make_field(grid, _evaluate(f, (x,), grid))
    frames = [_evaluate(f, (x, t), grid, t) for t in time.nodes]
    return SpaceTimeField(time, grid, np.stack(frames))


def _evaluate(f, args, grid: GridSpec, t=None) -> np.ndarray:
    v = np.asarray(f(*args), dtype=float)
    if v.ndim < 3 or v.shape[-3:] != grid.shape:
        # constant (per component) result
        v = v.reshape(v.shape + (1, 1, 1))
    v = np.array(np.broadcast_to(v, v.shape[:-3] + grid.shape))
    _check_finite(v, grid, t)
    return v


# ---------------------------------------------------------------------------
# spectral calculus


def _spectral(values: np.ndarray, grid: GridSpec, multiplier) -> np.ndarray:
    return grid.ifft(grid.fft(values) * multiplier)


def partial(f: Field, axis: int) -> Field:
    k = f.grid.derivative_wavenumbers[axis]
    return f.with_values(_spectral(f.values, f.grid, 1j * k))


def grad(f: Field) -> Field:
    """Gradient; appends a trailing component index (``∂_j f_i`` at ``[i, j]``)."""
    spec = f.grid.fft(f.values)
    out = [f.grid.ifft(spec * (1j * k)) for k in f.grid.derivative_wavenumbers]
    return make_field(f.grid, np.stack(out, axis=f.rank))


def div(f: Field) -> Field:
    """Divergence over the last component index: ``(div F)_i = Σ_j ∂_j F_ij``."""
    if f.rank == 0:
        raise ValueError("divergence of a scalar field")
    spec = f.grid.fft(f.values)
    acc = 0
    for j, k in enumerate(f.grid.derivative_wavenumbers):
        acc = acc + 1j * k * spec[(Ellipsis, j, slice(None), slice(None), slice(None))]
    return make_field(f.grid, f.grid.ifft(acc))


def curl(f: Field) -> Field:
    if f.rank != 1:
        raise ValueError("curl needs a vector field")
    spec = f.grid.fft(f.values)
    kx, ky, kz = f.grid.derivative_wavenumbers
    k = (kx, ky, kz)
    out = []
    for i in range(3):
        j, l = (i + 1) % 3, (i + 2) % 3
        out.append(f.grid.ifft(1j * (k[j] * spec[l] - k[l] * spec[j])))
    return make_field(f.grid, np.stack(out))


def laplacian(f: Field) -> Field:
    return f.with_values(_spectral(f.values, f.grid, -f.grid.k_squared))


def derivative(f: Field, axis: int | None = None, operator: str | None = None) -> Field:
    """Spectral derivative: ``axis=i`` for ``∂_i`` or one of grad/div/curl/laplacian."""
    if (axis is None) == (operator is None):
        raise ValueError("give exactly one of axis or operator")
    if axis is not None:
        return partial(f, axis)
    ops = {"grad": grad, "div": div, "curl": curl, "laplacian": laplacian}
    try:
        return ops[operator](f)
    except KeyError:
        raise ValueError(f"unknown operator {operator!r}") from None


def integrate(f: Field, weight: Field | None = None):
    """``h^3`` times the sum of the values (per component for non-scalars)."""
    vals = f.values
    if weight is not None:
        if weight.grid != f.grid:
            raise ValueError("grid mismatch between field and weight")
        vals = vals * weight.values
    s = f.grid.cell_volume * np.sum(vals, axis=(-3, -2, -1))
    return float(s) if np.ndim(s) == 0 else s


# ---------------------------------------------------------------------------
# balls and rescaling


def ball_mask(grid: GridSpec, radius: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Cells whose centre lies in the open ball ``|x - center| < radius``."""
    return grid.radius(center) < radius


def restrict_to_ball(f: Field, center, radius: float) -> Field:
    if radius < 0:
        raise ValueError("negative radius")
    g = f.grid
    if not (g.contains_ball(center, radius) or g.covered_by_ball(center, radius)):
        raise ValueError(f"ball B({tuple(center)}, {radius}) exceeds the box")
    mask = ball_mask(g, radius, center)
    return f.with_values(np.where(mask, f.values, 0.0))


def aligned_rescale_grid(src: GridSpec, x0, R: float) -> GridSpec:
    """Target grid whose nodes map exactly onto source nodes under ``x -> x0 + R x``."""
    x0 = np.asarray(x0, dtype=float)
    L = src.L / R
    off = (np.asarray(src.offset) - x0) / R
    return GridSpec(L, src.N, tuple(off))


def _trig_matrix(src_axis: np.ndarray, L: float, targets: np.ndarray) -> np.ndarray:
    n = src_axis.size
    theta = 2 * np.pi * (targets[:, None] - src_axis[None, :]) / L
    kk = np.arange(1, n // 2)
    w = 1.0 + 2.0 * np.sum(np.cos(theta[..., None] * kk), axis=-1) + np.cos(theta * (n // 2))
    w /= n
    # exact selection at coincident nodes keeps grid-aligned rescales exact
    on_node = np.abs(np.angle(np.exp(1j * theta))) < 1e-9
    rows = on_node.any(axis=1)
    w[rows] = on_node[rows].astype(float)
    return w


def _linear_matrix(src_axis: np.ndarray, targets: np.ndarray) -> np.ndarray:
    h = src_axis[1] - src_axis[0]
    pos = (targets - src_axis[0]) / h
    i0 = np.clip(np.floor(pos).astype(int), 0, src_axis.size - 2)
    frac = pos - i0
    w = np.zeros((targets.size, src_axis.size))
    rows = np.arange(targets.size)
    w[rows, i0] = 1 - frac
    w[rows, i0 + 1] += frac
    return w


def rescale_field(u: Field, x0, R: float, grid: GridSpec | None = None, method: str | None = None) -> Field:
    """``v(x) = R u(x0 + R x)`` sampled on ``grid``.

    The default target grid is aligned with the source (see
    :func:`aligned_rescale_grid`), in which case no interpolation error is
    made. Otherwise the source is interpolated trigonometrically (periodic
    data, the default) or trilinearly (``method="trilinear"``, for masked
    data); the method is recorded in ``meta["interpolation"]``.
    """
    if R <= 0:
        raise ValueError("scale R must be positive")
    x0 = np.asarray(x0, dtype=float)
    src = u.grid
    if not src.contains_ball(x0, 2 * R):
        raise ValueError(f"B(x0, 2R) with R={R} is not inside the source box")
    if grid is None:
        grid = aligned_rescale_grid(src, x0, R)
    method = method or "trigonometric"
    if method not in ("trigonometric", "trilinear"):
        raise ValueError(f"unknown interpolation {method!r}")
    mats = []
    for i in range(3):
        targets = x0[i] + R * grid.axis(i)
        if method == "trigonometric":
            mats.append(_trig_matrix(src.axis(i), src.L, targets))
        else:
            mats.append(_linear_matrix(src.axis(i), targets))
    vals = np.einsum("...abc,ia,jb,kc->...ijk", u.values, *mats, optimize=True)
    return make_field(grid, R * vals, interpolation=method, x0=x0.tolist(), R=R)
