"""Fixed-point iteration ``v = v0 - Φ(φ̃ u ⊗ v)`` and its diagnostics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .grid import SpaceTimeField, ball_mask
from .localization import CutoffFamily, LocalizedState, build_cutoffs, localize
from .lorentz import lorentz_norm
from .stokes import DuhamelConfig, build_v0, duhamel_phi

__all__ = [
    "PicardConfig",
    "PicardTrace",
    "PicardProblem",
    "iteration_norm",
    "lambda_map",
    "iterate",
    "solve_fixed_point",
    "uniqueness_probe",
    "ScanReport",
    "contraction_threshold_scan",
]


@dataclass(frozen=True)
class PicardConfig:
    max_iters: int = 100
    rel_tolerance: float = 1e-10
    divergence_cap: float = 1e6
    metric: str = "X3"  # "X3" or "Y" (adds the weak L^{3+δ} part)
    delta: float = 0.5

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.divergence_cap > 1:
            raise ValueError("divergence cap must exceed 1")
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")
        if self.metric not in ("X3", "Y"):
            raise ValueError(f"unknown metric {self.metric!r}")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def iteration_norm(v: SpaceTimeField, metric: str = "X3", delta: float = 0.5) -> float:
    """Sup over frames of the weak-``L³`` box norm (plus weak ``L^{3+δ}`` for ``Y``)."""
    mag = v.magnitude()
    cv = v.grid.cell_volume
    best = 0.0
    for m in range(mag.shape[0]):
        val = lorentz_norm(mag[m], None, 3.0, np.inf, cv).value
        if metric == "Y":
            val += lorentz_norm(mag[m], None, 3.0 + delta, np.inf, cv).value
        best = max(best, val)
    return best


@dataclass
class PicardTrace:
    norms: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    ratios: list = field(default_factory=list)  # (iteration, ratio), only where d_{n-1} > 0
    residual: float = float("nan")
    verdict: str = "stalled"

    @property
    def iterations(self) -> int:
        return len(self.increments)

    @property
    def max_ratio(self) -> float:
        return max((r for _, r in self.ratios), default=0.0)

    def geometric_decay_ok(self, tail_start: int = 1, slack: float = 0.05) -> bool:
        """``ρ̄ < 1`` and ``d_n <= (1 + slack) d_m ρ̄^{n-m}`` for ``tail_start <= m < n``.

        ``ρ̄`` is the largest tail ratio. Given ``ρ̄`` the inequality only
        fails through missing ratios (a zero increment followed by a
        non-zero one); the contraction requirement ``ρ̄ < 1`` carries the
        weight of the check.
        """
        d = np.array(self.increments[tail_start:])
        tail = [r for i, r in self.ratios if i > tail_start]
        if len(d) < 2 or not tail:
            return True
        rho = max(tail)
        if not rho < 1:
            return False
        for mm in range(len(d)):
            for n in range(mm + 1, len(d)):
                if d[n] > (1 + slack) * d[mm] * rho ** (n - mm):
                    return False
        return True

    HEADER = ("iter", "norm", "increment", "ratio")

    def rows(self):
        ratio = dict(self.ratios)
        return [[n, repr(nv), repr(d), repr(ratio[n]) if n in ratio else ""] for n, (nv, d) in enumerate(zip(self.norms, self.increments))]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            w.writerows(self.rows())
        return path

    def record(self) -> dict:
        return {
            "verdict": self.verdict,
            "iterations": self.iterations,
            "max_ratio": self.max_ratio,
            "residual": self.residual,
            "final_norm": self.norms[-1] if self.norms else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.record())


@dataclass(frozen=True, eq=False)
class PicardProblem:
    """Localized data, source solution and Duhamel configuration for one flow."""

    state: LocalizedState
    v0: SpaceTimeField
    duhamel: DuhamelConfig

    @classmethod
    def from_flow(cls, u: SpaceTimeField, p: SpaceTimeField, cutoffs: CutoffFamily | None = None) -> "PicardProblem":
        state = localize(u, p, cutoffs or build_cutoffs())
        cfg = DuhamelConfig(u.time)
        v0 = build_v0(state.f0, state.f1, cfg)
        return cls(state, v0, cfg)


def lambda_map(v: SpaceTimeField, problem: PicardProblem) -> SpaceTimeField:
    """``Λv = v0 - Φ(φ̃ u ⊗ v)``."""
    st = problem.state
    if v.grid != st.grid or v.time != st.time:
        raise ValueError("iterate and data live on different grids")
    wu = st.u.values * st.phi_tilde
    frame = lambda m: wu[m][:, None] * v.values[m][None, :]
    return problem.v0 - duhamel_phi((st.grid, frame), problem.duhamel)


def iterate(problem: PicardProblem, cfg: PicardConfig = PicardConfig(), start: SpaceTimeField | None = None):
    """Run ``v_{n+1} = Λ v_n`` from ``start`` (default 0). Returns ``(v̄, trace)``."""
    v = SpaceTimeField.zeros(problem.v0.time, problem.v0.grid) if start is None else start
    nrm = lambda w: iteration_norm(w, cfg.metric, cfg.delta)
    trace = PicardTrace()
    for n in range(cfg.max_iters):
        v_new = lambda_map(v, problem)
        d = nrm(v_new - v)
        size = nrm(v_new)
        trace.norms.append(size)
        trace.increments.append(d)
        if n > 0 and trace.increments[n - 1] > 0:
            trace.ratios.append((n, d / trace.increments[n - 1]))
        v = v_new
        if not np.isfinite(size) or size > cfg.divergence_cap:
            trace.verdict = "diverged"
            return v, trace
        if d <= cfg.rel_tolerance * size or (size == 0.0 and d == 0.0):
            trace.verdict = "converged"
            break
    else:
        trace.verdict = "stalled"
    size = nrm(v)
    res = nrm(v - lambda_map(v, problem))
    trace.residual = res / size if size > 0 else res
    return v, trace


def solve_fixed_point(u: SpaceTimeField, p: SpaceTimeField, cfg: PicardConfig = PicardConfig(), cutoffs: CutoffFamily | None = None):
    """Localize ``(u, p)``, build ``v0`` and iterate from zero."""
    problem = PicardProblem.from_flow(u, p, cutoffs)
    v, trace = iterate(problem, cfg)
    return v, trace, problem


@dataclass(frozen=True)
class UniquenessReport:
    verdicts: list
    distances: np.ndarray
    tolerance: float

    @property
    def spread(self) -> float:
        return float(self.distances.max(initial=0.0))

    @property
    def ok(self) -> bool:
        return all(v == "converged" for v in self.verdicts) and self.spread <= 100 * self.tolerance


def uniqueness_probe(problem: PicardProblem, cfg: PicardConfig = PicardConfig(), starts=None, seed: int = 0):
    """Iterate from several starts and report pairwise distances of the limits.

    ``starts`` entries are space-time fields or the labels ``"zero"``,
    ``"v0"`` and ``"random"`` (a seeded smooth solenoidal history).
    """
    starts = ["zero", "v0", "random"] if starts is None else starts
    limits, verdicts = [], []
    for s in starts:
        if isinstance(s, str):
            s = _named_start(s, problem, seed)
        v, tr = iterate(problem, cfg, s)
        limits.append(v)
        verdicts.append(tr.verdict)
    n = len(limits)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = iteration_norm(limits[i] - limits[j], cfg.metric, cfg.delta)
    return UniquenessReport(verdicts, dist, cfg.rel_tolerance), limits


def _named_start(name: str, problem: PicardProblem, seed: int):
    if name == "zero":
        return None
    if name == "v0":
        return problem.v0
    if name == "random":
        from .flows import random_solenoidal

        g, tg = problem.v0.grid, problem.v0.time
        w = random_solenoidal(g, seed=seed, shells=(1, 3)).values
        scale = max(iteration_norm(problem.v0), 1.0)
        prof = np.sin(np.pi * tg.nodes)[:, None, None, None, None]
        return SpaceTimeField(tg, g, scale * prof * w[None])
    raise ValueError(f"unknown start {name!r}")


# ---------------------------------------------------------------------------
# threshold scan


@dataclass(frozen=True)
class ScanReport:
    amplitudes: np.ndarray
    max_ratios: np.ndarray
    epsilons: np.ndarray
    amplitude_star: float
    epsilon_star: float
    bracket: tuple

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.amplitudes)
        r = self.max_ratios[order]
        return bool(np.all(np.diff(r) >= -1e-12 * np.maximum(1.0, np.abs(r[1:]))))

    def record(self) -> dict:
        return {
            "amplitudes": self.amplitudes.tolist(),
            "max_ratios": self.max_ratios.tolist(),
            "epsilons": self.epsilons.tolist(),
            "amplitude_star": self.amplitude_star,
            "epsilon_star": self.epsilon_star,
            "bracket": list(self.bracket),
            "monotone": self.monotone,
        }


def flow_epsilon(u: SpaceTimeField, radius: float = 2.0) -> float:
    """``sup_t ||u(t)||_{L^{3,∞}(B_radius)}``."""
    mask = ball_mask(u.grid, radius)
    mag = u.magnitude()
    cv = u.grid.cell_volume
    return max(lorentz_norm(mag[m], mask, 3.0, np.inf, cv).value for m in range(mag.shape[0]))


def contraction_threshold_scan(
    family: Callable,
    amplitudes,
    cfg: PicardConfig = PicardConfig(max_iters=4),
    bisection_steps: int = 8,
    cutoffs: CutoffFamily | None = None,
) -> ScanReport:
    """Largest iteration ratio as a function of amplitude and its crossing of 1.

    ``family(a)`` returns the discrete pair ``(u, p)`` at amplitude ``a``.
    Each amplitude runs at most ``cfg.max_iters`` iterations; the crossing
    is refined by geometric bisection between the bracketing grid points.
    """

    def probe(a):
        if a == 0:
            return 0.0, 0.0
        u, p = family(a)
        problem = PicardProblem.from_flow(u, p, cutoffs)
        _, tr = iterate(problem, PicardConfig(cfg.max_iters, 1e-300, np.inf, cfg.metric, cfg.delta))
        return tr.max_ratio, flow_epsilon(u)

    amps = np.array(sorted(float(a) for a in amplitudes))
    ratios, eps = [], []
    for a in amps:
        r, e = probe(a)
        ratios.append(r)
        eps.append(e)
    ratios, eps = np.array(ratios), np.array(eps)
    above = np.nonzero(ratios >= 1.0)[0]
    if above.size == 0 or above[0] == 0:
        return ScanReport(amps, ratios, eps, float("nan"), float("nan"), (float("nan"), float("nan")))
    lo, hi = amps[above[0] - 1], amps[above[0]]
    for _ in range(bisection_steps):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        r, _ = probe(mid)
        if r >= 1.0:
            hi = mid
        else:
            lo = mid
    a_star = float(np.sqrt(lo * hi)) if lo > 0 else float(hi)
    u, _ = family(a_star)
    return ScanReport(amps, ratios, eps, a_star, flow_epsilon(u), (float(lo), float(hi)))
