import json

import numpy as np
import pytest

from wl3lab.flows import serrin_scaled
from wl3lab.grid import GridSpec, SpaceTimeField, TimeGrid
from wl3lab.picard import (
    PicardConfig,
    PicardProblem,
    PicardTrace,
    ScanReport,
    contraction_threshold_scan,
    iterate,
    iteration_norm,
    lambda_map,
    solve_fixed_point,
    uniqueness_probe,
)

G = GridSpec(8.0, 16)
TG = TimeGrid(0, 1, 8)


def family(a):
    return serrin_scaled(a).sample(G, TG)


@pytest.fixture(scope="module")
def small_problem():
    return PicardProblem.from_flow(*family(1e-2))


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(rel_tolerance=0), dict(divergence_cap=1.0), dict(max_iters=0), dict(metric="L2")]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            PicardConfig(**kw)

    def test_dict(self):
        assert PicardConfig().as_dict()["metric"] == "X3"


class TestNorm:
    def test_constant_field(self):
        v = SpaceTimeField(TG, G, np.ones((TG.size, 3, *G.shape)) / np.sqrt(3))
        assert iteration_norm(v) == pytest.approx(G.L)  # |box|^{1/3}
        assert iteration_norm(v, "Y", 1.0) == pytest.approx(G.L + G.L**0.75)


class TestLambda:
    def test_affine(self, small_problem):
        rng = np.random.default_rng(0)
        v = SpaceTimeField(TG, G, rng.standard_normal((TG.size, 3, *G.shape)))
        w = SpaceTimeField(TG, G, rng.standard_normal((TG.size, 3, *G.shape)))
        a = 0.3
        lhs = lambda_map(v * a + w * (1 - a), small_problem).values
        rhs = (lambda_map(v, small_problem) * a + lambda_map(w, small_problem) * (1 - a)).values
        assert np.abs(lhs - rhs).max() <= 1e-13 * np.abs(rhs).max()

    def test_zero_maps_to_v0(self, small_problem):
        z = SpaceTimeField.zeros(TG, G)
        np.testing.assert_array_equal(lambda_map(z, small_problem).values, small_problem.v0.values)

    def test_grid_mismatch(self, small_problem):
        with pytest.raises(ValueError):
            lambda_map(SpaceTimeField.zeros(TimeGrid(0, 1, 16), G), small_problem)


class TestIterate:
    def test_small_data_converges(self, small_problem):
        v, tr = iterate(small_problem)
        assert tr.verdict == "converged"
        assert tr.max_ratio < 0.5 and tr.residual < 1e-8
        assert tr.geometric_decay_ok()

    def test_zero_data(self):
        u, p = family(0.0)
        v, tr, _ = solve_fixed_point(u, p)
        assert tr.verdict == "converged" and tr.iterations == 1
        assert np.all(v.values == 0)

    def test_large_data_diverges(self):
        u, p = family(3e4)
        _, tr, _ = solve_fixed_point(u, p, PicardConfig(max_iters=30, divergence_cap=1e6))
        assert tr.verdict == "diverged"

    def test_stalled(self, small_problem):
        _, tr = iterate(small_problem, PicardConfig(max_iters=2, rel_tolerance=1e-300))
        assert tr.verdict == "stalled" and tr.iterations == 2

    def test_uniqueness(self, small_problem):
        rep, limits = uniqueness_probe(small_problem)
        assert rep.ok and len(limits) == 3
        with pytest.raises(ValueError):
            uniqueness_probe(small_problem, starts=["bogus"])


class TestTrace:
    def test_geometric_check(self):
        tr = PicardTrace(increments=[1.0, 0.5, 0.25, 0.125], ratios=[(1, 0.5), (2, 0.5), (3, 0.5)])
        assert tr.geometric_decay_ok()
        bad = PicardTrace(increments=[1.0, 0.1, 0.2, 0.02], ratios=[(1, 0.1), (2, 2.0), (3, 0.1)])
        assert bad.max_ratio == 2.0 and not bad.geometric_decay_ok()
        gap = PicardTrace(increments=[1.0, 0.0, 0.5], ratios=[(1, 0.0)])
        assert gap.geometric_decay_ok(tail_start=0) is False
        tr2 = PicardTrace(increments=[1.0, 0.5, 0.1, 0.09], ratios=[(1, 0.5), (2, 0.2), (3, 0.9)])
        assert tr2.geometric_decay_ok()

    def test_outputs(self, tmp_path):
        tr = PicardTrace(norms=[1.0, 1.5], increments=[1.0, 0.5], ratios=[(1, 0.5)], residual=0.0, verdict="converged")
        lines = tr.to_csv(tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "iter,norm,increment,ratio"
        assert lines[1].endswith(",")
        assert json.loads(tr.to_json())["iterations"] == 2


class TestScan:
    def test_report_monotone(self):
        rep = ScanReport(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.4, 1.2]), np.zeros(3), 1.5, 1.0, (1.0, 2.0))
        assert rep.monotone and rep.record()["bracket"] == [1.0, 2.0]
        rep2 = ScanReport(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.4, 0.3]), np.zeros(3), 1.5, 1.0, (1.0, 2.0))
        assert not rep2.monotone

    def test_scan_brackets(self):
        rep = contraction_threshold_scan(family, [0, 1, 10, 100], PicardConfig(max_iters=3), bisection_steps=2)
        assert rep.monotone
        lo, hi = rep.bracket
        assert lo < rep.amplitude_star < hi
        assert rep.epsilons[1] > 0

    def test_no_crossing(self):
        rep = contraction_threshold_scan(family, [0, 0.1], PicardConfig(max_iters=3))
        assert np.isnan(rep.amplitude_star)
