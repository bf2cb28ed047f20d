import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wl3lab.grid import GridSpec, ScalarField, laplacian, sample_function
from wl3lab.kernels import (
    decay_scan,
    heat_convolution_quadrature,
    heat_kernel,
    newtonian_of_gaussian,
    newtonian_potential,
    oseen_derivative,
    oseen_sample,
    oseen_tensor,
    oseen_tensor_quadrature,
    oseen_time_derivative,
    oseen_time_space_derivative,
    psi_quadrature,
    tail_exponent,
)

points = st.tuples(*[st.floats(-4, 4)] * 3).map(np.array)
times = st.floats(0.05, 5.0)


def fd(f, x, t, k, h=1e-4):
    e = np.eye(3)[k] * h
    return (-f(x + 2 * e, t) + 8 * f(x + e, t) - 8 * f(x - e, t) + f(x - 2 * e, t)) / (12 * h)


class TestHeat:
    def test_negative_time(self):
        with pytest.raises(ValueError):
            heat_kernel(np.zeros(3), 0.0)

    def test_origin(self):
        assert heat_kernel(np.zeros(3), 1.0) == pytest.approx((4 * np.pi) ** -1.5)

    def test_semigroup(self):
        x = np.array([0.3, -0.7, 1.1])
        assert heat_convolution_quadrature(x, 0.4, 0.9) == pytest.approx(heat_kernel(x, 1.3), rel=1e-10)

    def test_psi_closed_vs_quadrature(self):
        for r in (0.0, 1e-6, 0.3, 2.0, 7.0):
            assert newtonian_of_gaussian(r, 0.7) == pytest.approx(psi_quadrature(r, 0.7), rel=1e-10)


class TestOseen:
    @given(points, times)
    def test_trace_law(self, x, t):
        S = oseen_tensor(x, t)
        assert np.trace(S) == pytest.approx(2 * heat_kernel(x, t), rel=1e-9, abs=1e-14)

    @given(points, times)
    def test_symmetric(self, x, t):
        S = oseen_tensor(x, t)
        np.testing.assert_allclose(S, S.T, atol=1e-15)

    @given(points, times)
    def test_row_divergence_free(self, x, t):
        D = oseen_derivative(x, t)
        div = np.einsum("ijj->i", D)
        assert np.abs(div).max() <= 1e-8 * np.abs(D).max() + 1e-15

    @given(points, st.floats(0.5, 4.0))
    def test_derivative_vs_fd(self, x, t):
        D = oseen_derivative(x, t)
        for k in range(3):
            np.testing.assert_allclose(D[..., k], fd(oseen_tensor, x, t, k), atol=1e-8)

    @given(points, st.floats(0.5, 4.0))
    def test_time_derivative_is_laplacian(self, x, t):
        # ∂_t S = ΔS away from the origin in space-time
        lap = sum(fd(lambda y, s: oseen_derivative(y, s, k), x, t, k) for k in range(3))
        np.testing.assert_allclose(oseen_time_derivative(x, t), lap, atol=1e-8)

    @given(points, st.floats(0.5, 4.0))
    def test_time_space_derivative(self, x, t):
        dt = 1e-4
        num = (oseen_derivative(x, t + dt) - oseen_derivative(x, t - dt)) / (2 * dt)
        np.testing.assert_allclose(oseen_time_space_derivative(x, t), num, atol=1e-7)

    def test_series_closed_seam(self):
        # profiles switch method at |y| = 2; both sides must agree
        w = np.array([1.0, 0.0, 0.0])
        lo, hi = oseen_tensor(w * (2 - 1e-12), 1.0), oseen_tensor(w * (2 + 1e-12), 1.0)
        np.testing.assert_allclose(lo, hi, rtol=1e-10)

    def test_origin_limit(self):
        # S(0, 1) = (2/3) Γ(0, 1) δ
        np.testing.assert_allclose(oseen_tensor(np.zeros(3), 1.0), (2 / 3) * (4 * np.pi) ** -1.5 * np.eye(3), rtol=1e-12)

    @given(points, times, st.floats(0.2, 5.0))
    def test_parabolic_scaling(self, x, t, lam):
        np.testing.assert_allclose(oseen_tensor(lam * x, lam**2 * t), lam**-3 * oseen_tensor(x, t), rtol=1e-9, atol=1e-16)

    def test_quadrature_oracle(self):
        x = np.array([0.4, -1.2, 0.9])
        a = oseen_sample(x, 0.8).value
        b = oseen_sample(x, 0.8, method="quadrature_oracle").value
        assert np.abs(a - b).max() / np.abs(b).max() < 1e-6
        with pytest.raises(ValueError):
            oseen_sample(x, 0.8, method="guess")

    def test_batched(self):
        x = np.random.default_rng(0).standard_normal((5, 4, 3))
        assert oseen_tensor(x, 1.0).shape == (5, 4, 3, 3)
        assert oseen_derivative(x, np.full((5, 4), 2.0)).shape == (5, 4, 3, 3, 3)


class TestDecayScan:
    def test_small_scan(self):
        rep = decay_scan(0, 0, n_r=9, n_t=9, n_dir=2)
        assert rep.C_emp > 0 and rep.weight_exponent == 3
        assert json.loads(rep.to_json())["n_samples"] == rep.n_samples

    def test_unsupported(self):
        with pytest.raises(ValueError):
            decay_scan(2, 0)
        with pytest.raises(ValueError):
            decay_scan(0, 0, n_dir=0)


class TestPoisson:
    def test_single_mode(self):
        g = GridSpec(2 * np.pi, 16)
        src = ScalarField(g, np.sin(g.coords[0]) * np.cos(2 * g.coords[1]))
        eta = newtonian_potential(src)
        np.testing.assert_allclose(-laplacian(eta).values, src.values, atol=1e-12)
        np.testing.assert_allclose(eta.values, src.values / 5, atol=1e-13)

    def test_mean_rejected(self):
        g = GridSpec(2 * np.pi, 8)
        with pytest.raises(ValueError, match="mean"):
            newtonian_potential(ScalarField(g, np.ones(g.shape)))
        with pytest.raises(ValueError):
            newtonian_potential(sample_function(lambda x: x, g))


class TestTail:
    def test_power_law(self):
        r = np.geomspace(1, 10, 200)
        slope, _ = tail_exponent(3 * r**-2.5, r, 1, 10)
        assert slope == pytest.approx(-2.5, abs=1e-2)  # shell maxima sit near inner edges

    def test_too_few_shells(self):
        with pytest.raises(ValueError):
            tail_exponent(np.ones(2), np.array([1.0, 1.1]), 1, 10)
