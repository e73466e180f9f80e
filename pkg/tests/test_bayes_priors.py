import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtncal.bayes.priors import (
    KdePrior,
    UniformBoxPrior,
    fit_kde_prior,
    inverse_logit_map,
    logit_map,
)
from gtncal.errors import DomainError, InsufficientDataError, NumericError

TABLE_BOX = np.array([[0.1, 0.5], [0.01, 0.05], [0.01, 0.15], [0.15, 0.35]])


class TestLogitMap:
    def test_midpoint_is_zero(self):
        bounds = np.array([[0.0, 2.0]])
        assert logit_map(np.array([1.0]), bounds)[0] == pytest.approx(0.0, abs=1e-15)

    def test_unit_box_value(self):
        bounds = np.array([[0.0, 1.0]])
        assert logit_map(np.array([0.75]), bounds)[0] == pytest.approx(math.log(3.0), rel=1e-12)

    def test_boundary_rejected(self):
        bounds = np.array([[0.0, 1.0]])
        with pytest.raises(DomainError):
            logit_map(np.array([0.0]), bounds)
        with pytest.raises(DomainError):
            logit_map(np.array([1.0]), bounds)

    @settings(max_examples=100)
    @given(st.floats(min_value=1e-8, max_value=1 - 1e-8))
    def test_roundtrip(self, t):
        bounds = np.array([[0.2, 1.7]])
        theta = np.array([0.2 + t * 1.5])
        back = inverse_logit_map(logit_map(theta, bounds), bounds)
        np.testing.assert_allclose(back, theta, atol=1e-12)

    def test_extreme_z_stays_in_box(self):
        bounds = np.array([[0.0, 1.0]])
        assert 0.0 <= inverse_logit_map(np.array([-900.0]), bounds)[0] <= 1.0
        assert 0.0 <= inverse_logit_map(np.array([900.0]), bounds)[0] <= 1.0


class TestUniformBoxPrior:
    def test_constraint_zeroes_density(self):
        prior = UniformBoxPrior(TABLE_BOX)
        ok = np.array([0.3, 0.03, 0.05, 0.25])
        bad = np.array([0.3, 0.03, 0.14, 0.15])
        bad[2] = 0.16  # outside the f_c box too, but constraint alone suffices
        viol = np.array([0.3, 0.03, 0.1499, 0.15])
        assert np.isfinite(prior.log_density(ok))[0]
        assert prior.log_density(viol)[0] > -np.inf  # 0.1499 < 0.15 is fine
        really_bad = np.array([0.3, 0.03, 0.15, 0.15])
        assert prior.log_density(really_bad)[0] == -np.inf

    def test_samples_respect_support(self):
        prior = UniformBoxPrior(TABLE_BOX)
        rng = np.random.default_rng(0)
        draws = prior.sample(5000, rng)
        assert np.all(draws >= TABLE_BOX[:, 0])
        assert np.all(draws <= TABLE_BOX[:, 1])
        assert np.all(draws[:, 2] < draws[:, 3])

    def test_degenerate_box_rejected(self):
        with pytest.raises(DomainError):
            UniformBoxPrior(np.array([[0.1, 0.1]]))


class TestKdePrior:
    def make_uniform_kde(self, m=10000, seed=1, max_centers=None):
        rng = np.random.default_rng(seed)
        prior = UniformBoxPrior(TABLE_BOX)
        samples = prior.sample(m, rng)
        return fit_kde_prior(samples, TABLE_BOX, max_centers=max_centers)

    def test_too_few_samples_refused(self):
        with pytest.raises(InsufficientDataError):
            fit_kde_prior(np.tile([0.3, 0.03, 0.05, 0.25], (20, 1)), TABLE_BOX)

    def test_degenerate_coordinate_rejected(self):
        rng = np.random.default_rng(2)
        samples = UniformBoxPrior(TABLE_BOX).sample(200, rng)
        samples[:, 1] = 0.03
        with pytest.raises(NumericError):
            fit_kde_prior(samples, TABLE_BOX)

    def test_boundary_samples_nudged(self):
        rng = np.random.default_rng(3)
        samples = UniformBoxPrior(TABLE_BOX).sample(100, rng)
        samples[0, 0] = TABLE_BOX[0, 0]  # exactly on the bound
        with pytest.warns(UserWarning):
            kde = fit_kde_prior(samples, TABLE_BOX)
        assert np.isfinite(kde.log_density(samples[1:3])).all()

    def test_zero_outside_support(self):
        kde = self.make_uniform_kde(m=500, seed=4)
        outside = np.array([[0.05, 0.03, 0.05, 0.25]])
        violating = np.array([[0.3, 0.03, 0.149, 0.1501]])
        violating[0, 2] = 0.1502  # f_c > f_f
        assert kde.log_density(outside)[0] == -np.inf
        assert kde.log_density(violating)[0] == -np.inf

    def test_normalization_by_quadrature(self):
        # 2D fixture keeps the tensor-product quadrature cheap and accurate.
        bounds = np.array([[0.0, 1.0], [2.0, 4.0]])
        rng = np.random.default_rng(5)
        z = rng.normal(size=(400, 2)) * 0.8
        samples = np.column_stack(
            [
                bounds[0, 0] + (bounds[0, 1] - bounds[0, 0]) / (1 + np.exp(-z[:, 0])),
                bounds[1, 0] + (bounds[1, 1] - bounds[1, 0]) / (1 + np.exp(-z[:, 1])),
            ]
        )
        kde = fit_kde_prior(samples, bounds, enforce_constraint=False)
        n = 160
        xs = np.linspace(bounds[0, 0] + 1e-9, bounds[0, 1] - 1e-9, n)
        ys = np.linspace(bounds[1, 0] + 1e-9, bounds[1, 1] - 1e-9, n)
        xx, yy = np.meshgrid(xs, ys)
        grid = np.column_stack([xx.ravel(), yy.ravel()])
        dens = np.exp(kde.log_density(grid)).reshape(n, n)
        integral = np.trapezoid(np.trapezoid(dens, ys, axis=0), xs)
        assert integral == pytest.approx(1.0, abs=0.01)

    def test_uniform_samples_give_flat_interior_density(self):
        kde = self.make_uniform_kde(m=10000, seed=6)
        rng = np.random.default_rng(7)
        span = TABLE_BOX[:, 1] - TABLE_BOX[:, 0]
        lo = TABLE_BOX[:, 0] + 0.05 * span
        hi = TABLE_BOX[:, 1] - 0.05 * span
        probe = lo + rng.uniform(size=(400, 4)) * (hi - lo)
        probe = probe[probe[:, 2] < probe[:, 3]]
        dens = np.exp(kde.log_density(probe))
        assert dens.max() / dens.min() < 3.0

    def test_thinning_bounds_center_count(self):
        kde = self.make_uniform_kde(m=5000, seed=8, max_centers=512)
        assert kde.centers_z.shape[0] == 512

    def test_sampling_respects_support(self):
        kde = self.make_uniform_kde(m=400, seed=9)
        rng = np.random.default_rng(10)
        draws = kde.sample(2000, rng)
        assert np.all(draws > TABLE_BOX[:, 0])
        assert np.all(draws < TABLE_BOX[:, 1])
        assert np.all(draws[:, 2] < draws[:, 3])
