"""Tests for the importance sampling p-value engine."""

import numpy as np
import pytest
from scipy import stats

from fdsaddle.exceptions import DegenerateProposal
from fdsaddle.periodogram import compute_periodogram
from fdsaddle.simulation import simulate_arfima
from fdsaddle.spectral import ArfimaModel
from fdsaddle.testing import (
    HypothesisSpec,
    IsConfig,
    cdf_approx,
    importance_sample,
    p_value_chi2,
    p_value_fdes,
    p_value_fdes_composite,
    quantiles_table,
)
from fdsaddle.whittle import solve_whittle


@pytest.fixture(scope="module")
def fitted():
    x = simulate_arfima(250, 0.2, n_series=1, seed=100)[0]
    pg = compute_periodogram(x)
    model = ArfimaModel(0, 0)
    return pg, model, solve_whittle(pg, model)


@pytest.fixture(scope="module")
def arma_fitted():
    x = simulate_arfima(400, 0.2, ar=[0.4], n_series=1, seed=101)[0]
    pg = compute_periodogram(x)
    model = ArfimaModel(1, 0)
    return pg, model, solve_whittle(pg, model, theta_init=np.array([0.2, 0.4]))


class TestImportanceSample:
    def test_self_normalizing(self):
        mean, cov = np.zeros(2), np.eye(2)
        phi = stats.multivariate_normal(mean, cov).pdf
        for R in (100, 500):
            est, se = importance_sample(phi, lambda t: True, mean, cov, R, seed=0)
            assert est == pytest.approx(1.0, abs=1e-12)
            assert se == pytest.approx(0.0, abs=1e-12)

    def test_half_space(self):
        mean, cov = np.zeros(1), np.eye(1)
        phi = stats.norm(0, 1).pdf
        est, _ = importance_sample(lambda t: phi(t[0]), lambda t: t[0] > 0,
                                   mean, cov, R=100_000, seed=1)
        assert abs(est - 0.5) < 0.01

    def test_box_mass_quadrature(self):
        # integral of a constant over [-1, 1]^2 is 4c
        c = 0.35
        est, se = importance_sample(
            lambda t: c, lambda t: np.all(np.abs(t) <= 1.0),
            np.zeros(2), 4.0 * np.eye(2), R=200_000, seed=2)
        assert abs(est - 4 * c) <= 3 * se

    def test_degenerate_proposal(self):
        with pytest.raises(DegenerateProposal):
            importance_sample(lambda t: 1.0, lambda t: True,
                              np.zeros(2), np.zeros((2, 2)), R=100, seed=0)

    def test_minimum_draws(self):
        with pytest.raises(ValueError):
            importance_sample(lambda t: 1.0, lambda t: True,
                              np.zeros(1), np.eye(1), R=50, seed=0)


class TestPValueFdes:
    def test_null_at_estimate_gives_p_near_one(self, fitted):
        pg, model, fit = fitted
        hyp = HypothesisSpec.simple(fit.theta_hat)
        rep = p_value_fdes(pg, model, fit, hyp, IsConfig(R=2000, seed=0))
        assert rep.statistic_value == pytest.approx(0.0, abs=1e-10)
        assert rep.p_fdes > 0.97

    def test_far_null_gives_p_near_zero(self, fitted):
        pg, model, fit = fitted
        hyp = HypothesisSpec.simple([0.49])
        rep = p_value_fdes(pg, model, fit, hyp, IsConfig(R=2000, seed=0))
        assert rep.p_fdes < 0.01

    def test_p_in_unit_interval_and_monotone(self, fitted):
        pg, model, fit = fitted
        cfg = IsConfig(R=1000, seed=3)
        last = 1.5
        for theta0 in (fit.theta_hat[0], 0.25, 0.3, 0.4):
            rep = p_value_fdes(pg, model, fit, HypothesisSpec.simple([theta0]), cfg)
            assert 0.0 <= rep.p_fdes <= 1.0
            assert rep.p_fdes <= last + 1e-12
            last = rep.p_fdes

    def test_deterministic(self, fitted):
        pg, model, fit = fitted
        hyp = HypothesisSpec.simple([0.25], statistic="fdet")
        cfg = IsConfig(R=500, seed=11)
        a = p_value_fdes(pg, model, fit, hyp, cfg).to_dict()
        b = p_value_fdes(pg, model, fit, hyp, cfg).to_dict()
        assert a == b

    def test_gaussian_density_reproduces_chi2(self, fitted):
        # replacing the saddlepoint density with the proposal itself makes
        # the Wald p-value exactly chi-square distributed
        pg, model, fit = fitted
        cov = fit.V_hat / fit.m
        gauss = stats.multivariate_normal(fit.theta_hat, cov)
        hyp = HypothesisSpec.simple([0.25])
        rep = p_value_fdes(pg, model, fit, hyp, IsConfig(R=20_000, seed=7),
                           density_fn=lambda t: gauss.pdf(t))
        assert abs(rep.p_fdes - rep.p_chi2) <= 2 * rep.mc_se

    def test_report_schema(self, fitted):
        pg, model, fit = fitted
        rep = p_value_fdes(pg, model, fit, HypothesisSpec.simple([0.22]),
                           IsConfig(R=300, seed=2))
        d = rep.to_dict()
        for key in ("hypothesis", "statistic", "value", "p_fdes", "p_chi2",
                    "mc_se", "R", "seed", "failures"):
            assert key in d
        assert rep.mc_se >= 0
        assert 0 <= rep.n_effective <= 300


class TestComposite:
    def test_all_slots_tested_matches_simple(self, fitted):
        pg, model, fit = fitted
        cfg = IsConfig(R=800, seed=5)
        simple = p_value_fdes(pg, model, fit, HypothesisSpec.simple([0.25]), cfg)
        comp = p_value_fdes_composite(
            pg, model, fit, HypothesisSpec.composite([0], [0.25]), cfg)
        assert comp.p_fdes == pytest.approx(simple.p_fdes, abs=1e-12)
        assert comp.statistic_value == pytest.approx(simple.statistic_value)

    def test_slot_order_invariance(self, arma_fitted):
        pg, model, fit = arma_fitted
        cfg = IsConfig(R=500, seed=6)
        a = p_value_fdes_composite(
            pg, model, fit, HypothesisSpec.composite([0, 1], [0.1, 0.3]), cfg)
        b = p_value_fdes_composite(
            pg, model, fit, HypothesisSpec.composite([1, 0], [0.3, 0.1]), cfg)
        assert a.p_fdes == pytest.approx(b.p_fdes, abs=1e-12)

    def test_nuisance_marginalized(self, arma_fitted):
        pg, model, fit = arma_fitted
        hyp = HypothesisSpec.composite([0], [fit.theta_hat[0]])
        rep = p_value_fdes_composite(pg, model, fit, hyp, IsConfig(R=800, seed=8))
        assert rep.statistic_value == pytest.approx(0.0, abs=1e-10)
        assert rep.p_fdes > 0.95


class TestCdfApprox:
    def test_limits_and_monotone(self, fitted):
        pg, model, fit = fitted
        xs = np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 50.0])
        cdf = cdf_approx(pg, model, fit, "wald", IsConfig(R=2000, seed=9), xs)
        assert cdf[0] < 0.05
        assert cdf[-1] > 0.99
        assert np.all(np.diff(cdf) >= -1e-12)
        assert np.all((0 <= cdf) & (cdf <= 1))

    def test_consistent_with_p_value(self, fitted):
        pg, model, fit = fitted
        cfg = IsConfig(R=4000, seed=10)
        for theta0 in (0.26, 0.3):
            rep = p_value_fdes(pg, model, fit, HypothesisSpec.simple([theta0]), cfg)
            cdf = cdf_approx(pg, model, fit, "wald", cfg, [rep.statistic_value])
            assert abs((1.0 - cdf[0]) - rep.p_fdes) <= max(2 * rep.mc_se, 1e-10)


class TestChi2:
    def test_reference_values(self):
        assert p_value_chi2(3.84, 1) == pytest.approx(0.05, abs=3e-4)
        assert p_value_chi2(5.991, 2) == pytest.approx(0.05, abs=1e-3)
        assert p_value_chi2(0.0, 3) == 1.0

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            p_value_chi2(-1.0, 1)
        with pytest.raises(ValueError):
            p_value_chi2(1.0, 0)


class TestQuantilesTable:
    def test_chi2_analytic(self):
        q = quantiles_table(lambda x: stats.chi2.cdf(x, 2))
        assert np.allclose(q, [4.605, 5.991, 9.210], atol=2e-3)

    def test_uniform_samples(self):
        rng = np.random.default_rng(12)
        q = quantiles_table(rng.uniform(size=200_000))
        assert np.allclose(q, [0.90, 0.95, 0.99], atol=0.01)

    def test_tabulated_cdf(self):
        xs = np.linspace(0, 20, 4001)
        q = quantiles_table((xs, stats.chi2.cdf(xs, 1)), probs=[0.95])
        assert q[0] == pytest.approx(stats.chi2.ppf(0.95, 1), abs=0.01)
