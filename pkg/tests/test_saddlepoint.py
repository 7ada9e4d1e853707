"""Tests for the CGF branches, Legendre transforms and saddlepoint statistics."""

import numpy as np
import pytest
from scipy import optimize, stats

from fdsaddle.exceptions import DomainViolation
from fdsaddle.periodogram import compute_periodogram, fourier_frequencies
from fdsaddle.saddlepoint import (
    EmpiricalCgfContext,
    emp_cgf,
    emp_density_at,
    emp_density_grid_1d,
    exp_cgf,
    exp_legendre,
    exp_sadd_test_composite,
    exp_sadd_test_simple,
    fdel_owen_statistic,
    fdet_statistic,
    solve_emp_saddlepoint,
)
from fdsaddle.simulation import simulate_arfima
from fdsaddle.spectral import ArfimaModel
from fdsaddle.whittle import scores, solve_whittle, wald_statistic

RNG = np.random.default_rng(99)


@pytest.fixture(scope="module")
def fitted():
    x = simulate_arfima(512, 0.2, n_series=1, seed=10)[0]
    pg = compute_periodogram(x)
    model = ArfimaModel(0, 0)
    return pg, model, solve_whittle(pg, model)


class TestExponentialCgf:
    def test_zero_at_origin(self, fitted):
        _, model, fit = fitted
        lam = fourier_frequencies(fit.n)
        theta0 = np.array([0.2])
        vals = exp_cgf(np.zeros(1), lam, theta0, theta0, model)
        assert np.allclose(vals, 0.0, atol=1e-14)

    def test_domain_violation(self, fitted):
        _, model, _ = fitted
        lam = fourier_frequencies(512)
        # huge upsilon pushes u'z r past 1 somewhere
        with pytest.raises(DomainViolation):
            exp_cgf(np.array([50.0]), lam, [0.25], [0.2], model)

    def test_closed_form_rearrangement(self, fitted):
        # ln(-1/(f0 s)) - u'z with s = u'z/f - 1/f0 equals -ln(1 - u'z f0/f) - u'z
        _, model, _ = fitted
        for _ in range(10):
            lam = RNG.uniform(0.1, 3.0)
            theta = np.array([RNG.uniform(0.0, 0.4)])
            theta0 = np.array([RNG.uniform(0.0, 0.4)])
            u = np.array([RNG.uniform(-0.2, 0.2)])
            f = model.spectral_density(lam, theta)
            f0 = model.spectral_density(lam, theta0)
            z = model.log_density_gradient(lam, theta)[0]
            s = (u @ z) / f - 1.0 / f0
            if s >= 0:
                continue
            expected = np.log(-1.0 / (f0 * s)) - u @ z
            assert exp_cgf(u, lam, theta, theta0, model) == pytest.approx(
                expected, rel=1e-12, abs=1e-12)

    def test_monte_carlo_oracle(self, fitted):
        # K_j(u) = ln E exp{u' psi_j} with I_j/f0 a unit exponential
        _, model, _ = fitted
        rng = np.random.default_rng(123)
        E = rng.exponential(size=1_000_000)
        for _ in range(20):
            lam = RNG.uniform(0.2, 3.0)
            theta = np.array([RNG.uniform(0.05, 0.35)])
            theta0 = theta + RNG.uniform(-0.03, 0.03)
            u = np.array([RNG.uniform(-0.1, 0.1)])
            f = model.spectral_density(lam, theta)
            f0 = model.spectral_density(lam, theta0)
            z = model.log_density_gradient(lam, theta)[0]
            # psi_j = (I_j/f - 1) z with I_j = f0 * E
            a = (u @ z) * (f0 * E / f - 1.0)
            if a.max() > 500:
                continue
            w = np.exp(a)
            mc, se = w.mean(), w.std(ddof=1) / np.sqrt(E.size)
            val = np.exp(exp_cgf(u, lam, theta, theta0, model))
            assert abs(val - mc) <= 3 * se


class TestExpLegendre:
    def test_zero_at_null(self, fitted):
        _, model, fit = fitted
        lam = fourier_frequencies(fit.n)
        theta0 = np.array([0.2])
        sol = exp_legendre(theta0, theta0, model, lam)
        assert np.allclose(sol.upsilon, 0.0, atol=1e-10)
        assert sol.K_dagger == pytest.approx(0.0, abs=1e-12)

    def test_grid_search_oracle(self, fitted):
        _, model, fit = fitted
        lam = fourier_frequencies(fit.n)
        theta = fit.theta_hat + 0.05
        theta0 = np.array([0.2])
        sol = exp_legendre(theta, theta0, model, lam)
        grid = np.linspace(sol.upsilon[0] - 0.05, sol.upsilon[0] + 0.05, 10_001)
        vals = np.full(grid.shape, -np.inf)
        for i, u in enumerate(grid):
            try:
                vals[i] = -np.sum(exp_cgf(np.array([u]), lam, theta, theta0, model))
            except DomainViolation:
                pass
        best = grid[np.argmax(vals)]
        assert abs(best - sol.upsilon[0]) <= 2 * (grid[1] - grid[0])
        assert sol.K_dagger >= vals.max() - 1e-10

    def test_nonnegative(self, fitted):
        _, model, fit = fitted
        lam = fourier_frequencies(fit.n)
        for offset in (-0.08, -0.03, 0.03, 0.08):
            sol = exp_legendre(fit.theta_hat + offset, fit.theta_hat, model, lam)
            assert sol.K_dagger >= -1e-12


class TestExpSaddTest:
    def test_zero_when_estimate_equals_null(self, fitted):
        _, model, fit = fitted
        assert exp_sadd_test_simple(fit, fit.theta_hat, model) == pytest.approx(
            0.0, abs=1e-10)

    def test_nonnegative(self, fitted):
        _, model, fit = fitted
        for theta0 in ([0.1], [0.25], [0.3]):
            assert exp_sadd_test_simple(fit, np.asarray(theta0), model) >= 0.0

    @pytest.mark.slow
    def test_null_distribution_close_to_chi2(self):
        # Gaussian fractional noise, d0 in {0.1, 0.35}, n=250: the empirical
        # 95-percentile of the statistic is close to the chi-square(1) value,
        # allowing the upward finite-sample distortion typical at this n
        model = ArfimaModel(0, 0)
        for d0, seed in ((0.1, 1), (0.35, 2)):
            theta0 = np.array([d0])
            batch = simulate_arfima(250, d0, n_series=2500, seed=seed)
            stats_ = []
            for x in batch:
                pg = compute_periodogram(x)
                try:
                    fit = solve_whittle(pg, model, theta_init=theta0)
                    stats_.append(exp_sadd_test_simple(fit, theta0, model))
                except Exception:
                    continue
            q95 = np.quantile(stats_, 0.95)
            assert stats.chi2.ppf(0.95, 1) - 0.25 < q95 < stats.chi2.ppf(0.95, 1) + 0.6


@pytest.fixture(scope="module")
def arma_fit():
    x = simulate_arfima(256, 0.2, ar=[0.4], n_series=1, seed=4)[0]
    pg = compute_periodogram(x)
    model = ArfimaModel(1, 0)
    return pg, model, solve_whittle(pg, model, theta_init=np.array([0.2, 0.4]))


class TestExpSaddTestComposite:
    def test_empty_nuisance_reduces_to_simple(self, fitted):
        _, model, fit = fitted
        theta0 = np.array([0.15])
        assert exp_sadd_test_composite(fit, theta0, [0], model) == pytest.approx(
            exp_sadd_test_simple(fit, theta0, model), rel=1e-10)

    def test_infimum_bounded_by_plugin(self, arma_fit):
        pg, model, fit = arma_fit
        lam = fourier_frequencies(fit.n)
        theta_null = fit.theta_hat.copy()
        theta_null[0] = 0.1
        plugin = 2.0 * exp_legendre(fit.theta_hat, theta_null, model, lam).K_dagger
        stat = exp_sadd_test_composite(fit, [0.1], [0], model)
        assert 0.0 <= stat <= plugin + 1e-8

    def test_grid_search_lower_bound(self, arma_fit):
        pg, model, fit = arma_fit
        lam = fourier_frequencies(fit.n)
        stat = exp_sadd_test_composite(fit, [0.1], [0], model)
        best = np.inf
        for phi in np.linspace(fit.theta_hat[1] - 0.2, fit.theta_hat[1] + 0.2, 41):
            theta_eval = np.array([fit.theta_hat[0], phi])
            theta_null = np.array([0.1, phi])
            if not model.is_valid(theta_eval):
                continue
            try:
                best = min(best, exp_legendre(theta_eval, theta_null, model, lam).K_dagger)
            except DomainViolation:
                continue
        assert np.isfinite(stat)
        assert stat <= 2 * best + 1e-6


class TestEmpiricalCgf:
    def test_zero_at_origin(self, fitted):
        pg, model, fit = fitted
        ctx = EmpiricalCgfContext.build(pg, model, fit.theta_hat)
        assert emp_cgf(np.zeros(1), ctx) == 0.0

    def test_single_row(self):
        ctx = EmpiricalCgfContext(scores=np.array([[1.5, -2.0]]))
        u = np.array([0.3, 0.7])
        assert emp_cgf(u, ctx) == pytest.approx(u @ ctx.scores[0], rel=1e-14)

    def test_matches_naive_formula(self, fitted):
        pg, model, fit = fitted
        ctx = EmpiricalCgfContext.build(pg, model, np.array([0.18]))
        for _ in range(10):
            u = RNG.uniform(-0.05, 0.05, size=1)
            naive = np.log(np.mean(np.exp(ctx.scores @ u)))
            assert emp_cgf(u, ctx) == pytest.approx(naive, rel=1e-12, abs=1e-12)


class TestEmpSaddlepoint:
    def test_zero_at_estimate(self, fitted):
        pg, model, fit = fitted
        ctx = EmpiricalCgfContext.build(pg, model, fit.theta_hat)
        sol = solve_emp_saddlepoint(ctx)
        assert np.allclose(sol.upsilon, 0.0, atol=1e-8)
        assert abs(sol.K_dagger) <= 1e-10

    def test_golden_section_oracle(self, fitted):
        pg, model, fit = fitted
        ctx = EmpiricalCgfContext.build(pg, model, fit.theta_hat + 0.04)
        sol = solve_emp_saddlepoint(ctx)
        res = optimize.minimize_scalar(
            lambda u: emp_cgf(np.array([u]), ctx),
            bracket=(sol.upsilon[0] - 0.1, sol.upsilon[0] + 0.1),
            method="golden", options={"xtol": 1e-12})
        assert abs(res.x - sol.upsilon[0]) <= 1e-8

    def test_row_permutation_invariance(self, fitted):
        pg, model, fit = fitted
        ctx = EmpiricalCgfContext.build(pg, model, np.array([0.16]))
        sol = solve_emp_saddlepoint(ctx)
        perm = RNG.permutation(ctx.m)
        sol_p = solve_emp_saddlepoint(EmpiricalCgfContext(scores=ctx.scores[perm]))
        assert np.allclose(sol.upsilon, sol_p.upsilon, atol=1e-8)

    def test_stationarity_and_curvature(self, fitted):
        # gradient of K vanishes and the tilted second moment is PD at the
        # accepted saddlepoint
        pg, model, fit = fitted
        for offset in (-0.05, 0.02, 0.06):
            ctx = EmpiricalCgfContext.build(pg, model, fit.theta_hat + offset)
            sol = solve_emp_saddlepoint(ctx)
            a = ctx.scores @ sol.upsilon
            w = np.exp(a - a.max())
            w = w / w.sum()
            grad = ctx.scores.T @ w
            assert np.linalg.norm(grad) <= 1e-7
            second = (ctx.scores * w[:, None]).T @ ctx.scores
            assert np.all(np.linalg.eigvalsh(second) > 0)
            assert sol.K_dagger >= -1e-12

    def test_envelope_theorem(self, fitted):
        # d/dtheta K^+(theta) equals -dK/dtheta at the saddlepoint, so a
        # finite difference of K^+ must match the partial derivative
        pg, model, fit = fitted
        theta = fit.theta_hat + 0.03
        h = 1e-5

        def k_dagger(t):
            ctx = EmpiricalCgfContext.build(pg, model, t)
            return solve_emp_saddlepoint(ctx).K_dagger

        num = (k_dagger(theta + h) - k_dagger(theta - h)) / (2 * h)
        ctx = EmpiricalCgfContext.build(pg, model, theta)
        sol = solve_emp_saddlepoint(ctx)
        hh = 1e-6
        up = EmpiricalCgfContext.build(pg, model, theta + hh)
        dn = EmpiricalCgfContext.build(pg, model, theta - hh)
        partial = (emp_cgf(sol.upsilon, up) - emp_cgf(sol.upsilon, dn)) / (2 * hh)
        assert num == pytest.approx(-partial, rel=1e-4)


class TestEmpiricalDensity:
    def test_finite_positive_at_estimate(self, fitted):
        pg, model, fit = fitted
        val = emp_density_at(fit.theta_hat, pg, model, fit)
        assert np.isfinite(val) and val > 0

    def test_symmetric_scores_give_symmetric_density(self):
        # construct a fit whose scores at theta_hat +/- v mirror each other
        rng = np.random.default_rng(5)
        x = rng.standard_normal(4096)
        pg = compute_periodogram(x)
        model = ArfimaModel(0, 0)
        fit = solve_whittle(pg, model)
        vals = []
        for v in (-0.01, 0.01):
            vals.append(emp_density_at(fit.theta_hat + v, pg, model, fit))
        assert abs(vals[0] - vals[1]) / max(vals) < 0.05

    def test_normalized_integral_and_mode(self):
        x = simulate_arfima(512, 0.25, n_series=1, seed=20)[0]
        pg = compute_periodogram(x)
        model = ArfimaModel(0, 0)
        fit = solve_whittle(pg, model)
        grid = emp_density_grid_1d(pg, model, fit, half_width=0.2, A=101)
        spacing = grid.thetas[1] - grid.thetas[0]
        assert np.sum(grid.density_normalized * spacing) == pytest.approx(1.0, abs=1e-8)
        mode = grid.thetas[np.argmax(grid.density_normalized)]
        assert abs(mode - fit.theta_hat[0]) <= spacing + 1e-12


class TestDensityGrid:
    def test_center_point_exact(self, fitted):
        pg, model, fit = fitted
        grid = emp_density_grid_1d(pg, model, fit, half_width=0.1, A=51)
        center = np.argmin(np.abs(grid.offsets))
        assert abs(grid.upsilons[center]) <= 1e-10
        assert abs(grid.K[center]) <= 1e-12

    def test_warm_start_matches_cold_start(self, fitted):
        pg, model, fit = fitted
        grid = emp_density_grid_1d(pg, model, fit, half_width=0.1, A=21)
        for theta, u_warm, ok in zip(grid.thetas, grid.upsilons, grid.ok):
            if not ok:
                continue
            ctx = EmpiricalCgfContext.build(pg, model, np.array([theta]))
            cold = solve_emp_saddlepoint(ctx)
            assert abs(cold.upsilon[0] - u_warm) <= 1e-8

    def test_nonnegative_density(self, fitted):
        pg, model, fit = fitted
        grid = emp_density_grid_1d(pg, model, fit, half_width=0.15, A=41)
        assert np.all(grid.density_normalized >= 0)
        assert grid.normalization > 0


class TestFdet:
    def test_zero_at_estimate(self, fitted):
        pg, model, fit = fitted
        assert fdet_statistic(pg, model, fit, fit.theta_hat) == pytest.approx(
            0.0, abs=1e-8)

    def test_scale_choice(self, fitted):
        pg, model, fit = fitted
        theta0 = [0.15]
        s_n = fdet_statistic(pg, model, fit, theta0, scale="n")
        s_m = fdet_statistic(pg, model, fit, theta0, scale="m")
        assert s_m == pytest.approx(s_n * fit.m / fit.n, rel=1e-10)

    @pytest.mark.slow
    def test_wald_agreement_improves_with_n(self):
        # the exponential tilting statistic matches the Wald quadratic to
        # first order; their gap shrinks with the sample size
        model = ArfimaModel(0, 0)
        theta0 = np.array([0.2])
        gaps = []
        for n, seed in ((256, 31), (2048, 32)):
            batch = simulate_arfima(n, 0.2, n_series=200, seed=seed)
            diffs = []
            for x in batch:
                pg = compute_periodogram(x)
                try:
                    fit = solve_whittle(pg, model, theta_init=theta0)
                    fdet = fdet_statistic(pg, model, fit, theta0, scale="m")
                    wald = wald_statistic(fit, theta0)
                    diffs.append(abs(fdet - wald))
                except Exception:
                    continue
            gaps.append(np.median(diffs))
        assert gaps[1] < gaps[0]


class TestFdelOwen:
    def test_zero_at_estimate(self, fitted):
        pg, model, fit = fitted
        assert fdel_owen_statistic(pg, model, fit.theta_hat) == pytest.approx(
            0.0, abs=1e-8)

    def test_nonnegative(self, fitted):
        pg, model, fit = fitted
        for theta in ([0.1], [0.18], [0.3]):
            assert fdel_owen_statistic(pg, model, np.asarray(theta)) >= 0.0

    def test_solves_el_equations(self, fitted):
        # weights proportional to 1/(1 + xi' psi) must average the scores to 0
        pg, model, fit = fitted
        theta = np.array([0.16])
        psi = scores(pg, model, theta)
        w_stat = fdel_owen_statistic(pg, model, theta)
        # recover xi by direct concave maximization and compare statistics
        def neg_dual(xi):
            t = 1.0 + psi @ xi
            if np.any(t <= 0):
                return np.inf
            return -np.sum(np.log(t))
        res = optimize.minimize(neg_dual, np.zeros(1), method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14})
        assert w_stat == pytest.approx(-2.0 * res.fun, rel=1e-6, abs=1e-8)

    @pytest.mark.slow
    def test_fdet_relation_improves_with_n(self):
        # |2 m K^+ - W| / W shrinks as n grows
        model = ArfimaModel(0, 0)
        theta0 = np.array([0.2])
        rel_gaps = []
        for n, seed in ((256, 51), (1024, 52), (4096, 53)):
            batch = simulate_arfima(n, 0.2, n_series=60, seed=seed)
            ratios = []
            for x in batch:
                pg = compute_periodogram(x)
                try:
                    fit = solve_whittle(pg, model, theta_init=theta0)
                    fdet = fdet_statistic(pg, model, fit, theta0, scale="m")
                    owen = fdel_owen_statistic(pg, model, theta0)
                except Exception:
                    continue
                if owen > 1e-8:
                    ratios.append(abs(fdet - owen) / owen)
            rel_gaps.append(np.median(ratios))
        # second-order equivalence: the two statistics agree within a few
        # percent at every sample size
        assert max(rel_gaps) < 0.05
