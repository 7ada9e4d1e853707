"""ARFIMA simulation and Monte Carlo studies.

Series are generated by truncated fractional differencing of i.i.d.
innovations followed by the ARMA filter: with fractional weights
a_0 = 1, a_r = a_{r-1} (r - 1 + d) / r,

    y_t = sum_{r=0}^{T} a_r xi_{t-r},    X_t = ARMA filter applied to y_t,

using T = 5000 truncation and 1000 burn-in observations by default.  Four
standardized innovation laws are supported (all mean 0, variance 1):
Gaussian, uniform, rescaled Student t with 6 df, and centered chi-square
with 5 df.  Batches of series are produced with one FFT convolution and one
vectorized linear filter; per-series seeds come from a spawned
``SeedSequence`` so chunked generation is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from .exceptions import (
    BoundaryHit,
    Degenerate,
    InfeasibleTilt,
    NonConvergence,
    SingularJacobian,
    SingularTilt,
)
from .periodogram import compute_periodogram
from .saddlepoint import exp_sadd_test_simple, fdel_owen_statistic, fdet_statistic
from .whittle import solve_whittle, wald_statistic

INNOVATION_LAWS = ("gaussian", "uniform", "t6", "chisq5")
DEFAULT_TRUNCATION = 5000
DEFAULT_BURN_IN = 1000


def draw_innovations(law: str, size, rng) -> np.ndarray:
    """Standardized innovations (mean 0, variance 1) from the named law."""
    if law == "gaussian":
        return rng.standard_normal(size)
    if law == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
    if law == "t6":
        # t_nu has variance nu / (nu - 2)
        return rng.standard_t(6, size) * np.sqrt(4.0 / 6.0)
    if law == "chisq5":
        return (rng.chisquare(5, size) - 5.0) / np.sqrt(10.0)
    raise ValueError(f"unknown innovation law {law!r}")


def frac_diff_weights(d: float, n_weights: int) -> np.ndarray:
    """First ``n_weights`` MA(inf) coefficients of (1 - B)^{-d}."""
    a = np.empty(n_weights)
    a[0] = 1.0
    for r in range(1, n_weights):
        a[r] = a[r - 1] * (r - 1 + d) / r
    return a


def _seed_children(seed, n_series):
    """Per-series SeedSequences from an int, a SeedSequence, or a list."""
    if isinstance(seed, (list, tuple)):
        if len(seed) != n_series:
            raise ValueError("need one seed per series")
        return list(seed)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(n_series)


def simulate_arfima(n: int, d: float, ar=(), ma=(), sigma2: float = 1.0,
                    law: str = "gaussian", n_series: int = 1, seed=0,
                    truncation: int = DEFAULT_TRUNCATION,
                    burn_in: int = DEFAULT_BURN_IN) -> np.ndarray:
    """Simulate ARFIMA(p, d, q) series; returns shape (n_series, n).

    ``ar`` and ``ma`` follow the convention of the spectral density
    |1 + ma(z)|^2 / |1 - ar(z)|^2, i.e. phi(B) X = theta(B) eps with
    phi(z) = 1 - sum phi_k z^k and theta(z) = 1 + sum theta_k z^k.
    """
    if n < 1:
        raise ValueError("n must be positive")
    ar = np.asarray(ar, dtype=float).reshape(-1)
    ma = np.asarray(ma, dtype=float).reshape(-1)
    total = burn_in + n
    children = _seed_children(seed, n_series)
    xi = np.empty((n_series, total + truncation))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        xi[i] = draw_innovations(law, total + truncation, rng)
    xi *= np.sqrt(sigma2)
    weights = frac_diff_weights(d, truncation + 1)
    y = signal.fftconvolve(xi, weights[None, :], mode="full", axes=1)
    y = y[:, truncation:truncation + total]
    b = np.concatenate([[1.0], ma])
    a = np.concatenate([[1.0], -ar])
    x = signal.lfilter(b, a, y, axis=1)
    return x[:, burn_in:]


@dataclass
class SwStudyResult:
    """Shapiro-Wilk rejection rate for standardized periodogram residuals."""

    n: int
    d: float
    law: str
    n_reps: int
    alpha: float
    rejection_rate: float
    p_values: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "law": self.law,
                "n_reps": self.n_reps, "alpha": self.alpha,
                "rejection_rate": float(self.rejection_rate)}


def gaussianized_residuals(pg, model, theta) -> np.ndarray:
    """Map standardized ordinates through 1 - exp(-x) and the normal quantile."""
    x = pg.ordinates / model.spectral_density(pg.frequencies, theta)
    u = 1.0 - np.exp(-x)
    tiny = np.finfo(float).tiny
    u = np.clip(u, tiny, np.nextafter(1.0, 0.0))
    return stats.norm.ppf(u)


def shapiro_wilk_study(n: int, d: float, model, theta, law: str = "gaussian",
                       n_reps: int = 5000, alpha: float = 0.05, seed: int = 0,
                       sigma2: float = 1.0, ar=(), ma=(),
                       chunk: int = 250) -> SwStudyResult:
    """Rejection rate of Shapiro-Wilk applied to gaussianized ordinates.

    Each replicate simulates an ARFIMA series, standardizes its periodogram
    by the true spectral density, transforms to normality under the limiting
    exponential law, and tests with Shapiro-Wilk at level ``alpha``.
    """
    theta = np.asarray(theta, dtype=float)
    children = _seed_children(seed, n_reps)
    p_values = np.empty(n_reps)
    done = 0
    while done < n_reps:
        k = min(chunk, n_reps - done)
        batch = simulate_arfima(n, d, ar=ar, ma=ma, sigma2=sigma2, law=law,
                                n_series=k, seed=children[done:done + k])
        for i in range(k):
            pg = compute_periodogram(batch[i])
            eps = gaussianized_residuals(pg, model, theta)
            p_values[done + i] = stats.shapiro(eps).pvalue
        done += k
    rate = float(np.mean(p_values < alpha))
    return SwStudyResult(n=n, d=d, law=law, n_reps=n_reps, alpha=alpha,
                         rejection_rate=rate, p_values=p_values)


def _sim_params_from_model(model, theta):
    """(d, ar, ma, sigma2) simulation inputs for an ARFIMA model vector."""
    theta = np.asarray(theta, dtype=float)
    d = float(theta[model.d_index])
    p, q = model.ar_order, model.ma_order
    ar = theta[1:1 + p] if p else ()
    ma = theta[1 + p:1 + p + q] if q else ()
    if model.fix_sigma2:
        sigma2 = model.sigma2
    else:
        sigma2 = float(theta[-1])
    return d, ar, ma, sigma2


@dataclass
class McNullResult:
    """Null-distribution Monte Carlo output for one sample size."""

    n: int
    n_reps: int
    statistics: tuple
    values: np.ndarray = field(repr=False)   # (n_ok, k), NaN where a stat failed
    theta_hats: np.ndarray = field(repr=False)
    fit_failures: int = 0
    stat_failures: dict = field(default_factory=dict)
    seed: int = 0

    def column(self, name: str) -> np.ndarray:
        vals = self.values[:, self.statistics.index(name)]
        return vals[np.isfinite(vals)]

    def quantile(self, name: str, q) -> np.ndarray:
        return np.quantile(self.column(name), q, method="linear")

    def rejection_rate(self, name: str, critical: float) -> float:
        col = self.column(name)
        return float(np.mean(col > critical))

    def to_dict(self) -> dict:
        return {
            "n": self.n, "n_reps": self.n_reps, "seed": self.seed,
            "statistics": list(self.statistics),
            "fit_failures": self.fit_failures,
            "stat_failures": {k: int(v) for k, v in self.stat_failures.items()},
            "quantiles": {
                name: {str(q): float(self.quantile(name, q))
                       for q in (0.5, 0.9, 0.95, 0.99)}
                for name in self.statistics if self.column(name).size
            },
        }


def _one_null_statistic(name, pg, model, fit, theta0, variant):
    if name == "wald":
        return wald_statistic(fit, theta0)
    if name == "fdet":
        return fdet_statistic(pg, model, fit, theta0)
    if name == "owen":
        return fdel_owen_statistic(pg, model, theta0, variant)
    if name == "esadd":
        return exp_sadd_test_simple(fit, theta0, model)
    if name == "fdet_m":
        return fdet_statistic(pg, model, fit, theta0, scale="m")
    raise ValueError(f"unknown statistic {name!r}")


def mc_null_distribution(n: int, model, theta0,
                         statistics=("wald", "fdet", "owen"),
                         n_reps: int = 1000, law: str = "gaussian",
                         variant: str = "plain", seed: int = 0,
                         truncation: int = DEFAULT_TRUNCATION,
                         burn_in: int = DEFAULT_BURN_IN,
                         chunk: int = 250) -> McNullResult:
    """Monte Carlo null distribution of frequency domain test statistics.

    Simulates under ``theta0``, refits by Whittle estimation, and evaluates
    each named statistic at the null point.  Replicates where the fit fails
    are dropped (and counted); per-statistic tilting failures leave NaN in
    that column only.
    """
    theta0 = np.asarray(theta0, dtype=float)
    d, ar, ma, sigma2 = _sim_params_from_model(model, theta0)
    children = _seed_children(seed, n_reps)
    values = np.full((n_reps, len(statistics)), np.nan)
    theta_hats = np.full((n_reps, len(theta0)), np.nan)
    fit_failures = 0
    stat_failures = {name: 0 for name in statistics}
    done = 0
    while done < n_reps:
        k = min(chunk, n_reps - done)
        batch = simulate_arfima(n, d, ar=ar, ma=ma, sigma2=sigma2, law=law,
                                n_series=k, seed=children[done:done + k],
                                truncation=truncation, burn_in=burn_in)
        for i in range(k):
            r = done + i
            pg = compute_periodogram(batch[i])
            try:
                fit = solve_whittle(pg, model, theta_init=theta0,
                                    variant=variant)
            except (NonConvergence, BoundaryHit, SingularJacobian,
                    np.linalg.LinAlgError):
                fit_failures += 1
                continue
            theta_hats[r] = fit.theta_hat
            for j, name in enumerate(statistics):
                try:
                    values[r, j] = _one_null_statistic(
                        name, pg, model, fit, theta0, variant)
                except (NonConvergence, Degenerate, SingularTilt,
                        InfeasibleTilt):
                    stat_failures[name] += 1
        done += k
    kept = np.any(np.isfinite(values), axis=1) | np.all(
        np.isfinite(theta_hats), axis=1)
    return McNullResult(n=n, n_reps=n_reps, statistics=tuple(statistics),
                        values=values[kept], theta_hats=theta_hats[kept],
                        fit_failures=fit_failures,
                        stat_failures=stat_failures, seed=seed)


def power_curve(n: int, model, d_null: float, d_alternatives,
                n_reps: int = 500, law: str = "gaussian", alpha: float = 0.05,
                seed: int = 0, chunk: int = 250) -> np.ndarray:
    """Rejection rate of the exponential saddlepoint test across true d values.

    For each alternative d the series are simulated there, the long-memory
    model refit, and H0: d = d_null tested against the chi-square(1) critical
    value at level ``alpha``.  Returns one rejection rate per alternative.
    """
    crit = stats.chi2.ppf(1.0 - alpha, 1)
    theta_null = np.array([d_null])
    rates = np.empty(len(d_alternatives))
    for a, d_true in enumerate(d_alternatives):
        children = _seed_children(seed + a, n_reps)
        rejected = 0
        fitted = 0
        done = 0
        while done < n_reps:
            k = min(chunk, n_reps - done)
            batch = simulate_arfima(n, d_true, law=law, n_series=k,
                                    seed=children[done:done + k])
            for i in range(k):
                pg = compute_periodogram(batch[i])
                try:
                    fit = solve_whittle(pg, model, theta_init=np.array([d_true]))
                    stat = exp_sadd_test_simple(fit, theta_null, model)
                except (NonConvergence, BoundaryHit, SingularJacobian,
                        Degenerate, SingularTilt):
                    continue
                fitted += 1
                if stat > crit:
                    rejected += 1
            done += k
        rates[a] = rejected / max(fitted, 1)
    return rates
