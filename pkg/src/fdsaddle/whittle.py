"""Whittle scores, frequency domain M-estimation and Wald-type inference.

The estimating function at Fourier frequency lambda_j is

    psi_j(I_j; theta) = (I_j / f(lambda_j; theta) - 1) z_j(theta),
    z_j(theta) = grad_theta ln f(lambda_j; theta)                  (plain)

and, when the innovation variance is concentrated out of the likelihood
(unit-variance model f_1),

    psi_j(eta) = I_j / f_1(lambda_j; eta) * (z_j - mean_j z_j)     (profiled).

The profiled centering averages over the m Fourier frequencies with divisor
m (the literature is inconsistent between m and n here; m matches the index
range actually summed).

``solve_whittle`` runs a damped Newton iteration on the score sum with a
derivative-free fallback, and returns the sandwich covariance
V = A^{-1} B A^{-T} built from the score Jacobian and outer products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .exceptions import (
    BoundaryHit,
    NonConvergence,
    SingularCovariance,
    SingularInformation,
    SingularJacobian,
)
from .periodogram import Periodogram
from .spectral import ParamVector, SpectralModel

VARIANTS = ("plain", "profiled")
_COND_MAX = 1e12


@dataclass
class WhittleFit:
    """Result of a Whittle M-estimation."""

    theta_hat: np.ndarray
    V_hat: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    converged: bool
    iterations: int
    score_norm: float
    variant: str
    m: int
    n: int
    sigma2_hat: float | None = None
    slot_names: tuple = field(default_factory=tuple)

    @property
    def params(self) -> ParamVector:
        return ParamVector(self.theta_hat, self.slot_names)

    def to_dict(self) -> dict:
        return {
            "theta_hat": [float(v) for v in self.theta_hat],
            "slots": list(self.slot_names),
            "sigma2_hat": None if self.sigma2_hat is None else float(self.sigma2_hat),
            "V_hat": [[float(v) for v in row] for row in self.V_hat],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "score_norm": float(self.score_norm),
            "variant": self.variant,
            "m": int(self.m),
            "n": int(self.n),
        }


def scores(pg: Periodogram, model: SpectralModel, theta, variant: str = "plain"):
    """Score matrix with one row psi_j per Fourier frequency, shape (m, p)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    model.validate(theta)
    f = model.spectral_density(pg.frequencies, theta)
    z = model.log_density_gradient(pg.frequencies, theta)
    r = pg.ordinates / f
    if variant == "plain":
        return (r - 1.0)[:, None] * z
    return r[:, None] * (z - z.mean(axis=0))


def score_sum(pg: Periodogram, model: SpectralModel, theta, variant: str = "plain"):
    """Sum of the scores over j = 1..m; zero at the Whittle estimate."""
    return scores(pg, model, theta, variant).sum(axis=0)


def whittle_neg_loglik(pg: Periodogram, model: SpectralModel, theta) -> float:
    """Discretized negative Whittle log-likelihood sum_j [ln f_j + I_j / f_j]."""
    model.validate(theta)
    f = model.spectral_density(pg.frequencies, theta)
    return float(np.sum(np.log(f) + pg.ordinates / f))


def profiled_objective(pg: Periodogram, model: SpectralModel, theta) -> float:
    """Profiled criterion sum_j ln f_1 + m ln( mean_j I_j / f_1 ).

    Its stationary points coincide with the roots of the profiled score sum.
    """
    model.validate(theta)
    f = model.spectral_density(pg.frequencies, theta)
    return float(np.sum(np.log(f)) + pg.m * np.log(np.mean(pg.ordinates / f)))


def profiled_sigma2(pg: Periodogram, model: SpectralModel, theta) -> float:
    """Concentrated variance estimate L_W(theta)/m = mean_j I_j / f_1(lambda_j)."""
    model.validate(theta)
    f = model.spectral_density(pg.frequencies, theta)
    return float(np.mean(pg.ordinates / f))


def score_jacobian_sum(pg: Periodogram, model: SpectralModel, theta,
                       variant: str = "plain"):
    """Jacobian of the score sum, sum_j grad_theta psi_j, shape (p, p).

    Analytic for the plain variant (uses the Hessian of ln f); central finite
    differences of the score sum for the profiled variant.
    """
    theta = np.asarray(theta, dtype=float)
    if variant == "plain":
        f = model.spectral_density(pg.frequencies, theta)
        z = model.log_density_gradient(pg.frequencies, theta)
        hess = model.log_density_hessian(pg.frequencies, theta)
        r = pg.ordinates / f
        outer = z[:, :, None] * z[:, None, :]
        return np.sum(-r[:, None, None] * outer + (r - 1.0)[:, None, None] * hess,
                      axis=0)
    p = theta.size
    jac = np.empty((p, p))
    for k in range(p):
        h = 1e-6 * max(1.0, abs(theta[k]))
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        jac[:, k] = (score_sum(pg, model, up, variant)
                     - score_sum(pg, model, dn, variant)) / (2 * h)
    return jac


def default_theta_init(pg: Periodogram, model: SpectralModel) -> np.ndarray:
    """Interior starting point: d = 0.1, AR/MA at 0, sigma2 from mean ordinate."""
    theta = np.zeros(model.n_params)
    names = model.slot_names
    if "d" in names:
        theta[names.index("d")] = 0.1
    if "sigma2" in names:
        theta[names.index("sigma2")] = max(2.0 * np.pi * np.mean(pg.ordinates), 1e-8)
    if "eta0" in names:
        theta[names.index("eta0")] = float(np.log(max(np.mean(pg.ordinates), 1e-300)))
    return theta


def _fallback_minimize(pg, model, theta, variant, max_iter):
    """Derivative-free simplex pass on the (profiled) Whittle criterion."""
    objective = profiled_objective if variant == "profiled" else whittle_neg_loglik

    def penalized(t):
        if not model.is_valid(t):
            return 1e12
        return objective(pg, model, t)

    res = optimize.minimize(penalized, theta, method="Nelder-Mead",
                            options={"maxiter": 200 * theta.size + max_iter * 10,
                                     "xatol": 1e-10, "fatol": 1e-12})
    return res.x if model.is_valid(res.x) else theta


def solve_whittle(pg: Periodogram, model: SpectralModel, theta_init=None,
                  variant: str = "plain", tol: float | None = None,
                  max_iter: int = 100) -> WhittleFit:
    """Solve sum_j psi_j(I_j; theta) = 0 by damped Newton with simplex fallback.

    Raises NonConvergence when the iteration budget is exhausted (the partial
    fit travels on the exception), SingularJacobian when the score Jacobian
    condition number exceeds 1e12 at the solution, and BoundaryHit when no
    valid damped step exists from the current iterate.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "profiled" and "sigma2" in model.slot_names:
        raise ValueError("profiled variant requires a unit-variance model")
    if theta_init is None:
        theta = default_theta_init(pg, model)
    else:
        theta = np.asarray(theta_init, dtype=float).copy()
        model.validate(theta)
    if tol is None:
        tol = 1e-8 * pg.m

    s = score_sum(pg, model, theta, variant)
    iterations = 0
    fallback_used = False
    while np.linalg.norm(s) > tol and iterations < max_iter:
        jac = score_jacobian_sum(pg, model, theta, variant)
        try:
            step = np.linalg.solve(jac, -s)
        except np.linalg.LinAlgError:
            step = -np.linalg.pinv(jac) @ s
        # backtracking line search on ||score||, staying inside the valid region
        norm0, alpha, accepted = np.linalg.norm(s), 1.0, False
        found_valid = False
        for _ in range(40):
            cand = theta + alpha * step
            if model.is_valid(cand):
                found_valid = True
                s_cand = score_sum(pg, model, cand, variant)
                if np.linalg.norm(s_cand) < norm0 * (1.0 - 1e-4 * alpha):
                    theta, s, accepted = cand, s_cand, True
                    break
            alpha *= 0.5
        iterations += 1
        if not found_valid:
            raise BoundaryHit("no valid damped Newton step inside the parameter region")
        if not accepted:
            # Newton stalled: one simplex pass on the likelihood, then resume
            if fallback_used:
                break
            fallback_used = True
            theta = _fallback_minimize(pg, model, theta, variant, max_iter)
            s = score_sum(pg, model, theta, variant)

    score_norm = float(np.linalg.norm(s))
    converged = score_norm <= tol
    jac = score_jacobian_sum(pg, model, theta, variant)
    A = jac / pg.m
    if converged and np.linalg.cond(A) > _COND_MAX:
        raise SingularJacobian("score Jacobian numerically singular at the solution")
    psi = scores(pg, model, theta, variant)
    B = psi.T @ psi / pg.m
    try:
        Ainv = np.linalg.inv(A)
        V = Ainv @ B @ Ainv.T
        V = 0.5 * (V + V.T)
    except np.linalg.LinAlgError:
        V = np.full((model.n_params, model.n_params), np.nan)
    fit = WhittleFit(
        theta_hat=theta, V_hat=V, A_hat=A, B_hat=B, converged=converged,
        iterations=iterations, score_norm=score_norm, variant=variant,
        m=pg.m, n=pg.n,
        sigma2_hat=profiled_sigma2(pg, model, theta) if variant == "profiled" else None,
        slot_names=tuple(model.slot_names),
    )
    if not converged:
        raise NonConvergence(
            f"score norm {score_norm:.3e} > tol {tol:.3e} after {iterations} iterations",
            result=fit)
    return fit


def wald_statistic(fit: WhittleFit, theta0, scale: str = "m", slots=None) -> float:
    """Wald quadratic form scale*(theta_hat - theta0)' V^{-1} (theta_hat - theta0).

    ``scale`` is "m" (number of Fourier frequencies, the operative definition)
    or "n" (sample size).  ``slots`` optionally restricts the test to a
    sub-vector of parameter indices (nuisance components are dropped together
    with their rows/columns of V).
    """
    if not fit.converged:
        raise NonConvergence("Wald statistic requires a converged fit", result=fit)
    theta0 = np.asarray(theta0, dtype=float)
    delta = fit.theta_hat - theta0
    V = fit.V_hat
    if slots is not None:
        slots = list(slots)
        delta = delta[slots]
        V = V[np.ix_(slots, slots)]
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > _COND_MAX:
        raise SingularCovariance("sandwich covariance is not invertible")
    c = fit.m if scale == "m" else fit.n
    return float(c * delta @ np.linalg.solve(V, delta))


def asymptotic_covariance(model: SpectralModel, theta, n_freq_grid: int = 10_000):
    """First order asymptotic covariance 4 pi (int_Pi (grad ln f)(grad ln f)' )^{-1}.

    The integral over (-pi, pi] is evaluated on (0, pi) (the integrand is
    even in lambda) by a midpoint rule under the graded substitution
    lambda = pi u^3, which tames the logarithmic singularity of the
    d-component at the origin.
    """
    model.validate(theta)
    u = (np.arange(n_freq_grid) + 0.5) / n_freq_grid
    lam = np.pi * u**3
    z = model.log_density_gradient(lam, theta)
    w = 3.0 * np.pi * u**2 / n_freq_grid
    integral = 2.0 * (z.T @ (z * w[:, None]))
    if np.linalg.matrix_rank(integral, tol=1e-10 * np.linalg.norm(integral)) < model.n_params:
        raise SingularInformation("information integral is rank deficient")
    cov = 4.0 * np.pi * np.linalg.inv(integral)
    return 0.5 * (cov + cov.T)


class WhittleEstimator:
    """Whittle M-estimator with a scikit-learn style fit/get_params surface.

    Parameters
    ----------
    model : SpectralModel
        Parametric spectral density family.
    variant : {"plain", "profiled"}
        Score variant; "profiled" concentrates the innovation variance out
        and requires a unit-variance model.
    taper : Taper or None
        Data taper applied before the DFT (None means h == 1).
    theta_init : array or None
        Starting point; defaults to an interior point of the valid region.
    tol : float or None
        Convergence tolerance on the score sum norm; defaults to 1e-8 * m.
    max_iter : int
        Newton iteration budget.
    """

    def __init__(self, model=None, variant="plain", taper=None, theta_init=None,
                 tol=None, max_iter=100):
        self.model = model
        self.variant = variant
        self.taper = taper
        self.theta_init = theta_init
        self.tol = tol
        self.max_iter = max_iter

    _param_names = ("model", "variant", "taper", "theta_init", "tol", "max_iter")

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._param_names:
                raise ValueError(f"invalid parameter {name!r} for WhittleEstimator")
            setattr(self, name, value)
        return self

    def fit(self, X, y=None):
        """Fit the spectral model to one time series (1-d array-like)."""
        from .periodogram import compute_periodogram

        if self.model is None:
            raise ValueError("WhittleEstimator requires a model")
        pg = compute_periodogram(np.asarray(X, dtype=float), self.taper)
        fit = solve_whittle(pg, self.model, theta_init=self.theta_init,
                            variant=self.variant, tol=self.tol,
                            max_iter=self.max_iter)
        self.periodogram_ = pg
        self.fit_ = fit
        self.theta_hat_ = fit.theta_hat
        self.sigma2_hat_ = fit.sigma2_hat
        self.V_hat_ = fit.V_hat
        return self

    def predict(self, lam):
        """Fitted spectral density evaluated at the given frequencies."""
        if not hasattr(self, "fit_"):
            raise NonConvergence("estimator is not fitted")
        return self.model.spectral_density(np.asarray(lam, dtype=float),
                                           self.theta_hat_)
