"""Cumulant generating functions, Legendre transforms and saddlepoint tools.

Two CGF branches share the same general Legendre transform machinery:

* the exponential branch treats the standardized periodogram ordinates as
  unit exponentials, giving the closed form per-frequency CGF
  ``-ln(1 - u'z_j f0_j/f_j) - u'z_j``;
* the empirical branch uses the log-mean-exp of the tilted scores,
  ``K(u; theta) = ln( mean_j exp(u' psi_j) )``.

For either branch the Legendre transform is K^+(theta) = sup_u { -K(u; theta) },
attained at the saddlepoint solving d/du K = 0.  K^+ vanishes exactly at the
point where the scores sum to zero (the Whittle estimate for the empirical
branch, the null value for the exponential one) and is nonnegative wherever
the solver converges, since u = 0 is always feasible with K(0) = 0.

The empirical saddlepoint density of the Whittle estimator is

    g(theta) = (m/2pi)^{p/2} |det M(theta)| |det S(theta)|^{-1/2} exp{m K(theta)}

with M and S the tilted score-Jacobian and second-moment matrices (each
carrying the exp{-K} prefactor).  Everything is evaluated in log space and
exponentiated only at the final density value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import (
    Degenerate,
    DomainViolation,
    InfeasibleTilt,
    NonConvergence,
    SingularTilt,
)
from .periodogram import Periodogram, fourier_frequencies
from .whittle import WhittleFit, scores

NEWTON_TOL = 1e-10   # on ||tilted score|| / m
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 40


@dataclass
class SaddlepointSolution:
    """Saddlepoint, residual and CGF value at the optimum."""

    upsilon: np.ndarray
    converged: bool
    residual: float
    K_value: float

    @property
    def K_dagger(self) -> float:
        return -self.K_value


def _logmeanexp(a: np.ndarray) -> float:
    shift = np.max(a)
    return float(shift + np.log(np.mean(np.exp(a - shift))))


# ---------------------------------------------------------------------------
# exponential branch
# ---------------------------------------------------------------------------

def exp_cgf(upsilon, lam, theta, theta0, model):
    """Per-frequency exponential-based CGF of the Whittle score.

    Returns an array aligned with ``lam`` (scalar in, scalar out).  Raises
    DomainViolation outside the convergence region, i.e. when
    u'z_j * f(lam_j; theta0)/f(lam_j; theta) >= 1 for some frequency.
    """
    scalar = np.isscalar(lam)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    upsilon = np.atleast_1d(np.asarray(upsilon, dtype=float))
    f = model.spectral_density(lam, theta)
    f0 = model.spectral_density(lam, theta0)
    z = model.log_density_gradient(lam, theta)
    uz = z @ upsilon
    t = 1.0 - uz * f0 / f  # equals -f0 * s_j; domain requires s_j < 0
    if np.any(t <= 0.0):
        raise DomainViolation("tilting vector outside the CGF convergence region")
    out = -np.log(t) - uz
    return float(out[0]) if scalar else out


def exp_legendre(theta, theta0, model, frequencies,
                 tol: float = NEWTON_TOL,
                 max_iter: int = NEWTON_MAX_ITER) -> SaddlepointSolution:
    """General Legendre transform of the exponential-based CGF.

    Minimizes the convex K(u) = sum_j [-ln(1 - u'z_j r_j) - u'z_j] with
    r_j = f(lam_j; theta0)/f(lam_j; theta) by Newton with domain-respecting
    backtracking; returns the saddlepoint and K^+ = -K at the optimum.
    """
    lam = np.asarray(frequencies, dtype=float)
    m = lam.size
    f = model.spectral_density(lam, theta)
    f0 = model.spectral_density(lam, theta0)
    z = model.log_density_gradient(lam, theta)
    r = f0 / f
    p = z.shape[1]
    u = np.zeros(p)

    def parts(u):
        t = 1.0 - (z @ u) * r
        if np.any(t <= 0.0):
            return None
        K = float(np.sum(-np.log(t) - z @ u))
        grad = z.T @ (r / t - 1.0)
        return t, K, grad

    t, K, grad = parts(u)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol * m:
            break
        w = (r / t)**2
        hess = (z * w[:, None]).T @ z
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.pinv(hess) @ grad
        alpha, moved = 1.0, False
        for _ in range(MAX_HALVINGS):
            res = parts(u + alpha * step)
            if res is not None and res[1] < K:
                u, (t, K, grad) = u + alpha * step, res
                moved = True
                break
            alpha *= 0.5
        if not moved:
            # the descent stalls once the gradient is rounding-limited
            if np.linalg.norm(grad) <= np.sqrt(np.finfo(float).eps) * m:
                break
            raise DomainViolation("no feasible descent step for the exponential CGF")
    residual = float(np.linalg.norm(grad)) / m
    if residual > max(tol, np.sqrt(np.finfo(float).eps)):
        raise NonConvergence(
            f"exponential saddlepoint residual {residual:.3e} > {tol:.1e}",
            result=SaddlepointSolution(u, False, residual, K))
    return SaddlepointSolution(u, True, residual, K)


def exp_sadd_test_simple(fit: WhittleFit, theta0, model) -> float:
    """Saddlepoint test statistic 2 K^+(theta_hat) for H0: theta = theta0.

    The CGF is anchored at the null value theta0 and the Legendre transform
    evaluated at the estimate; asymptotic reference chi-square with p degrees
    of freedom.
    """
    if not fit.converged:
        raise NonConvergence("saddlepoint test requires a converged fit", result=fit)
    freqs = fourier_frequencies(fit.n)
    sol = exp_legendre(fit.theta_hat, theta0, model, freqs)
    return 2.0 * sol.K_dagger


def exp_sadd_test_composite(fit: WhittleFit, theta1_0, tested_slots, model,
                            optimizer_cfg: dict | None = None) -> float:
    """Composite saddlepoint statistic, nuisance concentrated by minimization.

    2 inf over nuisance values of K^+ evaluated at (theta_hat_tested, nuisance)
    with the CGF anchored at (theta1_0, nuisance); reference chi-square with
    dim(tested) degrees of freedom.  The outer minimization is a bounded
    simplex search started at the estimated nuisance components.
    """
    if not fit.converged:
        raise NonConvergence("saddlepoint test requires a converged fit", result=fit)
    tested = list(tested_slots)
    theta1_0 = np.atleast_1d(np.asarray(theta1_0, dtype=float))
    if len(theta1_0) != len(tested):
        raise ValueError("theta1_0 length must match tested_slots")
    nuisance = [k for k in range(len(fit.theta_hat)) if k not in tested]
    freqs = fourier_frequencies(fit.n)

    def k_dagger(theta2):
        theta_eval = fit.theta_hat.copy()
        theta_null = fit.theta_hat.copy()
        theta_eval[nuisance] = theta2
        theta_null[nuisance] = theta2
        theta_null[tested] = theta1_0
        if not (model.is_valid(theta_eval) and model.is_valid(theta_null)):
            return np.inf
        try:
            return exp_legendre(theta_eval, theta_null, model, freqs).K_dagger
        except (DomainViolation, NonConvergence):
            return np.inf

    if not nuisance:
        theta_null = fit.theta_hat.copy()
        theta_null[tested] = theta1_0
        return 2.0 * exp_legendre(fit.theta_hat, theta_null, model, freqs).K_dagger

    cfg = {"maxiter": 400, "xatol": 1e-8, "fatol": 1e-10}
    cfg.update(optimizer_cfg or {})
    res = optimize.minimize(k_dagger, fit.theta_hat[nuisance],
                            method="Nelder-Mead", options=cfg)
    if not np.isfinite(res.fun):
        raise NonConvergence("outer nuisance minimization failed", result=res)
    return 2.0 * float(res.fun)


# ---------------------------------------------------------------------------
# empirical branch
# ---------------------------------------------------------------------------

@dataclass
class EmpiricalCgfContext:
    """Cached score rows psi_j(I_j; theta) for one theta, shape (m, p)."""

    scores: np.ndarray

    @property
    def m(self) -> int:
        return self.scores.shape[0]

    @property
    def p(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def build(cls, pg: Periodogram, model, theta,
              variant: str = "plain") -> "EmpiricalCgfContext":
        return cls(scores=scores(pg, model, theta, variant))


def emp_cgf(upsilon, context: EmpiricalCgfContext) -> float:
    """Empirical CGF ln( mean_j exp(u' psi_j) ), overflow-safe."""
    u = np.atleast_1d(np.asarray(upsilon, dtype=float))
    return _logmeanexp(context.scores @ u)


def solve_emp_saddlepoint(context: EmpiricalCgfContext, upsilon_init=None,
                          tol: float = NEWTON_TOL,
                          max_iter: int = NEWTON_MAX_ITER) -> SaddlepointSolution:
    """Root of sum_j psi_j exp(u' psi_j) = 0, i.e. the minimizer of the CGF.

    Newton iteration with tilted-weight normalization for overflow safety;
    the convergence criterion is ||sum_j psi_j exp(u' psi_j)|| / m <= tol.
    """
    psi = context.scores
    m = context.m
    u = np.zeros(context.p) if upsilon_init is None else \
        np.asarray(upsilon_init, dtype=float).copy()

    def parts(u):
        a = psi @ u
        K = _logmeanexp(a)
        w = np.exp(a - K) / m          # sums to one
        grad = psi.T @ w               # gradient of K(u)
        return K, w, grad

    K, w, grad = parts(u)
    for _ in range(max_iter):
        # residual of the unnormalized tilted score equation, per frequency
        residual = np.linalg.norm(grad) * np.exp(min(K, 500.0))
        if residual <= tol:
            break
        cov = (psi * w[:, None]).T @ psi - np.outer(grad, grad)
        try:
            step = np.linalg.solve(cov, -grad)
        except np.linalg.LinAlgError:
            raise Degenerate("tilted score Jacobian is singular")
        alpha, moved = 1.0, False
        for _ in range(MAX_HALVINGS):
            cand = u + alpha * step
            K_c, w_c, grad_c = parts(cand)
            if K_c < K:
                u, K, w, grad, moved = cand, K_c, w_c, grad_c, True
                break
            alpha *= 0.5
        if not moved:
            break
    residual = float(np.linalg.norm(grad) * np.exp(min(K, 500.0)))
    # a stalled line search with a rounding-limited gradient still counts
    if residual > max(tol, np.sqrt(np.finfo(float).eps)):
        raise NonConvergence(
            f"empirical saddlepoint residual {residual:.3e} > {tol:.1e}",
            result=SaddlepointSolution(u, False, residual, K))
    return SaddlepointSolution(u, True, residual, K)


def _score_jacobians(pg: Periodogram, model, theta, variant: str):
    """Per-frequency score Jacobians grad_theta psi_j, shape (m, p, p)."""
    theta = np.asarray(theta, dtype=float)
    if variant == "plain":
        f = model.spectral_density(pg.frequencies, theta)
        z = model.log_density_gradient(pg.frequencies, theta)
        hess = model.log_density_hessian(pg.frequencies, theta)
        r = pg.ordinates / f
        outer = z[:, :, None] * z[:, None, :]
        return -r[:, None, None] * outer + (r - 1.0)[:, None, None] * hess
    p = theta.size
    jac = np.empty((pg.m, p, p))
    for k in range(p):
        h = 1e-6 * max(1.0, abs(theta[k]))
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        jac[:, :, k] = (scores(pg, model, up, variant)
                        - scores(pg, model, dn, variant)) / (2 * h)
    return jac


def _emp_density_parts(theta, pg, model, fit, upsilon_init=None):
    """Log of the unnormalized empirical saddlepoint density, plus solution."""
    context = EmpiricalCgfContext.build(pg, model, theta, fit.variant)
    sol = solve_emp_saddlepoint(context, upsilon_init=upsilon_init)
    psi = context.scores
    m, p = context.m, context.p
    a = psi @ sol.upsilon
    w = np.exp(a - _logmeanexp(a)) / m  # tilted weights carrying exp{-K}
    M = np.einsum("j,jkl->kl", w, _score_jacobians(pg, model, theta, fit.variant))
    S = (psi * w[:, None]).T @ psi
    eigmin = np.linalg.eigvalsh(S).min()
    if eigmin <= 0.0:
        raise SingularTilt("tilted second-moment matrix not positive definite")
    sign_m, logdet_m = np.linalg.slogdet(M)
    _, logdet_s = np.linalg.slogdet(S)
    if sign_m == 0.0:
        raise SingularTilt("tilted score Jacobian has zero determinant")
    log_density = (0.5 * p * np.log(m / (2.0 * np.pi))
                   + logdet_m - 0.5 * logdet_s + m * sol.K_value)
    return log_density, sol


def emp_density_at(theta, pg: Periodogram, model, fit: WhittleFit) -> float:
    """Unnormalized empirical saddlepoint density of the estimator at theta."""
    log_density, _ = _emp_density_parts(theta, pg, model, fit)
    return float(np.exp(log_density))


@dataclass
class DensityGrid:
    """Empirical saddlepoint density on a univariate grid around the estimate."""

    thetas: np.ndarray
    offsets: np.ndarray
    upsilons: np.ndarray
    K: np.ndarray
    density_unnormalized: np.ndarray
    density_normalized: np.ndarray
    normalization: float
    ok: np.ndarray  # per-point saddlepoint success

    @property
    def K_dagger(self) -> np.ndarray:
        return -self.K

    def to_csv(self, path_or_buf) -> None:
        header = "theta,upsilon,K,K_dagger,density_unnormalized,density_normalized"
        rows = [header]
        for i in range(len(self.thetas)):
            rows.append(",".join(repr(float(v)) for v in (
                self.thetas[i], self.upsilons[i], self.K[i], -self.K[i],
                self.density_unnormalized[i], self.density_normalized[i])))
        text = "\n".join(rows) + "\n"
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        else:
            path_or_buf.write(text)


def emp_density_grid_1d(pg: Periodogram, model, fit: WhittleFit,
                        half_width: float, A: int = 100) -> DensityGrid:
    """Normalized saddlepoint density on a uniform grid around a scalar estimate.

    The grid is swept outward from the estimate so each saddlepoint solve is
    warm-started from its inner neighbour; per-point failures are recorded as
    zero density.  The normalizing constant is the Riemann sum of the
    unnormalized density over the grid, so the normalized values integrate to
    one on the grid by construction.
    """
    if len(fit.theta_hat) != 1:
        raise ValueError("1-d density grid requires a univariate parameter")
    center = float(fit.theta_hat[0])
    offsets = np.linspace(-half_width, half_width, A)
    thetas = center + offsets
    log_density = np.full(A, -np.inf)
    upsilons = np.zeros(A)
    K = np.zeros(A)
    ok = np.zeros(A, dtype=bool)

    start = int(np.argmin(np.abs(offsets)))
    for idx_range in (range(start, A), range(start - 1, -1, -1)):
        warm = None
        for a in idx_range:
            theta = np.array([thetas[a]])
            if not model.is_valid(theta):
                continue
            try:
                ld, sol = _emp_density_parts(theta, pg, model, fit,
                                             upsilon_init=warm)
            except (NonConvergence, Degenerate, SingularTilt):
                warm = None
                continue
            log_density[a] = ld
            upsilons[a] = sol.upsilon[0]
            K[a] = sol.K_value
            ok[a] = True
            warm = sol.upsilon.copy()

    density = np.exp(log_density)
    spacing = offsets[1] - offsets[0]
    normalization = float(spacing * density.sum())
    if not normalization > 0.0:
        raise Degenerate("density vanished on the whole grid")
    return DensityGrid(
        thetas=thetas, offsets=offsets, upsilons=upsilons, K=K,
        density_unnormalized=density, density_normalized=density / normalization,
        normalization=normalization, ok=ok)


def fdet_statistic(pg: Periodogram, model, fit: WhittleFit, theta0,
                   scale: str = "n") -> float:
    """Exponential tilting statistic 2 * scale * K^+(theta0), chi-square_p reference."""
    context = EmpiricalCgfContext.build(pg, model, np.asarray(theta0, dtype=float),
                                        fit.variant)
    sol = solve_emp_saddlepoint(context)
    c = pg.n if scale == "n" else pg.m
    return 2.0 * c * sol.K_dagger


def fdel_owen_statistic(pg: Periodogram, model, theta,
                        variant: str = "plain",
                        tol: float = NEWTON_TOL,
                        max_iter: int = NEWTON_MAX_ITER) -> float:
    """Owen's empirical likelihood ratio 2 sum_j ln(1 + xi' psi_j).

    The multiplier xi maximizes the concave dual sum_j ln(1 + xi' psi_j) on
    the open region where every weight stays positive; Newton ascent with a
    positivity-preserving line search.  Raises InfeasibleTilt when theta lies
    outside the empirical likelihood hull (the dual is unbounded).
    """
    psi = scores(pg, model, theta, variant)
    m, p = psi.shape
    xi = np.zeros(p)

    def parts(xi):
        t = 1.0 + psi @ xi
        if np.any(t <= 0.0):
            return None
        G = float(np.sum(np.log(t)))
        grad = psi.T @ (1.0 / t)
        return t, G, grad

    t, G, grad = parts(xi)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol * m:
            return 2.0 * G
        hess = -(psi * (1.0 / t**2)[:, None]).T @ psi
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            raise InfeasibleTilt("degenerate empirical likelihood Hessian")
        alpha, moved = 1.0, False
        for _ in range(MAX_HALVINGS):
            res = parts(xi + alpha * step)
            if res is not None and res[1] > G:
                xi, (t, G, grad) = xi + alpha * step, res
                moved = True
                break
            alpha *= 0.5
        if not moved:
            break
    if np.linalg.norm(grad) <= 1e-6 * m:  # stalled at numerical precision
        return 2.0 * G
    # no interior stationary point: the dual grows toward the positivity
    # boundary, which signals a hull violation
    raise InfeasibleTilt("no positive-weight empirical likelihood solution")
