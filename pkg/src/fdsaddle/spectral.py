"""Parametric spectral density families: ARFIMA and fractional exponential.

Both families expose the spectral density f(lambda; theta), the gradient of
ln f with respect to the parameter vector, and (analytically, since it is
cheap for these families) the Hessian of ln f.  All evaluations are pure
functions of (lambda, theta) and vectorized over lambda.

The parameter vector is a flat ndarray whose layout is fixed by the model:

* ``ArfimaModel``: ``[d, phi_1..phi_p, ma_1..ma_q]`` plus a trailing
  ``sigma2`` slot when the innovation variance is estimated.
* ``FexpModel``: ``[d, eta_0, eta_1, .., eta_p]``.

``|1 - exp(i*lambda)|**2`` is always computed as ``2 - 2*cos(lambda)`` to
avoid cancellation near the spectral pole.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameter

# distance kept from the boundary of the stationarity region when checking
# polynomial roots against the unit circle
ROOT_TOL = 1e-8

# memory parameter domain used for evaluation.  The target model class
# restricts d to [0, 0.5); estimation and importance sampling need a
# two-sided neighbourhood of d = 0, so evaluation accepts (-0.5, 0.5) and
# strict validation enforces [0, 0.5).
D_MAX = 0.5


@dataclass(frozen=True)
class ParamVector:
    """Named, ordered parameter vector.

    ``values[i]`` is the entry for slot ``names[i]``.  The strict invariants
    (d in [0, 0.5), sigma2 > 0) are those of the model class definition.
    """

    values: np.ndarray
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or len(self.values) != len(self.names):
            raise InvalidParameter("values and names must have equal length")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def validate(self) -> None:
        if "d" in self.names and not 0.0 <= self["d"] < D_MAX:
            raise InvalidParameter(f"d = {self['d']} outside [0, 0.5)")
        if "sigma2" in self.names and not self["sigma2"] > 0.0:
            raise InvalidParameter(f"sigma2 = {self['sigma2']} must be positive")
        if not np.all(np.isfinite(self.values)):
            raise InvalidParameter("non-finite parameter entry")


def _poly_at_freq(coeffs: np.ndarray, lam: np.ndarray, sign: float) -> np.ndarray:
    """Evaluate 1 + sign * sum_k c_k exp(-i k lambda) for k = 1..len(coeffs)."""
    u = np.ones_like(lam, dtype=complex)
    for k, c in enumerate(coeffs, start=1):
        u += sign * c * np.exp(-1j * k * lam)
    return u


def _check_roots(coeffs: np.ndarray, sign: float, what: str) -> None:
    """Require all roots of 1 + sign*c_1 z + .. + sign*c_k z^k outside the unit circle."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0 or not np.any(coeffs):
        return
    poly = np.concatenate([[1.0], sign * coeffs])
    roots = np.roots(poly[::-1])  # numpy wants the highest degree first
    if roots.size and np.min(np.abs(roots)) <= 1.0 + ROOT_TOL:
        raise InvalidParameter(f"{what} polynomial has a root on or inside the unit circle")


def _log_sq_modulus_derivs(lam, coeffs, sign):
    """Gradient and Hessian of ln |1 + sign*sum c_k e^{-iklam}|^2 in the c_k.

    Returns ``(grad, hess)`` with shapes (len(lam), k) and (len(lam), k, k).
    """
    k = len(coeffs)
    u = _poly_at_freq(coeffs, lam, sign)
    s = np.stack([sign * np.exp(-1j * j * lam) for j in range(1, k + 1)], axis=-1)
    absu2 = (u.real**2 + u.imag**2)[..., None]
    grad = 2.0 * (np.conj(u)[..., None] * s).real / absu2
    cross = 2.0 * (np.conj(s)[..., :, None] * s[..., None, :]).real
    hess = cross / absu2[..., None] - grad[..., :, None] * grad[..., None, :]
    return grad, hess


class SpectralModel:
    """Base class: a parametric spectral density on (0, pi]."""

    slot_names: tuple = ()

    @property
    def n_params(self) -> int:
        return len(self.slot_names)

    @property
    def d_index(self) -> int:
        return self.slot_names.index("d")

    def param_vector(self, theta) -> ParamVector:
        return ParamVector(np.asarray(theta, dtype=float), tuple(self.slot_names))

    def is_valid(self, theta) -> bool:
        try:
            self.validate(np.asarray(theta, dtype=float))
        except InvalidParameter:
            return False
        return True

    # subclasses implement validate / spectral_density / log_density_gradient
    def validate(self, theta) -> None:
        raise NotImplementedError

    def spectral_density(self, lam, theta):
        raise NotImplementedError

    def log_density_gradient(self, lam, theta):
        raise NotImplementedError

    def log_density_hessian(self, lam, theta):
        """Hessian of ln f; default central finite differences of the gradient."""
        theta = np.asarray(theta, dtype=float)
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        p = self.n_params
        hess = np.empty((lam.size, p, p))
        for k in range(p):
            h = 1e-6 * max(1.0, abs(theta[k]))
            up, dn = theta.copy(), theta.copy()
            up[k] += h
            dn[k] -= h
            hess[:, :, k] = (
                self.log_density_gradient(lam, up) - self.log_density_gradient(lam, dn)
            ) / (2 * h)
        return 0.5 * (hess + np.swapaxes(hess, 1, 2))

    def config(self) -> dict:
        raise NotImplementedError


class ArfimaModel(SpectralModel):
    """ARFIMA(p, d, q) spectral density.

    f(lambda; theta) = sigma2/(2 pi) * |ma(e^{-i lam})|^2 / |ar(e^{-i lam})|^2
                       * (2 - 2 cos lam)^{-d}

    with ar(z) = 1 - sum phi_k z^k and ma(z) = 1 + sum ma_k z^k.  When
    ``fix_sigma2`` is true the innovation variance is pinned at ``sigma2``
    (unit-variance models feed the profiled workflow); otherwise a trailing
    ``sigma2`` slot is part of theta.
    """

    def __init__(self, ar_order: int = 0, ma_order: int = 0,
                 fix_sigma2: bool = True, sigma2: float = 1.0):
        if ar_order < 0 or ma_order < 0:
            raise InvalidParameter("negative polynomial order")
        self.ar_order = int(ar_order)
        self.ma_order = int(ma_order)
        self.fix_sigma2 = bool(fix_sigma2)
        self.sigma2 = float(sigma2)
        names = ["d"]
        names += [f"phi{k}" for k in range(1, self.ar_order + 1)]
        names += [f"ma{k}" for k in range(1, self.ma_order + 1)]
        if not self.fix_sigma2:
            names.append("sigma2")
        self.slot_names = tuple(names)

    def _split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InvalidParameter(
                f"expected {self.n_params} parameters, got {theta.shape}")
        d = theta[0]
        ar = theta[1:1 + self.ar_order]
        ma = theta[1 + self.ar_order:1 + self.ar_order + self.ma_order]
        s2 = self.sigma2 if self.fix_sigma2 else theta[-1]
        return d, ar, ma, s2

    def validate(self, theta, strict: bool = False) -> None:
        d, ar, ma, s2 = self._split(theta)
        if not np.all(np.isfinite(np.asarray(theta, dtype=float))):
            raise InvalidParameter("non-finite parameter entry")
        lo = 0.0 if strict else -D_MAX
        if not lo <= d < D_MAX:
            raise InvalidParameter(f"d = {d} outside [{lo}, 0.5)")
        if not s2 > 0.0:
            raise InvalidParameter(f"sigma2 = {s2} must be positive")
        _check_roots(ar, -1.0, "AR")
        _check_roots(ma, +1.0, "MA")

    def spectral_density(self, lam, theta):
        d, ar, ma, s2 = self._split(theta)
        lam = np.asarray(lam, dtype=float)
        pole = 4.0 * np.sin(lam / 2.0)**2  # 2 - 2 cos, stable near 0
        f = s2 / (2.0 * np.pi) * pole**(-d)
        if self.ma_order:
            f = f * np.abs(_poly_at_freq(ma, lam, +1.0))**2
        if self.ar_order:
            f = f / np.abs(_poly_at_freq(ar, lam, -1.0))**2
        return f

    def log_density_gradient(self, lam, theta):
        d, ar, ma, s2 = self._split(theta)
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        cols = [-np.log(4.0 * np.sin(lam / 2.0)**2)]
        if self.ar_order:
            g_ar, _ = _log_sq_modulus_derivs(lam, ar, -1.0)
            cols.extend(-g_ar[:, k] for k in range(self.ar_order))
        if self.ma_order:
            g_ma, _ = _log_sq_modulus_derivs(lam, ma, +1.0)
            cols.extend(g_ma[:, k] for k in range(self.ma_order))
        if not self.fix_sigma2:
            cols.append(np.full(lam.shape, 1.0 / s2))
        return np.stack(cols, axis=-1)

    def log_density_hessian(self, lam, theta):
        d, ar, ma, s2 = self._split(theta)
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        p = self.n_params
        hess = np.zeros((lam.size, p, p))
        i = 1
        if self.ar_order:
            _, h_ar = _log_sq_modulus_derivs(lam, ar, -1.0)
            hess[:, i:i + self.ar_order, i:i + self.ar_order] = -h_ar
            i += self.ar_order
        if self.ma_order:
            _, h_ma = _log_sq_modulus_derivs(lam, ma, +1.0)
            hess[:, i:i + self.ma_order, i:i + self.ma_order] = h_ma
            i += self.ma_order
        if not self.fix_sigma2:
            hess[:, -1, -1] = -1.0 / s2**2
        return hess

    def config(self) -> dict:
        return {
            "family": "arfima",
            "p_order": self.ar_order,
            "q_order": self.ma_order,
            "fix_sigma2": self.fix_sigma2,
            "sigma2": self.sigma2,
            "slots": list(self.slot_names),
        }


def _default_long_memory(lam):
    # |1 - exp(i*lam)|, evaluated stably; behaves like |lam| near zero
    return 2.0 * np.abs(np.sin(lam / 2.0))


class FexpModel(SpectralModel):
    """Fractional exponential (FEXP) spectral density.

    f(lambda; theta) = g(lambda)^{-2d} * exp( sum_{k=0}^{p} eta_k q_k(lambda) )

    with q_0 == 1, default short-memory basis q_k(lambda) = cos(k*lambda) and
    default long-memory component g(lambda) = |1 - exp(i*lambda)|.  With this
    default g and eta_0 = ln(sigma2 / 2 pi) the family reproduces the
    ARFIMA(0, d, 0) density exactly.  In the (-2d, eta) parameterization the
    score covariates [ln g, 1, q_1, .., q_p] do not depend on theta.
    """

    def __init__(self, n_short: int = 0, g=None, basis=None):
        if n_short < 0:
            raise InvalidParameter("negative number of short-memory terms")
        self.n_short = int(n_short)
        self.g = g if g is not None else _default_long_memory
        if basis is None:
            basis = [self._cosine(k) for k in range(1, self.n_short + 1)]
        if len(basis) != self.n_short:
            raise InvalidParameter("basis length must equal n_short")
        self.basis = list(basis)
        self.slot_names = tuple(["d"] + [f"eta{k}" for k in range(self.n_short + 1)])

    @staticmethod
    def _cosine(k):
        return lambda lam: np.cos(k * np.asarray(lam, dtype=float))

    def validate(self, theta, strict: bool = False) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InvalidParameter(
                f"expected {self.n_params} parameters, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidParameter("non-finite parameter entry")
        lo = 0.0 if strict else -D_MAX
        if not lo <= theta[0] < D_MAX:
            raise InvalidParameter(f"d = {theta[0]} outside [{lo}, 0.5)")

    def covariates(self, lam):
        """Theta-free covariates [ln g, 1, q_1, .., q_p], shape (len(lam), p+2)."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        cols = [np.log(self.g(lam)), np.ones(lam.shape)]
        cols.extend(q(lam) for q in self.basis)
        return np.stack(cols, axis=-1)

    def spectral_density(self, lam, theta):
        self_theta = np.asarray(theta, dtype=float)
        d, eta = self_theta[0], self_theta[1:]
        lam = np.asarray(lam, dtype=float)
        expo = eta[0] * np.ones(np.shape(lam))
        for k, q in enumerate(self.basis, start=1):
            expo = expo + eta[k] * q(lam)
        return self.g(lam)**(-2.0 * d) * np.exp(expo)

    def log_density_gradient(self, lam, theta):
        # ln f = -2 d ln g + sum eta_k q_k: the gradient equals the covariates
        # with the d column scaled by -2 (d-slot stored as d, not -2d).
        z = self.covariates(lam)
        grad = z.copy()
        grad[:, 0] *= -2.0
        return grad

    def log_density_hessian(self, lam, theta):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return np.zeros((lam.size, self.n_params, self.n_params))

    def config(self) -> dict:
        return {"family": "fexp", "n_short": self.n_short,
                "slots": list(self.slot_names)}


def model_from_config(cfg: dict) -> SpectralModel:
    """Build a model from a plain config record (see each model's ``config``)."""
    family = str(cfg.get("family", "")).lower()
    if family == "arfima":
        return ArfimaModel(
            ar_order=int(cfg.get("p_order", 0)),
            ma_order=int(cfg.get("q_order", 0)),
            fix_sigma2=bool(cfg.get("fix_sigma2", True)),
            sigma2=float(cfg.get("sigma2", 1.0)),
        )
    if family == "fexp":
        return FexpModel(n_short=int(cfg.get("n_short", 0)))
    raise InvalidParameter(f"unknown model family {cfg.get('family')!r}")


def arfima_spectral_density(lam, theta, ar_order=0, ma_order=0, fix_sigma2=True,
                            sigma2=1.0):
    """Functional form of the ARFIMA density; validates theta on every call."""
    model = ArfimaModel(ar_order, ma_order, fix_sigma2=fix_sigma2, sigma2=sigma2)
    model.validate(theta)
    return model.spectral_density(lam, theta)


def arfima_log_gradient(lam, theta, ar_order=0, ma_order=0, fix_sigma2=True,
                        sigma2=1.0):
    """Gradient of ln f for the ARFIMA density; validates theta."""
    model = ArfimaModel(ar_order, ma_order, fix_sigma2=fix_sigma2, sigma2=sigma2)
    model.validate(theta)
    return model.log_density_gradient(lam, theta)


def fexp_spectral_density(lam, theta, n_short=0, g=None, basis=None):
    """Functional form of the FEXP density; validates theta."""
    model = FexpModel(n_short=n_short, g=g, basis=basis)
    model.validate(theta)
    return model.spectral_density(lam, theta)


def fexp_covariates(lam, n_short=0, g=None, basis=None):
    """Covariates [ln g, 1, q_1, .., q_p] of the FEXP score."""
    return FexpModel(n_short=n_short, g=g, basis=basis).covariates(lam)
