"""Tapered DFT and periodogram ordinates at positive Fourier frequencies.

The DFT convention follows the frequency domain literature: with observations
X_1..X_n and taper h on [0, 1],

    d_n(lambda) = sum_{t=1..n} h(t/n) X_t exp(-i t lambda),
    I(lambda)   = |d_n(lambda)|^2 / (2 pi sum_t h(t/n)^2),

evaluated at lambda_j = 2 pi j / n for j = 1..m, m = floor((n-1)/2).  The
mean is deliberately not subtracted here; demeaning or detrending is an
explicit preprocessing step.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameter, TooShort

MIN_LENGTH = 8


def as_time_series(x) -> np.ndarray:
    """Validate and return observations as a 1-d float array (n >= 8, finite)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidParameter("time series must be one-dimensional")
    if x.size < MIN_LENGTH:
        raise TooShort(f"need at least {MIN_LENGTH} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidParameter("time series contains non-finite values")
    return x


class Taper:
    """Data taper h: [0, 1] -> R of bounded variation, sampled at t/n."""

    def __init__(self, kind: str, samples=None):
        self.kind = kind
        self._samples = None if samples is None else np.asarray(samples, dtype=float)

    @classmethod
    def none(cls) -> "Taper":
        return cls("none")

    @classmethod
    def cosine(cls) -> "Taper":
        return cls("cosine")

    @classmethod
    def custom(cls, samples) -> "Taper":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidParameter("custom taper needs a 1-d sample vector")
        return cls("custom", samples)

    def weights(self, n: int) -> np.ndarray:
        """Taper weights h(t/n) for t = 1..n."""
        t = np.arange(1, n + 1) / n
        if self.kind == "none":
            w = np.ones(n)
        elif self.kind == "cosine":
            w = 0.5 * (1.0 - np.cos(2.0 * np.pi * t))
        elif self.kind == "custom":
            w = np.interp(t, np.linspace(0.0, 1.0, self._samples.size), self._samples)
        else:
            raise InvalidParameter(f"unknown taper kind {self.kind!r}")
        if not np.sum(w**2) > 0.0:
            raise InvalidParameter("taper has zero energy")
        return w


@dataclass(frozen=True)
class Periodogram:
    """Fourier frequencies and periodogram ordinates for one series."""

    frequencies: np.ndarray  # lambda_j = 2 pi j / n, j = 1..m
    ordinates: np.ndarray    # I_j >= 0
    n: int                   # original sample size

    @property
    def m(self) -> int:
        return len(self.frequencies)

    def to_csv(self, path_or_buf) -> None:
        """Write `j,lambda,I` rows (header included)."""
        lines = ["j,lambda,I"]
        lines += [f"{j},{lam!r},{i!r}"
                  for j, (lam, i) in enumerate(zip(self.frequencies, self.ordinates), 1)]
        text = "\n".join(lines) + "\n"
        if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
            with open(path_or_buf, "w") as fh:
                fh.write(text)
        else:
            path_or_buf.write(text)


def fourier_frequencies(n: int) -> np.ndarray:
    """Positive Fourier frequencies 2 pi j / n, j = 1..floor((n-1)/2)."""
    if n < MIN_LENGTH:
        raise TooShort(f"need at least {MIN_LENGTH} observations, got {n}")
    m = (n - 1) // 2
    return 2.0 * np.pi * np.arange(1, m + 1) / n


def compute_periodogram(x, taper: Taper | None = None) -> Periodogram:
    """Periodogram at positive Fourier frequencies via an FFT of the tapered data."""
    x = as_time_series(x)
    n = x.size
    m = (n - 1) // 2
    if taper is None or taper.kind == "none":
        w = np.ones(n)
    else:
        w = taper.weights(n)
    # t runs 1..n in the DFT definition; the index shift only changes the
    # phase of d_n, not |d_n|^2, so the FFT of the tapered series suffices.
    dft = np.fft.rfft(w * x)[1:m + 1]
    ordinates = (dft.real**2 + dft.imag**2) / (2.0 * np.pi * np.sum(w**2))
    return Periodogram(frequencies=fourier_frequencies(n), ordinates=ordinates, n=n)


def standardized_ordinates(pg: Periodogram, model, theta) -> np.ndarray:
    """I_j / f(lambda_j; theta): approximately unit-exponential at the truth."""
    model.validate(theta)
    return pg.ordinates / model.spectral_density(pg.frequencies, theta)
