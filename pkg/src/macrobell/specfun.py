"""Special functions and probability kernels.

Conventions used throughout the package:

* Quadratures are ``X = a exp(-i theta) + a^dagger exp(i theta)``, so the
  vacuum has variance 1 and ``u_0(x) = (2 pi)^(-1/4) exp(-x^2/4)``.
* Detector noise is additive and Gaussian with standard deviation ``sigma``
  in photon-count units.  ``sigma = 0`` is the noiseless step limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

I0_MAX_ARG = 700.0
EIGENFUNCTION_MAX_INDEX = 200
DISPLACEMENT_MAX_NORM2 = 4000.0

# Rescale the Laguerre recurrence whenever an iterate exceeds this magnitude.
_RESCALE = 1e200
_LOG_RESCALE = math.log(_RESCALE)


@dataclass(frozen=True)
class GaussianNoise:
    """Additive detector noise with standard deviation ``sigma`` (counts)."""

    sigma: float = 0.0

    def __post_init__(self):
        sigma = float(self.sigma)
        if not math.isfinite(sigma) or sigma < 0:
            raise ValueError(f"noise sigma must be finite and >= 0, got {self.sigma!r}")
        object.__setattr__(self, "sigma", sigma)


def as_noise(noise) -> GaussianNoise:
    if isinstance(noise, GaussianNoise):
        return noise
    return GaussianNoise(float(noise))


def bessel_i0(x: float) -> float:
    """Modified Bessel function of the first kind, order zero.

    Valid for ``0 <= x <= 700``; relative error is at the level of the
    Cephes implementation in scipy (about 1e-16).
    """
    x = float(x)
    if not (0.0 <= x <= I0_MAX_ARG):
        raise DomainError(f"bessel_i0 requires 0 <= x <= {I0_MAX_ARG}, got {x!r}")
    return float(special.i0(x))


def log_bessel_i0(x: float) -> float:
    """``log I0(x)`` for any ``x >= 0``, without overflow."""
    x = float(x)
    if x < 0 or not math.isfinite(x):
        raise DomainError(f"log_bessel_i0 requires finite x >= 0, got {x!r}")
    return float(np.log(special.i0e(x)) + x)


def noise_geq(x, noise):
    """Probability that the detector noise is ``>= x``.

    ``noise`` may be a :class:`GaussianNoise` or a bare ``sigma``.  Accepts
    scalars or arrays for ``x``.  For ``sigma = 0`` this is the step
    ``1 if x <= 0 else 0``, so ``n + noise >= 0`` reduces to ``n >= 0``.
    """
    sigma = as_noise(noise).sigma
    x = np.asarray(x, dtype=float)
    if sigma == 0.0:
        out = np.where(x <= 0.0, 1.0, 0.0)
    else:
        # x / sigma may overflow to +-inf for tiny sigma; ndtr maps that to 0 or 1.
        with np.errstate(over="ignore"):
            out = special.ndtr(-x / sigma)
    return out[()] if out.ndim == 0 else out


def noise_lt(x, noise):
    """Probability that the detector noise is ``< x``; complement of :func:`noise_geq`.

    Evaluated directly (not as ``1 - noise_geq``) so that both tails keep
    full relative accuracy.
    """
    sigma = as_noise(noise).sigma
    x = np.asarray(x, dtype=float)
    if sigma == 0.0:
        out = np.where(x > 0.0, 1.0, 0.0)
    else:
        with np.errstate(over="ignore"):
            out = special.ndtr(x / sigma)
    return out[()] if out.ndim == 0 else out


def oscillator_eigenfunctions(nmax: int, x) -> np.ndarray:
    """Rows ``u_0(x) .. u_nmax(x)`` stacked along a new leading axis."""
    if not (0 <= nmax <= EIGENFUNCTION_MAX_INDEX):
        raise IndexError(f"eigenfunction index must be in [0, {EIGENFUNCTION_MAX_INDEX}], got {nmax}")
    x = np.asarray(x, dtype=float)
    u = np.empty((nmax + 1,) + x.shape)
    u[0] = (2.0 * np.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if nmax >= 1:
        u[1] = x * u[0]
    for n in range(1, nmax):
        u[n + 1] = (x * u[n] - math.sqrt(n) * u[n - 1]) / math.sqrt(n + 1)
    return u


def oscillator_eigenfunction(n: int, x):
    """Quadrature eigenfunction ``u_n(x)`` with vacuum variance 1."""
    out = oscillator_eigenfunctions(n, x)[n]
    return out[()] if out.ndim == 0 else out


def _log_abs_laguerre(p: np.ndarray, a: np.ndarray, x: float):
    """Sign and log-magnitude of ``L_p^{(a)}(x)`` elementwise.

    Forward three-term recurrence in the degree with periodic rescaling, so
    large degrees and arguments neither overflow nor lose the exponent.
    """
    p = np.asarray(p, dtype=np.int64)
    a = np.asarray(a, dtype=float)
    prev = np.ones(p.shape)
    cur = 1.0 + a - x
    logscale = np.zeros(p.shape)
    result = np.where(p == 0, prev, cur)
    res_log = np.zeros(p.shape)
    top = int(p.max(initial=0))
    for j in range(1, top):
        nxt = ((2 * j + 1 + a - x) * cur - (j + a) * prev) / (j + 1)
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if big.any():
            cur = np.where(big, cur / _RESCALE, cur)
            prev = np.where(big, prev / _RESCALE, prev)
            logscale = logscale + big * _LOG_RESCALE
        done = p == j + 1
        if done.any():
            result = np.where(done, cur, result)
            res_log = np.where(done, logscale, res_log)
    with np.errstate(divide="ignore"):
        return np.sign(result), np.log(np.abs(result)) + res_log


def displacement_elements(k, n, beta: complex) -> np.ndarray:
    """``<k|D(beta)|n>`` for broadcastable integer arrays ``k`` and ``n``.

    Uses the associated-Laguerre closed form with all factorials and powers
    in the log domain, so entries are accurate down to the underflow limit
    even for ``|beta|^2`` in the thousands.
    """
    beta = complex(beta)
    x = abs(beta) ** 2
    if x > DISPLACEMENT_MAX_NORM2:
        raise DomainError(f"|beta|^2 must be <= {DISPLACEMENT_MAX_NORM2}, got {x!r}")
    k, n = np.broadcast_arrays(np.asarray(k, dtype=np.int64), np.asarray(n, dtype=np.int64))
    if (k < 0).any() or (n < 0).any():
        raise DomainError("Fock indices must be nonnegative")
    if x == 0.0:
        return (k == n).astype(complex)

    lo = np.minimum(k, n)
    diff = np.abs(k - n)
    sign, log_lag = _log_abs_laguerre(lo.ravel(), diff.ravel(), x)
    sign = sign.reshape(k.shape)
    log_lag = log_lag.reshape(k.shape)

    lg_lo = special.gammaln(lo + 1.0)
    lg_hi = special.gammaln(np.maximum(k, n) + 1.0)
    log_mag = 0.5 * (lg_lo - lg_hi) + diff * math.log(abs(beta)) - 0.5 * x + log_lag

    # beta^(k-n) above the diagonal, (-conj(beta))^(n-k) below it.
    arg = math.atan2(beta.imag, beta.real)
    phase = np.where(k >= n, diff * arg, diff * (math.pi - arg))
    return sign * np.exp(log_mag + 1j * phase)


def displacement_matrix(beta: complex, kmax: int, nmax: int) -> np.ndarray:
    """Block ``<k|D(beta)|n>`` for ``k <= kmax``, ``n <= nmax``."""
    k = np.arange(kmax + 1)[:, None]
    n = np.arange(nmax + 1)[None, :]
    return displacement_elements(k, n, beta)


def displaced_overlap(k: int, n: int, beta: complex) -> complex:
    """Matrix element ``<k|D(beta)|n>`` of the displacement operator."""
    if k < 0 or n < 0:
        raise DomainError("Fock indices must be nonnegative")
    return complex(displacement_elements(k, n, beta))
