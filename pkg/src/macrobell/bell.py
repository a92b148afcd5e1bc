"""Bell-Clauser-Horne ratio for noisy sign measurements on the pair-coherent state.

    s = (P++(t, p) - P++(t, p') + P++(t', p) + P++(t', p')) / (P+A(t') + P+B(p))

Local hidden-variable theories give ``s <= 1``.  All six probabilities use
the same noisy classification, marginals included.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import BracketError, ScanError
from .fockspace import (
    MeasurementConfig,
    PairCoherentState,
    SignPovm,
    difference_kernel,
    pair_coherent,
    phase_factors,
)
from .specfun import as_noise

IMAG_TOL = 1e-10
WORKERS_ENV = "MACROBELL_WORKERS"


@dataclass(frozen=True)
class BellSettings:
    """Analyzer angles in radians; defaults are 0, -pi/4, pi/2, -3pi/4."""

    theta: float = 0.0
    theta_prime: float = math.pi / 2
    phi: float = -math.pi / 4
    phi_prime: float = -3 * math.pi / 4

    def __post_init__(self):
        for name in ("theta", "theta_prime", "phi", "phi_prime"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def pairs(self) -> tuple[tuple[float, float], ...]:
        """Angle pairs of the four joint terms, in numerator order."""
        return (
            (self.theta, self.phi),
            (self.theta, self.phi_prime),
            (self.theta_prime, self.phi),
            (self.theta_prime, self.phi_prime),
        )


@dataclass(frozen=True)
class BellResult:
    p_pp: tuple[float, float, float, float]
    p_a: float
    p_b: float
    s: float

    @classmethod
    def from_probabilities(cls, p_pp: Sequence[float], p_a: float, p_b: float) -> "BellResult":
        p = tuple(float(v) for v in p_pp)
        num, den = p[0] - p[1] + p[2] + p[3], p_a + p_b
        if den > 0:
            s = num / den
        else:
            # Both sites never click: the ratio is the sign of the numerator.
            s = math.copysign(math.inf, num) if num != 0 else math.nan
        return cls(p, float(p_a), float(p_b), float(s))

    @property
    def numerator(self) -> float:
        return self.p_pp[0] - self.p_pp[1] + self.p_pp[2] + self.p_pp[3]

    @property
    def denominator(self) -> float:
        return self.p_a + self.p_b

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_pp"] = list(self.p_pp)
        return d


def _check_dims(state: PairCoherentState, *povms: SignPovm):
    for p in povms:
        if p.matrix.shape != (state.dim, state.dim):
            raise ValueError(f"POVM shape {p.matrix.shape} does not match state dimension {state.dim}")


def _real(value: complex, what: str) -> float:
    if abs(value.imag) > IMAG_TOL:
        raise ValueError(f"{what} has imaginary part {value.imag!r}")
    return float(value.real)


def joint_plus(state: PairCoherentState, povm_a: SignPovm, povm_b: SignPovm) -> float:
    """``<psi| E+A (x) E+B |psi> = sum_nm c_n c_m E+A[n, m] E+B[n, m]``."""
    _check_dims(state, povm_a, povm_b)
    c = state.coeffs
    val = complex(np.sum(np.outer(c, c) * povm_a.matrix * povm_b.matrix))
    return _real(val, "joint probability")


def marginal_plus(state: PairCoherentState, povm: SignPovm) -> float:
    """``sum_n c_n^2 E+[n, n]``; independent of the analyzer angle."""
    _check_dims(state, povm)
    val = complex(np.dot(state.coeffs**2, np.diag(povm.matrix)))
    return _real(val, "marginal probability")


class BellEvaluator:
    """Fixed ``(r0, alpha, beta)``; evaluates ``s`` cheaply for many ``sigma``.

    The count-difference kernels are built once; each noise level is then a
    single contraction per site.
    """

    def __init__(
        self,
        r0: float,
        alpha: float,
        beta: float | None = None,
        *,
        tail_tol: float = 1e-12,
        outcome_trunc: int | None = None,
        outcome_trunc_b: int | None = None,
    ):
        self.state = pair_coherent(r0, tail_tol)
        self.alpha = float(alpha)
        self.beta = self.alpha if beta is None else float(beta)
        n = self.state.cutoff
        # MeasurementConfig validates amplitudes and truncation floors.
        cfg_a = MeasurementConfig(0.0, self.alpha, 0.0, outcome_trunc)
        cfg_b = MeasurementConfig(0.0, self.beta, 0.0, outcome_trunc_b or outcome_trunc)
        self.kernel_a = difference_kernel(cfg_a.alpha, n, cfg_a.outcome_trunc)
        self.kernel_b = difference_kernel(cfg_b.alpha, n, cfg_b.outcome_trunc)

    @property
    def truncations(self) -> dict:
        return {
            "n_pc": self.state.cutoff,
            "outcome_trunc_a": self.kernel_a.outcome_trunc,
            "outcome_trunc_b": self.kernel_b.outcome_trunc,
        }

    def povms(self, settings: BellSettings, sigma) -> tuple[dict, dict]:
        noise = as_noise(sigma)
        dim = self.state.dim
        ea = self.kernel_a.effect(noise)
        eb = self.kernel_b.effect(noise)
        a = {}
        for t in (settings.theta, settings.theta_prime):
            cfg = MeasurementConfig(t, self.alpha, noise, self.kernel_a.outcome_trunc)
            a[t] = SignPovm(cfg, ea * phase_factors(t, dim))
        b = {}
        for p in (settings.phi, settings.phi_prime):
            cfg = MeasurementConfig(p, self.beta, noise, self.kernel_b.outcome_trunc)
            b[p] = SignPovm(cfg, eb * phase_factors(p, dim))
        return a, b

    def result(self, settings: BellSettings, sigma) -> BellResult:
        a, b = self.povms(settings, sigma)
        joints = [joint_plus(self.state, a[t], b[p]) for t, p in settings.pairs()]
        pa = marginal_plus(self.state, a[settings.theta_prime])
        pb = marginal_plus(self.state, b[settings.phi])
        return BellResult.from_probabilities(joints, pa, pb)

    def s(self, settings: BellSettings, sigma) -> float:
        return self.result(settings, sigma).s


def bell_ratio(
    r0: float,
    alpha: float,
    sigma=0.0,
    settings: BellSettings = BellSettings(),
    *,
    beta: float | None = None,
    tail_tol: float = 1e-12,
    outcome_trunc: int | None = None,
) -> BellResult:
    """Four joint and two marginal ``+`` probabilities and the ratio ``s``."""
    ev = BellEvaluator(r0, alpha, beta, tail_tol=tail_tol, outcome_trunc=outcome_trunc)
    return ev.result(settings, sigma)


def max_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def _map_points(fn, points: list, workers: int | None) -> list:
    """Evaluate ``fn`` per point, in input order; failures name the point."""
    workers = max_workers() if workers is None else workers
    if workers <= 1 or len(points) <= 1:
        out = []
        for p in points:
            try:
                out.append(fn(p))
            except Exception as exc:
                raise ScanError(p[0], exc) from exc
        return out
    with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
        futures = [pool.submit(fn, p) for p in points]
        out = []
        for p, fut in zip(points, futures):
            try:
                out.append(fut.result())
            except Exception as exc:
                raise ScanError(p[0], exc) from exc
        return out


def _scan_point(args) -> float:
    alpha, r0, sigma, settings, kw = args
    return bell_ratio(r0, alpha, sigma, settings, **kw).s


def scan_alpha(
    r0: float,
    sigma,
    settings: BellSettings = BellSettings(),
    alphas: Sequence[float] = (),
    *,
    workers: int | None = None,
    **kw,
) -> list[tuple[float, float]]:
    """``(alpha, s)`` for each local-oscillator amplitude, with ``beta = alpha``."""
    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be sorted ascending")
    points = [(a, r0, sigma, settings, kw) for a in alphas]
    values = _map_points(_scan_point, points, workers)
    return list(zip(alphas, values))


def bisect_violation(s_of, lo: float, hi: float, tol: float, what: str = "sigma") -> float:
    """Bisection for the noise level where ``s`` drops to 1.

    ``s_of`` must satisfy ``s(lo) > 1 >= s(hi)``.  Every evaluated point is
    checked for monotone nonincrease in the noise.  Returns the midpoint of
    the final bracket, whose width is at most ``tol``.
    """
    if not (0 <= lo < hi) or tol <= 0:
        raise ValueError(f"need 0 <= lo < hi and tol > 0, got lo={lo}, hi={hi}, tol={tol}")
    s_lo, s_hi = s_of(lo), s_of(hi)
    if not s_lo > 1.0:
        raise BracketError(f"no violation at {what}={lo}: s={s_lo!r}")
    if s_hi > 1.0:
        raise BracketError(f"still a violation at {what}={hi}: s={s_hi!r}")
    seen = {lo: s_lo, hi: s_hi}
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s_mid = s_of(mid)
        seen[mid] = s_mid
        if s_mid > 1.0:
            lo = mid
        else:
            hi = mid
    xs = sorted(seen)
    vals = [seen[x] for x in xs]
    if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
        raise BracketError(f"s is not monotone in {what} over the bracket: {list(zip(xs, vals))}")
    return 0.5 * (lo + hi)


def max_sigma(
    r0: float,
    alpha: float,
    settings: BellSettings = BellSettings(),
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-3,
    **kw,
) -> float:
    """Largest detector noise (counts) still giving ``s > 1``, with ``beta = alpha``.

    The default bracket is ``(0, max(alpha, 1))``: in quadrature units that
    is noise of one vacuum standard deviation, far beyond any violation.
    """
    ev = BellEvaluator(r0, alpha, **kw)
    lo, hi = bracket if bracket is not None else (0.0, max(float(alpha), 1.0))
    return bisect_violation(lambda s: ev.s(settings, s), lo, hi, tol)


def _sigma_point(args) -> float:
    alpha, r0, settings, bracket, tol, kw = args
    return max_sigma(r0, alpha, settings, bracket, tol, **kw)


def scan_max_sigma(
    r0: float,
    settings: BellSettings = BellSettings(),
    alphas: Sequence[float] = (),
    *,
    tol: float = 1e-3,
    bracket: tuple[float, float] | None = None,
    workers: int | None = None,
    **kw,
) -> list[tuple[float, float]]:
    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be sorted ascending")
    points = [(a, r0, settings, bracket, tol, kw) for a in alphas]
    values = _map_points(_sigma_point, points, workers)
    return list(zip(alphas, values))
