"""Pair-coherent state and the noisy sign measurement on one microscopic mode.

A site receives a coherent local oscillator ``|alpha>`` in mode ``a+`` and the
microscopic mode ``a-``.  A 50/50 splitter with relative phase ``theta`` gives
``c'(+-) = (a+ +- a- exp(-i theta)) / sqrt(2)``; the result is the count
difference ``k+ - k-`` plus Gaussian noise, classified ``+1`` when
``>= 0``.  Tracing out ``a+`` leaves a binary POVM on ``a-``.

For an input ``|alpha>|n>`` the output is a two-mode displacement by
``alpha / sqrt(2)`` of the binomially split Fock state, so every amplitude is
a short sum of displacement matrix elements.  The count-difference kernel

    h[m, n, d] = sum_{k+ - k- = d} conj(A(k+, k-; m)) A(k+, k-; n)

does not depend on the noise, so POVMs for many ``sigma`` come from one
contraction ``E = h @ weights(sigma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import TruncationError
from .specfun import (
    GaussianNoise,
    as_noise,
    displacement_matrix,
    log_bessel_i0,
    noise_geq,
    noise_lt,
)

MASS_TOL = 1e-10


# ---------------------------------------------------------------- the state


@dataclass(frozen=True, eq=False)
class PairCoherentState:
    """Real Fock coefficients ``c_n`` of ``sum_n c_n |n>|n>``."""

    r0: float
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def cutoff(self) -> int:
        return len(self.coeffs) - 1

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def norm2(self) -> float:
        return math.fsum(self.coeffs**2)


def pair_coherent(r0: float, tail_tol: float = 1e-12) -> PairCoherentState:
    """Truncated pair-coherent state with discarded weight below ``tail_tol``.

    ``c_n = I0(2 r0^2)^(-1/2) r0^(2n) / n!``; the cutoff is the smallest index
    whose discarded tail ``sum_{n > N} c_n^2`` is below ``tail_tol``.  The
    coefficients are the exact ones, not renormalized, so the retained norm
    lies in ``[1 - tail_tol, 1]``.
    """
    r0 = float(r0)
    if r0 < 0 or not math.isfinite(r0):
        raise ValueError(f"r0 must be finite and >= 0, got {r0!r}")
    if not (0 < tail_tol <= 1e-6):
        raise ValueError(f"tail_tol must be in (0, 1e-6], got {tail_tol!r}")
    if r0 == 0.0:
        return PairCoherentState(0.0, np.array([1.0]))

    log_norm = log_bessel_i0(2.0 * r0 * r0)
    # Weights peak near n = r0^2 and then fall faster than geometrically.
    logs = []
    n = 0
    while True:
        lw = 4.0 * n * math.log(r0) - 2.0 * math.lgamma(n + 1) - log_norm
        logs.append(lw)
        if n > r0 * r0 + 2 and lw < math.log(tail_tol) - 40.0:
            break
        n += 1
    w = np.exp(np.array(logs))
    tails = np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])
    cutoff = int(np.argmax(tails < tail_tol))
    coeffs = np.exp(0.5 * np.array(logs[: cutoff + 1]))
    return PairCoherentState(r0, coeffs)


# -------------------------------------------------------------- measurement


def default_outcome_trunc(alpha: float) -> int:
    return math.ceil(alpha * alpha) + 10 * math.ceil(alpha) + 20


@dataclass(frozen=True)
class MeasurementConfig:
    """Analyzer angle, local-oscillator amplitude and detector noise at one site.

    ``outcome_trunc`` is the largest photon count kept per output mode; it
    defaults to ``ceil(alpha^2) + 10 ceil(alpha) + 20`` and may only be raised.
    """

    theta: float = 0.0
    alpha: float = 0.0
    sigma: GaussianNoise = GaussianNoise()
    outcome_trunc: int | None = None

    def __post_init__(self):
        alpha = float(self.alpha)
        if alpha < 0 or not math.isfinite(alpha):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "sigma", as_noise(self.sigma))
        floor = default_outcome_trunc(alpha)
        if self.outcome_trunc is None:
            object.__setattr__(self, "outcome_trunc", floor)
        elif self.outcome_trunc < floor:
            raise ValueError(f"outcome_trunc must be >= {floor} for alpha={alpha}, got {self.outcome_trunc}")


@dataclass(frozen=True, eq=False)
class SignPovm:
    """Matrix of the ``+`` outcome effect on the microscopic mode."""

    config: MeasurementConfig
    matrix: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _split_weights(n: int) -> np.ndarray:
    """Amplitudes of ``|n>`` split at a balanced splitter onto ``|j, n-j>``."""
    j = np.arange(n + 1)
    lg = math.lgamma(n + 1) - np.array([math.lgamma(i + 1) + math.lgamma(n - i + 1) for i in j])
    return (-1.0) ** (n - j) * np.exp(0.5 * (lg - n * math.log(2.0)))


def _amplitudes_theta0(n: int, disp: np.ndarray) -> np.ndarray:
    w = _split_weights(n)
    cols = np.arange(n + 1)
    # sum_j w_j D[:, j] (x) D[:, n - j]
    return (disp[:, cols] * w) @ disp[:, n - cols].T


def output_amplitudes(n: int, config: MeasurementConfig) -> np.ndarray:
    """Amplitudes ``A[k+, k-]`` of the two detected modes for input ``|alpha>|n>``.

    Returned as a dense ``(K+1, K+1)`` array with ``K = config.outcome_trunc``.
    Raises :class:`TruncationError` if more than ``1e-10`` of the probability
    falls outside the array.
    """
    if n < 0:
        raise ValueError("Fock index must be >= 0")
    K = config.outcome_trunc
    disp = displacement_matrix(config.alpha / math.sqrt(2.0), K, n).real
    amp = _amplitudes_theta0(n, disp)
    _check_mass(float(np.sum(amp * amp)), n, config.alpha, K)
    # a-^dagger carries exp(-i theta) through the splitter.
    return amp * np.exp(-1j * n * config.theta)


def _check_mass(mass: float, n: int, alpha: float, K: int):
    if mass < 1.0 - MASS_TOL:
        raise TruncationError(
            f"outcome_trunc={K} keeps mass {mass!r} for n={n}, alpha={alpha}; increase outcome_trunc"
        )


@dataclass(frozen=True, eq=False)
class DifferenceKernel:
    """Count-difference distribution ``h[m, n, d]`` at ``theta = 0``.

    ``d`` runs over ``-K .. K``; ``differences`` holds those values.
    """

    alpha: float
    n_max: int
    outcome_trunc: int
    h: np.ndarray = field(repr=False)
    differences: np.ndarray = field(repr=False)

    def effect(self, sigma, outcome: str = "+") -> np.ndarray:
        """Real symmetric effect matrix at ``theta = 0`` for one outcome."""
        if outcome == "+":
            weight = noise_geq(-self.differences, sigma)
        elif outcome == "-":
            weight = noise_lt(-self.differences, sigma)
        else:
            raise ValueError(f"outcome must be '+' or '-', got {outcome!r}")
        return self.h @ weight


@lru_cache(maxsize=64)
def difference_kernel(alpha: float, n_max: int, outcome_trunc: int | None = None) -> DifferenceKernel:
    alpha = float(alpha)
    K = default_outcome_trunc(alpha) if outcome_trunc is None else int(outcome_trunc)
    disp = displacement_matrix(alpha / math.sqrt(2.0), K, n_max).real
    amps = []
    for n in range(n_max + 1):
        amp = _amplitudes_theta0(n, disp)
        _check_mass(float(np.sum(amp * amp)), n, alpha, K)
        amps.append(amp.ravel())

    k = np.arange(K + 1)
    index = (k[:, None] - k[None, :] + K).ravel()
    h = np.empty((n_max + 1, n_max + 1, 2 * K + 1))
    for m in range(n_max + 1):
        for n in range(m, n_max + 1):
            h[m, n] = np.bincount(index, weights=amps[m] * amps[n], minlength=2 * K + 1)
            h[n, m] = h[m, n]
    h.setflags(write=False)
    diffs = np.arange(-K, K + 1)
    diffs.setflags(write=False)
    return DifferenceKernel(alpha, n_max, K, h, diffs)


def phase_factors(theta: float, dim: int) -> np.ndarray:
    """``exp(i (m - n) theta)`` for ``m, n < dim``."""
    ph = np.exp(1j * theta * np.arange(dim))
    return ph[:, None] * ph.conj()[None, :]


def sign_povm(config: MeasurementConfig, n_pc: int, outcome: str = "+") -> SignPovm:
    """Noisy sign effect on Fock indices ``0 .. n_pc`` of the microscopic mode.

    Built at ``theta = 0`` and phase-rotated:
    ``E(theta)[m, n] = exp(i (m - n) theta) E(0)[m, n]``.  ``outcome='-'``
    builds the complementary effect from its own weights.
    """
    kern = difference_kernel(config.alpha, int(n_pc), config.outcome_trunc)
    e0 = kern.effect(config.sigma, outcome)
    return SignPovm(config, e0 * phase_factors(config.theta, n_pc + 1))


# ---------------------------------------------------------- dense oracle


BRUTE_MAX_DIM = 40
BRUTE_MAX_ALPHA = 3.0


def _annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1)


def _coherent(alpha: float, dim: int) -> np.ndarray:
    k = np.arange(dim)
    if alpha == 0.0:
        return (k == 0).astype(complex)
    lg = np.array([math.lgamma(i + 1) for i in k])
    return np.exp(-0.5 * alpha * alpha + k * math.log(alpha) - 0.5 * lg).astype(complex)


def mode_unitary(mixing: np.ndarray, dim: int) -> np.ndarray:
    """Dense two-mode unitary ``V`` with ``V^dagger a_i V = sum_j M_ij a_j``.

    ``V = expm(sum_ij G_ij a_i^dagger a_j)`` with ``G = logm(M)``.  The
    generator conserves total photon number, so every block with total
    number below ``dim`` is exact.
    """
    gen = linalg.logm(np.asarray(mixing, dtype=complex))
    a = _annihilation(dim)
    eye = np.eye(dim)
    ops = [np.kron(a, eye), np.kron(eye, a)]
    H = sum(gen[i, j] * ops[i].conj().T @ ops[j] for i in range(2) for j in range(2))
    return linalg.expm(H)


def splitter_mixing(theta: float) -> np.ndarray:
    """Direct route: ``c'(+-) = (a+ +- a- exp(-i theta)) / sqrt(2)``."""
    ph = np.exp(-1j * theta)
    return np.array([[1.0, ph], [1.0, -ph]]) / math.sqrt(2.0)


def two_stage_mixings(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Two-stage route: ``a'`` mixing first, then the ``theta/2`` analyzer.

    ``a'- = (a- - a+)/sqrt(2)``, ``a'+ = i (a- + a+)/sqrt(2)``;
    ``c+ = a'+ cos(theta/2) + a'- sin(theta/2)``,
    ``c- = a'+ sin(theta/2) - a'- cos(theta/2)``.
    Mode order is ``(+, -)`` throughout.
    """
    s2 = math.sqrt(2.0)
    first = np.array([[1j / s2, 1j / s2], [-1.0 / s2, 1.0 / s2]])
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    second = np.array([[c, s], [s, -c]], dtype=complex)
    return first, second


@lru_cache(maxsize=32)
def _network_unitary(theta: float, dim: int, route: str) -> np.ndarray:
    if route == "direct":
        return mode_unitary(splitter_mixing(theta), dim)
    if route == "two-stage":
        first, second = two_stage_mixings(theta)
        return mode_unitary(second, dim) @ mode_unitary(first, dim)
    raise ValueError(f"route must be 'direct' or 'two-stage', got {route!r}")


def _check_brute(config: MeasurementConfig, n_pc: int, dim: int, weights=None):
    """Reject truncations losing more than 1e-7 of the (weighted) input norm."""
    if dim > BRUTE_MAX_DIM:
        raise ValueError(f"dim must be <= {BRUTE_MAX_DIM}")
    if config.alpha > BRUTE_MAX_ALPHA:
        raise ValueError(f"brute force supports alpha <= {BRUTE_MAX_ALPHA}")
    if n_pc >= dim:
        raise TruncationError(f"dim={dim} must exceed n_pc={n_pc}")
    kept = np.cumsum(np.abs(_coherent(config.alpha, dim)) ** 2)
    # Input |alpha>|n> keeps coherent indices below dim - n.
    lost = 1.0 - kept[dim - 1 - np.arange(n_pc + 1)]
    worst = lost.max() if weights is None else float(np.dot(weights, lost))
    if worst > 1e-7:
        raise TruncationError(f"dim={dim} too small for alpha={config.alpha}, n_pc={n_pc}")


def _sign_weights(dim: int, sigma, outcome: str = "+") -> np.ndarray:
    k = np.arange(dim)
    diff = k[:, None] - k[None, :]
    return noise_geq(-diff, sigma) if outcome == "+" else noise_lt(-diff, sigma)


def brute_force_povm(config: MeasurementConfig, n_pc: int, dim: int = 30, route: str = "direct") -> SignPovm:
    """Sign POVM from dense matrix exponentials on a ``dim x dim`` two-mode space.

    Independent of the displacement/binomial decomposition used by
    :func:`sign_povm`; intended as an oracle for small ``alpha``.
    ``route='two-stage'`` builds the network from the two-step mixing
    instead of the single phase-shifted splitter.
    """
    _check_brute(config, n_pc, dim)
    V = _network_unitary(config.theta, dim, route)
    coh = _coherent(config.alpha, dim)
    outs = []
    for n in range(n_pc + 1):
        vac = np.zeros(dim)
        vac[n] = 1.0
        outs.append((V @ np.kron(coh, vac)).reshape(dim, dim))
    w = _sign_weights(dim, config.sigma)
    E = np.empty((n_pc + 1, n_pc + 1), dtype=complex)
    for m in range(n_pc + 1):
        for n in range(n_pc + 1):
            E[m, n] = np.sum(outs[m].conj() * outs[n] * w)
    return SignPovm(config, E)


def brute_force_joint_plus(
    state: PairCoherentState,
    config_a: MeasurementConfig,
    config_b: MeasurementConfig,
    dim: int = 24,
    route: str = "direct",
) -> float:
    """``P_{++}`` from the full four-mode state evolved densely.

    Modes are ``(a+, a-, b+, b-)``; both sites' networks act on the joint
    state vector and the outcome table is summed directly.
    """
    for cfg in (config_a, config_b):
        _check_brute(cfg, state.cutoff, dim, state.coeffs**2)
    coh_a = _coherent(config_a.alpha, dim)
    coh_b = _coherent(config_b.alpha, dim)
    psi = np.zeros((dim, dim, dim, dim), dtype=complex)
    for n, c in enumerate(state.coeffs):
        psi[:, n, :, n] = c * np.outer(coh_a, coh_b)
    psi = psi.reshape(dim * dim, dim * dim)
    Va = _network_unitary(config_a.theta, dim, route)
    Vb = _network_unitary(config_b.theta, dim, route)
    out = (Va @ psi @ Vb.T).reshape(dim, dim, dim, dim)
    prob = np.abs(out) ** 2
    wa = _sign_weights(dim, config_a.sigma)
    wb = _sign_weights(dim, config_b.sigma)
    return float(np.einsum("ijkl,ij,kl->", prob, wa, wb))
