"""Large-amplitude limit: sign of homodyne quadratures on the pair-coherent modes.

With a strong local oscillator the count difference at a site tends to
``alpha * X_theta`` where ``X_theta = a exp(-i theta) + a^dagger exp(i theta)``
(vacuum variance 1).  Detector noise ``sigma`` in counts becomes
``sigma0 = sigma / alpha`` in quadrature units.

The joint wavefunction is

    psi(x, y) = sum_n c_n exp(-i n (theta + phi)) u_n(x) u_n(y),

so the smeared sign probability separates into one-dimensional integrals
``Q[n, m] = int u_n u_m P(x + noise >= 0) dx``:

    P++ = sum_nm c_n c_m cos((n - m)(theta + phi)) Q[n, m]^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .bell import BellResult, BellSettings, bisect_violation
from .errors import BracketError, GridError
from .fockspace import PairCoherentState, pair_coherent
from .specfun import noise_geq, oscillator_eigenfunctions

RICHARDSON_TOL = 1e-6


@dataclass(frozen=True)
class QuadratureGrid:
    """Integration range ``[-half_width, half_width]`` and node budget per axis."""

    half_width: float = 12.0
    nodes: int = 801

    def __post_init__(self):
        if self.half_width <= 0 or self.nodes < 16:
            raise ValueError("grid needs half_width > 0 and at least 16 nodes")

    def uniform(self) -> tuple[np.ndarray, float]:
        x = np.linspace(-self.half_width, self.half_width, self.nodes)
        return x, x[1] - x[0]

    def doubled(self) -> "QuadratureGrid":
        return QuadratureGrid(self.half_width, 2 * self.nodes - 1)


@dataclass(frozen=True, eq=False)
class QuadratureModel:
    r0: float
    angle_sum: float = 0.0
    grid: QuadratureGrid = QuadratureGrid()
    tail_tol: float = 1e-12
    state: PairCoherentState = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "state", pair_coherent(self.r0, self.tail_tol))


def wavefunction(model: QuadratureModel, x, y) -> np.ndarray:
    st = model.state
    ux = oscillator_eigenfunctions(st.cutoff, x)
    uy = oscillator_eigenfunctions(st.cutoff, y)
    n = np.arange(st.dim)
    amp = st.coeffs * np.exp(-1j * n * model.angle_sum)
    return np.tensordot(amp, ux * uy, axes=1)


def joint_pdf(model: QuadratureModel, x, y):
    """``|psi(x, y)|^2`` at broadcastable points ``x`` (site A) and ``y`` (site B)."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.abs(wavefunction(model, x, y)) ** 2
    return out[()] if out.ndim == 0 else out


def marginal_pdf(model: QuadratureModel, x):
    """Single-site quadrature density ``sum_n c_n^2 u_n(x)^2``; angle independent."""
    u = oscillator_eigenfunctions(model.state.cutoff, np.asarray(x, dtype=float))
    out = np.tensordot(model.state.coeffs**2, u * u, axes=1)
    return out[()] if np.ndim(out) == 0 else out


def _panel_edges(half_width: float, sigma0: float) -> np.ndarray:
    """Breakpoints at unit spacing, plus geometric ones near 0 resolving the noise step."""
    edges = set(np.arange(-math.floor(half_width), math.floor(half_width) + 1, 1.0).tolist())
    edges.update((-half_width, half_width, 0.0))
    if sigma0 > 0:
        s = sigma0 / 4
        while s < half_width:
            edges.update((-s, s))
            s *= 2
    return np.array(sorted(e for e in edges if -half_width <= e <= half_width))


def _gauss_nodes(grid: QuadratureGrid, sigma0: float) -> tuple[np.ndarray, np.ndarray]:
    edges = _panel_edges(grid.half_width, sigma0)
    per_panel = max(16, grid.nodes // (len(edges) - 1))
    t, w = leggauss(per_panel)
    a, b = edges[:-1, None], edges[1:, None]
    x = (0.5 * (b - a) * t + 0.5 * (a + b)).ravel()
    wt = (0.5 * (b - a) * w).ravel()
    return x, wt


@lru_cache(maxsize=256)
def _sign_matrix(r0: float, tail_tol: float, grid: QuadratureGrid, sigma0: float) -> np.ndarray:
    nmax = pair_coherent(r0, tail_tol).cutoff
    x, wt = _gauss_nodes(grid, sigma0)
    u = oscillator_eigenfunctions(nmax, x)
    q = (u * (wt * noise_geq(-x, sigma0))) @ u.T
    q.setflags(write=False)
    return q


def quadrature_sign_matrix(model: QuadratureModel, sigma0: float) -> np.ndarray:
    """``Q[n, m] = int u_n(x) u_m(x) P(x + noise >= 0) dx``.

    Composite Gauss-Legendre on panels that resolve the noise step at 0.
    Recomputed with doubled nodes; a change above 1e-6 raises
    :class:`GridError`.
    """
    sigma0 = float(sigma0)
    if sigma0 < 0 or not math.isfinite(sigma0):
        raise ValueError(f"sigma0 must be finite and >= 0, got {sigma0!r}")
    q = _sign_matrix(model.r0, model.tail_tol, model.grid, sigma0)
    q2 = _sign_matrix(model.r0, model.tail_tol, model.grid.doubled(), sigma0)
    moved = float(np.abs(q - q2).max())
    if moved > RICHARDSON_TOL:
        raise GridError(f"quadrature moved by {moved:.3g} on doubling the nodes; widen or refine the grid")
    return q2


def _joint_from_q(state: PairCoherentState, q: np.ndarray, angle_sum: float) -> float:
    n = np.arange(state.dim)
    c = state.coeffs
    return float(np.sum(np.outer(c, c) * np.cos((n[:, None] - n[None, :]) * angle_sum) * q * q))


def plus_plus_prob(model: QuadratureModel, sigma0: float) -> float:
    """``P(x + noise_A >= 0, y + noise_B >= 0)`` with noise of std ``sigma0``."""
    return _joint_from_q(model.state, quadrature_sign_matrix(model, sigma0), model.angle_sum)


def plus_prob(model: QuadratureModel, sigma0: float) -> float:
    """Single-site ``P(x + noise >= 0)``."""
    q = quadrature_sign_matrix(model, sigma0)
    return float(np.dot(model.state.coeffs**2, np.diag(q)))


def bell_ratio_homodyne(
    r0: float,
    settings: BellSettings = BellSettings(),
    sigma0: float = 0.0,
    grid: QuadratureGrid = QuadratureGrid(),
    tail_tol: float = 1e-12,
) -> BellResult:
    joints = [
        plus_plus_prob(QuadratureModel(r0, t + p, grid, tail_tol), sigma0) for t, p in settings.pairs()
    ]
    marg = plus_prob(QuadratureModel(r0, 0.0, grid, tail_tol), sigma0)
    return BellResult.from_probabilities(joints, marg, marg)


def sigma0_cutoff(
    r0: float,
    settings: BellSettings = BellSettings(),
    tol: float = 1e-4,
    hi: float = 2.0,
    grid: QuadratureGrid = QuadratureGrid(),
) -> float:
    """Largest quadrature-unit noise with ``s > 1``, by bisection to ``tol``."""
    s0 = bell_ratio_homodyne(r0, settings, 0.0, grid).s
    if not s0 > 1.0:
        raise BracketError(f"no violation at sigma0=0 for r0={r0}: s={s0!r}")
    return bisect_violation(lambda s: bell_ratio_homodyne(r0, settings, s, grid).s, 0.0, hi, tol, "sigma0")
