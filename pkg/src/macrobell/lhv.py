"""Local hidden-variable models, nonlocal perturbations, and the ratio ``s``.

A model is a finite mixture over hidden states ``lambda`` with weights
``rho``; for each ``lambda`` and analyzer angle each site has a distribution
over integer count-difference outcomes.  The noisy ``+`` probability of an
outcome ``i`` is ``P(noise >= -i)``.

A :class:`NonlocalKernel` shifts each local outcome by ``m`` in ``-M..M``
with a distribution that may depend on both sites' angles.  Gaussian noise
of width ``sigma`` changes any ``+`` probability by at most
``delta = M / (sigma sqrt(2 pi))`` under such a shift, which bounds how far
``s`` can rise above its local value.  This bound is our own construction
for checking the slowly-varying-noise argument numerically.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bell import BellResult, BellSettings
from .specfun import as_noise, noise_geq

NORM_TOL = 1e-12
TABLE_HEADER = "# lhv-model v1\n# kind,lambda,angle,outcome,value\n"


@dataclass(frozen=True, eq=False)
class LhvModel:
    """Hidden-state weights and per-site response tables.

    ``response_a[l, k, i]`` is the probability of outcome ``outcomes[i]`` at
    A for hidden state ``l`` and angle ``angles[k]``; likewise for B.
    """

    weights: np.ndarray
    angles: tuple[float, ...]
    outcomes: np.ndarray
    response_a: np.ndarray
    response_b: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights, float)
        outcomes = _frozen(self.outcomes, np.int64)
        ra = _frozen(self.response_a, float)
        rb = _frozen(self.response_b, float)
        angles = tuple(float(a) for a in self.angles)
        shape = (len(w), len(angles), len(outcomes))
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("need at least one hidden state")
        if ra.shape != shape or rb.shape != shape:
            raise ValueError(f"response tables must have shape {shape}, got {ra.shape} and {rb.shape}")
        if (w < 0).any() or abs(w.sum() - 1.0) > NORM_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        for name, r in (("A", ra), ("B", rb)):
            if (r < 0).any() or np.abs(r.sum(axis=-1) - 1.0).max() > NORM_TOL:
                raise ValueError(f"response table {name} rows must be distributions")
        if np.any(np.diff(outcomes) <= 0):
            raise ValueError("outcomes must be strictly increasing")
        for key, val in (("weights", w), ("outcomes", outcomes), ("response_a", ra), ("response_b", rb)):
            object.__setattr__(self, key, val)
        object.__setattr__(self, "angles", angles)

    @property
    def n_lambda(self) -> int:
        return len(self.weights)

    def angle_index(self, angle: float) -> int:
        hits = np.flatnonzero(np.isclose(self.angles, angle, rtol=0.0, atol=1e-12))
        if len(hits) == 0:
            raise KeyError(f"angle {angle!r} not in the model's angle set {self.angles}")
        return int(hits[0])


def _frozen(x, dtype) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NonlocalKernel:
    """Shift distributions over ``m = -M..M``.

    ``kernel_a[l, k_local, k_remote, i, :]`` is the shift distribution at A
    for hidden state ``l``, local angle index ``k_local``, remote angle index
    ``k_remote`` and local outcome index ``i``.  ``kernel_b`` likewise, with
    B local.
    """

    M: int
    kernel_a: np.ndarray = field(repr=False)
    kernel_b: np.ndarray = field(repr=False)

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 0:
            raise ValueError("M must be a nonnegative integer")
        ka = _frozen(self.kernel_a, float)
        kb = _frozen(self.kernel_b, float)
        for k in (ka, kb):
            if k.ndim != 5 or k.shape[-1] != 2 * self.M + 1:
                raise ValueError(f"kernel tables must be 5-d with last axis {2 * self.M + 1}")
            if (k < 0).any() or np.abs(k.sum(axis=-1) - 1.0).max() > NORM_TOL:
                raise ValueError("kernel rows must be distributions")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "kernel_a", ka)
        object.__setattr__(self, "kernel_b", kb)

    @property
    def shifts(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)


def identity_kernel(model: LhvModel, M: int = 0) -> NonlocalKernel:
    """Kernel that never shifts (all mass at ``m = 0``)."""
    L, K, n = model.n_lambda, len(model.angles), len(model.outcomes)
    k = np.zeros((L, K, K, n, 2 * M + 1))
    k[..., M] = 1.0
    return NonlocalKernel(M, k, k)


# ------------------------------------------------------------- evaluation


def _plus_weights(model: LhvModel, sigma) -> np.ndarray:
    return noise_geq(-model.outcomes, sigma)


def _ratio(joints: Sequence[float], pa: float, pb: float) -> BellResult:
    return BellResult.from_probabilities(joints, pa, pb)


def lhv_bell(model: LhvModel, settings: BellSettings, sigma=0.0) -> BellResult:
    """All six probabilities by direct summation over hidden states and outcomes."""
    w = _plus_weights(model, sigma)
    a = model.response_a @ w  # (lambda, angle)
    b = model.response_b @ w
    rho = model.weights
    idx = model.angle_index
    joints = [float(np.dot(rho, a[:, idx(t)] * b[:, idx(p)])) for t, p in settings.pairs()]
    pa = float(np.dot(rho, a[:, idx(settings.theta_prime)]))
    pb = float(np.dot(rho, b[:, idx(settings.phi)]))
    return _ratio(joints, pa, pb)


def shift_bound(M: int, sigma: float) -> float:
    """Largest change of a ``+`` probability when the outcome moves by ``<= M``."""
    return M / (sigma * math.sqrt(2.0 * math.pi))


def perturbed_plus(model: LhvModel, kernel: NonlocalKernel, sigma) -> tuple[np.ndarray, np.ndarray]:
    """Per-hidden-state ``+`` probabilities after the nonlocal shift.

    Returns ``a[l, k_a, k_b]`` and ``b[l, k_b, k_a]``.
    """
    out = model.outcomes[:, None] + kernel.shifts[None, :]
    w = noise_geq(-out, sigma)  # (outcome, shift)
    a = np.einsum("lki,lkjim,im->lkj", model.response_a, kernel.kernel_a, w)
    b = np.einsum("lki,lkjim,im->lkj", model.response_b, kernel.kernel_b, w)
    return a, b


def macroscopic_bell(
    model: LhvModel, kernel: NonlocalKernel, settings: BellSettings, sigma
) -> tuple[BellResult, float]:
    """Ratio ``s`` with the nonlocal shifts inserted, and the slack bound.

    Marginals are those of the ``(theta', phi)`` run, the only setting pair
    where both denominator angles are measured together.

    The bound: each site's ``+`` probability moves by at most ``delta``, so
    each joint moves by at most ``2 delta`` and each marginal by ``delta``:

        s <= (N_loc + 8 delta) / (D_loc - 2 delta)

    with ``N_loc``, ``D_loc`` the local numerator and denominator (the
    denominator becomes ``D_loc + 2 delta`` if the raised numerator is still
    negative).  The returned ``slack_bound`` is that right-hand side minus
    ``s_loc``, or ``inf`` when ``D_loc <= 2 delta``.
    """
    noise = as_noise(sigma)
    if noise.sigma <= 0:
        raise ValueError("macroscopic_bell needs sigma > 0")
    a, b = perturbed_plus(model, kernel, noise)
    rho = model.weights
    idx = model.angle_index
    joints = [float(np.dot(rho, a[:, idx(t), idx(p)] * b[:, idx(p), idx(t)])) for t, p in settings.pairs()]
    tp, ph = idx(settings.theta_prime), idx(settings.phi)
    pa = float(np.dot(rho, a[:, tp, ph]))
    pb = float(np.dot(rho, b[:, ph, tp]))
    result = _ratio(joints, pa, pb)

    local = lhv_bell(model, settings, noise)
    num = local.p_pp[0] - local.p_pp[1] + local.p_pp[2] + local.p_pp[3]
    den = local.p_a + local.p_b
    delta = shift_bound(kernel.M, noise.sigma)
    num_hi = num + 8 * delta
    if num_hi < 0:
        slack = num_hi / (den + 2 * delta) - local.s
    elif den - 2 * delta <= 0:
        slack = math.inf
    else:
        slack = num_hi / (den - 2 * delta) - local.s
    if local.s > 1.0 + 1e-12:
        raise AssertionError(f"local model violates the inequality: s={local.s!r}")
    if result.s > local.s + slack + 1e-12:
        raise AssertionError(f"s={result.s!r} exceeds local s={local.s!r} plus slack {slack!r}")
    return result, slack


# -------------------------------------------------------------- generators


def _settings_angles(settings: BellSettings) -> tuple[float, ...]:
    return (settings.theta, settings.theta_prime, settings.phi, settings.phi_prime)


def random_lhv(
    seed: int,
    n_lambda: int,
    outcome_window: tuple[int, int] = (-5, 5),
    angle_set: Sequence[float] | BellSettings = BellSettings(),
    support: int | None = None,
    point_mass: float = 1 / 3,
) -> LhvModel:
    """Reproducible random model.

    Outcomes are the integers of ``outcome_window`` or, if ``support`` is
    given, that many distinct integers drawn from it.  Each response row is
    a point mass with probability ``point_mass`` and a sparse Dirichlet draw
    otherwise, so deterministic corners of the model space are well
    represented.
    """
    if n_lambda < 1:
        raise ValueError("n_lambda must be >= 1")
    lo, hi = (int(v) for v in outcome_window)
    if hi < lo:
        raise ValueError("outcome_window must be (lo, hi) with lo <= hi")
    angles = _settings_angles(angle_set) if isinstance(angle_set, BellSettings) else tuple(angle_set)
    angles = tuple(dict.fromkeys(float(a) for a in angles))
    rng = np.random.default_rng(seed)
    window = np.arange(lo, hi + 1)
    if support is None or support >= len(window):
        outcomes = window
    else:
        outcomes = np.sort(rng.choice(window, size=support, replace=False))
    weights = rng.dirichlet(np.ones(n_lambda))
    shape = (n_lambda, len(angles))

    def table():
        t = rng.dirichlet(np.full(len(outcomes), 0.3), size=shape)
        point = rng.random(shape) < point_mass
        hits = rng.integers(len(outcomes), size=shape)
        t[point] = np.eye(len(outcomes))[hits[point]]
        # Dirichlet rows are normalized only to rounding.
        return t / t.sum(axis=-1, keepdims=True)

    return LhvModel(weights, angles, outcomes, table(), table())


def deterministic_model(settings: BellSettings = BellSettings(), outcome: int = 0) -> LhvModel:
    """Single hidden state with every response a point mass at ``outcome``."""
    angles = tuple(dict.fromkeys(_settings_angles(settings)))
    r = np.ones((1, len(angles), 1))
    return LhvModel(np.array([1.0]), angles, np.array([outcome]), r, r)


def uniform_model(settings: BellSettings = BellSettings(), spread: int = 1) -> LhvModel:
    """Independent responses equally likely at ``-spread`` and ``+spread``."""
    angles = tuple(dict.fromkeys(_settings_angles(settings)))
    r = np.full((1, len(angles), 2), 0.5)
    return LhvModel(np.array([1.0]), angles, np.array([-spread, spread]), r, r)


def mixture(first: LhvModel, second: LhvModel, t: float) -> LhvModel:
    """Convex mixture ``t * first + (1 - t) * second`` over a union of hidden states."""
    if first.angles != second.angles or not np.array_equal(first.outcomes, second.outcomes):
        raise ValueError("models must share angles and outcomes")
    return LhvModel(
        np.concatenate([t * first.weights, (1 - t) * second.weights]),
        first.angles,
        first.outcomes,
        np.concatenate([first.response_a, second.response_a]),
        np.concatenate([first.response_b, second.response_b]),
    )


def random_kernel(seed: int, model: LhvModel, M: int) -> NonlocalKernel:
    rng = np.random.default_rng(seed)
    L, K, n = model.n_lambda, len(model.angles), len(model.outcomes)
    shape = (L, K, K, n)
    return NonlocalKernel(
        M, rng.dirichlet(np.ones(2 * M + 1), size=shape), rng.dirichlet(np.ones(2 * M + 1), size=shape)
    )


def adversarial_kernel(
    model: LhvModel, settings: BellSettings, sigma, M: int, max_sweeps: int = 50
) -> NonlocalKernel:
    """Shift kernel pushing ``s`` up, by block coordinate ascent.

    A block is one (site, hidden state, setting pair).  With the rest fixed,
    ``s`` is linear-fractional in that block's ``+`` probability, so the best
    choice is an extreme one: shift every outcome by ``+M`` or by ``-M``.
    Blocks start from the sign each term carries in the numerator and are
    flipped while that improves ``s``.
    """
    noise = as_noise(sigma)
    w_up = noise_geq(-(model.outcomes + M), noise)
    w_dn = noise_geq(-(model.outcomes - M), noise)
    idx = model.angle_index
    pairs = [(idx(t), idx(p)) for t, p in settings.pairs()]
    # Per-block extreme values: [site][lambda, pair, choice]; choice 0 = -M, 1 = +M.
    ext_a = np.stack(
        [np.stack([model.response_a[:, ka] @ w for w in (w_dn, w_up)], -1) for ka, _ in pairs], 1
    )
    ext_b = np.stack(
        [np.stack([model.response_b[:, kb] @ w for w in (w_dn, w_up)], -1) for _, kb in pairs], 1
    )
    sign = np.array([1.0, -1.0, 1.0, 1.0])
    rho = model.weights
    L = model.n_lambda

    def s_of(ca, cb):
        a = np.take_along_axis(ext_a, ca[..., None], -1)[..., 0]
        b = np.take_along_axis(ext_b, cb[..., None], -1)[..., 0]
        num = np.dot(rho, (a * b) @ sign)
        den = np.dot(rho, a[:, 2] + b[:, 2])
        return num / den if den > 0 else -np.inf

    start = (sign > 0).astype(int)
    ca = np.tile(start, (L, 1))
    cb = ca.copy()
    best = s_of(ca, cb)
    for _ in range(max_sweeps):
        improved = False
        for choice in (ca, cb):
            for lam in range(L):
                for j in range(4):
                    choice[lam, j] ^= 1
                    trial = s_of(ca, cb)
                    if trial > best + 1e-15:
                        best, improved = trial, True
                    else:
                        choice[lam, j] ^= 1
        if not improved:
            break

    K, n = len(model.angles), len(model.outcomes)
    ka_tab = np.zeros((L, K, K, n, 2 * M + 1))
    kb_tab = np.zeros((L, K, K, n, 2 * M + 1))
    ka_tab[..., M] = 1.0
    kb_tab[..., M] = 1.0
    for j, (ia, ib) in enumerate(pairs):
        for lam in range(L):
            for tab, c, loc, rem in ((ka_tab, ca, ia, ib), (kb_tab, cb, ib, ia)):
                tab[lam, loc, rem] = 0.0
                tab[lam, loc, rem, :, 2 * M if c[lam, j] else 0] = 1.0
    return NonlocalKernel(M, ka_tab, kb_tab)


# ---------------------------------------------------------- serialization


def to_table(model: LhvModel) -> str:
    """Plain-text table: one row per weight and per (lambda, angle, outcome)."""
    buf = io.StringIO()
    buf.write(TABLE_HEADER)
    for lam, w in enumerate(model.weights):
        buf.write(f"rho,{lam},,,{float(w)!r}\n")
    for side, resp in (("A", model.response_a), ("B", model.response_b)):
        for lam in range(model.n_lambda):
            for k, ang in enumerate(model.angles):
                for i, out in enumerate(model.outcomes):
                    buf.write(f"{side},{lam},{ang!r},{int(out)},{float(resp[lam, k, i])!r}\n")
    return buf.getvalue()


def from_table(text: str) -> LhvModel:
    weights: dict[int, float] = {}
    rows = []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        kind, lam, ang, out, val = line.split(",")
        if kind == "rho":
            weights[int(lam)] = float(val)
        elif kind in ("A", "B"):
            rows.append((kind, int(lam), float(ang), int(out), float(val)))
        else:
            raise ValueError(f"unknown row kind {kind!r}")
    angles = tuple(dict.fromkeys(r[2] for r in rows))
    outcomes = sorted({r[3] for r in rows})
    L = len(weights)
    ra = np.zeros((L, len(angles), len(outcomes)))
    rb = np.zeros_like(ra)
    a_idx = {a: i for i, a in enumerate(angles)}
    o_idx = {o: i for i, o in enumerate(outcomes)}
    for kind, lam, ang, out, val in rows:
        (ra if kind == "A" else rb)[lam, a_idx[ang], o_idx[out]] = val
    return LhvModel(np.array([weights[i] for i in range(L)]), angles, np.array(outcomes), ra, rb)


# ------------------------------------------------------------------ suites


def lhv_suite(trials: int = 1000, seed: int = 0, n_lambda: int = 4, window: int = 5,
              settings: BellSettings = BellSettings()) -> dict:
    """Random local models under both noiseless and noisy detection."""
    max_s = -math.inf
    worst_seed = None
    for t in range(trials):
        model = random_lhv(seed + t, n_lambda, (-window, window), settings)
        sigma = (0.0, 0.5 * window, 2.0 * window)[t % 3]
        s = lhv_bell(model, settings, sigma).s
        if s > max_s:
            max_s, worst_seed = s, seed + t
    return {"trials": trials, "max_s": max_s, "margin": 1.0 - max_s, "worst_seed": worst_seed}


def macroscopic_suite(trials: int = 1000, seed: int = 0, M: int = 5, sigma_over_m: float = 100.0,
                      n_lambda: int = 3, settings: BellSettings = BellSettings()) -> dict:
    """Adversarial shift kernels against random models.

    Outcomes are drawn from ``+-3 sigma`` so the noise weights span (0, 1).
    Reports the largest ``s`` and its excess over ``1 + 10 delta``.
    """
    sigma = sigma_over_m * M
    delta = shift_bound(M, sigma)
    limit = 1.0 + 10.0 * delta
    half = math.ceil(3 * sigma)
    max_s, worst_seed, max_excess = -math.inf, None, -math.inf
    for t in range(trials):
        # Alternate mixed and fully deterministic responses; the latter reach the
        # saturating corners where the bound is tightest.
        model = random_lhv(seed + t, n_lambda, (-half, half), settings, support=12, point_mass=(1 / 3, 1.0)[t % 2])
        kernel = adversarial_kernel(model, settings, sigma, M)
        res, _ = macroscopic_bell(model, kernel, settings, sigma)
        if res.s > max_s:
            max_s, worst_seed = res.s, seed + t
        max_excess = max(max_excess, res.s - limit)
    return {
        "trials": trials,
        "M": M,
        "sigma": sigma,
        "delta": delta,
        "limit": limit,
        "max_s": max_s,
        "max_excess": max_excess,
        "worst_seed": worst_seed,
    }


def small_noise_search(trials: int = 200, seed: int = 0, M: int = 5, sigma: float | None = None,
                       n_lambda: int = 2, settings: BellSettings = BellSettings()) -> dict:
    """Adversarial search with noise comparable to the shift (default ``sigma = M``).

    Returns the largest ``s`` found and the seed producing it.
    """
    sigma = float(M) if sigma is None else float(sigma)
    best = (-math.inf, None)
    for t in range(trials):
        model = random_lhv(seed + t, n_lambda, (-M, M), settings)
        kernel = adversarial_kernel(model, settings, sigma, M)
        s = macroscopic_bell(model, kernel, settings, sigma)[0].s
        if s > best[0]:
            best = (s, seed + t)
    return {"trials": trials, "M": M, "sigma": sigma, "max_s": best[0], "best_seed": best[1]}
