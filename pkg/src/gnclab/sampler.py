"""Guess & Check posterior sampling and Monte-Carlo probability estimates.

Prior draws form one global sequence indexed ``0, 1, 2, ...``. The sequence
is generated in fixed-size blocks; block ``b`` comes from a counter-based
generator keyed by the root seed and ``b``. Workers evaluate whole blocks,
and acceptance is always resolved by global index, so every result is the
same for any worker count.

A Guess & Check run accepts the first draw with zero training error. Many
i.i.d. runs are obtained by cutting the same sequence after each success:
the segments between consecutive successes are independent runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .quantnet import RELU, Activation, QuantGrid, QuantParams, logits, param_count, sign_labels
from .stats import Estimate, block_generator, generator
from .teacher import InputDomain, LabeledSet, TeacherSpec

__all__ = [
    "DRAW_BLOCK",
    "DEFAULT_MAX_DRAWS",
    "BudgetExhausted",
    "PriorSpec",
    "GncTrace",
    "GncBatch",
    "draw_block",
    "gnc",
    "gnc_threshold",
    "gnc_runs",
    "estimate_phat",
    "estimate_ptilde",
    "posterior_errors",
    "estimate_bad_volume",
]

DRAW_BLOCK = 8192
DEFAULT_MAX_DRAWS = 10**8
_PRIOR_STREAM = "prior-draws"
# cap on B * N * width floats materialized per forward chunk
_CHUNK_FLOATS = 1 << 22


class BudgetExhausted(RuntimeError):
    """The draw budget ran out before enough draws were accepted.

    Attributes
    ----------
    draws : int
        Number of prior draws evaluated.
    accepted : int
        Number of accepted draws before the budget ran out.
    """

    def __init__(self, draws: int, accepted: int = 0):
        self.draws = int(draws)
        self.accepted = int(accepted)
        super().__init__(f"draw budget exhausted after {self.draws} draws ({self.accepted} accepted)")


@dataclass(frozen=True)
class PriorSpec:
    """Uniform prior over ``grid ** M`` for architecture ``arch``."""

    arch: object
    grid: QuantGrid
    act: Activation = RELU

    @property
    def M(self) -> int:
        return param_count(self.arch)

    @property
    def flavor(self) -> str:
        return self.arch.flavor


@dataclass(frozen=True)
class GncTrace:
    """One Guess & Check run."""

    T: int
    params: QuantParams
    train_error: float
    draws_used: int
    seed: int
    gamma: float = 0.0
    test_error: float | None = None

    def record(self) -> dict:
        return {
            "seed": self.seed,
            "T": self.T,
            "n_draws": self.draws_used,
            "estimate": self.test_error,
            "ci_low": None,
            "ci_high": None,
            "mode": "gnc" if self.gamma == 0 else f"gnc-threshold({self.gamma!r})",
        }


@dataclass(frozen=True, eq=False)
class GncBatch:
    """Many independent Guess & Check runs from one draw sequence."""

    T: np.ndarray
    theta: np.ndarray = field(repr=False)
    seed: int
    gamma: float = 0.0

    def __len__(self) -> int:
        return len(self.T)

    @property
    def draws_used(self) -> int:
        return int(self.T.sum())


def draw_block(prior: PriorSpec, seed: int, block: int) -> np.ndarray:
    """Draws ``block * DRAW_BLOCK`` to ``(block + 1) * DRAW_BLOCK - 1``."""
    gen = block_generator(seed, block, _PRIOR_STREAM)
    dtype = np.uint8 if prior.grid.Q <= 256 else np.int64
    idx = gen.integers(0, prior.grid.Q, size=(DRAW_BLOCK, prior.M), dtype=dtype)
    return prior.grid.values[idx]


def _chunk_rows(prior: PriorSpec, n_points: int) -> int:
    arch = prior.arch
    if hasattr(arch, "widths"):
        width = max(arch.widths)
    else:
        width = max(c * s for c, s in zip(arch.channels, arch.lengths)) * max(arch.kernels)
    return max(1, _CHUNK_FLOATS // max(1, n_points * width))


def _predict_theta(prior: PriorSpec, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Labels ``(B, N)`` of many parameter vectors, chunked for memory."""
    rows = _chunk_rows(prior, len(X))
    out = np.empty((len(theta), len(X)), dtype=np.int8)
    for i in range(0, len(theta), rows):
        out[i:i + rows] = sign_labels(logits(prior.arch, prior.act, theta[i:i + rows], X))
    return out


def _mismatch_counts(prior: PriorSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (_predict_theta(prior, theta, X) != y[None, :]).sum(axis=1)


def _agrees(prior: PriorSpec, theta: np.ndarray, X: np.ndarray, y: np.ndarray, first: int = 32) -> np.ndarray:
    """Boolean mask of rows that label every point of ``X`` as ``y``.

    Points are checked in growing batches and rows are dropped at their first
    mistake, so typical rejections cost a few points.
    """
    alive = np.arange(len(theta))
    start, step = 0, first
    while start < len(X) and len(alive):
        stop = min(len(X), start + step)
        ok = (_predict_theta(prior, theta[alive], X[start:stop]) == y[None, start:stop]).all(axis=1)
        alive = alive[ok]
        start, step = stop, step * 4
    mask = np.zeros(len(theta), dtype=bool)
    mask[alive] = True
    return mask


def _map_blocks(fn, blocks, workers: int):
    if workers <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def _allowed_mistakes(gamma: float, N: int) -> int:
    return int(math.floor(gamma * N + 1e-9))


def _accept_mask(prior, theta, S: LabeledSet, allowed: int) -> np.ndarray:
    if allowed == 0:
        return _agrees(prior, theta, S.X, S.y)
    return _mismatch_counts(prior, theta, S.X, S.y) <= allowed


def _scan(prior, S, gamma, seed, max_draws, workers, want):
    """Global indices of the first ``want`` accepted draws (or fewer)."""
    allowed = _allowed_mistakes(gamma, len(S))
    n_blocks = -(-max_draws // DRAW_BLOCK)
    found = []

    def evaluate(b):
        idx = np.flatnonzero(_accept_mask(prior, draw_block(prior, seed, b), S, allowed))
        return idx + b * DRAW_BLOCK

    b = 0
    while b < n_blocks:
        wave = list(range(b, min(n_blocks, b + max(1, workers))))
        for hits in _map_blocks(evaluate, wave, workers):
            found.extend(int(i) for i in hits if i < max_draws)
        b = wave[-1] + 1
        if len(found) >= want:
            break
    return found[:want]


def gnc_threshold(
    prior: PriorSpec,
    trainset: LabeledSet,
    gamma: float,
    max_draws: int = DEFAULT_MAX_DRAWS,
    seed: int = 0,
    workers: int = 1,
) -> GncTrace:
    """First prior draw with training error at most ``gamma``.

    Raises
    ------
    BudgetExhausted
        If none of the first ``max_draws`` draws is accepted.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if max_draws < 1:
        raise ValueError("max_draws must be at least 1")
    if len(trainset) == 0:
        raise ValueError("training set is empty")
    found = _scan(prior, trainset, gamma, seed, max_draws, workers, 1)
    if not found:
        raise BudgetExhausted(max_draws)
    t = found[0]
    theta = draw_block(prior, seed, t // DRAW_BLOCK)[t % DRAW_BLOCK]
    params = QuantParams(prior.arch, prior.grid, theta)
    err = float(np.mean(_predict_theta(prior, theta[None], trainset.X)[0] != trainset.y))
    return GncTrace(T=t + 1, params=params, train_error=err, draws_used=t + 1, seed=seed, gamma=gamma)


def gnc(prior: PriorSpec, trainset: LabeledSet, max_draws: int = DEFAULT_MAX_DRAWS, seed: int = 0, workers: int = 1) -> GncTrace:
    """Guess & Check: the first prior draw that interpolates ``trainset``."""
    return gnc_threshold(prior, trainset, 0.0, max_draws, seed, workers)


def gnc_runs(
    prior: PriorSpec,
    trainset: LabeledSet,
    n_runs: int,
    seed: int = 0,
    gamma: float = 0.0,
    max_draws: int = DEFAULT_MAX_DRAWS,
    workers: int = 1,
) -> GncBatch:
    """``n_runs`` independent Guess & Check runs.

    Run ``r`` consumes the draws after the ``(r-1)``-th success up to and
    including the ``r``-th. The first run equals ``gnc`` with the same seed.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    found = _scan(prior, trainset, gamma, seed, max_draws, workers, n_runs)
    if len(found) < n_runs:
        raise BudgetExhausted(max_draws, len(found))
    idx = np.asarray(found, dtype=np.int64)
    T = np.diff(np.concatenate([[-1], idx]))
    theta = np.empty((n_runs, prior.M))
    blocks = idx // DRAW_BLOCK
    for b in np.unique(blocks):
        sel = blocks == b
        theta[sel] = draw_block(prior, seed, int(b))[idx[sel] % DRAW_BLOCK]
    return GncBatch(T=T, theta=theta, seed=seed, gamma=gamma)


def _count_over_draws(prior, seed, n_draws, workers, fn) -> int:
    """Sum of ``fn(theta)`` over the first ``n_draws`` prior draws."""
    n_blocks = -(-n_draws // DRAW_BLOCK)

    def evaluate(b):
        theta = draw_block(prior, seed, b)
        stop = min(DRAW_BLOCK, n_draws - b * DRAW_BLOCK)
        return int(fn(theta[:stop]).sum())

    return sum(_map_blocks(evaluate, range(n_blocks), workers))


def estimate_phat(prior: PriorSpec, trainset: LabeledSet, n_draws: int, seed: int = 0, workers: int = 1) -> Estimate:
    """Fraction of prior draws that interpolate ``trainset``, with a 95% interval."""
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    k = _count_over_draws(prior, seed, n_draws, workers, lambda th: _agrees(prior, th, trainset.X, trainset.y))
    return Estimate.from_counts(k, n_draws, "monte-carlo", seed)


def estimate_ptilde(
    prior: PriorSpec,
    teacher: TeacherSpec,
    domain: InputDomain,
    n_draws: int,
    seed: int = 0,
    mode: str | None = None,
    probe_size: int = 10_000,
    workers: int = 1,
) -> Estimate:
    """Fraction of prior draws equivalent to ``teacher`` on ``domain``.

    ``mode="exact"`` checks every support point of an enumerable domain and
    reports ``"exact-TE"``. ``mode="probe"`` checks a random probe set and
    reports ``"probe-TE"``; it can only overestimate.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    if mode is None:
        mode = "exact" if domain.enumerable else "probe"
    if mode == "exact":
        X = domain.enumerate()
    elif mode == "probe":
        X = domain.sample(probe_size, generator(seed, "te-probe"))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    y = teacher.predict(X)
    k = _count_over_draws(prior, seed, n_draws, workers, lambda th: _agrees(prior, th, X, y))
    return Estimate.from_counts(k, n_draws, f"{mode}-TE", seed)


def posterior_errors(
    prior: PriorSpec,
    trainset: LabeledSet,
    n_samples: int,
    teacher: TeacherSpec,
    domain: InputDomain,
    seed: int = 0,
    exact: bool | None = None,
    mc_samples: int = 20_000,
    max_draws: int = DEFAULT_MAX_DRAWS,
    workers: int = 1,
) -> tuple:
    """Population errors of ``n_samples`` independent posterior draws.

    Returns
    -------
    errors : ndarray
        Exact disagreement fractions on enumerable domains, otherwise Monte
        Carlo estimates on one shared test set of ``mc_samples`` points.
    batch : GncBatch
    """
    if exact is None:
        exact = domain.enumerable
    batch = gnc_runs(prior, trainset, n_samples, seed, max_draws=max_draws, workers=workers)
    X = domain.enumerate() if exact else domain.sample(mc_samples, generator(seed, "test-set"))
    y = teacher.predict(X)
    errors = (_predict_theta(prior, batch.theta, X) != y[None, :]).mean(axis=1)
    return errors, batch


def estimate_bad_volume(
    prior: PriorSpec,
    trainset: LabeledSet,
    eps: float,
    n_posterior_samples: int,
    teacher: TeacherSpec,
    domain: InputDomain,
    seed: int = 0,
    exact: bool | None = None,
    mc_samples: int = 20_000,
    max_draws: int = DEFAULT_MAX_DRAWS,
    workers: int = 1,
) -> Estimate:
    """Posterior probability that an interpolator has population error >= ``eps``."""
    if n_posterior_samples < 1:
        raise ValueError("n_posterior_samples must be at least 1")
    errors, _ = posterior_errors(
        prior, trainset, n_posterior_samples, teacher, domain, seed, exact, mc_samples, max_draws, workers
    )
    k = int(np.sum(errors >= eps - 1e-12))
    return Estimate.from_counts(k, n_posterior_samples, "monte-carlo", seed)
