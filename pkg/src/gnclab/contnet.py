"""Continuous two-layer leaky-ReLU networks and their angular margins.

Weights are drawn uniformly on the unit sphere. The first-layer margin
``alpha`` is the smallest angle between a data point and a teacher
hyperplane; the second-layer margin ``beta`` is the arcsine of the smallest
normalized teacher output. Both are the attained minima, so a point lying
exactly on a boundary gives 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import cont_gamma, log_phat_lower_cont
from .stats import generator

__all__ = [
    "ContTwoLayer",
    "MarginStats",
    "sample_cont_prior",
    "first_layer_margin",
    "second_layer_margin",
    "margin_stats",
    "activation_match_check",
    "phat_lower_bound_cont",
    "MarginDensityResult",
    "margin_density_experiment",
]

_NORM_TOL = 1e-12


def _unit_rows(A):
    return A / np.linalg.norm(A, axis=-1, keepdims=True)


def _lrelu(u, rho):
    return np.where(u > 0, u, rho * u)


@dataclass(frozen=True, eq=False)
class ContTwoLayer:
    """``x -> z . sigma(W1 x)`` with unit-norm rows of ``W1`` and unit ``z``."""

    W1: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    rho: float = 0.01

    def __post_init__(self):
        W1 = np.array(self.W1, dtype=np.float64)
        z = np.array(self.z, dtype=np.float64).reshape(-1)
        if W1.ndim != 2 or W1.shape[0] != len(z):
            raise ValueError(f"W1 of shape {W1.shape} does not match z of length {len(z)}")
        if np.any(np.abs(np.linalg.norm(W1, axis=1) - 1) > _NORM_TOL):
            raise ValueError("rows of W1 must have unit norm")
        if abs(np.linalg.norm(z) - 1) > _NORM_TOL:
            raise ValueError("z must have unit norm")
        W1.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "z", z)

    @property
    def d0(self) -> int:
        return self.W1.shape[1]

    @property
    def d1(self) -> int:
        return self.W1.shape[0]

    def logits(self, X) -> np.ndarray:
        return _lrelu(np.asarray(X, dtype=np.float64) @ self.W1.T, self.rho) @ self.z

    def predict(self, X) -> np.ndarray:
        return np.where(self.logits(X) >= 0, 1, -1).astype(np.int8)


def sample_cont_prior(d0: int, d1: int, rng, rho: float = 0.01) -> ContTwoLayer:
    """Rows of ``W1`` and ``z`` uniform on their unit spheres."""
    if d0 < 1 or d1 < 1:
        raise ValueError("dimensions must be positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    W1 = _unit_rows(rng.standard_normal((d1, d0)))
    z = _unit_rows(rng.standard_normal(d1))
    return ContTwoLayer(W1, z, rho)


def _inputs(S):
    X = np.asarray(getattr(S, "X", S), dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"zero-norm input at index {int(np.flatnonzero(norms == 0)[0])}")
    return X, norms


@dataclass(frozen=True)
class MarginStats:
    """Margins of a data set with respect to a teacher.

    ``argmin_alpha`` is the ``(row, point)`` pair attaining ``alpha`` and
    ``argmin_beta`` the point attaining ``beta``. ``gamma`` is None unless
    ``beta > alpha``. ``clamped`` flags a normalized output above 1.
    """

    alpha: float
    beta: float
    gamma: float | None
    argmin_alpha: tuple
    argmin_beta: int
    clamped: bool


def first_layer_margin(S, W_star, return_argmin: bool = False):
    """``arcsin(min |x . w| / (|x| |w|))`` over teacher rows and points."""
    X, norms = _inputs(S)
    W = np.atleast_2d(np.asarray(W_star, dtype=np.float64))
    cos = np.abs(X @ W.T) / (norms[:, None] * np.linalg.norm(W, axis=1)[None, :])
    n, i = np.unravel_index(int(np.argmin(cos)), cos.shape)
    alpha = math.asin(min(1.0, float(cos[n, i])))
    return (alpha, (int(i), int(n))) if return_argmin else alpha


def _second_layer(X, norms, teacher: ContTwoLayer, d1: int, rho):
    rho = teacher.rho if rho is None else rho
    if d1 < teacher.d1:
        raise ValueError("student width below teacher width")
    out = np.abs(_lrelu(X @ teacher.W1.T, rho) @ teacher.z)
    ratio = out / (norms * np.linalg.norm(teacher.z) * math.sqrt(d1 * (1 + rho**2)))
    n = int(np.argmin(ratio))
    r = float(ratio[n])
    return math.asin(min(1.0, r)), n, r > 1.0


def second_layer_margin(S, teacher: ContTwoLayer, d1: int, rho: float | None = None) -> float:
    """``arcsin(min |h*(x)| / (|x| |z*| sqrt(d1 (1 + rho^2))))``, clamped to [0, 1]."""
    X, norms = _inputs(S)
    return _second_layer(X, norms, teacher, d1, rho)[0]


def margin_stats(S, teacher: ContTwoLayer, d1: int, rho: float | None = None) -> MarginStats:
    X, norms = _inputs(S)
    alpha, arg_a = first_layer_margin(X, teacher.W1, return_argmin=True)
    beta, arg_b, clamped = _second_layer(X, norms, teacher, d1, rho)
    gamma = cont_gamma(alpha, beta) if 0 < alpha < beta < math.pi / 2 else None
    return MarginStats(alpha, beta, gamma, arg_a, arg_b, clamped)


def activation_match_check(W_student, W_teacher, S, d1_star: int) -> bool:
    """True iff the first ``d1_star`` student rows fire exactly like the teacher's."""
    X = np.asarray(getattr(S, "X", S), dtype=np.float64)
    Ws = np.asarray(W_student, dtype=np.float64)[:d1_star]
    Wt = np.asarray(W_teacher, dtype=np.float64)[:d1_star]
    return bool(np.array_equal(X @ Ws.T >= 0, X @ Wt.T >= 0))


def phat_lower_bound_cont(
    alpha: float, beta: float, d0: int, d1: int, d1_star: int, rho: float = 0.01, second_dim: str = "student"
) -> float:
    """Natural log of the lower bound on the interpolation probability.

    See :func:`gnclab.bounds.log_phat_lower_cont`; ``rho`` affects only the
    margins and is accepted for a uniform signature.
    """
    return log_phat_lower_cont(alpha, beta, d0, d1, d1_star, second_dim)


@dataclass(frozen=True, eq=False)
class MarginDensityResult:
    """Per-trial margins of the random-teacher experiment.

    ``log_ratios`` holds ``ln(beta / alpha)`` for non-degenerate trials only.
    """

    alphas: np.ndarray
    betas: np.ndarray
    degenerate: np.ndarray
    clamped: np.ndarray
    config: dict

    @property
    def log_ratios(self) -> np.ndarray:
        ok = ~self.degenerate
        return np.log(self.betas[ok] / self.alphas[ok])

    @property
    def fraction_beta_gt_alpha(self) -> float:
        return float(np.mean(self.betas > self.alphas))

    @property
    def n_degenerate(self) -> int:
        return int(self.degenerate.sum())

    def summary(self) -> dict:
        lr = self.log_ratios
        return dict(
            self.config,
            trials=len(self.alphas),
            degenerate=self.n_degenerate,
            clamped=int(self.clamped.sum()),
            fraction_beta_gt_alpha=self.fraction_beta_gt_alpha,
            fraction_log_ratio_positive=float(np.mean(lr > 0)) if len(lr) else None,
            median_log_ratio=float(np.median(lr)) if len(lr) else None,
        )


def _margin_trial(d0, d1, d1_star, rho, N, seed, trial):
    rng = generator(seed, "margins", trial)
    X = rng.standard_normal((N, d0))
    teacher = sample_cont_prior(d0, d1_star, rng, rho)
    st = margin_stats(X, teacher, d1, rho)
    return st.alpha, st.beta, st.clamped


def margin_density_experiment(
    d0: int, d1: int, d1_star: int, rho: float, N: int, trials: int, seed: int = 0, workers: int = 1
) -> MarginDensityResult:
    """Sample ``trials`` random teachers and Gaussian data sets and record margins.

    Each trial uses its own counter-based stream, so results do not depend on
    ``workers``. Trials with ``alpha = 0`` are flagged degenerate.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")

    def run(t):
        return _margin_trial(d0, d1, d1_star, rho, N, seed, t)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, range(trials)))
    else:
        rows = [run(t) for t in range(trials)]
    alphas = np.array([r[0] for r in rows])
    betas = np.array([r[1] for r in rows])
    clamped = np.array([r[2] for r in rows])
    config = {"d0": d0, "d1": d1, "d1_star": d1_star, "rho": rho, "N": N, "seed": seed}
    return MarginDensityResult(alphas, betas, alphas == 0, clamped, config)
