"""Counter-based random streams and exact binomial intervals."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats

__all__ = ["stream_key", "derive_seed", "block_generator", "generator", "clopper_pearson", "Estimate"]

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, *labels) -> np.ndarray:
    """Derive a 128-bit Philox key from a root seed and stream labels.

    The key depends only on ``seed`` and ``labels``, never on call order or
    thread layout, so every named stream is reproducible on its own.
    """
    text = repr((int(seed) & _MASK64,) + tuple(labels)).encode()
    digest = hashlib.sha256(text).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def derive_seed(seed: int, *labels) -> int:
    """64-bit child seed for the stream named by ``labels``."""
    return int(stream_key(seed, *labels)[0])


def block_generator(seed: int, block: int, *labels) -> np.random.Generator:
    """Generator for block ``block`` of the stream named by ``labels``.

    The block index occupies the high words of the Philox counter, so
    blocks never overlap as long as each consumes fewer than 2**128 draws.
    """
    key = stream_key(seed, *labels)
    counter = np.array([0, 0, int(block) & _MASK64, int(block) >> 64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def generator(seed: int, *labels) -> np.random.Generator:
    """Single generator for the stream named by ``labels``."""
    return block_generator(seed, 0, *labels)


def clopper_pearson(k: int, n: int, conf: float = 0.95) -> tuple:
    """Exact two-sided binomial confidence interval for ``k`` successes in ``n``.

    Examples
    --------
    >>> clopper_pearson(0, 10)[0]
    0.0
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    a = 1.0 - conf
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo or exact estimate of a probability.

    ``mode`` records provenance, e.g. ``"monte-carlo"``, ``"exact-TE"`` or
    ``"probe-TE"``.
    """

    estimate: float
    ci_low: float
    ci_high: float
    k: int
    n: int
    mode: str = "monte-carlo"
    seed: int | None = None

    @classmethod
    def from_counts(cls, k: int, n: int, mode: str = "monte-carlo", seed=None, conf=0.95):
        lo, hi = clopper_pearson(k, n, conf)
        return cls(k / n, lo, hi, int(k), int(n), mode, seed)

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def record(self) -> dict:
        """Serializable record with the shared trace field names."""
        return {
            "seed": self.seed,
            "T": None,
            "n_draws": self.n,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "mode": self.mode,
        }

    def to_dict(self) -> dict:
        return asdict(self)
