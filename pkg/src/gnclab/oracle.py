"""Exhaustive enumeration oracles for tiny quantized networks.

Every configuration in ``grid ** M`` is evaluated on a finite point set and
collapsed into its *function table*: the vector of labels it assigns to the
points. Exact probabilities under the uniform prior then reduce to sums of
table multiplicities. Enumeration follows the mixed-radix counter over the
canonical flattening, with the last parameter varying fastest.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .quantnet import RELU, Activation, FcArch, QuantGrid, QuantParams, logits, param_count, sign_labels
from .teacher import InputDomain, LabeledSet, TeacherSpec, embedding_map

__all__ = [
    "BudgetError",
    "NoInterpolatorError",
    "EnumBudget",
    "FunctionTable",
    "FunctionTables",
    "enumerate_params",
    "enumerate_theta",
    "theta_at",
    "mixed_radix_index",
    "function_tables",
    "point_indices",
    "exact_ptilde",
    "exact_phat",
    "Posterior",
    "exact_posterior",
    "exact_bad_volume",
    "SparsestResult",
    "sparsest_interpolator",
    "oracle_report",
]

_CHUNK = 1 << 15


class BudgetError(ValueError):
    """Enumeration would exceed the configuration budget."""

    def __init__(self, n_configs: int, max_configs: int):
        self.n_configs = n_configs
        self.max_configs = max_configs
        super().__init__(f"Q^M = {n_configs} configurations exceeds the budget of {max_configs}")


class NoInterpolatorError(ValueError):
    """No configuration interpolates the training set."""


@dataclass(frozen=True)
class EnumBudget:
    max_configs: int = 10**8

    def check(self, arch, grid: QuantGrid) -> int:
        n = grid.Q ** param_count(arch)
        if n > self.max_configs:
            raise BudgetError(n, self.max_configs)
        return n


def _radix_powers(M: int, Q: int) -> np.ndarray:
    return Q ** np.arange(M - 1, -1, -1, dtype=np.int64)


def theta_at(arch, grid: QuantGrid, index) -> np.ndarray:
    """Parameter vectors at mixed-radix positions ``index``."""
    index = np.asarray(index, dtype=np.int64)
    M = param_count(arch)
    digits = (index[..., None] // _radix_powers(M, grid.Q)) % grid.Q
    return grid.values[digits]


def mixed_radix_index(grid: QuantGrid, theta) -> np.ndarray:
    """Inverse of :func:`theta_at`."""
    theta = np.asarray(theta, dtype=np.float64)
    digits = grid.index_of(theta)
    return digits @ _radix_powers(theta.shape[-1], grid.Q)


def enumerate_theta(arch, grid: QuantGrid, budget: EnumBudget = EnumBudget(), chunk: int = _CHUNK):
    """Yield ``(start, theta)`` chunks covering all of ``grid ** M`` in order."""
    total = budget.check(arch, grid)
    for start in range(0, total, chunk):
        yield start, theta_at(arch, grid, np.arange(start, min(total, start + chunk)))


def enumerate_params(arch, grid: QuantGrid, budget: EnumBudget = EnumBudget()):
    """Iterate over every :class:`QuantParams` in mixed-radix order."""
    for _, theta in enumerate_theta(arch, grid, budget):
        for row in theta:
            yield QuantParams(arch, grid, row)


@dataclass(frozen=True)
class FunctionTable:
    """Labels on a fixed point list, with the number of configs realizing them."""

    labels: tuple
    multiplicity: int


@dataclass(frozen=True, eq=False)
class FunctionTables:
    """All distinct function tables of an architecture on ``points``.

    Attributes
    ----------
    labels : ndarray of int8, shape (K, P)
    counts : ndarray of int64, shape (K,)
    total : int
        ``Q ** M``; equals ``counts.sum()``.
    """

    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    counts: np.ndarray
    total: int

    def __len__(self) -> int:
        return len(self.counts)

    def tables(self) -> list:
        return [FunctionTable(tuple(int(v) for v in row), int(c)) for row, c in zip(self.labels, self.counts)]

    def matching(self, point_idx, y) -> np.ndarray:
        """Mask of tables that give labels ``y`` on points ``point_idx``."""
        y = np.asarray(y, dtype=np.int8)
        return (self.labels[:, np.asarray(point_idx, dtype=np.int64)] == y[None, :]).all(axis=1)

    def mass(self, mask) -> int:
        return int(self.counts[mask].sum())


_TABLE_CACHE: dict = {}


def function_tables(
    arch,
    grid: QuantGrid,
    points,
    act: Activation = RELU,
    budget: EnumBudget = EnumBudget(),
    workers: int = 1,
) -> FunctionTables:
    """Enumerate ``grid ** M`` and tabulate labels on ``points``.

    Results are cached per (architecture, grid, activation, points).
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    key = (arch, grid, act, points.shape, points.tobytes())
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    total = budget.check(arch, grid)
    P = len(points)

    def chunk_tables(start):
        theta = theta_at(arch, grid, np.arange(start, min(total, start + _CHUNK)))
        lab = sign_labels(logits(arch, act, theta, points))
        packed = np.packbits(lab > 0, axis=1)
        uniq, counts = np.unique(packed, axis=0, return_counts=True)
        return uniq, counts

    starts = range(0, total, _CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk_tables, starts))
    else:
        parts = [chunk_tables(s) for s in starts]
    acc: dict = {}
    for uniq, counts in parts:
        for row, c in zip(uniq, counts):
            k = row.tobytes()
            acc[k] = acc.get(k, 0) + int(c)
    keys = sorted(acc)
    if keys:
        packed = np.frombuffer(b"".join(keys), dtype=np.uint8).reshape(len(keys), -1)
        bits = np.unpackbits(packed, axis=1, count=P)
    else:
        bits = np.zeros((0, P), dtype=np.uint8)
    labels = np.where(bits > 0, 1, -1).astype(np.int8)
    counts = np.array([acc[k] for k in keys], dtype=np.int64)
    points.setflags(write=False)
    result = FunctionTables(points, labels, counts, total)
    _TABLE_CACHE[key] = result
    return result


def point_indices(points, X) -> np.ndarray:
    """Index of each row of ``X`` in ``points``; raises if one is missing."""
    P = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    Xf = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    lookup = {row.tobytes(): i for i, row in enumerate(P)}
    try:
        return np.array([lookup[row.tobytes()] for row in Xf], dtype=np.int64)
    except KeyError:
        raise ValueError("training inputs must be points of the domain") from None


def exact_ptilde(
    student_arch,
    teacher: TeacherSpec,
    grid: QuantGrid,
    domain: InputDomain,
    budget: EnumBudget = EnumBudget(),
    act: Activation | None = None,
    workers: int = 1,
) -> Fraction:
    """Exact probability that a uniform prior draw equals ``teacher`` on ``domain``."""
    if not domain.enumerable:
        raise ValueError("exact p_tilde needs an enumerable domain")
    act = teacher.act if act is None else act
    pts = domain.enumerate()
    tabs = function_tables(student_arch, grid, pts, act, budget, workers)
    mask = tabs.matching(np.arange(len(pts)), teacher.predict(pts))
    return Fraction(tabs.mass(mask), tabs.total)


def exact_phat(
    student_arch,
    trainset: LabeledSet,
    grid: QuantGrid,
    budget: EnumBudget = EnumBudget(),
    act: Activation = RELU,
    workers: int = 1,
) -> Fraction:
    """Exact probability that a uniform prior draw interpolates ``trainset``."""
    tabs = function_tables(student_arch, grid, trainset.X, act, budget, workers)
    mask = tabs.matching(np.arange(len(trainset)), trainset.y)
    return Fraction(tabs.mass(mask), tabs.total)


@dataclass(frozen=True)
class Posterior:
    """Exact posterior over function tables given interpolation.

    ``tables`` is empty and ``p_hat`` is 0 when no interpolator exists.
    """

    p_hat: Fraction
    n_interpolating: int
    total: int
    tables: tuple
    probs: tuple

    @property
    def has_interpolator(self) -> bool:
        return self.n_interpolating > 0


def exact_posterior(
    student_arch,
    trainset: LabeledSet,
    grid: QuantGrid,
    budget: EnumBudget = EnumBudget(),
    act: Activation = RELU,
    points=None,
    workers: int = 1,
) -> Posterior:
    """Exact posterior over functions on ``points`` (default: the training inputs).

    When ``points`` is given, the training inputs must be among them.
    """
    if points is None:
        points = trainset.X
        idx = np.arange(len(trainset))
    else:
        idx = point_indices(points, trainset.X)
    tabs = function_tables(student_arch, grid, points, act, budget, workers)
    mask = tabs.matching(idx, trainset.y)
    n_int = tabs.mass(mask)
    tables = tuple(t for t, m in zip(tabs.tables(), mask) if m)
    probs = tuple(Fraction(t.multiplicity, n_int) for t in tables) if n_int else ()
    return Posterior(Fraction(n_int, tabs.total), n_int, tabs.total, tables, probs)


def bad_volume_from_tables(tabs: FunctionTables, train_idx, y, teacher_labels, eps: float) -> Fraction:
    """Posterior mass of interpolators whose error on ``tabs.points`` is >= ``eps``.

    Raises
    ------
    NoInterpolatorError
    """
    interp = tabs.matching(train_idx, y)
    n_int = tabs.mass(interp)
    if n_int == 0:
        raise NoInterpolatorError("no configuration interpolates the training set")
    mismatches = (tabs.labels != np.asarray(teacher_labels, dtype=np.int8)[None, :]).sum(axis=1)
    bad = interp & (mismatches >= eps * tabs.labels.shape[1] - 1e-9)
    return Fraction(tabs.mass(bad), n_int)


def exact_bad_volume(
    student_arch,
    trainset: LabeledSet,
    grid: QuantGrid,
    eps: float,
    teacher: TeacherSpec,
    domain: InputDomain,
    budget: EnumBudget = EnumBudget(),
    act: Activation | None = None,
    workers: int = 1,
) -> Fraction:
    """Exact ``P(L_D(h) >= eps | h interpolates)`` under the uniform prior."""
    if not domain.enumerable:
        raise ValueError("exact bad volume needs an enumerable domain")
    act = teacher.act if act is None else act
    pts = domain.enumerate()
    try:
        idx = point_indices(pts, trainset.X)
        tabs = function_tables(student_arch, grid, pts, act, budget, workers)
    except ValueError:
        # training inputs outside the support: tabulate on both point sets
        pts_all = np.concatenate([pts, trainset.X])
        tabs_all = function_tables(student_arch, grid, pts_all, act, budget, workers)
        n_dom = len(pts)
        interp = tabs_all.matching(np.arange(n_dom, len(pts_all)), trainset.y)
        n_int = tabs_all.mass(interp)
        if n_int == 0:
            raise NoInterpolatorError("no configuration interpolates the training set") from None
        mism = (tabs_all.labels[:, :n_dom] != teacher.predict(pts)[None, :]).sum(axis=1)
        bad = interp & (mism >= eps * n_dom - 1e-9)
        return Fraction(tabs_all.mass(bad), n_int)
    return bad_volume_from_tables(tabs, idx, trainset.y, teacher.predict(pts), eps)


@dataclass(frozen=True)
class SparsestResult:
    """Sparsest interpolator, or ``params=None`` when none exists."""

    params: QuantParams | None
    support: int | None

    @property
    def found(self) -> bool:
        return self.params is not None


def sparsest_interpolator(
    student_arch,
    trainset: LabeledSet,
    grid: QuantGrid,
    budget: EnumBudget = EnumBudget(),
    act: Activation = RELU,
) -> SparsestResult:
    """Interpolating configuration with the fewest nonzero entries.

    Supports of size ``s = 0, 1, 2, ...`` are searched in turn with every
    nonzero grid assignment; the search stops at the first size with a
    feasible configuration. Ties go to the smallest mixed-radix index.
    """
    budget.check(student_arch, grid)
    M = param_count(student_arch)
    nonzero = np.array([v for v in grid.levels if v != 0.0])
    X, y = trainset.X, trainset.y
    for s in range(M + 1):
        per_combo = len(nonzero) ** s
        vals = np.array(list(itertools.product(nonzero, repeat=s))).reshape(per_combo, s)
        combos_per_chunk = max(1, _CHUNK // per_combo)
        best = None
        combos = itertools.combinations(range(M), s)
        while True:
            batch = list(itertools.islice(combos, combos_per_chunk))
            if not batch:
                break
            supp = np.array(batch, dtype=np.int64).reshape(len(batch), s)
            theta = np.zeros((len(batch), per_combo, M))
            rows = np.arange(len(batch))[:, None, None]
            cand = np.arange(per_combo)[None, :, None]
            theta[rows, cand, supp[:, None, :]] = vals[None, :, :]
            theta = theta.reshape(-1, M)
            lab = sign_labels(logits(student_arch, act, theta, X))
            ok = (lab == y[None, :]).all(axis=1)
            if ok.any():
                idx = mixed_radix_index(grid, theta[ok])
                j = int(np.argmin(idx))
                if best is None or idx[j] < best[0]:
                    best = (int(idx[j]), theta[ok][j])
        if best is not None:
            return SparsestResult(QuantParams(student_arch, grid, best[1]), s)
    return SparsestResult(None, None)


def oracle_report(
    student_arch,
    teacher: TeacherSpec,
    grid: QuantGrid,
    domain: InputDomain,
    trainset: LabeledSet,
    eps: float,
    budget: EnumBudget = EnumBudget(),
) -> dict:
    """Exact quantities for one enumerable instance as a JSON-ready dict."""
    from . import bounds

    M = param_count(student_arch)
    p_tilde = exact_ptilde(student_arch, teacher, grid, domain, budget)
    p_hat = exact_phat(student_arch, trainset, grid, budget, teacher.act)
    pc_fc = pc_sfc = None
    if isinstance(student_arch, FcArch):
        t, s = teacher.arch.widths, student_arch.widths
        pc_fc = bounds.pc_fc(t[1:], s[1:], s[0])
        pc_sfc = bounds.pc_sfc(t[1:], s[1:], s[0])
    try:
        bad = exact_bad_volume(student_arch, trainset, grid, eps, teacher, domain, budget)
        bad_value = float(bad)
    except NoInterpolatorError:
        bad_value = None
    sparse = sparsest_interpolator(student_arch, trainset, grid, budget, teacher.act)
    return {
        "M": M,
        "Q": grid.Q,
        "p_tilde_exact": float(p_tilde),
        "p_tilde_exact_fraction": str(p_tilde),
        "p_hat_exact": float(p_hat),
        "p_hat_exact_fraction": str(p_hat),
        "pc_fc": pc_fc,
        "pc_sfc": pc_sfc,
        "bad_volume": {"eps": eps, "value": bad_value},
        "sparsest_support": sparse.support,
        "embedding_constraints": embedding_map(teacher.arch, student_arch).count,
    }
