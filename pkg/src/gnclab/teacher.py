"""Teachers, input domains, labeled sets, embeddings and error measures.

The embedding constructions place a narrow teacher inside a wider student so
that both compute the same function everywhere. Each construction is stored
as an :class:`EmbeddingMap`: a list of student entries copied from the
teacher, a list of student entries forced to zero, and everything else left
free. The number of constrained entries is the exponent in the lower bound
``p_tilde >= Q ** -count``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quantnet import (
    RELU,
    Activation,
    ConvArch,
    FcArch,
    QuantGrid,
    QuantParams,
    arch_from_dict,
    logits,
    param_count,
    param_layout,
    sign_labels,
)
from .stats import Estimate

__all__ = [
    "DegenerateTeacherError",
    "EmbeddingError",
    "TeacherSpec",
    "InputDomain",
    "LabeledSet",
    "EmbeddingMap",
    "sample_teacher",
    "draw_params",
    "embedding_map",
    "embed_teacher",
    "embed_teacher_fc",
    "embed_teacher_sfc",
    "embed_teacher_conv",
    "generate_dataset",
    "predict",
    "empirical_error",
    "population_error",
    "TECheck",
    "is_teacher_equivalent",
]

HYPERCUBE_ENUM_MAX_DIM = 20


class DegenerateTeacherError(RuntimeError):
    """No non-constant teacher found within the attempt budget.

    Attributes
    ----------
    attempts : int
    positive_fractions : list of float
        Fraction of +1 labels on the probe for every attempt.
    """

    def __init__(self, attempts, positive_fractions):
        self.attempts = attempts
        self.positive_fractions = list(positive_fractions)
        super().__init__(
            f"no non-constant teacher in {attempts} attempts "
            f"(+1 fractions seen: {sorted(set(self.positive_fractions))})"
        )


class EmbeddingError(ValueError):
    """Teacher and student architectures are incompatible for embedding."""


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# Teacher
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TeacherSpec:
    """A quantized network used as the label source."""

    params: QuantParams
    act: Activation = RELU

    @property
    def arch(self):
        return self.params.arch

    @property
    def grid(self) -> QuantGrid:
        return self.params.grid

    def logits(self, X) -> np.ndarray:
        return logits(self.arch, self.act, self.params.values, X)[0]

    def predict(self, X) -> np.ndarray:
        return sign_labels(self.logits(X))

    def __call__(self, X) -> np.ndarray:
        return self.predict(X)


def draw_params(arch, grid: QuantGrid, rng, size=None) -> np.ndarray:
    """Uniform draws from ``grid ** M``; shape ``(M,)`` or ``(size, M)``."""
    rng = _as_rng(rng)
    M = param_count(arch)
    shape = (M,) if size is None else (size, M)
    return grid.values[rng.integers(0, grid.Q, size=shape)]


# ---------------------------------------------------------------------------
# Domains and labeled sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InputDomain:
    """Distribution over network inputs.

    Use the constructors :meth:`gaussian`, :meth:`hypercube` and
    :meth:`finite_grid`. Inputs have shape ``shape``; the hypercube and the
    finite grid are uniform over their points.
    """

    kind: str
    shape: tuple
    points: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def gaussian(cls, shape) -> "InputDomain":
        return cls("gaussian", _shape(shape))

    @classmethod
    def hypercube(cls, shape) -> "InputDomain":
        return cls("hypercube", _shape(shape))

    @classmethod
    def finite_grid(cls, points) -> "InputDomain":
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) == 0:
            raise ValueError("finite grid needs at least one point")
        flat = pts.reshape(len(pts), -1)
        if len(np.unique(flat, axis=0)) != len(flat):
            raise ValueError("finite-grid points must be distinct")
        pts.setflags(write=False)
        return cls("grid", pts.shape[1:], pts)

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def enumerable(self) -> bool:
        if self.kind == "grid":
            return True
        return self.kind == "hypercube" and self.dim <= HYPERCUBE_ENUM_MAX_DIM

    @property
    def size(self) -> int:
        """Number of support points of an enumerable domain."""
        if self.kind == "grid":
            return len(self.points)
        if self.enumerable:
            return 2 ** self.dim
        raise ValueError(f"{self.kind} domain of dim {self.dim} is not enumerable")

    def enumerate(self) -> np.ndarray:
        """All support points; hypercube corners in lexicographic order."""
        if self.kind == "grid":
            return np.array(self.points)
        if not self.enumerable:
            raise ValueError(f"{self.kind} domain of dim {self.dim} is not enumerable")
        d = self.dim
        idx = np.arange(2 ** d)[:, None]
        bits = (idx >> np.arange(d - 1, -1, -1)) & 1
        return (2.0 * bits - 1.0).reshape((-1,) + self.shape)

    def sample(self, n: int, rng) -> np.ndarray:
        rng = _as_rng(rng)
        if self.kind == "gaussian":
            return rng.standard_normal((n,) + self.shape)
        if self.kind == "hypercube":
            return rng.choice(np.array([-1.0, 1.0]), size=(n,) + self.shape)
        return np.array(self.points)[rng.integers(0, len(self.points), size=n)]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "shape": list(self.shape)}
        if self.kind == "grid":
            out["points"] = np.asarray(self.points).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "InputDomain":
        kind = data["kind"]
        if kind == "grid":
            return cls.finite_grid(data["points"])
        if kind in ("gaussian", "hypercube"):
            return cls(kind, _shape(data["shape"]))
        raise ValueError(f"unknown domain kind {kind!r}")


def _shape(shape) -> tuple:
    if np.isscalar(shape):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if not shape or min(shape) < 1:
        raise ValueError(f"invalid input shape {shape}")
    return shape


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Inputs ``X`` of shape ``(N, *input_shape)`` with labels ``y`` in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y).astype(np.int8).reshape(-1)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} inputs but {len(y)} labels")
        if not np.isin(y, (-1, 1)).all():
            raise ValueError("labels must be -1 or +1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, n: int) -> "LabeledSet":
        """The first ``n`` points."""
        return LabeledSet(self.X[:n], self.y[:n], dict(self.meta, N=n))

    def to_csv(self, path) -> None:
        """Write ``x_1..x_D, y`` to ``path`` and metadata to ``path + '.json'``."""
        path = Path(path)
        flat = self.X.reshape(len(self), -1)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{i + 1}" for i in range(flat.shape[1])] + ["y"])
            for row, label in zip(flat, self.y):
                writer.writerow([f"{v:.17g}" for v in row] + [int(label)])
        sidecar = dict(self.meta, N=len(self), input_shape=list(self.X.shape[1:]))
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path) -> "LabeledSet":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        X = data[:, :-1].reshape((len(data),) + tuple(meta["input_shape"]))
        return cls(X, data[:, -1].astype(np.int8), meta)


# ---------------------------------------------------------------------------
# Teacher sampling
# ---------------------------------------------------------------------------


def sample_teacher(
    arch,
    grid: QuantGrid,
    rng,
    degeneracy_policy: str = "off",
    domain: InputDomain | None = None,
    act: Activation = RELU,
    max_attempts: int = 100,
    probe_size: int = 256,
) -> TeacherSpec:
    """Draw a teacher with i.i.d. uniform grid parameters.

    Parameters
    ----------
    degeneracy_policy : {"off", "reject-constant"}
        With ``"reject-constant"``, redraw until the teacher emits both
        labels on a probe of ``probe_size`` points from ``domain``.
    """
    rng = _as_rng(rng)
    if degeneracy_policy == "off":
        return TeacherSpec(QuantParams(arch, grid, draw_params(arch, grid, rng)), act)
    if degeneracy_policy != "reject-constant":
        raise ValueError(f"unknown degeneracy policy {degeneracy_policy!r}")
    if domain is None:
        domain = InputDomain.gaussian(arch.input_shape)
    fractions = []
    for _ in range(max_attempts):
        teacher = TeacherSpec(QuantParams(arch, grid, draw_params(arch, grid, rng)), act)
        labels = teacher.predict(domain.sample(probe_size, rng))
        frac = float(np.mean(labels == 1))
        if 0.0 < frac < 1.0:
            return teacher
        fractions.append(frac)
    raise DegenerateTeacherError(max_attempts, fractions)


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmbeddingMap:
    """Constrained entries of a teacher-in-student embedding.

    Student entry ``copy_dst[i]`` takes teacher entry ``copy_src[i]``,
    entries ``zero_dst`` are set to 0, all others come from the filler.
    """

    teacher_arch: object
    student_arch: object
    copy_dst: np.ndarray
    copy_src: np.ndarray
    zero_dst: np.ndarray

    @property
    def count(self) -> int:
        """Number of constrained student entries."""
        return len(self.copy_dst) + len(self.zero_dst)

    def mask(self) -> np.ndarray:
        m = np.zeros(param_count(self.student_arch), dtype=bool)
        m[self.copy_dst] = True
        m[self.zero_dst] = True
        return m

    def apply(self, teacher_theta, filler_theta=None) -> np.ndarray:
        """Vectorized embedding of teacher vectors ``(B, M*)`` or ``(M*,)``."""
        t = np.asarray(teacher_theta, dtype=np.float64)
        M = param_count(self.student_arch)
        if filler_theta is None:
            out = np.zeros(t.shape[:-1] + (M,))
        else:
            out = np.array(np.broadcast_to(filler_theta, t.shape[:-1] + (M,)), dtype=np.float64)
        out[..., self.copy_dst] = t[..., self.copy_src]
        out[..., self.zero_dst] = 0.0
        return out


def _check_widths(name, teacher, student, same_output=True):
    if len(teacher) != len(student):
        raise EmbeddingError(f"{name}: teacher depth {len(teacher) - 1} != student depth {len(student) - 1}")
    if teacher[0] != student[0]:
        raise EmbeddingError(f"{name}: input sizes differ ({teacher[0]} vs {student[0]})")
    if same_output and teacher[-1] != student[-1]:
        raise EmbeddingError(f"{name}: output sizes differ ({teacher[-1]} vs {student[-1]})")
    for l, (t, s) in enumerate(zip(teacher, student)):
        if t > s:
            raise EmbeddingError(f"{name}: layer {l} teacher width {t} exceeds student width {s}")


_EMBED_CACHE: dict = {}


def embedding_map(teacher_arch, student_arch) -> EmbeddingMap:
    """Build the embedding map for a (teacher, student) architecture pair."""
    key = (teacher_arch, student_arch)
    if key in _EMBED_CACHE:
        return _EMBED_CACHE[key]
    if type(teacher_arch) is not type(student_arch):
        raise EmbeddingError("teacher and student must be both FC or both conv")
    if teacher_arch.flavor != student_arch.flavor:
        raise EmbeddingError(
            f"flavor mismatch: teacher {teacher_arch.flavor}, student {student_arch.flavor}"
        )
    t_off = {b.name: b.offset for b in param_layout(teacher_arch)}
    s_off = {b.name: b.offset for b in param_layout(student_arch)}
    copy_dst, copy_src, zero_dst = [], [], []

    if isinstance(teacher_arch, FcArch):
        dt, ds = teacher_arch.widths, student_arch.widths
        _check_widths("FC", dt, ds)
        L = teacher_arch.depth
        scaled = teacher_arch.scaled
        for l in range(1, L + 1):
            W_t, W_s = t_off[f"W{l}"], s_off[f"W{l}"]
            for i in range(dt[l]):
                for j in range(ds[l - 1]):
                    dst = W_s + i * ds[l - 1] + j
                    if j < dt[l - 1]:
                        copy_dst.append(dst)
                        copy_src.append(W_t + i * dt[l - 1] + j)
                    elif not scaled:
                        zero_dst.append(dst)
            names = ["b"] + (["g"] if scaled and l < L else [])
            for name in names:
                for i in range(ds[l]):
                    dst = s_off[f"{name}{l}"] + i
                    if i < dt[l]:
                        copy_dst.append(dst)
                        copy_src.append(t_off[f"{name}{l}"] + i)
                    elif scaled and l < L:
                        zero_dst.append(dst)
    else:
        ct, cs = teacher_arch.channels, student_arch.channels
        # the last channel layer is hidden; the head is separate
        _check_widths("conv", ct, cs, same_output=False)
        if teacher_arch.kernels != student_arch.kernels:
            raise EmbeddingError(
                f"kernel sizes differ: teacher {teacher_arch.kernels}, student {student_arch.kernels}"
            )
        if teacher_arch.length != student_arch.length:
            raise EmbeddingError("input lengths differ")
        scaled = teacher_arch.scaled
        for l in range(1, teacher_arch.depth + 1):
            k = teacher_arch.kernels[l - 1]
            K_t, K_s = t_off[f"K{l}"], s_off[f"K{l}"]
            for i in range(ct[l]):
                for j in range(cs[l - 1]):
                    for u in range(k):
                        dst = K_s + (i * cs[l - 1] + j) * k + u
                        if j < ct[l - 1]:
                            copy_dst.append(dst)
                            copy_src.append(K_t + (i * ct[l - 1] + j) * k + u)
                        elif not scaled:
                            zero_dst.append(dst)
            for name in ["b"] + (["g"] if scaled else []):
                for i in range(cs[l]):
                    dst = s_off[f"{name}{l}"] + i
                    if i < ct[l]:
                        copy_dst.append(dst)
                        copy_src.append(t_off[f"{name}{l}"] + i)
                    elif scaled:
                        zero_dst.append(dst)
        s_L = teacher_arch.lengths[-1]
        for ch in range(cs[-1]):
            for pos in range(s_L):
                dst = s_off["w_head"] + ch * s_L + pos
                if ch < ct[-1]:
                    copy_dst.append(dst)
                    copy_src.append(t_off["w_head"] + ch * s_L + pos)
                elif not scaled:
                    zero_dst.append(dst)
        copy_dst.append(s_off["b_head"])
        copy_src.append(t_off["b_head"])

    emb = EmbeddingMap(
        teacher_arch,
        student_arch,
        np.asarray(copy_dst, dtype=np.int64),
        np.asarray(copy_src, dtype=np.int64),
        np.asarray(zero_dst, dtype=np.int64),
    )
    _EMBED_CACHE[key] = emb
    return emb


def embed_teacher(teacher: TeacherSpec, student_arch, filler: QuantParams | None = None) -> QuantParams:
    """Student parameters computing exactly the teacher's function.

    Free entries come from ``filler`` (a full student parameter vector) or
    are zero when ``filler`` is None.
    """
    emb = embedding_map(teacher.arch, student_arch)
    fill = None
    if filler is not None:
        if filler.arch != student_arch:
            raise EmbeddingError("filler must be a parameter vector of the student architecture")
        if filler.grid != teacher.grid:
            raise EmbeddingError("filler and teacher use different grids")
        fill = filler.values
    return QuantParams(student_arch, teacher.grid, emb.apply(teacher.params.values, fill))


def _require(arch, kind, flavor):
    if not isinstance(arch, kind) or arch.flavor != flavor:
        raise EmbeddingError(f"expected a {flavor} {kind.__name__}, got {arch!r}")


def embed_teacher_fc(teacher, student_arch, filler=None) -> QuantParams:
    """Embedding for vanilla FC nets: copy ``W_11, b_1``, zero ``W_12``."""
    _require(teacher.arch, FcArch, "vanilla")
    _require(student_arch, FcArch, "vanilla")
    return embed_teacher(teacher, student_arch, filler)


def embed_teacher_sfc(teacher, student_arch, filler=None) -> QuantParams:
    """Embedding for scaled FC nets: copy ``W_11, b_1, g_1``, zero ``b_2, g_2``."""
    _require(teacher.arch, FcArch, "scaled")
    _require(student_arch, FcArch, "scaled")
    return embed_teacher(teacher, student_arch, filler)


def embed_teacher_conv(teacher, student_arch, filler=None) -> QuantParams:
    """Embedding for plain or channel-scaled conv nets."""
    if not isinstance(teacher.arch, ConvArch) or not isinstance(student_arch, ConvArch):
        raise EmbeddingError("conv embedding needs conv architectures")
    return embed_teacher(teacher, student_arch, filler)


# ---------------------------------------------------------------------------
# Data and errors
# ---------------------------------------------------------------------------


def generate_dataset(domain: InputDomain, teacher: TeacherSpec, N: int, rng, exhaustive=False) -> LabeledSet:
    """Draw ``N`` i.i.d. inputs from ``domain`` and label them with ``teacher``.

    With ``exhaustive=True`` the set is the whole (enumerable) support, each
    point once, and ``N`` must equal its size.
    """
    if exhaustive:
        X = domain.enumerate()
        if N is not None and N != len(X):
            raise ValueError(f"exhaustive set has {len(X)} points, N={N} requested")
        meta = {"domain": domain.to_dict(), "exhaustive": True}
    else:
        if N < 1:
            raise ValueError("N must be at least 1")
        seed = rng if isinstance(rng, (int, np.integer)) else None
        X = domain.sample(N, _as_rng(rng))
        meta = {"domain": domain.to_dict(), "seed": None if seed is None else int(seed)}
    return LabeledSet(X, teacher.predict(X), meta)


def predict(h, X) -> np.ndarray:
    """Labels of predictor ``h``: anything with ``.predict`` or a callable."""
    if hasattr(h, "predict"):
        return np.asarray(h.predict(X))
    return np.asarray(h(X))


def empirical_error(h, S: LabeledSet) -> float:
    """Fraction of points of ``S`` misclassified by ``h``."""
    if len(S) == 0:
        raise ValueError("empirical error of an empty set is undefined")
    return float(np.mean(predict(h, S.X) != S.y))


def population_error(h, teacher, domain: InputDomain, mc_samples=None, exact=False, rng=None, X=None) -> Estimate:
    """Disagreement probability between ``h`` and ``teacher`` under ``domain``.

    Exact over the enumerated support, or Monte Carlo with a Clopper-Pearson
    95% interval. A fixed test set may be passed as ``X``.
    """
    if exact:
        if not domain.enumerable:
            raise ValueError("exact population error needs an enumerable domain")
        X = domain.enumerate()
        k = int(np.sum(predict(h, X) != predict(teacher, X)))
        n = len(X)
        return Estimate(k / n, k / n, k / n, k, n, "exact")
    if X is None:
        if mc_samples is None or mc_samples < 1:
            raise ValueError("mc_samples must be a positive integer")
        X = domain.sample(int(mc_samples), _as_rng(rng))
    k = int(np.sum(predict(h, X) != predict(teacher, X)))
    return Estimate.from_counts(k, len(X), "monte-carlo")


@dataclass(frozen=True)
class TECheck:
    """Outcome of a teacher-equivalence check.

    ``verdict`` is ``"equivalent"`` or ``"not-equivalent"`` in exact mode and
    ``"consistent-on-probe"`` or ``"refuted"`` in probe mode. Probe mode
    never certifies equivalence.
    """

    verdict: str
    mode: str
    n_checked: int
    mismatches: int

    @property
    def refuted(self) -> bool:
        return self.mismatches > 0


def is_teacher_equivalent(h, teacher, domain: InputDomain, mode=None, probe_size=10_000, rng=None) -> TECheck:
    """Check whether ``h`` agrees with ``teacher`` on ``domain``.

    ``mode`` defaults to ``"exact"`` on enumerable domains and ``"probe"``
    otherwise.
    """
    if mode is None:
        mode = "exact" if domain.enumerable else "probe"
    if mode == "exact":
        if not domain.enumerable:
            raise ValueError("exact equivalence needs an enumerable domain")
        X = domain.enumerate()
    elif mode == "probe":
        X = domain.sample(probe_size, _as_rng(rng))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    k = int(np.sum(predict(h, X) != predict(teacher, X)))
    if mode == "exact":
        verdict = "equivalent" if k == 0 else "not-equivalent"
    else:
        verdict = "consistent-on-probe" if k == 0 else "refuted"
    return TECheck(verdict, mode, len(X), k)


def teacher_from_dict(data: dict) -> TeacherSpec:
    """Rebuild a teacher from ``{"arch", "grid", "values", "act"}``."""
    arch = arch_from_dict(data["arch"])
    grid = QuantGrid(tuple(data["grid"]["levels"]))
    act = Activation(**data.get("act", {"kind": "relu"}))
    return TeacherSpec(QuantParams(arch, grid, data["values"]), act)


def teacher_to_dict(teacher: TeacherSpec) -> dict:
    return {
        "arch": teacher.arch.to_dict(),
        "grid": teacher.grid.to_dict(),
        "values": teacher.params.values.tolist(),
        "act": teacher.act.to_dict(),
    }

