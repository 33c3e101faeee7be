"""Quantized fully connected and convolutional networks with sign output.

Four architectures are supported: vanilla fully connected (FC), scaled-neuron
FC (SFC), plain 1-D convolutional (CNN) and channel-scaled convolutional (SCN)
networks. Parameters live on a finite grid that contains zero.

Every network is stored as a flat parameter vector in a single canonical
order, shared by the sampler and the exhaustive oracle:

* FC: for each layer ``l = 1..L`` the weight matrix ``W{l}`` (row-major,
  shape ``d_l x d_{l-1}``), then the bias ``b{l}``, then for scaled hidden
  layers the scale ``g{l}``.
* Conv: for each layer the kernel ``K{l}`` (shape ``c_l x c_{l-1} x k_l``),
  bias ``b{l}`` and, for channel-scaled nets, scale ``g{l}``; then the head
  weights ``w_head`` (length ``c_L * s_L``, channel-major) and ``b_head``.

The batched core :func:`logits` evaluates many parameter vectors on many
inputs at once; the single-instance ``forward_*`` functions wrap it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "ArchitectureError",
    "ShapeError",
    "QuantGrid",
    "Activation",
    "RELU",
    "FcArch",
    "ConvArch",
    "Block",
    "param_layout",
    "param_count",
    "QuantParams",
    "sign_labels",
    "logits",
    "forward_fc",
    "forward_sfc",
    "forward_cnn",
    "forward_scn",
]


class ArchitectureError(ValueError):
    """Raised for invalid architecture descriptors."""


class ShapeError(ValueError):
    """Raised when a parameter block or input has the wrong shape.

    Attributes
    ----------
    layer : str
        Name of the offending block or input.
    expected, actual : tuple
        Expected and received shapes.
    """

    def __init__(self, layer, expected, actual):
        self.layer = layer
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{layer}: expected shape {self.expected}, got {self.actual}")


# ---------------------------------------------------------------------------
# Grid and activation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantGrid:
    """Finite, strictly increasing set of parameter values containing 0."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if len(levels) < 2:
            raise ValueError("a grid needs at least two levels")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("grid levels must be strictly increasing")
        if levels.count(0.0) != 1:
            raise ValueError("grid must contain 0 exactly once")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def default(cls, Q: int) -> "QuantGrid":
        """Integer grid of size ``Q``.

        Even ``Q`` gives ``{-Q/2, ..., Q/2 - 1}``, odd ``Q`` gives the
        symmetric range ``{-(Q-1)/2, ..., (Q-1)/2}``.
        """
        if Q < 2:
            raise ValueError("Q must be at least 2")
        lo = -(Q // 2)
        return cls(tuple(range(lo, lo + Q)))

    @property
    def Q(self) -> int:
        return len(self.levels)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.levels, dtype=np.float64)

    @property
    def zero_index(self) -> int:
        return self.levels.index(0.0)

    def contains(self, values) -> bool:
        """True if every entry of ``values`` is a grid level."""
        return bool(np.isin(np.asarray(values, dtype=np.float64), self.values).all())

    def index_of(self, values) -> np.ndarray:
        """Level indices of grid-valued entries."""
        values = np.asarray(values, dtype=np.float64)
        idx = np.searchsorted(self.values, values)
        idx = np.clip(idx, 0, self.Q - 1)
        if not np.array_equal(self.values[idx], values):
            raise ValueError("values are not on the grid")
        return idx

    def to_dict(self) -> dict:
        return {"levels": list(self.levels)}


@dataclass(frozen=True)
class Activation:
    """ReLU (``rho = 0``) or leaky ReLU with slope ``rho`` on the negative side."""

    kind: str = "relu"
    rho: float = 0.0

    def __post_init__(self):
        if self.kind == "relu":
            object.__setattr__(self, "rho", 0.0)
        elif self.kind == "lrelu":
            if self.rho in (0.0, 1.0):
                raise ValueError("leaky ReLU slope must differ from 0 and 1")
        else:
            raise ValueError(f"unknown activation {self.kind!r}")

    @classmethod
    def lrelu(cls, rho: float) -> "Activation":
        return cls("lrelu", float(rho))

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "relu":
            return np.maximum(u, 0.0)
        return np.where(u > 0, u, self.rho * u)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rho": self.rho}


RELU = Activation()


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FcArch:
    """Fully connected architecture with widths ``(d_0, ..., d_L)``.

    Parameters
    ----------
    widths : tuple of int
        Input dimension followed by the layer widths.
    flavor : {"vanilla", "scaled"}
        Scaled nets carry a per-neuron scale on every hidden layer.
    """

    widths: tuple
    flavor: str = "vanilla"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ArchitectureError("need at least an input and an output width")
        if min(widths) < 1:
            raise ArchitectureError(f"widths must be positive, got {widths}")
        if self.flavor not in ("vanilla", "scaled"):
            raise ArchitectureError(f"unknown FC flavor {self.flavor!r}")
        object.__setattr__(self, "widths", widths)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def d0(self) -> int:
        return self.widths[0]

    @property
    def scaled(self) -> bool:
        return self.flavor == "scaled"

    @property
    def input_shape(self) -> tuple:
        return (self.widths[0],)

    def to_dict(self) -> dict:
        return {"type": "fc", "widths": list(self.widths), "flavor": self.flavor}


@dataclass(frozen=True)
class ConvArch:
    """1-D valid convolutional architecture with a linear head.

    Parameters
    ----------
    channels : tuple of int
        ``(c_0, ..., c_L)``.
    kernels : tuple of int
        ``(k_1, ..., k_L)``.
    length : int
        Input spatial length ``s_0``.
    flavor : {"plain", "scaled"}
        Channel-scaled nets carry a per-channel scale on every conv layer.
    """

    channels: tuple
    kernels: tuple
    length: int
    flavor: str = "plain"

    def __post_init__(self):
        channels = tuple(int(c) for c in self.channels)
        kernels = tuple(int(k) for k in self.kernels)
        if len(channels) < 2 or len(kernels) != len(channels) - 1:
            raise ArchitectureError("need L+1 channel counts and L kernel sizes")
        if min(channels) < 1 or min(kernels) < 1:
            raise ArchitectureError("channels and kernel sizes must be positive")
        if self.flavor not in ("plain", "scaled"):
            raise ArchitectureError(f"unknown conv flavor {self.flavor!r}")
        s = int(self.length)
        for l, k in enumerate(kernels, start=1):
            s = s - k + 1
            if s <= 0:
                raise ArchitectureError(
                    f"layer {l}: spatial length collapses to {s} (kernel {k})"
                )
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "length", int(self.length))

    @property
    def depth(self) -> int:
        return len(self.kernels)

    @property
    def scaled(self) -> bool:
        return self.flavor == "scaled"

    @property
    def lengths(self) -> tuple:
        """Spatial lengths ``(s_0, ..., s_L)``."""
        out = [self.length]
        for k in self.kernels:
            out.append(out[-1] - k + 1)
        return tuple(out)

    @property
    def head_width(self) -> int:
        """``d_s = c_L * s_L``."""
        return self.channels[-1] * self.lengths[-1]

    @property
    def input_shape(self) -> tuple:
        return (self.channels[0], self.length)

    def to_dict(self) -> dict:
        return {
            "type": "conv",
            "channels": list(self.channels),
            "kernels": list(self.kernels),
            "length": self.length,
            "flavor": self.flavor,
        }


Arch = Union[FcArch, ConvArch]


def arch_from_dict(data: dict) -> Arch:
    """Inverse of ``arch.to_dict()``."""
    kind = data.get("type", "fc")
    if kind == "fc":
        return FcArch(tuple(data["widths"]), data.get("flavor", "vanilla"))
    if kind == "conv":
        return ConvArch(
            tuple(data["channels"]),
            tuple(data["kernels"]),
            int(data["length"]),
            data.get("flavor", "plain"),
        )
    raise ArchitectureError(f"unknown architecture type {kind!r}")


# ---------------------------------------------------------------------------
# Parameter layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    name: str
    shape: tuple
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


_LAYOUT_CACHE: dict = {}


def param_layout(arch: Arch) -> tuple:
    """Blocks of the canonical flattening, in order."""
    if arch in _LAYOUT_CACHE:
        return _LAYOUT_CACHE[arch]
    shapes = []
    if isinstance(arch, FcArch):
        d = arch.widths
        for l in range(1, arch.depth + 1):
            shapes.append((f"W{l}", (d[l], d[l - 1])))
            shapes.append((f"b{l}", (d[l],)))
            if arch.scaled and l < arch.depth:
                shapes.append((f"g{l}", (d[l],)))
    elif isinstance(arch, ConvArch):
        c, k = arch.channels, arch.kernels
        for l in range(1, arch.depth + 1):
            shapes.append((f"K{l}", (c[l], c[l - 1], k[l - 1])))
            shapes.append((f"b{l}", (c[l],)))
            if arch.scaled:
                shapes.append((f"g{l}", (c[l],)))
        shapes.append(("w_head", (arch.head_width,)))
        shapes.append(("b_head", (1,)))
    else:
        raise TypeError(f"not an architecture: {arch!r}")
    blocks, offset = [], 0
    for name, shape in shapes:
        blk = Block(name, shape, offset)
        blocks.append(blk)
        offset += blk.size
    layout = tuple(blocks)
    _LAYOUT_CACHE[arch] = layout
    return layout


def param_count(arch: Arch) -> int:
    """Number of grid-valued parameters of ``arch``."""
    last = param_layout(arch)[-1]
    return last.offset + last.size


def _blocks_by_name(arch: Arch) -> dict:
    return {b.name: b for b in param_layout(arch)}


@dataclass(frozen=True)
class QuantParams:
    """A full parameter assignment for one network.

    Parameters
    ----------
    arch : FcArch or ConvArch
    grid : QuantGrid
    values : ndarray
        Flat vector in canonical order; every entry must be a grid level.
    """

    arch: object
    grid: QuantGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        M = param_count(self.arch)
        if values.shape != (M,):
            raise ShapeError("params", (M,), values.shape)
        if not self.grid.contains(values):
            raise ValueError("parameter entries must lie on the grid")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_blocks(cls, arch: Arch, grid: QuantGrid, blocks: dict) -> "QuantParams":
        """Build from named blocks, checking every shape."""
        layout = param_layout(arch)
        expected = {b.name for b in layout}
        missing = expected - set(blocks)
        if missing:
            name = sorted(missing)[0]
            raise ShapeError(name, _blocks_by_name(arch)[name].shape, ())
        extra = set(blocks) - expected
        if extra:
            raise ShapeError(sorted(extra)[0], (), np.shape(blocks[sorted(extra)[0]]))
        flat = np.empty(param_count(arch))
        for blk in layout:
            arr = np.asarray(blocks[blk.name], dtype=np.float64)
            if blk.name == "b_head" and arr.shape == ():
                arr = arr.reshape(1)
            if arr.shape != blk.shape:
                raise ShapeError(blk.name, blk.shape, arr.shape)
            flat[blk.slice] = arr.reshape(-1)
        return cls(arch, grid, flat)

    @classmethod
    def zeros(cls, arch: Arch, grid: QuantGrid) -> "QuantParams":
        return cls(arch, grid, np.zeros(param_count(arch)))

    def blocks(self) -> dict:
        """Named read-only views of the parameter blocks."""
        return {b.name: self.values[b.slice].reshape(b.shape) for b in param_layout(self.arch)}

    def __getitem__(self, name: str) -> np.ndarray:
        blk = _blocks_by_name(self.arch)[name]
        return self.values[blk.slice].reshape(blk.shape)

    @property
    def support(self) -> int:
        """Number of nonzero entries."""
        return int(np.count_nonzero(self.values))

    def __eq__(self, other):
        if not isinstance(other, QuantParams):
            return NotImplemented
        return (
            self.arch == other.arch
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.arch, self.grid, self.values.tobytes()))


# ---------------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------------


def sign_labels(z) -> np.ndarray:
    """Labels in {-1, +1} with the convention sign(0) = +1."""
    return np.where(np.asarray(z) >= 0, 1, -1).astype(np.int8)


def _as_theta(arch: Arch, theta) -> np.ndarray:
    if isinstance(theta, QuantParams):
        theta = theta.values
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 1:
        theta = theta[None, :]
    M = param_count(arch)
    if theta.ndim != 2 or theta.shape[1] != M:
        raise ShapeError("params", ("B", M), theta.shape)
    return theta


def _as_inputs(arch: Arch, X, B: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    shape = arch.input_shape
    k = len(shape)
    if X.shape[-k:] != shape:
        raise ShapeError("input", ("N",) + shape, X.shape)
    if X.ndim == k + 1:
        return X[None]
    if X.ndim == k + 2 and X.shape[0] in (1, B):
        return X
    raise ShapeError("input", ("N",) + shape, X.shape)


def logits(arch: Arch, act: Activation, theta, X) -> np.ndarray:
    """Batched logits of ``B`` parameter vectors on ``N`` inputs.

    Parameters
    ----------
    arch : FcArch or ConvArch
        Architecture; its output width must be 1.
    act : Activation
    theta : array_like, shape (B, M) or (M,)
        Flat parameter vectors in canonical order.
    X : array_like
        Inputs of shape ``(N, *input_shape)`` shared by all parameter vectors,
        or ``(B, N, *input_shape)`` with one input set per vector.

    Returns
    -------
    ndarray, shape (B, N)
    """
    theta = _as_theta(arch, theta)
    B = theta.shape[0]
    X = _as_inputs(arch, X, B)
    blocks = _blocks_by_name(arch)

    def get(name):
        blk = blocks[name]
        return theta[:, blk.slice].reshape((B,) + blk.shape)

    if isinstance(arch, FcArch):
        if arch.widths[-1] != 1:
            raise ArchitectureError("sign output requires output width 1")
        h = X
        L = arch.depth
        for l in range(1, L + 1):
            u = np.matmul(h, get(f"W{l}").transpose(0, 2, 1))
            if arch.scaled and l < L:
                u = u * get(f"g{l}")[:, None, :]
            u = u + get(f"b{l}")[:, None, :]
            h = act(u) if l < L else u
        return h[..., 0]

    h = X
    N = X.shape[1]
    for l in range(1, arch.depth + 1):
        k = arch.kernels[l - 1]
        c_prev, c_out = arch.channels[l - 1], arch.channels[l]
        s_out = h.shape[-1] - k + 1
        Bh = h.shape[0]
        win = np.lib.stride_tricks.sliding_window_view(h, k, axis=-1)
        # (Bh, N, c_prev, s_out, k) -> (Bh, N*s_out, c_prev*k)
        win = win.transpose(0, 1, 3, 2, 4).reshape(Bh, N * s_out, c_prev * k)
        K = get(f"K{l}").reshape(B, c_out, c_prev * k)
        u = np.matmul(win, K.transpose(0, 2, 1))
        u = u.reshape(B, N, s_out, c_out).transpose(0, 1, 3, 2)
        if arch.scaled:
            u = u * get(f"g{l}")[:, None, :, None]
        u = u + get(f"b{l}")[:, None, :, None]
        h = act(u)
    flat = h.reshape(B, N, -1)
    return np.einsum("bnd,bd->bn", flat, get("w_head")) + get("b_head")


def _single(params: QuantParams, arch: Arch, act: Activation, x, flavor: str):
    if params.arch != arch:
        raise ArchitectureError("parameters belong to a different architecture")
    if arch.flavor != flavor:
        raise ArchitectureError(f"expected {flavor} flavor, got {arch.flavor}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != arch.input_shape:
        raise ShapeError("input", arch.input_shape, x.shape)
    z = float(logits(arch, act, params.values, x[None])[0, 0])
    return (1 if z >= 0 else -1), z


def forward_fc(params: QuantParams, arch: FcArch, act: Activation, x):
    """Label and logit of a vanilla FC net on a single input."""
    return _single(params, arch, act, x, "vanilla")


def forward_sfc(params: QuantParams, arch: FcArch, act: Activation, x):
    """Label and logit of a scaled-neuron FC net on a single input."""
    return _single(params, arch, act, x, "scaled")


def forward_cnn(params: QuantParams, arch: ConvArch, act: Activation, x):
    """Label and logit of a plain CNN on a single ``c_0 x s_0`` input."""
    return _single(params, arch, act, x, "plain")


def forward_scn(params: QuantParams, arch: ConvArch, act: Activation, x):
    """Label and logit of a channel-scaled CNN on a single input."""
    return _single(params, arch, act, x, "scaled")
