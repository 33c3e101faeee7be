"""Closed-form effective sample complexities and sample-size bounds.

All complexities are in nats. Functions returning a sample size ``N`` take
the ceiling of the real-valued bound. Width tuples exclude the input size:
``D = (d_1, ..., d_L)`` with ``d_0`` passed separately. Channel tuples
include the input channels: ``c = (c_0, ..., c_L)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from importlib import resources

__all__ = [
    "BoundRangeError",
    "MarginOrderError",
    "BoundReport",
    "bits",
    "full_complexity_fc",
    "pc_fc",
    "pc_sfc",
    "pc_cnn",
    "pc_scn",
    "chat_fc",
    "chat_sfc",
    "chat_cnn",
    "chat_scn",
    "n_lemma1",
    "n_volume",
    "bad_volume_delta",
    "n_noninterp",
    "n_refined",
    "eps_nonuniform",
    "eps_pscard",
    "n_pacbayes",
    "n_pacbayes_markov",
    "chat_sparse",
    "n_sparse",
    "sparse_beats_sfc",
    "log_beta_half",
    "cont_gamma",
    "log_phat_lower_cont",
    "ContBound",
    "chat_cont",
    "TeacherScale",
    "solve_teacher_scale",
    "load_channel_spec",
]


class BoundRangeError(ValueError):
    """A bound was called outside its parameter range."""


class MarginOrderError(BoundRangeError):
    """Angular margins violate ``0 < alpha < beta < pi/2``."""


def _open(name, value, lo, hi):
    if not lo < value < hi:
        raise BoundRangeError(f"{name} must lie in ({lo:g}, {hi:g}), got {value!r}")


def _ceil(x: float) -> int:
    # guard against 264.00000000000003-style overshoot from rounding
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def bits(nats: float) -> float:
    """Convert nats to bits."""
    return nats / math.log(2)


@dataclass(frozen=True)
class BoundReport:
    """A named complexity (nats) and the sample size it implies."""

    name: str
    c_hat: float
    n_required: int | None
    inputs: dict = field(default_factory=dict)
    notes: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["c_hat_bits"] = bits(self.c_hat)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# Constrained-parameter counts
# ---------------------------------------------------------------------------


def _widths(D_star, D, d0):
    D_star, D = tuple(int(v) for v in D_star), tuple(int(v) for v in D)
    if len(D_star) != len(D) or not D:
        raise BoundRangeError("teacher and student need the same positive depth")
    if d0 < 1 or min(D_star) < 1:
        raise BoundRangeError("widths must be positive")
    for l, (t, s) in enumerate(zip(D_star, D), start=1):
        if t > s:
            raise BoundRangeError(f"layer {l}: teacher width {t} exceeds student width {s}")
    return D_star, D


def full_complexity_fc(D, d0: int, Q: int, flavor: str = "vanilla") -> float:
    """``M(D) ln Q`` with ``M(D) = sum d_l (d_{l-1} + k)``, ``k = 1`` or ``2``."""
    k = 1 if flavor == "vanilla" else 2
    prev, total = d0, 0
    for d in D:
        total += d * (prev + k)
        prev = d
    return total * math.log(Q)


def pc_fc(D_star, D, d0: int) -> int:
    """Constrained entries of the vanilla embedding: ``sum d*_l d_{l-1} + d*_l``."""
    D_star, D = _widths(D_star, D, d0)
    prev = (d0,) + D[:-1]
    return sum(t * p + t for t, p in zip(D_star, prev))


def pc_sfc(D_star, D, d0: int) -> int:
    """Scaled-FC exponent: ``sum d*_l d*_{l-1} + 2 d_l``."""
    D_star, D = _widths(D_star, D, d0)
    prev = (d0,) + D_star[:-1]
    return sum(t * p + 2 * s for t, p, s in zip(D_star, prev, D))


def _channels(c_star, c, kernels):
    c_star, c = tuple(int(v) for v in c_star), tuple(int(v) for v in c)
    kernels = tuple(int(k) for k in kernels)
    if len(c_star) != len(c) or len(kernels) != len(c) - 1:
        raise BoundRangeError("need L+1 channel counts for both nets and L kernel sizes")
    if c_star[0] != c[0]:
        raise BoundRangeError("teacher and student must share the input channels")
    for l, (t, s) in enumerate(zip(c_star, c)):
        if t > s:
            raise BoundRangeError(f"layer {l}: teacher channels {t} exceed student channels {s}")
    return c_star, c, kernels


def pc_cnn(c_star, c, kernels, d_s: int) -> int:
    """Plain CNN exponent: ``d_s + 1 + sum k_l c*_l c_{l-1} + c*_l``."""
    c_star, c, kernels = _channels(c_star, c, kernels)
    return d_s + 1 + sum(k * c_star[l] * c[l - 1] + c_star[l] for l, k in enumerate(kernels, start=1))


def pc_scn(c_star, c, kernels, d_s_star: int) -> int:
    """Channel-scaled CNN exponent: ``d*_s + 1 + sum k_l c*_l c*_{l-1} + 2 c_l``."""
    c_star, c, kernels = _channels(c_star, c, kernels)
    return d_s_star + 1 + sum(k * c_star[l] * c_star[l - 1] + 2 * c[l] for l, k in enumerate(kernels, start=1))


def chat_fc(D_star, D, d0: int, Q: int) -> float:
    """Effective sample complexity bound for vanilla FC students (nats)."""
    return pc_fc(D_star, D, d0) * math.log(Q)


def chat_sfc(D_star, D, d0: int, Q: int) -> float:
    """Effective sample complexity bound for scaled-neuron FC students (nats)."""
    return pc_sfc(D_star, D, d0) * math.log(Q)


def chat_cnn(c_star, c, kernels, d_s: int, Q: int) -> float:
    return pc_cnn(c_star, c, kernels, d_s) * math.log(Q)


def chat_scn(c_star, c, kernels, d_s_star: int, Q: int) -> float:
    return pc_scn(c_star, c, kernels, d_s_star) * math.log(Q)


# ---------------------------------------------------------------------------
# Sample sizes
# ---------------------------------------------------------------------------


def _check_c(c_hat):
    if not (c_hat >= 0 and math.isfinite(c_hat)):
        raise BoundRangeError(f"c_hat must be finite and nonnegative, got {c_hat!r}")


def n_lemma1(c_hat: float, eps: float, delta: float) -> int:
    """``ceil((c_hat + 3 ln(2/delta)) / eps)`` for eps in (0,1), delta in (0,1/5)."""
    _check_c(c_hat)
    _open("eps", eps, 0, 1)
    _open("delta", delta, 0, 0.2)
    return _ceil((c_hat + 3 * math.log(2 / delta)) / eps)


def n_volume(c_hat: float, eps: float, delta: float) -> int:
    """``ceil((c_hat + 6 ln(2/delta)) / eps)``: bad-interpolator volume at most delta."""
    _check_c(c_hat)
    _open("eps", eps, 0, 1)
    _open("delta", delta, 0, 0.2)
    return _ceil((c_hat + 6 * math.log(2 / delta)) / eps)


def bad_volume_delta(c_hat: float, eps: float, N: int) -> float:
    """``2 exp(-(eps N - c_hat) / 6)``; values >= 1 are non-informative."""
    _check_c(c_hat)
    _open("eps", eps, 0, 1)
    return 2 * math.exp(-(eps * N - c_hat) / 6)


def n_noninterp(c_hat: float, eps: float, delta: float) -> int:
    """``ceil((c_hat + 3 ln(2/delta)) / (2 eps^2))`` for the threshold sampler."""
    _check_c(c_hat)
    _open("eps", eps, 0, 0.5)
    _open("delta", delta, 0, 0.2)
    return _ceil((c_hat + 3 * math.log(2 / delta)) / (2 * eps**2))


def n_refined(c_hat: float, eps: float, delta_S: float, delta_h: float) -> int:
    """``ceil((c_hat + ln(1/delta_S) + 2 ln ln(1/delta_h)) / eps)``."""
    _check_c(c_hat)
    _open("eps", eps, 0, 1)
    _open("delta_S", delta_S, 0, 1)
    _open("delta_h", delta_h, 0, 0.2)
    return _ceil((c_hat + math.log(1 / delta_S) + 2 * math.log(math.log(1 / delta_h))) / eps)


def eps_nonuniform(p_hat: float, N: int, delta: float, eta: float) -> float:
    """Data-dependent error level from the interpolation probability ``p_hat``.

    ``(ln(1/p) + ln(4/delta) + ln ln(2/eta) + 2 ln ln(ln(2/eta)/p + 1)) / N``
    """
    _open("p_hat", p_hat, 0, 1)
    _open("delta", delta, 0, 1)
    _open("eta", eta, 0, 1)
    if N < 1:
        raise BoundRangeError("N must be positive")
    l2e = math.log(2 / eta)
    return (
        math.log(1 / p_hat) + math.log(4 / delta) + math.log(l2e) + 2 * math.log(math.log(l2e / p_hat + 1))
    ) / N


def eps_pscard(p_hat: float, N: int, delta: float) -> float:
    """``(ln(1/p) + 4 ln(8/delta) + 2 ln ln(1/p)) / N`` for ``p_hat < 1/2``."""
    _open("p_hat", p_hat, 0, 0.5)
    _open("delta", delta, 0, 1)
    if N < 1:
        raise BoundRangeError("N must be positive")
    lp = math.log(1 / p_hat)
    return (lp + 4 * math.log(8 / delta) + 2 * math.log(lp)) / N


def n_pacbayes(c_hat: float, eps: float, delta: float) -> int:
    """PAC-Bayes order ``(c_hat + ln(1/delta)) / eps`` with unit constant."""
    _check_c(c_hat)
    _open("eps", eps, 0, 1)
    _open("delta", delta, 0, 1)
    return _ceil((c_hat + math.log(1 / delta)) / eps)


def n_pacbayes_markov(c_hat: float, eps: float, delta: float) -> int:
    """Markov form ``(c_hat + ln(1/delta)) / (eps delta)`` with unit constant.

    Bounds the posterior-averaged error by ``eps delta`` and converts it into a
    single-sample guarantee through Markov's inequality.
    """
    _check_c(c_hat)
    _open("eps", eps, 0, 1)
    _open("delta", delta, 0, 1)
    return _ceil((c_hat + math.log(1 / delta)) / (eps * delta))


def chat_sparse(M_star: int, d0: int, Q: int) -> float:
    """``2 M ln(M + d0) + M ln Q`` for the sparsest-interpolator rule."""
    if M_star < 1:
        raise BoundRangeError("M_star must be positive")
    return 2 * M_star * math.log(M_star + d0) + M_star * math.log(Q)


def n_sparse(M_star: int, d0: int, Q: int, eps: float, delta: float) -> int:
    """``ceil((2 M ln(M + d0) + M ln Q + ln(1/delta)) / eps)``."""
    _open("eps", eps, 0, 1)
    _open("delta", delta, 0, 1)
    return _ceil((chat_sparse(M_star, d0, Q) + math.log(1 / delta)) / eps)


def sparse_beats_sfc(c_hat_sfc: float, M_star: int, d0: int, Q: int) -> bool:
    """True when the scaled-FC complexity is below the sparse-rule complexity."""
    return c_hat_sfc < chat_sparse(M_star, d0, Q)


# ---------------------------------------------------------------------------
# Continuous two-layer nets
# ---------------------------------------------------------------------------


def log_beta_half(x: float) -> float:
    """``ln B(1/2, x)`` via log-gamma."""
    return math.lgamma(0.5) + math.lgamma(x) - math.lgamma(0.5 + x)


def _log_cap_factor(angle: float, d: int) -> float:
    """``ln[sin(angle)^(d-1) / ((d-1) B(1/2, (d-1)/2))]``.

    For ``d = 1`` the limit of the denominator is 2.
    """
    if d < 1:
        raise BoundRangeError("dimension must be positive")
    if d == 1:
        return -math.log(2)
    return (d - 1) * math.log(math.sin(angle)) - math.log(d - 1) - log_beta_half((d - 1) / 2)


def cont_gamma(alpha: float, beta: float) -> float:
    """``arccos(cos(beta) / cos(alpha))``."""
    if not 0 < alpha < beta < math.pi / 2:
        raise MarginOrderError(f"need 0 < alpha < beta < pi/2, got alpha={alpha!r}, beta={beta!r}")
    return math.acos(min(1.0, math.cos(beta) / math.cos(alpha)))


def log_phat_lower_cont(
    alpha: float, beta: float, d0: int, d1: int, d1_star: int, second_dim: str = "student"
) -> float:
    """Log of the lower bound on the interpolation probability of a random net.

    ``ln[2^-d1* * cap(gamma, m) * cap(alpha, d0)^d1*]`` with
    ``cap(t, d) = sin(t)^(d-1) / ((d-1) B(1/2, (d-1)/2))``. The second-layer
    dimension ``m`` is ``d1`` (``second_dim="student"``) or ``d1*``
    (``second_dim="teacher"``).
    """
    if d1_star > d1:
        raise BoundRangeError("teacher width exceeds student width")
    gamma = cont_gamma(alpha, beta)
    m = {"student": d1, "teacher": d1_star}[second_dim]
    return -d1_star * math.log(2) + _log_cap_factor(gamma, m) + d1_star * _log_cap_factor(alpha, d0)


@dataclass(frozen=True)
class ContBound:
    gamma: float
    asymptotic: float
    exact: float
    exact_teacher_dim: float
    unmodeled: str = "O(d1* + log d1) additive term"


def chat_cont(d0: int, d1: int, d1_star: int, alpha: float, beta: float, rho: float = 0.01) -> ContBound:
    """Effective sample complexity of continuous two-layer nets (nats).

    ``asymptotic`` is ``-d1* d0 ln sin(alpha) - d1 ln sin(gamma) + d1* ln(d0) / 2``;
    ``exact`` is minus the log lower bound with second-layer dimension ``d1``
    and ``exact_teacher_dim`` the same with ``d1*``. ``rho`` enters only through
    the margins and is accepted for a uniform signature.
    """
    gamma = cont_gamma(alpha, beta)
    asym = (
        -d1_star * d0 * math.log(math.sin(alpha))
        - d1 * math.log(math.sin(gamma))
        + 0.5 * d1_star * math.log(d0)
    )
    exact = -log_phat_lower_cont(alpha, beta, d0, d1, d1_star, "student")
    exact_t = -log_phat_lower_cont(alpha, beta, d0, d1, d1_star, "teacher")
    return ContBound(gamma, asym, exact, exact_t)


# ---------------------------------------------------------------------------
# Teacher-scale solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TeacherScale:
    """Solution of the uniform teacher-width solve.

    Attributes
    ----------
    alpha : float
        Relative teacher width.
    teacher_channels : tuple
    teacher_params : int
        Kernels, biases and scales of every conv layer plus the head.
    c_hat : float
        Scaled-CNN complexity at ``alpha``.
    target : float
        ``N eps - 3 ln(2/delta)``.
    saturated : bool
        True when even a student-sized teacher fits the sample budget.
    """

    alpha: float
    teacher_channels: tuple
    teacher_params: int
    c_hat: float
    target: float
    saturated: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _teacher_channels(alpha, channels):
    return (channels[0],) + tuple(max(1, math.ceil(alpha * c - 1e-12)) for c in channels[1:])


def _head_width(c_last, head_spatial, head_outputs):
    return c_last * head_spatial * head_outputs


def _scn_at(alpha, channels, kernels, Q, head_spatial, head_outputs):
    c_star = _teacher_channels(alpha, channels)
    d_s_star = _head_width(c_star[-1], head_spatial, head_outputs)
    return c_star, chat_scn(c_star, channels, kernels, d_s_star, Q)


def _teacher_param_count(c_star, kernels, head_spatial, head_outputs):
    conv = sum(k * c_star[l] * c_star[l - 1] + 2 * c_star[l] for l, k in enumerate(kernels, start=1))
    return conv + _head_width(c_star[-1], head_spatial, head_outputs) + head_outputs


def solve_teacher_scale(
    channels,
    kernels,
    N: int,
    eps: float,
    delta: float,
    Q: int,
    head_spatial: int = 1,
    head_outputs: int = 1,
    tol: float = 1e-3,
) -> TeacherScale:
    """Largest uniform width ratio whose teacher the sample budget can afford.

    Teacher channels are ``ceil(alpha c_l)``. The head has
    ``c*_L * head_spatial * head_outputs`` weights. Bisection on ``alpha``
    finds where the scaled-CNN complexity crosses ``N eps - 3 ln(2/delta)``.

    Raises
    ------
    BoundRangeError
        If the budget is not positive or even single-channel teachers exceed it.
    """
    channels = tuple(int(c) for c in channels)
    kernels = tuple(int(k) for k in kernels)
    _open("eps", eps, 0, 1)
    _open("delta", delta, 0, 1)
    target = N * eps - 3 * math.log(2 / delta)
    if target <= 0:
        raise BoundRangeError(f"N eps = {N * eps:g} does not exceed 3 ln(2/delta) = {3 * math.log(2 / delta):g}")

    def fits(alpha):
        return _scn_at(alpha, channels, kernels, Q, head_spatial, head_outputs)[1] <= target

    def result(alpha, saturated):
        c_star, c_hat = _scn_at(alpha, channels, kernels, Q, head_spatial, head_outputs)
        n_params = _teacher_param_count(c_star, kernels, head_spatial, head_outputs)
        return TeacherScale(alpha, c_star, n_params, c_hat, target, saturated)

    if fits(1.0):
        return result(1.0, True)
    lo = 1e-12
    if not fits(lo):
        _, floor_c = _scn_at(lo, channels, kernels, Q, head_spatial, head_outputs)
        raise BoundRangeError(
            f"even single-channel teachers need {floor_c:.6g} nats, above the budget {target:.6g}"
        )
    hi = 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return result(lo, False)


def load_channel_spec(name: str = "resnet18") -> dict:
    """Bundled channel layout by name."""
    text = resources.files("gnclab").joinpath("data", f"{name}.json").read_text()
    return json.loads(text)
