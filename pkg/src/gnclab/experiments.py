"""Experiment configs, study runners, and reproducible result files.

A config is a JSON object with ``"schema": 1``, an experiment ``"kind"``, a
root ``"seed"``, a ``"workers"`` count and kind-specific fields. Running it
writes ``results.csv``, ``summary.json`` and ``manifest.json`` into the output
directory. The manifest holds SHA-256 digests of the result files; identical
configs reproduce identical digests.

Instance fields shared by several kinds::

    "teacher": {"arch": {...}, "seed": 5, "policy": "reject-constant"}
               or {"arch": {...}, "values": [...]}
    "student": {"type": "fc", "widths": [3, 2, 1], "flavor": "vanilla"}
    "Q": 3                      (or "grid": [levels])
    "domain": {"kind": "hypercube", "shape": [3]}
    "activation": {"kind": "relu"}
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from . import bounds
from .contnet import margin_density_experiment
from .oracle import (
    EnumBudget,
    bad_volume_from_tables,
    function_tables,
)
from .quantnet import Activation, FcArch, QuantGrid, arch_from_dict, logits, param_count, sign_labels
from .sampler import PriorSpec, gnc, gnc_threshold, posterior_errors
from .stats import clopper_pearson, derive_seed, generator
from .teacher import (
    InputDomain,
    LabeledSet,
    TeacherSpec,
    embedding_map,
    sample_teacher,
    teacher_from_dict,
)

__all__ = [
    "SCHEMA_VERSION",
    "KINDS",
    "ConfigError",
    "InvariantViolation",
    "ExperimentConfig",
    "RunManifest",
    "Instance",
    "build_instance",
    "run_experiment",
    "pac_frequency_check",
    "write_csv",
    "format_value",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; detected before any compute."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed during a run."""


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def format_value(v) -> str:
    """Serialize one CSV cell; floats use 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, rows: list, columns: list) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(row.get(c)) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _dump_json(path, data) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration."""

    kind: str
    params: dict
    seed: int = 0
    workers: int = 1
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema {data.get('schema')!r}; expected {SCHEMA_VERSION}")
        kind = data.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {sorted(KINDS)}")
        seed = data.get("seed", 0)
        workers = data.get("workers", 1)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit nonnegative integer")
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer")
        params = {k: v for k, v in data.items() if k not in ("schema", "kind", "seed", "workers", "out_dir")}
        cfg = cls(kind, params, seed, workers, data.get("out_dir"))
        KINDS[kind].validate(cfg)
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA_VERSION, "kind": self.kind, "seed": self.seed, "workers": self.workers}
        out.update(self.params)
        return out

    @property
    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    kind: str
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _require(params, *names):
    for name in names:
        if name not in params:
            raise ConfigError(f"missing field {name!r}")


def _check_range(name, value, lo, hi, bound_name):
    if not isinstance(value, (int, float)) or not lo < value < hi:
        raise ConfigError(f"{name}={value!r} outside {bound_name} range {name} in ({lo:g}, {hi:g})")


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    teacher: TeacherSpec
    student: object
    grid: QuantGrid
    domain: InputDomain
    act: Activation

    @property
    def prior(self) -> PriorSpec:
        return PriorSpec(self.student, self.grid, self.act)


def _grid(params) -> QuantGrid:
    if "grid" in params:
        return QuantGrid(tuple(params["grid"]))
    return QuantGrid.default(int(params["Q"]))


def build_instance(params: dict, seed: int) -> Instance:
    """Teacher, student, grid, domain and activation from config fields."""
    try:
        grid = _grid(params)
        act = Activation(**params.get("activation", {"kind": "relu"}))
        student = arch_from_dict(params["student"])
        tspec = params["teacher"]
        t_arch = arch_from_dict(tspec["arch"])
        domain = InputDomain.from_dict(params.get("domain", {"kind": "gaussian", "shape": list(t_arch.input_shape)}))
        if "values" in tspec:
            teacher = teacher_from_dict(
                {"arch": tspec["arch"], "grid": grid.to_dict(), "values": tspec["values"], "act": act.to_dict()}
            )
        else:
            tseed = tspec.get("seed", derive_seed(seed, "teacher"))
            teacher = sample_teacher(t_arch, grid, tseed, tspec.get("policy", "reject-constant"), domain, act)
        embedding_map(teacher.arch, student)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed instance: {exc!r}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if domain.shape != tuple(student.input_shape):
        raise ConfigError(f"domain shape {domain.shape} does not match student input {student.input_shape}")
    return Instance(teacher, student, grid, domain, act)


def _validate_instance(params, seed, enumerable=False, budget=None):
    _require(params, "teacher", "student")
    if "Q" not in params and "grid" not in params:
        raise ConfigError("missing field 'Q' (or 'grid')")
    inst = build_instance(params, seed)
    if enumerable and not inst.domain.enumerable:
        raise ConfigError("this experiment needs an enumerable domain (hypercube with d0 <= 20 or finite grid)")
    if budget is not None:
        n = inst.grid.Q ** param_count(inst.student)
        if n > budget:
            raise ConfigError(f"Q^M = {n} exceeds the enumeration budget {budget}")
    return inst


def _pc_printed(teacher_arch, student_arch) -> int:
    """Exponent of the matching bound, exactly as printed."""
    if isinstance(student_arch, FcArch):
        t, s = teacher_arch.widths, student_arch.widths
        if student_arch.scaled:
            return bounds.pc_sfc(t[1:], s[1:], s[0])
        return bounds.pc_fc(t[1:], s[1:], s[0])
    if student_arch.scaled:
        return bounds.pc_scn(teacher_arch.channels, student_arch.channels, student_arch.kernels, teacher_arch.head_width)
    return bounds.pc_cnn(teacher_arch.channels, student_arch.channels, student_arch.kernels, student_arch.head_width)


def _exact_tables(inst: Instance, workers: int):
    pts = inst.domain.enumerate()
    tabs = function_tables(inst.student, inst.grid, pts, inst.act, EnumBudget(), workers)
    t_labels = inst.teacher.predict(pts)
    te = tabs.matching(np.arange(len(pts)), t_labels)
    p_tilde = Fraction(tabs.mass(te), tabs.total)
    return pts, tabs, t_labels, p_tilde


# ---------------------------------------------------------------------------
# Experiment kinds
# ---------------------------------------------------------------------------


class _Kind:
    columns: list = []

    @staticmethod
    def validate(cfg):
        pass

    @staticmethod
    def run(cfg):
        raise NotImplementedError


class OracleVsBound(_Kind):
    """Exact teacher-equivalence probability versus ``Q ** -PC`` per instance."""

    columns = [
        "name", "arch", "flavor", "M", "Q", "pc", "embed_constraints", "p_tilde_exact",
        "p_tilde_fraction", "q_minus_pc", "neg_log_p_tilde", "c_hat", "pass", "provenance",
    ]

    @staticmethod
    def validate(cfg):
        _require(cfg.params, "instances")
        if not cfg.params["instances"]:
            raise ConfigError("instances must be a nonempty list")
        budget = cfg.params.get("budget", EnumBudget().max_configs)
        for i, spec in enumerate(cfg.params["instances"]):
            try:
                _validate_instance(spec, cfg.seed, enumerable=True, budget=budget)
            except ConfigError as exc:
                raise ConfigError(f"instance {i}: {exc}") from None

    @staticmethod
    def run(cfg):
        rows = []
        for i, spec in enumerate(cfg.params["instances"]):
            inst = build_instance(spec, cfg.seed)
            _, tabs, _, p_tilde = _exact_tables(inst, cfg.workers)
            pc = _pc_printed(inst.teacher.arch, inst.student)
            emb = embedding_map(inst.teacher.arch, inst.student).count
            if emb > pc:
                raise InvariantViolation(f"instance {i}: embedding constrains {emb} entries, above PC={pc}")
            q_pc = Fraction(1, inst.grid.Q ** pc)
            rows.append({
                "name": spec.get("name", f"instance-{i}"),
                "arch": "fc" if isinstance(inst.student, FcArch) else "conv",
                "flavor": inst.student.flavor,
                "M": param_count(inst.student),
                "Q": inst.grid.Q,
                "pc": pc,
                "embed_constraints": emb,
                "p_tilde_exact": float(p_tilde),
                "p_tilde_fraction": str(p_tilde),
                "q_minus_pc": float(q_pc),
                "neg_log_p_tilde": -math.log(p_tilde) if p_tilde else math.inf,
                "c_hat": pc * math.log(inst.grid.Q),
                "pass": p_tilde >= q_pc,
                "provenance": "exact",
            })
        summary = {"instances": len(rows), "all_pass": all(r["pass"] for r in rows)}
        return rows, summary


def _resolve_N(spec, c_hat=None):
    """Sample size from an integer or a rule ``{"rule": name, "eps", "delta"}``."""
    if isinstance(spec, int):
        return spec
    rule = spec["rule"]
    if c_hat is None:
        c_hat = spec["c_hat"]
    if rule == "lemma1":
        return bounds.n_lemma1(c_hat, spec["eps"], spec["delta"])
    if rule == "volume":
        return bounds.n_volume(c_hat, spec["eps"], spec["delta"])
    if rule == "noninterp":
        return bounds.n_noninterp(c_hat, spec["eps"], spec["delta"])
    raise ConfigError(f"unknown N rule {rule!r}")


def _validate_N(spec, name="N"):
    if isinstance(spec, int):
        if spec < 1:
            raise ConfigError(f"{name} must be positive")
        return
    if not isinstance(spec, dict) or "rule" not in spec:
        raise ConfigError(f"{name} must be an integer or a rule object")
    rule = spec["rule"]
    if rule not in ("lemma1", "volume", "noninterp"):
        raise ConfigError(f"unknown N rule {rule!r}")
    _require(spec, "eps", "delta")
    eps_hi = 0.5 if rule == "noninterp" else 1
    _check_range("eps", spec["eps"], 0, eps_hi, rule)
    _check_range("delta", spec["delta"], 0, 0.2, rule)


class WidthSweep(_Kind):
    """Mean posterior test error of students of several widths, one teacher."""

    columns = [
        "d1", "M", "N", "n_samples", "mean_error", "se_error", "max_ci_half_width",
        "draws_used", "mean_T", "provenance",
    ]

    @staticmethod
    def validate(cfg):
        p = cfg.params
        _require(p, "teacher", "d0", "student_widths", "N", "n_samples")
        if "Q" not in p and "grid" not in p:
            raise ConfigError("missing field 'Q' (or 'grid')")
        if not p["student_widths"]:
            raise ConfigError("student_widths must be nonempty")
        _validate_N(p["N"])
        if p["n_samples"] < 1:
            raise ConfigError("n_samples must be positive")
        for d1 in p["student_widths"]:
            _validate_instance(WidthSweep._spec(p, d1), cfg.seed)

    @staticmethod
    def _spec(p, d1):
        spec = dict(p)
        spec["student"] = {"type": "fc", "widths": [p["d0"], d1, 1], "flavor": p.get("flavor", "vanilla")}
        return spec

    @staticmethod
    def run(cfg):
        p = cfg.params
        widths = list(p["student_widths"])
        inst0 = build_instance(WidthSweep._spec(p, widths[0]), cfg.seed)
        N_spec = p["N"]
        if isinstance(N_spec, dict):
            ref = N_spec.get("student_width", max(widths))
            t = inst0.teacher.arch.widths
            c_hat = bounds.chat_fc(t[1:], (ref, 1), p["d0"], inst0.grid.Q)
            N = _resolve_N(N_spec, c_hat)
        else:
            N = N_spec
        rng = generator(cfg.seed, "width-sweep-data")
        X = inst0.domain.sample(N, rng)
        S = LabeledSet(X, inst0.teacher.predict(X))
        mc = int(p.get("mc_samples", 20_000))
        rows = []
        for d1 in widths:
            inst = build_instance(WidthSweep._spec(p, d1), cfg.seed)
            seed = derive_seed(cfg.seed, "width-sweep-gnc", d1)
            errors, batch = posterior_errors(
                inst.prior, S, int(p["n_samples"]), inst.teacher, inst.domain, seed,
                exact=False if not inst.domain.enumerable else None, mc_samples=mc,
                max_draws=int(p.get("max_draws", 10**9)), workers=cfg.workers,
            )
            half = 0.0 if inst.domain.enumerable else _max_half_width(errors, mc)
            rows.append({
                "d1": d1,
                "M": param_count(inst.student),
                "N": N,
                "n_samples": len(errors),
                "mean_error": float(errors.mean()),
                "se_error": float(errors.std(ddof=1) / math.sqrt(len(errors))) if len(errors) > 1 else 0.0,
                "max_ci_half_width": half,
                "draws_used": batch.draws_used,
                "mean_T": float(batch.T.mean()),
                "provenance": f"monte-carlo(n_test={mc})" if not inst.domain.enumerable else "exact",
            })
        gap = rows[-1]["mean_error"] - rows[0]["mean_error"]
        summary = {
            "N": N,
            "widths": widths,
            "mean_errors": [r["mean_error"] for r in rows],
            "gap_widest_minus_narrowest": gap,
            "teacher_values": inst0.teacher.params.values.tolist(),
        }
        return rows, summary


def _max_half_width(errors, n) -> float:
    """Largest 95% interval half-width among Monte-Carlo error estimates."""
    worst = 0.0
    for k in np.unique(np.round(np.asarray(errors) * n).astype(int)):
        lo, hi = clopper_pearson(int(k), n)
        worst = max(worst, (hi - lo) / 2)
    return worst


def _validate_pac(cfg, rule):
    p = cfg.params
    _require(p, "eps", "delta", "reps")
    _check_range("delta", p["delta"], 0, 0.2, rule)
    eps_hi = 0.5 if rule == "noninterp" else 1
    _check_range("eps", p["eps"], 0, eps_hi, rule)
    if p["reps"] < 1:
        raise ConfigError("reps must be positive")
    if "N" in p and p["N"] != "auto":
        _validate_N(p["N"])
    inst = _validate_instance(p, cfg.seed, enumerable=True, budget=p.get("budget", EnumBudget().max_configs))
    if rule == "noninterp":
        flips = p.get("flip", [])
        size = inst.domain.size
        if not flips or any(not 0 <= f < size for f in flips) or len(set(flips)) != len(flips):
            raise ConfigError(f"flip must list distinct domain indices in [0, {size})")
        eps_star = len(flips) / size
        if not p["eps"] < 0.5 - eps_star:
            raise ConfigError(f"eps must lie in (0, 1/2 - eps*) = (0, {0.5 - eps_star:g})")
    return inst


def _draw_indices(seed, label, rep, P, N):
    return generator(seed, label, rep).integers(0, P, size=N)


class PacFrequency(_Kind):
    """Frequency of ``L_D <= eps`` for one G&C sample per random data set."""

    columns = ["rep", "N", "T", "L_D", "success", "provenance"]

    @staticmethod
    def validate(cfg):
        _validate_pac(cfg, "lemma1")

    @staticmethod
    def run(cfg):
        p = cfg.params
        inst = build_instance(p, cfg.seed)
        pts, tabs, t_labels, p_tilde = _exact_tables(inst, cfg.workers)
        if p_tilde == 0:
            raise InvariantViolation("exact p_tilde is 0 although the teacher embeds in the student")
        c_hat = -math.log(p_tilde)
        N_spec = p.get("N", "auto")
        N = bounds.n_lemma1(c_hat, p["eps"], p["delta"]) if N_spec == "auto" else _resolve_N(N_spec, c_hat)
        rows = []
        for r in range(int(p["reps"])):
            idx = _draw_indices(cfg.seed, "pac-data", r, len(pts), N)
            S = LabeledSet(pts[idx], t_labels[idx])
            tr = gnc(inst.prior, S, int(p.get("max_draws", 10**8)), derive_seed(cfg.seed, "pac-gnc", r), cfg.workers)
            L_D = float(np.mean(inst.teacher.predict(pts) != _labels(inst, tr.params.values, pts)))
            rows.append({"rep": r, "N": N, "T": tr.T, "L_D": L_D, "success": L_D <= p["eps"] + 1e-12,
                         "provenance": "exact"})
        summary = _frequency_summary(rows, 1 - p["delta"], {"c_hat_exact": c_hat, "p_tilde_exact": p_tilde, "N": N,
                                                           "eps": p["eps"], "delta": p["delta"]})
        return rows, summary


def _labels(inst, theta, X):
    return sign_labels(logits(inst.student, inst.act, theta, X))[0]


def _frequency_summary(rows, target, extra):
    R = len(rows)
    k = sum(bool(r["success"]) for r in rows)
    frac = k / R
    se = math.sqrt(target * (1 - target) / R)
    pval = float(sps.binomtest(k, R, target, alternative="less").pvalue)
    return dict(
        extra,
        reps=R,
        successes=k,
        fraction=frac,
        target=target,
        null_se=se,
        pass_3se=frac >= target - 3 * se,
        binom_pvalue_less=pval,
    )


class NoninterpFrequency(_Kind):
    """Threshold sampler on a label source with irreducible error."""

    columns = ["rep", "N", "T", "train_error", "L_D", "success", "provenance"]

    @staticmethod
    def validate(cfg):
        _validate_pac(cfg, "noninterp")

    @staticmethod
    def run(cfg):
        p = cfg.params
        inst = build_instance(p, cfg.seed)
        pts, tabs, t_labels, p_tilde = _exact_tables(inst, cfg.workers)
        source = t_labels.copy()
        source[list(p["flip"])] *= -1
        eps_star = len(p["flip"]) / len(pts)
        c_hat = -math.log(p_tilde)
        N_spec = p.get("N", "auto")
        N = bounds.n_noninterp(c_hat, p["eps"], p["delta"]) if N_spec == "auto" else _resolve_N(N_spec, c_hat)
        gamma = eps_star + p["eps"]
        rows = []
        for r in range(int(p["reps"])):
            idx = _draw_indices(cfg.seed, "noninterp-data", r, len(pts), N)
            S = LabeledSet(pts[idx], source[idx])
            tr = gnc_threshold(inst.prior, S, gamma, int(p.get("max_draws", 10**8)),
                               derive_seed(cfg.seed, "noninterp-gnc", r), cfg.workers)
            L_D = float(np.mean(_labels(inst, tr.params.values, pts) != source))
            rows.append({"rep": r, "N": N, "T": tr.T, "train_error": tr.train_error, "L_D": L_D,
                         "success": L_D <= gamma + p["eps"] + 1e-12, "provenance": "exact"})
        summary = _frequency_summary(rows, 1 - p["delta"], {"c_hat_exact": c_hat, "p_tilde_exact": p_tilde, "N": N,
                                                           "eps": p["eps"], "delta": p["delta"],
                                                           "eps_star": eps_star, "gamma": gamma})
        return rows, summary


class VolumeDecay(_Kind):
    """Exact bad-interpolator volume over random data sets and nested sizes."""

    columns = ["rep", "N", "bad_quarter", "bad_half", "bad_full", "below_delta", "monotone", "provenance"]

    @staticmethod
    def validate(cfg):
        _validate_pac(cfg, "volume")

    @staticmethod
    def run(cfg):
        p = cfg.params
        inst = build_instance(p, cfg.seed)
        pts, tabs, t_labels, p_tilde = _exact_tables(inst, cfg.workers)
        c_hat = -math.log(p_tilde)
        N_spec = p.get("N", "auto")
        N = bounds.n_volume(c_hat, p["eps"], p["delta"]) if N_spec == "auto" else _resolve_N(N_spec, c_hat)
        sizes = [max(1, N // 4), max(1, N // 2), N]
        rows = []
        for r in range(int(p["reps"])):
            idx = _draw_indices(cfg.seed, "volume-data", r, len(pts), N)
            vols = [bad_volume_from_tables(tabs, idx[:n], t_labels[idx[:n]], t_labels, p["eps"]) for n in sizes]
            rows.append({
                "rep": r, "N": N,
                "bad_quarter": float(vols[0]), "bad_half": float(vols[1]), "bad_full": float(vols[2]),
                "below_delta": vols[2] <= Fraction(p["delta"]),
                "monotone": vols[0] >= vols[1] >= vols[2],
                "provenance": "exact",
            })
        R = len(rows)
        below = sum(r["below_delta"] for r in rows)
        mono = sum(r["monotone"] for r in rows)
        summary = {
            "N": N, "sizes": sizes, "eps": p["eps"], "delta": p["delta"], "c_hat_exact": c_hat,
            "p_tilde_exact": p_tilde, "reps": R,
            "fraction_below_delta": below / R, "fraction_monotone": mono / R,
            "delta_formula": bounds.bad_volume_delta(c_hat, p["eps"], N),
        }
        return rows, summary


class Table1(_Kind):
    """Teacher-width solve for a channel layout."""

    columns = ["alpha", "teacher_params", "c_hat", "target", "saturated", "provenance"]

    @staticmethod
    def _spec(p):
        spec = {}
        if "channel_spec" in p:
            try:
                spec.update(bounds.load_channel_spec(p["channel_spec"]))
            except FileNotFoundError:
                raise ConfigError(f"no bundled channel spec named {p['channel_spec']!r}") from None
        spec.update({k: v for k, v in p.items() if k != "channel_spec"})
        return spec

    @staticmethod
    def validate(cfg):
        spec = Table1._spec(cfg.params)
        _require(spec, "channels", "kernels", "N", "eps", "delta", "Q")
        _check_range("eps", spec["eps"], 0, 1, "teacher-scale")
        _check_range("delta", spec["delta"], 0, 1, "teacher-scale")
        if len(spec["kernels"]) != len(spec["channels"]) - 1:
            raise ConfigError("need one kernel size per conv layer")

    @staticmethod
    def run(cfg):
        s = Table1._spec(cfg.params)
        res = bounds.solve_teacher_scale(
            s["channels"], s["kernels"], s["N"], s["eps"], s["delta"], s["Q"],
            s.get("head_spatial", 1), s.get("head_outputs", 1),
        )
        row = {"alpha": res.alpha, "teacher_params": res.teacher_params, "c_hat": res.c_hat,
               "target": res.target, "saturated": res.saturated, "provenance": "formula"}
        return [row], res.to_dict()


class Margins(_Kind):
    """Angular margins of random two-layer teachers on Gaussian data."""

    columns = ["trial", "alpha", "beta", "log_ratio", "degenerate"]

    @staticmethod
    def validate(cfg):
        p = cfg.params
        _require(p, "d0", "d1", "d1_star", "N", "trials")
        if p["d1_star"] > p["d1"]:
            raise ConfigError("d1_star must not exceed d1")
        if min(p["d0"], p["d1"], p["d1_star"], p["N"], p["trials"]) < 1:
            raise ConfigError("dimensions, N and trials must be positive")

    @staticmethod
    def run(cfg):
        p = cfg.params
        res = margin_density_experiment(p["d0"], p["d1"], p["d1_star"], p.get("rho", 0.01), p["N"], p["trials"],
                                        cfg.seed, cfg.workers)
        return margin_rows(res), res.summary()


def margin_rows(res) -> list:
    rows = []
    for t, (a, b, deg) in enumerate(zip(res.alphas, res.betas, res.degenerate)):
        rows.append({"trial": t, "alpha": a, "beta": b,
                     "log_ratio": None if deg else math.log(b / a), "degenerate": bool(deg)})
    return rows


KINDS = {
    "oracle-vs-bound": OracleVsBound,
    "width-sweep": WidthSweep,
    "pac-frequency": PacFrequency,
    "noninterp-frequency": NoninterpFrequency,
    "volume-decay": VolumeDecay,
    "table1": Table1,
    "margins": Margins,
}


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


def run_experiment(config, out_dir=None) -> RunManifest:
    """Run a config and write ``results.csv``, ``summary.json`` and ``manifest.json``.

    Parameters
    ----------
    config : ExperimentConfig or dict
    out_dir : path, optional
        Overrides ``config.out_dir``; defaults to ``./runs/<kind>-<hash8>``.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    kind = KINDS[config.kind]
    out = Path(out_dir or config.out_dir or f"runs/{config.kind}-{config.digest[:8]}")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.digest, __version__, config.kind)

    t0 = time.perf_counter()
    rows, summary = kind.run(config)
    manifest.timings["run"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    write_csv(out / "results.csv", rows, kind.columns)
    _dump_json(out / "summary.json", dict(summary, kind=config.kind, seed=config.seed))
    _dump_json(out / "config.json", config.to_dict())
    manifest.timings["write"] = time.perf_counter() - t1
    for name in ("config.json", "results.csv", "summary.json"):
        manifest.files[name] = _sha256(out / name)
    _dump_json(out / "manifest.json", manifest.to_dict())
    return manifest


def pac_frequency_check(config) -> dict:
    """Run the PAC-frequency study and return its summary report.

    ``config`` may be of kind ``pac-frequency`` or ``noninterp-frequency``.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    if config.kind not in ("pac-frequency", "noninterp-frequency"):
        raise ConfigError(f"pac_frequency_check needs a frequency config, got {config.kind!r}")
    rows, summary = KINDS[config.kind].run(config)
    return dict(summary, rows=rows)
