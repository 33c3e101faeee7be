"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 budget exhausted,
4 internal invariant violation. Errors are printed to stderr as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, bounds
from .contnet import margin_density_experiment
from .experiments import (
    ConfigError,
    ExperimentConfig,
    InvariantViolation,
    margin_rows,
    run_experiment,
    write_csv,
    Margins,
)
from .oracle import BudgetError, EnumBudget, oracle_report
from .quantnet import Activation, FcArch, QuantGrid
from .sampler import BudgetExhausted, PriorSpec, gnc
from .stats import derive_seed
from .teacher import InputDomain, generate_dataset, sample_teacher

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_INVARIANT = 0, 2, 3, 4


def _print(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=str))


def _report(name, c_hat, inputs, eps=None, delta=None, notes=""):
    n = bounds.n_lemma1(c_hat, eps, delta) if eps is not None and delta is not None else None
    return bounds.BoundReport(name, c_hat, n, inputs, notes).to_dict()


def cmd_bounds(args) -> int:
    k = args.kind
    if k in ("fc", "sfc"):
        fn = bounds.chat_fc if k == "fc" else bounds.chat_sfc
        c = fn(args.teacher, args.student, args.d0, args.Q)
        inputs = {"teacher": args.teacher, "student": args.student, "d0": args.d0, "Q": args.Q}
        _print(_report(f"chat_{k}", c, inputs, args.eps, args.delta))
    elif k in ("cnn", "scn"):
        fn = bounds.chat_cnn if k == "cnn" else bounds.chat_scn
        c = fn(args.teacher, args.student, args.kernels, args.ds, args.Q)
        inputs = {"teacher": args.teacher, "student": args.student, "kernels": args.kernels, "d_s": args.ds, "Q": args.Q}
        _print(_report(f"chat_{k}", c, inputs, args.eps, args.delta))
    elif k == "sparse":
        c = bounds.chat_sparse(args.m_star, args.d0, args.Q)
        n = bounds.n_sparse(args.m_star, args.d0, args.Q, args.eps, args.delta)
        inputs = {"M_star": args.m_star, "d0": args.d0, "Q": args.Q, "eps": args.eps, "delta": args.delta}
        _print(bounds.BoundReport("n_sparse", c, n, inputs).to_dict())
    elif k == "cont":
        res = bounds.chat_cont(args.d0, args.d1, args.d1_star, args.alpha, args.beta, args.rho)
        inputs = {"d0": args.d0, "d1": args.d1, "d1_star": args.d1_star, "alpha": args.alpha,
                  "beta": args.beta, "rho": args.rho}
        out = _report("chat_cont", res.exact, inputs, args.eps, args.delta, notes=f"unmodeled: {res.unmodeled}")
        out.update({"gamma": res.gamma, "asymptotic": res.asymptotic, "exact_teacher_dim": res.exact_teacher_dim})
        _print(out)
    return EXIT_OK


def _instance_from_args(args):
    grid = QuantGrid.default(args.Q)
    t_arch = FcArch(tuple(args.teacher), args.flavor)
    s_arch = FcArch(tuple(args.student), args.flavor)
    d0 = t_arch.widths[0]
    domain = InputDomain.hypercube(d0) if args.domain == "hypercube" else InputDomain.gaussian(d0)
    act = Activation() if args.rho is None else Activation.lrelu(args.rho)
    teacher = sample_teacher(t_arch, grid, derive_seed(args.seed, "teacher"), "reject-constant", domain, act)
    return grid, t_arch, s_arch, domain, teacher


def cmd_gnc(args) -> int:
    grid, _, s_arch, domain, teacher = _instance_from_args(args)
    S = generate_dataset(domain, teacher, args.N, derive_seed(args.seed, "data"))
    trace = gnc(PriorSpec(s_arch, grid, teacher.act), S, args.max_draws, args.seed, args.workers)
    record = trace.record()
    record["params"] = trace.params.values.tolist()
    record["train_error"] = trace.train_error
    _print(record)
    return EXIT_OK


def cmd_oracle(args) -> int:
    grid, _, s_arch, domain, teacher = _instance_from_args(args)
    if args.exhaustive:
        S = generate_dataset(domain, teacher, domain.size, None, exhaustive=True)
    else:
        S = generate_dataset(domain, teacher, args.N, derive_seed(args.seed, "data"))
    _print(oracle_report(s_arch, teacher, grid, domain, S, args.eps, EnumBudget(args.budget)))
    return EXIT_OK


def cmd_margins(args) -> int:
    res = margin_density_experiment(args.d0, args.d1, args.d1_star, args.rho, args.N, args.trials,
                                    args.seed, args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "margins.csv", margin_rows(res), Margins.columns)
    summary = res.summary()
    (out / "margins.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _print(summary)
    return EXIT_OK


def cmd_solve_teacher(args) -> int:
    spec = bounds.load_channel_spec(args.bundled) if args.bundled else {}
    if args.spec:
        spec.update(json.loads(Path(args.spec).read_text()))
    missing = [k for k in ("channels", "kernels", "N", "eps", "delta", "Q") if k not in spec]
    if missing:
        raise ConfigError(f"channel spec lacks {missing}")
    res = bounds.solve_teacher_scale(
        spec["channels"], spec["kernels"], spec["N"], spec["eps"], spec["delta"], spec["Q"],
        spec.get("head_spatial", 1), spec.get("head_outputs", 1),
    )
    out = res.to_dict()
    if res.saturated:
        out["note"] = "student-sized teacher suffices"
    _print(out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    data = cfg.to_dict()
    if args.seed_given:
        data["seed"] = args.seed
    if args.workers_given:
        data["workers"] = args.workers
    cfg = ExperimentConfig.from_dict(dict(data, out_dir=cfg.out_dir))
    manifest = run_experiment(cfg, args.out_dir_given and args.out_dir or None)
    _print(manifest.to_dict())
    return EXIT_OK


def _fail(code: int, kind: str, exc: Exception) -> int:
    err = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(err), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnclab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=None, help="root 64-bit seed (default 0)")
    parser.add_argument("--workers", type=int, default=None, help="worker threads (default 1)")
    parser.add_argument("--out-dir", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="print a BoundReport as JSON")
    p.add_argument("kind", choices=["fc", "sfc", "cnn", "scn", "sparse", "cont"])
    p.add_argument("--teacher", type=int, nargs="+", help="teacher widths d*_1..d*_L or channels c*_0..c*_L")
    p.add_argument("--student", type=int, nargs="+", help="student widths or channels")
    p.add_argument("--kernels", type=int, nargs="+")
    p.add_argument("--ds", type=int, help="head width (d_s for cnn, d*_s for scn)")
    p.add_argument("--d0", type=int)
    p.add_argument("--d1", type=int)
    p.add_argument("--d1-star", type=int)
    p.add_argument("--m-star", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--Q", type=int, default=2)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.set_defaults(func=cmd_bounds)

    for name, func, helptext in (("gnc", cmd_gnc, "run Guess & Check once"),
                                 ("oracle", cmd_oracle, "exact oracle report")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--teacher", type=int, nargs="+", required=True, help="teacher widths d_0..d_L")
        p.add_argument("--student", type=int, nargs="+", required=True, help="student widths d_0..d_L")
        p.add_argument("--flavor", choices=["vanilla", "scaled"], default="vanilla")
        p.add_argument("--Q", type=int, default=3)
        p.add_argument("--domain", choices=["hypercube", "gaussian"], default="hypercube")
        p.add_argument("--rho", type=float, default=None, help="leaky ReLU slope (default ReLU)")
        p.add_argument("--N", type=int, default=8)
        p.set_defaults(func=func)
        if name == "gnc":
            p.add_argument("--max-draws", type=int, default=10**8)
        else:
            p.add_argument("--eps", type=float, default=0.2)
            p.add_argument("--budget", type=int, default=10**8)
            p.add_argument("--exhaustive", action="store_true", help="train on the whole domain")

    p = sub.add_parser("margins", help="angular-margin experiment; writes CSV and JSON")
    p.add_argument("--d0", type=int, default=50)
    p.add_argument("--d1", type=int, default=1000)
    p.add_argument("--d1-star", type=int, default=100)
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--N", type=int, default=5000)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_margins)

    p = sub.add_parser("solve-teacher", help="teacher-width solve from a channel spec")
    p.add_argument("spec", nargs="?", help="channel-spec JSON {channels, kernels, N, eps, delta, Q}")
    p.add_argument("--bundled", default=None, help="bundled spec name, e.g. resnet18")
    p.set_defaults(func=cmd_solve_teacher)

    p = sub.add_parser("experiment", help="run an experiment config")
    esub = p.add_subparsers(dest="action", required=True)
    r = esub.add_parser("run")
    r.add_argument("config")
    r.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    args.workers_given = args.workers is not None
    args.out_dir_given = args.out_dir is not None
    args.seed = 0 if args.seed is None else args.seed
    args.workers = 1 if args.workers is None else args.workers
    args.out_dir = args.out_dir or "."
    try:
        return args.func(args)
    except (BudgetExhausted, BudgetError) as exc:
        return _fail(EXIT_BUDGET, "budget-exhausted", exc)
    except InvariantViolation as exc:
        return _fail(EXIT_INVARIANT, "invariant-violation", exc)
    except (ConfigError, ValueError, TypeError, KeyError, FileNotFoundError) as exc:
        return _fail(EXIT_INVALID, "validation-error", exc)


if __name__ == "__main__":
    sys.exit(main())
