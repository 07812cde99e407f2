"""Command line interface: ``causalida <verb> ...``.

Exit codes: 0 success, 2 invalid input, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .effects import ida_global, ida_local, jointida_mcd, jointida_rrc
from .graphs import BudgetExceeded, Dag, GraphError, dag_to_cpdag, graph_from_json, graph_to_json
from .harness import (
    BenchmarkConfig,
    InstanceError,
    bench,
    learn,
    parse_order,
    stability_run,
    stream,
    structural_metrics,
)
from .indep import SampleTooSmallError
from .sem import DegenerateInputError, density_for_degree, random_sem, sem_from_json, sem_to_json, simulate

EXIT_INVALID = 2
EXIT_BUDGET = 3


def _read_json(path):
    return json.loads(Path(path).read_text())


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def read_data(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    df.columns = [str(c) for c in df.columns]
    if df.isna().any().any():
        raise ValueError(f"{path}: missing values")
    return df.astype(float)


def read_covariance(path) -> pd.DataFrame:
    df = read_data(path)
    if df.shape[0] != df.shape[1]:
        raise ValueError(f"{path}: covariance must be square")
    df.index = df.columns
    return df


def _out_path(args, name):
    if getattr(args, "out", None):
        return args.out
    return str(Path(args.out_dir) / name)


def cmd_simulate(args):
    if args.sem:
        sem = sem_from_json(_read_json(args.sem))
    else:
        density = args.density if args.density is not None else density_for_degree(args.p, args.degree)
        sem = random_sem(args.p, density, stream(args.seed, "instance"))
    data = simulate(sem, args.n, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not args.sem:
        _write_json(sem_to_json(sem), out / "sem.json")
    data.to_csv(_out_path(args, "data.csv"), index=False, float_format="%.17g")


def cmd_learn(args):
    data = read_data(args.data)
    order = parse_order(args.order, data.columns)
    g, report = learn(data, args.algo, args.alpha, order, args.max_cond, args.rank)
    out = _out_path(args, f"{args.algo}.json")
    _write_json(graph_to_json(g), out)
    report_path = args.report or (None if out == "-" else str(Path(out).with_suffix(".report.json")))
    if report_path:
        _write_json(report.to_dict(), report_path)


def cmd_effects(args):
    c = graph_from_json(_read_json(args.cpdag))
    if args.cov:
        cov = read_covariance(args.cov)
    elif args.data:
        cov = read_data(args.data).cov()
    else:
        raise ValueError("one of --data or --cov is required")
    xs = [v for v in args.x.split(",") if v]
    if args.method in ("ida-local", "ida-global"):
        if len(xs) != 1:
            raise ValueError(f"{args.method} takes a single --x")
        fn = ida_local if args.method == "ida-local" else ida_global
        res = fn(c, cov, xs[0], args.y)
    else:
        fn = jointida_mcd if args.method == "jointida-mcd" else jointida_rrc
        res = fn(c, cov, xs, args.y, max_dags=args.max_dags)
    obj = res.to_dict()
    obj["method"] = args.method
    _write_json(obj, _out_path(args, "effects.json"))


def cmd_eval(args):
    truth_obj = _read_json(args.truth)
    truth = graph_from_json(truth_obj)
    if isinstance(truth, Dag) and not args.as_is:
        truth = dag_to_cpdag(truth)
    est = graph_from_json(_read_json(args.estimate))
    _write_json(structural_metrics(truth, est), _out_path(args, "metrics.json"))


def cmd_stability(args):
    data = read_data(args.data)
    cfg = BenchmarkConfig(
        p=max(2, data.shape[1]),
        n=len(data),
        alphas=[args.alpha],
        algorithms=[args.algo],
        runs=args.runs,
        fraction=args.fraction,
        permute=args.permute,
        max_cond=args.max_cond,
    )
    table = stability_run(data, args.algo, cfg, args.seed)
    path = _out_path(args, f"{args.algo}.frequencies.csv")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    table.to_frame().to_csv(path, index=False, float_format="%.17g")


def cmd_bench(args):
    obj = _read_json(args.config) if args.config else {}
    for key in ("p", "n", "runs", "fraction", "density", "degree"):
        val = getattr(args, key)
        if val is not None:
            obj[key] = val
    if args.alphas:
        obj["alphas"] = [float(a) for a in args.alphas.split(",")]
    if args.algos:
        obj["algorithms"] = args.algos.split(",")
    if args.instances is not None:
        rng = stream(args.seed, "bench-seeds")
        obj["seeds"] = [int(s) for s in rng.integers(0, 2**31 - 1, size=args.instances)]
    elif "seeds" not in obj:
        obj["seeds"] = [args.seed]
    if args.no_permute:
        obj["permute"] = False
    cfg = BenchmarkConfig.from_dict(obj)
    summary = bench(cfg, args.out_dir, args.threads)
    if args.verbose:
        print(summary.to_string(index=False))


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress):
        # subcommands must not reset flags given before the verb
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=dflt(0))
        g.add_argument("--out-dir", default=dflt("."))
        g.add_argument("--threads", type=int, default=dflt(1))
        g.add_argument("-v", "--verbose", action="store_true", default=dflt(False))
        return g

    common = global_flags(True)
    parser = argparse.ArgumentParser(
        prog="causalida",
        description=__doc__,
        parents=[global_flags(False)],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate data from a SEM")
    p.add_argument("--sem", help="SEM JSON; a random SEM is drawn if omitted")
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--density", type=float)
    p.add_argument("--degree", type=float, default=2.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", parents=[common], help="learn a CPDAG from data")
    p.add_argument("--algo", choices=["pc", "pc-stable", "ges"], default="pc-stable")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--order", default="asgiven", help='file, "asgiven" or "permute:SEED"')
    p.add_argument("--max-cond", type=int)
    p.add_argument("--rank", action="store_true", help="rank-correlation pre-transform")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("effects", parents=[common], help="IDA / jointIDA effect multisets")
    p.add_argument("--method", choices=["ida-local", "ida-global", "jointida-mcd", "jointida-rrc"], default="ida-local")
    p.add_argument("--cpdag", required=True)
    p.add_argument("--data")
    p.add_argument("--cov")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--max-dags", type=int, default=10_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_effects)

    p = sub.add_parser("eval", parents=[common], help="SHD and skeleton TPR/FPR")
    p.add_argument("--truth", required=True, help="graph or SEM JSON")
    p.add_argument("--estimate", required=True)
    p.add_argument("--as-is", action="store_true", help="do not convert a DAG truth to its CPDAG")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stability", parents=[common], help="subsampled edge frequencies")
    p.add_argument("--data", required=True)
    p.add_argument("--algo", choices=["pc", "pc-stable", "ges"], default="pc-stable")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--permute", action="store_true")
    p.add_argument("--max-cond", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("bench", parents=[common], help="end-to-end synthetic benchmark")
    p.add_argument("--config", help="BenchmarkConfig JSON")
    p.add_argument("--p", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--degree", type=float)
    p.add_argument("--alphas")
    p.add_argument("--algos")
    p.add_argument("--runs", type=int)
    p.add_argument("--fraction", type=float)
    p.add_argument("--instances", type=int)
    p.add_argument("--no-permute", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (
        GraphError,
        DegenerateInputError,
        SampleTooSmallError,
        InstanceError,
        ValueError,
        KeyError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return 0


if __name__ == "__main__":
    sys.exit(main())
