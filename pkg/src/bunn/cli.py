"""Command-line entry point: ``bunn <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration or input error, 3 training
divergence, 4 invariant-check failure.
"""
from __future__ import annotations

import argparse
import io
import math
import sys
from pathlib import Path

import numpy as np

from .checks import format_report, run_checks
from .experiments import (
    MODELS, ConfigError, load_config_file, resolve_config, run_experiments,
    run_neighborsmatch,
)
from .graph import (
    GraphError, barbell_graph, binary_tree, clique_graph, cycle_graph, path_graph,
    random_connected_graph, read_edge_list, write_edge_list,
)
from .heat import HeatError, heat_kernel_dense, make_heat_operator
from .seeding import STREAM_DATA, make_rng
from .training import TrainingDivergence

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 2, 3, 4


def _time(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value < 0:
        raise argparse.ArgumentTypeError(f"diffusion time must be >= 0 or inf, got {text!r}")
    return value


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="base random seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes; never changes reported numbers")
    return common


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--model", help=f"comma separated, from {', '.join(MODELS)}")
    p.add_argument("--t", type=_time, help="diffusion time (number or inf)")
    p.add_argument("--bundles", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds")
    p.add_argument("--out", help="directory for results.csv, summary.json, config.resolved")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="bunn", description="Bundle neural network experiments",
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    syn = sub.add_parser("synthetic", parents=[common], help="barbell / clique averaging tasks")
    syn.add_argument("--task", choices=["barbell", "clique"])
    syn.add_argument("--n", type=int, help="number of nodes")
    _experiment_flags(syn)

    nm = sub.add_parser("neighborsmatch", parents=[common], help="Tree-NeighborsMatch train accuracy")
    nm.add_argument("--depth", default="2", help="tree depth, or a comma separated list")
    _experiment_flags(nm)

    chk = sub.add_parser("check", parents=[common], help="run the invariant-check suite")
    chk.add_argument("--scope", default="all", help="check id prefix, e.g. kernel or layer")
    chk.add_argument("--tolerance-scale", type=float, default=1.0,
                     help="multiply every tolerance (below 1 tightens)")
    chk.add_argument("--corrupt-householder", action="store_true",
                     help="test mode: inject a zero reflection vector")

    ker = sub.add_parser("kernel", parents=[common], help="dump a heat kernel as CSV")
    ker.add_argument("--graph", required=True, help="edge-list file")
    ker.add_argument("--t", type=_time, required=True)
    ker.add_argument("--mode", default="dense", choices=["dense", "auto", "taylor", "spectral", "limit"])
    ker.add_argument("--K", type=int, default=8, help="Taylor degree")
    ker.add_argument("--out", help="output file (default stdout)")

    gen = sub.add_parser("gen-graph", parents=[common], help="write a graph as an edge list")
    gen.add_argument("--kind", required=True,
                     choices=["path", "cycle", "barbell", "clique", "tree", "random"])
    gen.add_argument("--n", type=int, default=10)
    gen.add_argument("--depth", type=int, default=2)
    gen.add_argument("--out", help="output file (default stdout)")
    return parser


def _overrides(args, keys) -> dict:
    return {k: getattr(args, k, None) for k in keys}


def _print_results(results) -> None:
    print(f"{'model':24} {'metric':8} {'test mean':>12} {'test std':>10} {'train mean':>12}")
    for res in results:
        test = res.mean("test") if res.task != "neighborsmatch" else math.nan
        std = res.std("test") if res.task != "neighborsmatch" else math.nan
        print(f"{res.model:24} {res.metric_name:8} {test:12.6g} {std:10.3g} {res.mean('train'):12.6g}")


def _cmd_synthetic(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    keys = ["task", "model", "n", "t", "bundles", "layers", "epochs", "lr", "seed", "seeds", "threads"]
    cfg = resolve_config(file_values, _overrides(args, keys))
    if cfg.task == "neighborsmatch":
        raise ConfigError("use the neighborsmatch subcommand for tree tasks")
    _print_results(run_experiments(cfg, args.out))
    return EXIT_OK


def _cmd_neighborsmatch(args) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    file_values["task"] = "neighborsmatch"
    try:
        depths = [int(d) for d in str(args.depth).split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --depth {args.depth!r}") from exc
    keys = ["model", "t", "bundles", "layers", "epochs", "lr", "seed", "seeds", "threads"]
    overrides = _overrides(args, keys)
    overrides["depth"] = depths[0]
    cfg = resolve_config(file_values, overrides)
    models = cfg.models() if args.model or "model" in file_values else ["bunn", "gcn"]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    rows = run_neighborsmatch(depths, models, cfg, args.out)
    print(f"{'model':8} {'depth':>5} {'seed':>5} {'train accuracy':>15}")
    for row in rows:
        print(f"{row['model']:8} {row['depth']:5d} {row['seed']:5d} {row['train_accuracy']:15.4f}")
    return EXIT_OK


def _cmd_check(args) -> int:
    results = run_checks(args.scope, args.tolerance_scale, args.corrupt_householder,
                         seed=getattr(args, "seed", 0))
    print(format_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_kernel(args) -> int:
    g = read_edge_list(args.graph)
    if args.mode == "dense":
        kernel = heat_kernel_dense(g, args.t)
    else:
        kernel = make_heat_operator(g, args.t, args.mode, K=args.K).dense()
    buf = io.StringIO()
    np.savetxt(buf, kernel, fmt="%.17g", delimiter=",")
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _cmd_gen_graph(args) -> int:
    kind = args.kind
    if kind == "path":
        g = path_graph(args.n)
    elif kind == "cycle":
        g = cycle_graph(args.n)
    elif kind == "barbell":
        g, _ = barbell_graph(args.n)
    elif kind == "clique":
        g, _ = clique_graph(args.n)
    elif kind == "tree":
        g = binary_tree(args.depth)
    else:
        g = random_connected_graph(args.n, make_rng(getattr(args, "seed", 0), STREAM_DATA))
    buf = io.StringIO()
    write_edge_list(g, buf)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


COMMANDS = {
    "synthetic": _cmd_synthetic,
    "neighborsmatch": _cmd_neighborsmatch,
    "check": _cmd_check,
    "kernel": _cmd_kernel,
    "gen-graph": _cmd_gen_graph,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GraphError, HeatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
