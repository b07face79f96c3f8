"""Command-line entry point.

Subcommands::

    ddgt run --config exp.json [--out DIR]
    ddgt sweep --config exp.json --alphas 0.01,0.1,1 [--out DIR]
    ddgt oracle --config exp.json
    ddgt check-graph --edges graph.txt

Results go to stdout as JSON. Failures print ``{"error": ..., "message": ...}``
to stderr and exit with status 1; a graph that is not strongly connected makes
``check-graph`` exit with status 3 after printing its report.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import ConfigError, DdgtError
from .experiment import _clean, oracle_solution, run_experiment, sweep_alpha
from .graph import build_weights, is_strongly_connected, read_edge_list

EXIT_ERROR = 1
EXIT_NOT_CONNECTED = 3


def _alphas(text: str) -> list[float]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        vals = [float(t) for t in items]
    except ValueError:
        raise ConfigError("--alphas", f"not a comma-separated list of numbers: {text!r}") from None
    if any(not v > 0 for v in vals):
        raise ConfigError("--alphas", "stepsizes must be positive")
    return vals


def _print(obj) -> None:
    print(json.dumps(_clean(obj), indent=2, sort_keys=True))


def cmd_run(args) -> int:
    spec = load_config(args.config)
    summary = run_experiment(spec, out_dir=args.out)
    _print(summary)
    return 0


def cmd_sweep(args) -> int:
    spec = load_config(args.config)
    grid = None if args.alphas is None else _alphas(args.alphas)
    _print(sweep_alpha(spec, grid, out_dir=args.out))
    return 0


def cmd_oracle(args) -> int:
    _print(oracle_solution(load_config(args.config)))
    return 0


def cmd_check_graph(args) -> int:
    g = read_edge_list(args.edges)
    n_edges = sum(len(s) for s in g.in_neighbors) - g.n
    report = {"n": g.n, "edges": n_edges, "strongly_connected": is_strongly_connected(g)}
    if not report["strongly_connected"]:
        report.update(sigma_A=None, sigma_B=None)
        _print(report)
        return EXIT_NOT_CONNECTED
    w = build_weights(g)
    report.update(sigma_A=w.sigma_A, sigma_B=w.sigma_B)
    _print(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddgt", description="Distributed dual gradient tracking experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run DDGT over a stepsize grid")
    s.add_argument("--config", required=True)
    s.add_argument("--alphas", default=None, help="comma-separated stepsizes")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="print the centralized solution")
    o.add_argument("--config", required=True)
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("check-graph", help="connectivity and spectral report for an edge list")
    c.add_argument("--edges", required=True)
    c.set_defaults(func=cmd_check_graph)
    return p


def _error_payload(exc: BaseException) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("path", "reason", "line", "k"):
        v = getattr(exc, attr, None)
        if v is not None and not callable(v):
            payload[attr] = v
    return payload


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DdgtError, OSError, ValueError) as exc:
        print(json.dumps(_error_payload(exc), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
