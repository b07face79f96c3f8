"""Experiment orchestration: build an instance from a spec, run, write outputs.

Outputs land in ``spec.output_dir`` (or an explicit override):

* ``<algo>_trace.csv`` for ``ddgt`` and ``ppg_dual``, one row per ``k = 0..iters``
* ``oracle_solution.csv`` when ``oracle`` is requested
* ``summary.json`` with final metrics, rate fits, stepsize and constants
* ``resolved_config.json``, the full spec with every default filled in

Files are written to a scratch directory and moved into place only after the
whole run succeeded, so a failure leaves nothing half-written behind.
"""

from __future__ import annotations

import csv
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass

import numpy as np

from . import metrics
from .config import ExperimentSpec, resolved_dict
from .costs import BoxConstraint, NodeProblem, ProblemStack, Quadratic, Quartic
from .errors import ConfigError, DdgtError, NonPositiveSeries
from .graph import (
    DirectedGraph,
    WeightMatrices,
    build_weights,
    complete_graph,
    random_digraph,
    read_edge_list,
    ring_graph,
)
from .solvers import (
    DualOracle,
    SweepCell,
    Trace,
    centralized_solve,
    ddgt_init,
    ddgt_run,
    default_alpha_grid,
    dual_lipschitz,
    evaluate_alpha,
    first_tracker_deviation,
    grid_search_alpha,
    ppg_dual_recorder,
    ppg_run,
    stepsize_bound,
)

SWEEP_COLUMNS = ("alpha", "status", "iters_to_tol", "final_error")
THRESHOLDS = (1e-4, 1e-8, 1e-12)


@dataclass(eq=False)
class Instance:
    graph: DirectedGraph
    weights: WeightMatrices
    problems: list[NodeProblem]
    stack: ProblemStack


def build_graph(spec: ExperimentSpec) -> DirectedGraph:
    g = spec.graph
    if g.kind == "random":
        return random_digraph(g.n, g.p, g.seed)
    if g.kind == "complete":
        return complete_graph(g.n)
    if g.kind == "ring":
        return ring_graph(g.n)
    return read_edge_list(g.path)


def draw_costs(spec: ExperimentSpec, n: int) -> list:
    """Cost parameters from the cost seed, independent of the graph seed."""
    c = spec.costs
    rng = np.random.default_rng(c.seed)
    a = rng.uniform(c.a[0], c.a[1], n)
    # a uniform draw can land exactly on a zero lower end; nudge to keep a > 0
    a = np.where(a > 0, a, np.nextafter(0.0, 1.0))
    if c.kind == "quadratic":
        b = rng.normal(c.b[0], math.sqrt(c.b[1]), (n, c.dim))
        return [Quadratic(float(a[i]), b[i]) for i in range(n)]
    b = rng.normal(c.b[0], math.sqrt(c.b[1]), n)
    cc = rng.uniform(c.c[0], c.c[1], n)
    d = rng.normal(c.d[0], math.sqrt(c.d[1]), n)
    return [Quartic(float(a[i]), float(b[i]), float(cc[i]), float(d[i])) for i in range(n)]


def node_demands(spec: ExperimentSpec, n: int) -> np.ndarray:
    m = spec.costs.dim
    td = spec.total_demand
    if not isinstance(td, list):
        return np.full((n, m), float(td) / n)
    if len(td) != n:
        raise ConfigError("total_demand", f"per-node list has {len(td)} entries for {n} nodes")
    out = np.empty((n, m))
    for i, v in enumerate(td):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.shape not in ((1,), (m,)):
            raise ConfigError(f"total_demand[{i}]", f"expected a number or {m} numbers")
        out[i] = v
    return out


def build_instance(spec: ExperimentSpec) -> Instance:
    g = build_graph(spec)
    weights = build_weights(g)
    costs = draw_costs(spec, g.n)
    demands = node_demands(spec, g.n)
    m = spec.costs.dim
    box = BoxConstraint.unbounded(m) if spec.box is None else BoxConstraint(*spec.box)
    problems = [NodeProblem(costs[i], box, demands[i]) for i in range(g.n)]
    return Instance(g, weights, problems, ProblemStack(problems))


# ------------------------------------------------------------------ output


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dump_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace(path: str, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics.CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.as_row())


def write_sweep(path: str, cells) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for c in cells:
            w.writerow([
                repr(c.alpha),
                c.status,
                "" if c.iters_to_tol is None else str(c.iters_to_tol),
                "" if c.final_error is None else repr(c.final_error),
            ])


class _Staging:
    """Scratch directory whose files are moved into ``target`` on success."""

    def __init__(self, target: str):
        self.target = os.path.abspath(target)

    def __enter__(self) -> str:
        parent = os.path.dirname(self.target)
        os.makedirs(parent, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=".staging-", dir=parent)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                os.makedirs(self.target, exist_ok=True)
                for name in sorted(os.listdir(self.tmp)):
                    os.replace(os.path.join(self.tmp, name), os.path.join(self.target, name))
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


# ------------------------------------------------------------------- runs


def _first_below(series, thresholds=THRESHOLDS) -> dict:
    out = {}
    for t in thresholds:
        hit = next((k for k, v in enumerate(series) if v is not None and v <= t), None)
        out[f"{t:g}"] = hit
    return out


def rate_summary(records) -> dict:
    """Geometric fit of ``dist_to_opt`` and power-law fit of the running-average KKT residual."""
    out = {}
    dist = [r.dist_to_opt for r in records]
    if len(records) >= 3 and all(v is not None for v in dist):
        try:
            fit = metrics.fit_rate(dist, mode="geometric")
            out["dist_to_opt_geometric"] = {
                "lambda": fit.value, "r_squared": fit.r_squared, "window": list(fit.window)
            }
        except (NonPositiveSeries, ValueError):
            out["dist_to_opt_geometric"] = None
        out["iters_to_dist"] = _first_below(dist)
    kkt = [r.kkt_residual for r in records]
    if len(records) >= 3 and all(v is not None for v in kkt):
        avg = metrics.running_average(kkt)
        lo = min(100, len(avg) // 2) or 1
        try:
            fit = metrics.fit_rate(avg, window=(lo, len(avg)), mode="power_law")
            out["kkt_running_average_power_law"] = {
                "exponent": fit.value, "r_squared": fit.r_squared, "window": list(fit.window)
            }
        except (NonPositiveSeries, ValueError):
            out["kkt_running_average_power_law"] = None
    return out


def _final(rec: metrics.MetricRecord) -> dict:
    d = rec.as_dict()
    d.pop("k")
    return d


def resolve_alpha(spec: ExperimentSpec, inst: Instance, w_star):
    """Return ``(alpha, mode, sweep_cells)``."""
    if not isinstance(spec.alpha, str):
        return float(spec.alpha), "fixed", None
    if spec.alpha == "bound":
        return bound_alpha(inst, spec.demand_mode), "bound", None
    alpha, cells = grid_search_alpha(
        inst.stack, inst.weights, spec.iters, grid=spec.alpha_grid, w_star=w_star,
        tol=spec.tol, demand_mode=spec.demand_mode,
    )
    return alpha, "auto", cells


def _tracker_dev(inst: Instance, alpha: float, demand_mode: str) -> float:
    s0 = ddgt_init(inst.stack, demand_mode).s
    return first_tracker_deviation(
        DualOracle(inst.stack), inst.weights, alpha, np.zeros(inst.stack.m), y0=s0, grad0=inst.stack.demand
    )


def bound_alpha(inst: Instance, demand_mode: str = "local") -> float:
    w = inst.weights
    L = dual_lipschitz(inst.stack)
    single = stepsize_bound(w.sigma_A, w.sigma_B, L, inst.stack.n)
    dev = _tracker_dev(inst, single, demand_mode)
    return stepsize_bound(w.sigma_A, w.sigma_B, L, inst.stack.n, pi_A=w.pi_A, pi_B=w.pi_B, tracker_dev=dev)


def run_ppg_dual(inst: Instance, alpha: float, iters: int, demand_mode: str, w_star=None) -> Trace:
    """PPG on the dual, started where DDGT starts: ``x_0 = 0``, ``y_0 = s_0``, reference gradient ``d_i``."""
    s0 = ddgt_init(inst.stack, demand_mode).s
    return ppg_run(
        DualOracle(inst.stack), inst.weights, alpha, np.zeros(inst.stack.m), iters,
        y0=s0, grad0=inst.stack.demand,
        recorder=ppg_dual_recorder(inst.stack, inst.weights.pi_A, w_star),
    )


def run_experiment(spec: ExperimentSpec, out_dir: str | None = None) -> dict:
    """Run every requested algorithm and write the output files.

    Returns the summary dictionary that is also written to ``summary.json``.
    """
    target = out_dir if out_dir is not None else spec.output_dir
    inst = build_instance(spec)
    stack, w = inst.stack, inst.weights
    d = stack.total_demand

    try:
        w_star, lam = centralized_solve(stack)
    except DdgtError:
        if "oracle" in spec.algorithms:
            raise
        w_star, lam = None, None

    summary: dict = {
        "n": stack.n,
        "m": stack.m,
        "sigma_A": w.sigma_A,
        "sigma_B": w.sigma_B,
        "dual_lipschitz": dual_lipschitz(stack),
        "stepsize_bound": stepsize_bound(w.sigma_A, w.sigma_B, dual_lipschitz(stack), stack.n),
        "alpha_used": None,
        "alpha_mode": None,
        # the KKT residual assumes interior optima; with a box it is reported but not gated on
        "kkt_gating": not stack.bounded,
        "algorithms": {},
    }

    iterative = [a for a in spec.algorithms if a != "oracle"]
    traces: dict[str, Trace] = {}
    if iterative:
        alpha, mode, cells = resolve_alpha(spec, inst, w_star)
        summary["alpha_used"] = alpha
        summary["alpha_mode"] = mode
        if cells is not None:
            summary["alpha_search"] = [c.__dict__ for c in cells]
        for algo in iterative:
            if algo == "ddgt":
                traces[algo] = ddgt_run(stack, w, alpha, spec.iters, spec.demand_mode, w_star=w_star)
            else:
                traces[algo] = run_ppg_dual(inst, alpha, spec.iters, spec.demand_mode, w_star)
        final_w = {
            algo: tr.final_state.w if algo == "ddgt" else stack.demand - tr.final_state.grad_prev
            for algo, tr in traces.items()
        }
        for algo, tr in traces.items():
            summary["algorithms"][algo] = {
                "final": _final(tr.records[-1]),
                "rates": rate_summary(tr.records),
                "invariant_max": max(tr.invariant),
                "final_allocation_range": [float(final_w[algo].min()), float(final_w[algo].max())],
            }
        primary = traces.get("ddgt", next(iter(traces.values())))
        summary["kkt_residual"] = primary.records[-1].kkt_residual
        if "ddgt" in traces:
            summary["conservation_max_violation"] = max(traces["ddgt"].invariant)
        else:
            # PPG carries the same identity as sum(y) = sum(grad), i.e. sum(w + s) = d
            summary["conservation_max_violation"] = max(primary.invariant)
        dev = _tracker_dev(inst, alpha, spec.demand_mode)
        tc = metrics.theoretical_constants(
            w.sigma_A, w.sigma_B, w.pi_A, w.pi_B, dual_lipschitz(stack), stack.n, alpha, tracker_dev=dev
        )
        summary["theoretical_constants"] = tc.as_dict()

    if w_star is not None:
        summary["oracle"] = {
            "multiplier": lam,
            "objective": float(stack.values(w_star).sum()),
            "kkt_residual": metrics.kkt_residual(stack, w_star)[0],
        }
    if not iterative:
        summary["kkt_residual"] = summary["oracle"]["kkt_residual"]
        summary["conservation_max_violation"] = float(np.linalg.norm(w_star.sum(axis=0) - d))

    with _Staging(target) as tmp:
        for algo, tr in traces.items():
            write_trace(os.path.join(tmp, f"{algo}_trace.csv"), tr.records)
        if "oracle" in spec.algorithms:
            write_oracle(os.path.join(tmp, "oracle_solution.csv"), w_star)
        _dump_json(os.path.join(tmp, "summary.json"), summary)
        _dump_json(os.path.join(tmp, "resolved_config.json"), resolved_dict(spec))
    return _clean(summary)


def write_oracle(path: str, W) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["node", "coord", "w"])
        for i, row in enumerate(np.asarray(W)):
            for j, v in enumerate(row):
                wr.writerow([i, j, repr(float(v))])


def oracle_solution(spec: ExperimentSpec) -> dict:
    inst = build_instance(spec)
    W, lam = centralized_solve(inst.stack)
    return _clean({
        "allocations": W,
        "multiplier": lam,
        "objective": float(inst.stack.values(W).sum()),
        "kkt_residual": metrics.kkt_residual(inst.stack, W)[0],
    })


def sweep_alpha(spec: ExperimentSpec, grid, out_dir: str | None = None) -> dict:
    """Run DDGT once per stepsize in ``grid`` and tabulate the outcomes.

    Divergent cells are recorded, not raised. ``grid=None`` uses the default
    grid around the smallest local strong-convexity modulus.
    """
    target = out_dir if out_dir is not None else spec.output_dir
    inst = build_instance(spec)
    try:
        w_star, _ = centralized_solve(inst.stack)
    except DdgtError:
        w_star = None
    grid = default_alpha_grid(inst.stack) if grid is None else [float(a) for a in grid]
    cells: list[SweepCell] = [
        evaluate_alpha(inst.stack, inst.weights, a, spec.iters, w_star, spec.tol, spec.demand_mode)
        for a in grid
    ]
    conv = [c for c in cells if c.status == "converged"]
    best = min(conv, key=lambda c: (c.iters_to_tol, c.final_error)).alpha if conv else None
    result = {"cells": [c.__dict__ for c in cells], "best_alpha": best, "tol": spec.tol}
    with _Staging(target) as tmp:
        write_sweep(os.path.join(tmp, "sweep.csv"), cells)
        _dump_json(os.path.join(tmp, "sweep_summary.json"), result)
        _dump_json(os.path.join(tmp, "resolved_config.json"), resolved_dict(spec))
    return _clean(result)
