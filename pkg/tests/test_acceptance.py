"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest

from ddgt.config import CostSpec, ExperimentSpec, GraphSpec
from ddgt.costs import BoxConstraint, NodeProblem, Quadratic, Quartic, dual_gradient, dual_value
from ddgt.errors import StalledDivergence
from ddgt.experiment import bound_alpha, build_instance, run_experiment
from ddgt.graph import build_weights, left_perron, random_digraph, right_perron
from ddgt.metrics import MetricRecord, consensus_error, fit_rate, running_average, running_min
from ddgt.solvers import (
    DualOracle,
    centralized_solve,
    ddgt_init,
    ddgt_run,
    grid_search_alpha,
    ppg_run,
    reference_alpha,
    stepsize_bound,
)

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}


def report(num: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def benchmark_spec(n, kind="quadratic", p=0.05, seed=1, cost_seed=0, box=None, total=None, iters=1000):
    """Experiment spec with the benchmark cost distributions, demand 50 scaled to ``n``."""
    return ExperimentSpec(
        graph=GraphSpec(kind="random", n=n, p=p, seed=seed),
        costs=CostSpec(kind=kind, seed=cost_seed),
        box=box,
        total_demand=50.0 * n / 126 if total is None else total,
        iters=iters,
    )


def tuned(inst, iters, w_star, tol=1e-12):
    return grid_search_alpha(inst.stack, inst.weights, iters, w_star=w_star, tol=tol)[0]


def dense_second_modulus(M):
    return np.sort(np.abs(np.linalg.eigvals(M)))[::-1][1]


# ---------------------------------------------------------------------------


def test_criterion_1_conservation():
    cases = [
        (5, "quadratic", None), (5, "quartic", (-2.0, 2.0)), (20, "quadratic", None),
        (20, "quadratic", (-2.0, 2.0)), (20, "quartic", None), (20, "quartic", (-2.0, 2.0)),
        (126, "quadratic", None), (126, "quadratic", (-2.0, 2.0)), (126, "quartic", None),
        (126, "quartic", (-2.0, 2.0)),
    ]
    worst = 0.0
    for seed, (n, kind, box) in enumerate(cases):
        inst = build_instance(benchmark_spec(n, kind, p=0.2 if n < 126 else 0.05, seed=seed + 1, cost_seed=seed, box=box))
        d = inst.stack.total_demand
        tr = ddgt_run(inst.stack, inst.weights, reference_alpha(inst.stack), 1000, record=False)
        worst = max(worst, max(tr.invariant) / (1e-9 * (1 + np.linalg.norm(d))))
    report(1, worst <= 1.0, f"max conservation violation = {worst:.2e} x tolerance over 10 instances")


_c23_cache = {}


def _criterion_2_3_runs():
    if not _c23_cache:
        runs = []
        for seed in range(3):
            inst = build_instance(benchmark_spec(20, p=0.2, seed=seed + 1, cost_seed=seed))
            W_star, _ = centralized_solve(inst.stack)
            a = inst.stack.a
            b = inst.stack.b[:, 0]
            lam = (b.sum() - inst.stack.total_demand[0]) / (1 / (2 * a)).sum()
            closed = b - lam / (2 * a)
            alpha = tuned(inst, 5000, W_star)
            tr = ddgt_run(inst.stack, inst.weights, alpha, 5000, w_star=W_star)
            runs.append((np.abs(W_star[:, 0] - closed).max(), tr))
        _c23_cache["runs"] = runs
    return _c23_cache["runs"]


def test_criterion_2_oracle_equivalence():
    t0 = time.time()
    runs = _criterion_2_3_runs()
    oracle_err = max(e for e, _ in runs)
    dist = max(tr.records[-1].dist_to_opt for _, tr in runs)
    elapsed = time.time() - t0
    ok = oracle_err <= 1e-10 and dist <= 1e-12 and elapsed < 10 * len(runs)
    report(2, ok, f"oracle vs closed form {oracle_err:.1e}; final dist_to_opt {dist:.1e} ({elapsed:.1f}s, 3 runs)")


def test_criterion_3_linear_rate():
    fits = [fit_rate([r.dist_to_opt for r in tr.records], mode="geometric") for _, tr in _criterion_2_3_runs()]
    ok = all(f.r_squared >= 0.99 and f.value < 1 for f in fits)
    detail = ", ".join(f"lambda={f.value:.4f} R2={f.r_squared:.5f}" for f in fits)
    report(3, ok, detail)


_quartic_cache = {}


def _quartic_runs():
    if not _quartic_cache:
        inst = build_instance(benchmark_spec(126, "quartic"))
        W_star, _ = centralized_solve(inst.stack)
        alpha = tuned(inst, 1000, W_star)
        _quartic_cache["plain"] = (inst, alpha, ddgt_run(inst.stack, inst.weights, alpha, 10_000, w_star=W_star))
        box = build_instance(benchmark_spec(126, "quartic", box=(-2.0, 2.0)))
        Wb, _ = centralized_solve(box.stack)
        alpha_b = tuned(box, 1000, Wb)
        _quartic_cache["box"] = (box, alpha_b, ddgt_run(box.stack, box.weights, alpha_b, 10_000, w_star=Wb,
                                                        keep_states=True))
    return _quartic_cache


def test_criterion_4_sublinear_without_smoothness():
    t0 = time.time()
    _, alpha, tr = _quartic_runs()["plain"]
    elapsed = time.time() - t0
    dist = tr.records[-1].dist_to_opt
    avg = running_average([r.kkt_residual for r in tr.records])
    fit = fit_rate(avg, window=(100, 10_001), mode="power_law")
    ok = dist <= 1e-8 and fit.value <= -0.9 and elapsed < 60
    report(4, ok, f"n=126 quartic, final dist_to_opt {dist:.1e}, running-avg KKT exponent {fit.value:.3f} "
           f"(R2={fit.r_squared:.4f}), {elapsed:.1f}s incl. unconstrained+box runs")


def test_criterion_5_ppg_nonconvex():
    t0 = time.time()
    n, L = 10, 8.0  # |f_i''| = |2 + 6 cos(2(x - b_i))| <= 8
    w = build_weights(random_digraph(n, 0.6, seed=1))
    alpha = 0.99 * stepsize_bound(w.sigma_A, w.sigma_B, L, n)
    b = np.random.default_rng(0).normal(0.0, 2.0, n)

    def grad(X):
        r = X[:, 0] - b
        return (2 * r + 3 * np.sin(2 * r))[:, None]

    gsq, cons = [], []

    def rec(st):
        r = st.xbar(w.pi_A)[0] - b
        gsq.append(float(np.sum(2 * r + 3 * np.sin(2 * r)) ** 2))
        cons.append(consensus_error(st.x, w.pi_A))
        return MetricRecord(k=st.k)

    ppg_run(grad, w, alpha, [0.0], 10_000, recorder=rec)
    fit = fit_rate(running_min(gsq), window=(100, 10_001), mode="power_law")
    cavg = np.cumsum(cons[1:]) / np.arange(1, 10_001)
    bounded = bool(np.isfinite(cavg).all() and cavg[-1] <= cavg[99])
    elapsed = time.time() - t0
    ok = fit.value <= -0.9 and bounded and elapsed < 30
    report(5, ok, f"alpha={alpha:.2e} (0.99 x bound), running-min exponent {fit.value:.3f}, "
           f"avg consensus {cavg[99]:.1e} -> {cavg[-1]:.1e}, {elapsed:.1f}s")


def test_criterion_6_duality_equivalence():
    worst = 0.0
    for seed in range(5):
        kind = "quartic" if seed % 2 else "quadratic"
        box = (-2.0, 2.0) if seed >= 3 else None
        mode = "shared" if seed == 2 else "local"
        spec = benchmark_spec(15, kind, p=0.25, seed=seed + 10, cost_seed=seed, box=box)
        spec.demand_mode = mode
        inst = build_instance(spec)
        alpha = reference_alpha(inst.stack)
        dd = ddgt_run(inst.stack, inst.weights, alpha, 300, demand_mode=mode, record=False, keep_states=True)
        s0 = ddgt_init(inst.stack, mode).s
        pp = ppg_run(DualOracle(inst.stack), inst.weights, alpha, [0.0], 300, y0=s0, grad0=inst.stack.demand,
                     recorder=lambda st: MetricRecord(k=st.k), keep_states=True)
        for a, b in zip(dd.states[1:], pp.states[1:]):
            worst = max(worst, np.abs(a.wbar + b.x).max(), np.abs(a.s - b.y).max())
    report(6, worst <= 1e-10, f"max |x_k + wbar_k|, |y_k - s_k| over 5 instances, k=1..300: {worst:.1e}")


def test_criterion_7_gradient_conjugate():
    rng = np.random.default_rng(7)
    worst_fd, worst_lip = 0.0, -math.inf
    for i in range(100):
        if i % 2:
            cost = Quartic(rng.uniform(0.05, 1), rng.normal(0, 2), rng.uniform(0, 10), rng.normal(0, 2))
        else:
            cost = Quadratic(rng.uniform(0.05, 1), rng.normal(0, 2))
        box = BoxConstraint(-2.0, 2.0) if i % 3 == 0 else BoxConstraint.unbounded()
        p = NodeProblem(cost, box, [rng.normal(0, 1)])
        x, y = rng.normal(0, 3, 2)
        g = dual_gradient(p, x)[0]
        h = 1e-6
        num = (dual_value(p, x + h) - dual_value(p, x - h)) / (2 * h)
        worst_fd = max(worst_fd, abs(g - num) / max(1.0, abs(g)))
        ratio = abs(g - dual_gradient(p, y)[0]) / abs(x - y)
        worst_lip = max(worst_lip, ratio - 1.0 / cost.mu)
    ok = worst_fd <= 1e-5 and worst_lip <= 1e-9
    report(7, ok, f"max FD relative error {worst_fd:.1e}; max Lipschitz excess {worst_lip:.1e}")


def test_criterion_8_graph_layer():
    perron = sums = spec = 0.0
    for seed in range(60):
        n = 2 + seed % 7
        w = build_weights(random_digraph(n, [0.0, 0.2, 0.5][seed % 3], seed))
        perron = max(perron, np.linalg.norm(w.A.T @ w.pi_A - w.pi_A), np.linalg.norm(w.B @ w.pi_B - w.pi_B))
        sums = max(sums, np.abs(w.A.sum(axis=1) - 1).max(), np.abs(w.B.sum(axis=0) - 1).max())
        spec = max(spec, abs(w.sigma_A - dense_second_modulus(w.A)), abs(w.sigma_B - dense_second_modulus(w.B)))
    # the power iterations agree with direct solves too
    A2 = np.array([[0.5, 0.5], [0.25, 0.75]])
    perron = max(perron, np.abs(left_perron(A2) - [1 / 3, 2 / 3]).max(), np.abs(right_perron(A2.T) - [1 / 3, 2 / 3]).max())
    ok = perron <= 1e-10 and sums <= 1e-12 and spec <= 1e-8
    report(8, ok, f"Perron residual {perron:.1e}, stochasticity {sums:.1e}, sigma vs eigvals {spec:.1e} (60 graphs, n<=8)")


def test_criterion_9_box_constrained():
    runs = _quartic_runs()
    _, _, plain = runs["plain"]
    box, _, boxed = runs["box"]

    def first(tr):
        return next((r.k for r in tr.records if r.dist_to_opt <= 1e-4), None)

    k_plain, k_box = first(plain), first(boxed)
    inside = all(((s.w >= box.stack.lower) & (s.w <= box.stack.upper)).all() for s in boxed.states)
    ok = k_plain is not None and k_box is not None and k_box <= 3 * k_plain and inside
    report(9, ok, f"iterations to dist<=1e-4: unconstrained {k_plain}, box {k_box}; all iterates in box: {inside}")


def test_criterion_10_stepsize_bound():
    diverged_at_bound = 0
    detected = 0
    for seed in range(10):
        inst = build_instance(benchmark_spec(20, p=0.2, seed=seed + 1, cost_seed=seed))
        a_bound = bound_alpha(inst)
        try:
            tr = ddgt_run(inst.stack, inst.weights, a_bound, 2000, record=False)
            if not np.isfinite(tr.final_state.w).all():
                diverged_at_bound += 1
        except StalledDivergence:
            diverged_at_bound += 1
        W_star, _ = centralized_solve(inst.stack)
        a_tuned = tuned(inst, 1000, W_star)
        try:
            ddgt_run(inst.stack, inst.weights, 100 * a_tuned, 5000, record=False)
        except StalledDivergence:
            detected += 1
    ok = diverged_at_bound == 0 and detected == 10
    report(10, ok, f"divergence at the bound: {diverged_at_bound}/10; StalledDivergence at 100x tuned: {detected}/10")


def test_criterion_11_determinism():
    spec = benchmark_spec(30, "quartic", p=0.15, box=(-2.0, 2.0), iters=300)
    spec.alpha = "auto"
    spec.algorithms = ("ddgt", "ppg_dual", "oracle")
    with tempfile.TemporaryDirectory() as tmp:
        outs = [os.path.join(tmp, k) for k in "ab"]
        for out in outs:
            run_experiment(spec, out_dir=out)
        names = sorted(os.listdir(outs[0]))
        same = all(open(os.path.join(outs[0], f), "rb").read() == open(os.path.join(outs[1], f), "rb").read()
                   for f in names)
    report(11, same, f"{len(names)} output files byte-identical across two runs")


if __name__ == "__main__":
    failed = 0
    checks = [(int(k.split("_")[2]), f) for k, f in globals().items() if k.startswith("test_criterion_")]
    for _, fn in sorted(checks, key=lambda c: c[0]):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
