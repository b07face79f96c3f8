"""Distributed dual gradient tracking, push-pull gradient, and centralized oracles.

Both iterations are synchronous matrix recursions: every round reads only the
round-``k`` state of all nodes and writes round ``k+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .costs import ProblemStack, dual_gradient, solve_stationarity
from .errors import (
    DimensionMismatch,
    InfeasibleBounds,
    InnerSolverFailure,
    NoConvergence,
    StalledDivergence,
)
from .graph import DirectedGraph, WeightMatrices, build_weights

# beyond this magnitude the inner solve loses all precision; treat as divergence
_HUGE = 1e150


@dataclass(frozen=True, eq=False)
class DdgtState:
    wbar: np.ndarray
    w: np.ndarray
    s: np.ndarray
    k: int = 0
    # unclipped stationary point behind w; only used to warm-start the next inner solve
    root: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class PpgState:
    x: np.ndarray
    y: np.ndarray
    grad_prev: np.ndarray
    k: int = 0

    def xbar(self, pi_A) -> np.ndarray:
        return self.x.T @ pi_A

    def ybar(self, pi_A) -> np.ndarray:
        return self.y.T @ pi_A

    @property
    def yhat(self) -> np.ndarray:
        return self.y.sum(axis=0)


@dataclass
class Trace:
    records: list = field(default_factory=list)
    final_state: DdgtState | PpgState | None = None
    states: list | None = None
    # per-k ||sum_i (w_i + s_i) - d|| for DDGT, ||sum y - sum grad|| for PPG
    invariant: list = field(default_factory=list)
    alpha: float = float("nan")


def as_stack(problems) -> ProblemStack:
    return problems if isinstance(problems, ProblemStack) else ProblemStack(problems)


def as_weights(graph_or_weights) -> WeightMatrices:
    if isinstance(graph_or_weights, WeightMatrices):
        return graph_or_weights
    if isinstance(graph_or_weights, DirectedGraph):
        return build_weights(graph_or_weights)
    raise TypeError("expected a DirectedGraph or WeightMatrices")


def _finite(*arrays) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


# --------------------------------------------------------------------- DDGT


def ddgt_init(problems, demand_mode: str = "local") -> DdgtState:
    """``wbar_0 = w_0 = 0``; ``s_0`` holds each node's demand (``local``) or ``d/n`` (``shared``)."""
    stack = as_stack(problems)
    zeros = np.zeros((stack.n, stack.m))
    if demand_mode == "local":
        s0 = stack.demand.copy()
    elif demand_mode == "shared":
        s0 = np.tile(stack.total_demand / stack.n, (stack.n, 1))
    else:
        raise ValueError(f"demand_mode must be 'local' or 'shared', got {demand_mode!r}")
    return DdgtState(wbar=zeros, w=zeros.copy(), s=s0, k=0)


def ddgt_step(state: DdgtState, weights: WeightMatrices, problems, alpha: float) -> DdgtState:
    stack = as_stack(problems)
    if weights.n != stack.n:
        raise DimensionMismatch(f"{weights.n} weight rows for {stack.n} problems")
    with np.errstate(over="ignore", invalid="ignore"):
        wbar = weights.A @ (state.wbar + alpha * state.s)
        if not _finite(wbar):
            raise StalledDivergence(state.k + 1)
        try:
            root = stack.unconstrained_argmin(wbar, guess=state.w if state.root is None else state.root)
        except InnerSolverFailure:
            if np.abs(wbar).max() > _HUGE:
                raise StalledDivergence(state.k + 1) from None
            raise
        w = np.clip(root, stack.lower, stack.upper)
        s = weights.B @ state.s - (w - state.w)
    if not _finite(w, s):
        raise StalledDivergence(state.k + 1)
    return DdgtState(wbar=wbar, w=w, s=s, k=state.k + 1, root=root)


def ddgt_run(
    problems,
    graph,
    alpha: float,
    iters: int,
    demand_mode: str = "local",
    w_star=None,
    hooks: Sequence[Callable[[DdgtState], None]] = (),
    record: bool = True,
    keep_states: bool = False,
) -> Trace:
    """Run ``iters`` DDGT rounds, recording metrics for ``k = 0..iters``.

    ``hooks`` are called with every state, including the initial one. With
    ``record=False`` only the conservation invariant is tracked, which is
    what the stepsize search uses.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    stack = as_stack(problems)
    weights = as_weights(graph)
    d = stack.total_demand
    trace = Trace(alpha=alpha, states=[] if keep_states else None)
    probe = metrics.DualGradientProbe(stack)

    def observe(st: DdgtState):
        trace.invariant.append(float(np.linalg.norm((st.w + st.s).sum(axis=0) - d)))
        if record:
            trace.records.append(
                metrics.ddgt_record(stack, st.k, st.wbar, st.w, weights.pi_A, w_star, probe)
            )
        if keep_states:
            trace.states.append(st)
        for hook in hooks:
            hook(st)

    state = ddgt_init(stack, demand_mode)
    observe(state)
    for _ in range(iters):
        state = ddgt_step(state, weights, stack, alpha)
        observe(state)
    trace.final_state = state
    return trace


# ---------------------------------------------------------------------- PPG


class DualOracle:
    """Batched dual gradients ``X -> [grad f_i(x_i)]_i`` for a set of node problems.

    Remembers the last local minimizers to warm-start the next inner solve.
    """

    def __init__(self, problems):
        self.stack = as_stack(problems)
        self._last = None

    def __call__(self, X) -> np.ndarray:
        root = self.stack.unconstrained_argmin(-np.asarray(X, dtype=float), guess=self._last)
        self._last = root
        return self.stack.demand - np.clip(root, self.stack.lower, self.stack.upper)


def _batched(oracles):
    if callable(oracles):
        return oracles
    oracles = list(oracles)

    def call(X):
        return np.array([np.atleast_1d(g(x)) for g, x in zip(oracles, X)], dtype=float)

    return call


def duality_bridge(problems) -> list[Callable[[np.ndarray], np.ndarray]]:
    """Per-node dual gradient closures, so PPG on them mirrors DDGT.

    Under ``x = -wbar`` and ``y = s`` the two iterations coincide.
    """
    return [lambda x, p=p: dual_gradient(p, x) for p in problems]


def ppg_record(oracle, k: int, state: PpgState, pi_A) -> metrics.MetricRecord:
    xbar = state.xbar(pi_A)
    X = np.broadcast_to(xbar, state.x.shape)
    g = oracle(np.array(X)).sum(axis=0)
    return metrics.MetricRecord(
        k=k,
        consensus_error=metrics.consensus_error(state.x, pi_A),
        dual_grad_norm=float(np.linalg.norm(g)),
    )


def ppg_run(
    gradient_oracles,
    weights: WeightMatrices,
    alpha: float,
    x0,
    iters: int,
    y0=None,
    grad0=None,
    recorder: Callable[[PpgState], metrics.MetricRecord] | None = None,
    keep_states: bool = False,
) -> Trace:
    """Push-pull gradient: ``X+ = A (X - alpha Y)``, ``Y+ = B Y + G(X+) - G(X)``.

    Parameters
    ----------
    gradient_oracles : list of callables or a single batched callable
        Per-node gradient maps ``R^m -> R^m``, or one map ``(n, m) -> (n, m)``.
    x0 : array_like
        Common starting point of every node.
    y0, grad0 : array_like, optional
        Override the tracker start and the reference gradient of round 0.
        Both default to the gradients at ``x0``. The tracking identity
        ``sum y_k = sum grad_k`` holds whenever ``sum y0 = sum grad0``.
    recorder : callable, optional
        Maps a state to a :class:`MetricRecord`; the default records the
        consensus error and ``||grad f(xbar)||`` using a fresh oracle call.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    n = weights.n
    call = _batched(gradient_oracles)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    X = np.tile(x0, (n, 1))
    G = np.asarray(call(X), dtype=float).reshape(n, -1)
    Y = G.copy() if y0 is None else np.array(y0, dtype=float).reshape(n, -1)
    if grad0 is not None:
        G = np.array(grad0, dtype=float).reshape(n, -1)
    if recorder is None:
        metric_oracle = _batched(gradient_oracles)
        if isinstance(gradient_oracles, DualOracle):
            metric_oracle = DualOracle(gradient_oracles.stack)
        recorder = lambda st: ppg_record(metric_oracle, st.k, st, weights.pi_A)  # noqa: E731

    trace = Trace(alpha=alpha, states=[] if keep_states else None)

    def observe(st: PpgState):
        trace.invariant.append(float(np.linalg.norm(st.y.sum(axis=0) - st.grad_prev.sum(axis=0))))
        trace.records.append(recorder(st))
        if keep_states:
            trace.states.append(st)

    state = PpgState(x=X, y=Y, grad_prev=G, k=0)
    observe(state)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, iters + 1):
            X = weights.A @ (state.x - alpha * state.y)
            if not _finite(X):
                raise StalledDivergence(k)
            G = np.asarray(call(X), dtype=float).reshape(n, -1)
            Y = weights.B @ state.y + G - state.grad_prev
            if not _finite(G, Y):
                raise StalledDivergence(k)
            state = PpgState(x=X, y=Y, grad_prev=G, k=k)
            observe(state)
    trace.final_state = state
    return trace


def ppg_dual_recorder(stack: ProblemStack, pi_A, w_star=None):
    """Records DDGT-style metrics for PPG on the dual, using ``w_i = d_i - grad f_i(x_i)``."""

    probe = metrics.DualGradientProbe(stack)

    def record(st: PpgState) -> metrics.MetricRecord:
        W = stack.demand - st.grad_prev
        return metrics.ddgt_record(stack, st.k, -st.x, W, pi_A, w_star, probe)

    return record


# ------------------------------------------------------------------ oracles


def _coordinate_sum(stack: ProblemStack, j: int, lam: float) -> tuple[np.ndarray, float]:
    t = np.full(stack.n, -lam)
    if stack.has_quartic:
        w = solve_stationarity(stack.a, stack.b[:, j], stack.c, stack.q[:, j], t)
    else:
        w = stack.b[:, j] + t / (2.0 * stack.a)
    w = np.clip(w, stack.lower[:, j], stack.upper[:, j])
    return w, float(w.sum())


def centralized_solve(problems, tol: float = 1e-12, max_iter: int = 400):
    """Exact allocations and multiplier by bisection on the multiplier.

    Every built-in cost is separable across coordinates, so each coordinate
    ``j`` is solved on its own: ``w_i(lam) = clip(root of grad F_i(w) = -lam)``
    is nonincreasing in ``lam``, and we bisect until ``sum_i w_i(lam) = d_j``.

    Returns
    -------
    W : ndarray, shape (n, m)
        Optimal allocations.
    lam : ndarray, shape (m,)
        Multiplier with ``grad F_i(w_i) = -lam`` at every interior node.
    """
    stack = as_stack(problems)
    d = stack.total_demand
    lo_sum = stack.lower.sum(axis=0)
    hi_sum = stack.upper.sum(axis=0)
    if (lo_sum > d).any() or (hi_sum < d).any():
        raise InfeasibleBounds(f"demand {d} outside the box range [{lo_sum}, {hi_sum}]")
    W = np.empty((stack.n, stack.m))
    lam = np.empty(stack.m)
    for j in range(stack.m):
        target = d[j]
        corners = np.concatenate([stack.lower[:, j], stack.upper[:, j], stack.b[:, j], stack.q[:, j]])
        corners = corners[np.isfinite(corners)]
        cg = 2.0 * stack.a.max() * (np.abs(corners).max() + abs(target)) if corners.size else 0.0
        R = max(10.0 * abs(target) / stack.n, cg, 1.0)
        for _ in range(max_iter):
            if _coordinate_sum(stack, j, -R)[1] >= target and _coordinate_sum(stack, j, R)[1] <= target:
                break
            R *= 2.0
        else:
            raise NoConvergence("could not bracket the multiplier")
        lo, hi = -R, R
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            _, total = _coordinate_sum(stack, j, mid)
            if total > target:
                lo = mid
            else:
                hi = mid
        best = min((lo, hi), key=lambda l: abs(_coordinate_sum(stack, j, l)[1] - target))
        w, total = _coordinate_sum(stack, j, best)
        if abs(total - target) > max(tol, 1e-9 * (1.0 + abs(target))):
            raise NoConvergence(f"bisection ended with constraint gap {total - target:g}")
        W[:, j] = w
        lam[j] = best
    return W, lam


def dual_lipschitz(problems) -> float:
    """Smoothness constant ``1/mu`` of the local dual terms."""
    return float(1.0 / as_stack(problems).mu.min())


def stepsize_bound(
    sigma_A: float,
    sigma_B: float,
    L_dual: float | None = None,
    n: int = 1,
    mu: float | None = None,
    pi_A=None,
    pi_B=None,
    tracker_dev: float | None = None,
    grad_norm_x1: float | None = None,
) -> float:
    """Sufficient DDGT stepsize under the surrogate norm constants.

    The contraction bound alone needs only the spectral factors, ``n`` and
    the dual smoothness ``L_dual = 1/mu``. If the Perron vectors and a
    tracker deviation (or its gradient-norm bound) are supplied, the joint
    descent condition is evaluated too and the smaller value is returned.
    Diagnostic: both use surrogate constants, not the exact matrix norms.
    """
    if L_dual is None:
        if mu is None:
            raise ValueError("need L_dual or mu")
        L_dual = 1.0 / mu
    bound = metrics.stepsize_bound_single(sigma_A, sigma_B, L_dual, n)
    if pi_A is not None and pi_B is not None and (tracker_dev is not None or grad_norm_x1 is not None):
        tc = metrics.theoretical_constants(
            sigma_A, sigma_B, pi_A, pi_B, L_dual, n, bound, tracker_dev, grad_norm_x1
        )
        if np.isfinite(tc.alpha_max_joint) and tc.alpha_max_joint > 0:
            bound = min(bound, tc.alpha_max_joint)
    return float(bound)


# ------------------------------------------------------------ stepsize grid


@dataclass
class SweepCell:
    alpha: float
    status: str  # "converged" | "not_converged" | "diverged"
    iters_to_tol: int | None
    final_error: float | None


def reference_alpha(problems) -> float:
    """Inspection-scale stepsize: the smallest local strong-convexity modulus."""
    return float(as_stack(problems).mu.min())


def default_alpha_grid(problems) -> list[float]:
    ref = reference_alpha(problems)
    return [ref * 2.0**j for j in range(-4, 9)]


def evaluate_alpha(
    problems,
    weights: WeightMatrices,
    alpha: float,
    iters: int,
    w_star=None,
    tol: float = 1e-12,
    demand_mode: str = "local",
) -> SweepCell:
    """Run DDGT once at ``alpha`` and classify the outcome.

    The error is ``dist_to_opt`` when ``w_star`` is given, else the KKT residual.
    """
    stack = as_stack(problems)
    errors: list[float] = []

    @np.errstate(over="ignore", invalid="ignore")
    def err(st: DdgtState):
        if w_star is not None:
            errors.append(metrics.dist_to_opt(st.w, w_star))
        else:
            errors.append(metrics.kkt_residual(stack, st.w)[0])

    try:
        ddgt_run(stack, weights, alpha, iters, demand_mode, hooks=[err], record=False)
    except StalledDivergence:
        return SweepCell(alpha, "diverged", None, None)
    hit = next((k for k, e in enumerate(errors) if e <= tol), None)
    return SweepCell(alpha, "converged" if hit is not None else "not_converged", hit, errors[-1])


def grid_search_alpha(
    problems, weights: WeightMatrices, iters: int, grid=None, w_star=None, tol: float = 1e-12,
    demand_mode: str = "local",
) -> tuple[float, list[SweepCell]]:
    """Fastest convergent stepsize over ``grid`` (fewest iterations to ``tol``,
    then smallest final error)."""
    grid = default_alpha_grid(problems) if grid is None else list(grid)
    cells = [evaluate_alpha(problems, weights, a, iters, w_star, tol, demand_mode) for a in grid]
    ok = [c for c in cells if c.status != "diverged"]
    if not ok:
        raise StalledDivergence(0, "every stepsize in the grid diverged")
    best = min(
        ok,
        key=lambda c: (c.iters_to_tol if c.iters_to_tol is not None else iters + 1, c.final_error),
    )
    return best.alpha, cells


def first_tracker_deviation(oracle, weights: WeightMatrices, alpha: float, x0, y0=None, grad0=None) -> float:
    """``||Y_1 - pi_B yhat_1^T||_F`` after one PPG round from a common start."""
    tr = ppg_run(oracle, weights, alpha, x0, 1, y0=y0, grad0=grad0,
                 recorder=lambda st: metrics.MetricRecord(k=st.k), keep_states=True)
    Y1 = tr.states[1].y
    return float(np.linalg.norm(Y1 - np.outer(weights.pi_B, Y1.sum(axis=0))))


__all__ = [
    "DdgtState",
    "PpgState",
    "Trace",
    "DualOracle",
    "ddgt_init",
    "ddgt_step",
    "ddgt_run",
    "ppg_run",
    "ppg_dual_recorder",
    "duality_bridge",
    "centralized_solve",
    "stepsize_bound",
    "dual_lipschitz",
    "grid_search_alpha",
    "evaluate_alpha",
    "first_tracker_deviation",
]
