"""Local cost models, box constraints and the conjugate-based dual pieces.

Every node solves ``argmin_{w in box} F(w) - w^T wbar``. The scalar routines
at module level work on one :class:`NodeProblem`; :class:`ProblemStack`
batches the same computation over all nodes, which is what the solvers use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, InnerSolverFailure

INNER_TOL = 1e-12
INNER_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class Quadratic:
    """``F(w) = a * ||w - b||^2``; ``b`` may be a scalar or an m-vector."""

    a: float
    b: float | np.ndarray

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("Quadratic needs a > 0")
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def mu(self) -> float:
        return 2.0 * self.a

    @property
    def lipschitz(self) -> float | None:
        return 2.0 * self.a


@dataclass(frozen=True, eq=False)
class Quartic:
    """``F(w) = a (w - b)^2 + c (w - d)^4`` on the real line."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("Quartic needs a > 0")
        if self.c < 0:
            raise ValueError("Quartic needs c >= 0")

    @property
    def dim(self) -> int:
        return 1

    @property
    def mu(self) -> float:
        # the quartic term only adds curvature, so 2a is a certified modulus
        return 2.0 * self.a

    @property
    def lipschitz(self) -> float | None:
        return None


LocalCost = Union[Quadratic, Quartic]


@dataclass(frozen=True, eq=False)
class BoxConstraint:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if (lo > hi).any():
            raise ValueError("box needs lower <= upper")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def unbounded(cls, m: int = 1) -> BoxConstraint:
        return cls(np.full(m, -np.inf), np.full(m, np.inf))

    @property
    def is_unbounded(self) -> bool:
        return bool(np.isneginf(self.lower).all() and np.isposinf(self.upper).all())


@dataclass(frozen=True, eq=False)
class NodeProblem:
    cost: LocalCost
    box: BoxConstraint
    demand: np.ndarray

    def __post_init__(self):
        m = self.cost.dim
        demand = np.atleast_1d(np.asarray(self.demand, dtype=float))
        if demand.shape != (m,):
            raise DimensionMismatch(f"demand has shape {demand.shape}, cost dimension is {m}")
        if not np.isfinite(demand).all():
            raise ValueError("demand must be finite")
        box = self.box
        if box.lower.shape[0] == 1 and m > 1:
            box = BoxConstraint(np.full(m, box.lower[0]), np.full(m, box.upper[0]))
        if box.lower.shape != (m,):
            raise DimensionMismatch(f"box has dimension {box.lower.shape[0]}, cost dimension is {m}")
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return self.cost.dim


def _as_point(cost: LocalCost, w) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (cost.dim,):
        raise DimensionMismatch(f"expected a point of dimension {cost.dim}, got shape {w.shape}")
    return w


def evaluate(cost: LocalCost, w) -> float:
    w = _as_point(cost, w)
    if isinstance(cost, Quadratic):
        return float(cost.a * np.sum((w - cost.b) ** 2))
    return float(cost.a * (w[0] - cost.b) ** 2 + cost.c * (w[0] - cost.d) ** 4)


def gradient(cost: LocalCost, w) -> np.ndarray:
    w = _as_point(cost, w)
    if isinstance(cost, Quadratic):
        return 2.0 * cost.a * (w - cost.b)
    return 2.0 * cost.a * (w - cost.b) + 4.0 * cost.c * (w - cost.d) ** 3


def local_argmin(problem: NodeProblem, wbar) -> np.ndarray:
    """Unique minimizer of ``F(w) - w^T wbar`` over the node's box."""
    wbar = _as_point(problem.cost, wbar)
    return ProblemStack([problem]).argmin(wbar[None, :])[0]


def dual_gradient(problem: NodeProblem, x) -> np.ndarray:
    """Danskin gradient of the local dual term: ``d_i - argmin_w {x^T w + F(w)}``."""
    x = _as_point(problem.cost, x)
    return problem.demand - local_argmin(problem, -x)


def dual_value(problem: NodeProblem, x) -> float:
    """``F*(-x) + x^T d_i``, with the conjugate taken over the box."""
    x = _as_point(problem.cost, x)
    w = local_argmin(problem, -x)
    return float(-(evaluate(problem.cost, w) + x @ w) + x @ problem.demand)


def solve_stationarity(a, b, c, q, t, guess=None, tol=INNER_TOL, max_iter=INNER_MAX_ITER):
    """Elementwise root of ``2a(w-b) + 4c(w-q)^3 = t``.

    The left side is strictly increasing in ``w``, so the root lies between
    ``min(b, q, b + t/2a)`` and ``max(b, q, b + t/2a)``. Newton steps that leave
    the running bracket are replaced by bisection.
    """
    a, b, c, q, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, q, t)))
    wq = b + t / (2.0 * a)
    lo = np.minimum(np.minimum(b, q), wq)
    hi = np.maximum(np.maximum(b, q), wq)
    w = np.clip(wq if guess is None else np.asarray(guess, dtype=float), lo, hi)
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        r = w - q
        lin = 2.0 * a * (w - b)
        cub = 4.0 * c * r**3
        g = lin + cub - t
        scale = 1.0 + np.abs(t) + np.abs(lin) + np.abs(cub)
        done = (np.abs(g) <= tol * scale) | (hi - lo <= 4.0 * eps * np.maximum(1.0, np.abs(w)))
        lo = np.where(g < 0, w, lo)
        hi = np.where(g > 0, w, hi)
        step = w - g / (2.0 * a + 12.0 * c * r**2)
        inside = (step >= lo) & (step <= hi)
        if done.all():
            # one more Newton step takes the root to rounding level, whatever the start
            return np.where(inside, step, w)
        w = np.where(done, w, np.where(inside, step, 0.5 * (lo + hi)))
    raise InnerSolverFailure(
        f"stationarity solve missed residual {tol:g} after {max_iter} iterations"
    )


class ProblemStack:
    """All node problems as stacked arrays, rows indexed by node.

    Quadratic nodes of a mixed scalar stack are treated as quartics with
    ``c = 0``, for which the Newton iteration is exact in one step.
    """

    def __init__(self, problems: Sequence[NodeProblem]):
        if not problems:
            raise ValueError("need at least one node problem")
        m = problems[0].dim
        for p in problems:
            if p.dim != m:
                raise DimensionMismatch("all node problems must share one dimension")
        self.problems = list(problems)
        self.n = len(problems)
        self.m = m
        self.a = np.array([p.cost.a for p in problems], dtype=float)
        self.b = np.array(
            [p.cost.b if isinstance(p.cost, Quadratic) else [p.cost.b] for p in problems], dtype=float
        )
        self.c = np.array([getattr(p.cost, "c", 0.0) for p in problems], dtype=float)
        self.q = np.array(
            [[p.cost.d] if isinstance(p.cost, Quartic) else p.cost.b for p in problems], dtype=float
        ).reshape(self.n, m)
        self.lower = np.array([p.box.lower for p in problems])
        self.upper = np.array([p.box.upper for p in problems])
        self.demand = np.array([p.demand for p in problems])
        self.mu = 2.0 * self.a
        self.has_quartic = bool((self.c > 0).any())
        self.bounded = bool(np.isfinite(self.lower).any() or np.isfinite(self.upper).any())

    @property
    def total_demand(self) -> np.ndarray:
        return self.demand.sum(axis=0)

    def _check(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        if W.shape != (self.n, self.m):
            raise DimensionMismatch(f"expected shape {(self.n, self.m)}, got {W.shape}")
        return W

    def unconstrained_argmin(self, Wbar, guess=None) -> np.ndarray:
        """Rows solve ``grad F_i(w) = wbar_i`` without the box."""
        Wbar = self._check(Wbar)
        a = self.a[:, None]
        if not self.has_quartic:
            return self.b + Wbar / (2.0 * a)
        return solve_stationarity(a, self.b, self.c[:, None], self.q, Wbar, guess=guess)

    def argmin(self, Wbar, guess=None) -> np.ndarray:
        """Rows are ``argmin_{w in box_i} F_i(w) - w^T wbar_i``.

        ``guess`` only warm-starts the Newton iteration; the result does not
        depend on it beyond the inner tolerance.
        """
        return np.clip(self.unconstrained_argmin(Wbar, guess), self.lower, self.upper)

    def gradient(self, W) -> np.ndarray:
        W = self._check(W)
        grad = 2.0 * self.a[:, None] * (W - self.b)
        if self.has_quartic:
            grad = grad + 4.0 * self.c[:, None] * (W - self.q) ** 3
        return grad

    def values(self, W) -> np.ndarray:
        W = self._check(W)
        vals = self.a * np.sum((W - self.b) ** 2, axis=1)
        if self.has_quartic:
            vals = vals + self.c * np.sum((W - self.q) ** 4, axis=1)
        return vals

    def dual_gradient(self, X, guess=None) -> np.ndarray:
        """Rows are ``grad f_i(x_i) = d_i - argmin_w {x_i^T w + F_i(w)}``."""
        X = self._check(X)
        return self.demand - self.argmin(-X, guess)
