"""Convergence diagnostics: KKT residual, consensus error, rate fits and
the theoretical constants of the push-pull analysis.

The theoretical constants use surrogate norm-equivalence factors
``delta_AF = delta_BF = 1`` and ``delta_FA = delta_FB = sqrt(n)`` (the values
that hold for symmetric weights), and the subspace-iteration second modulus in
place of the custom matrix norms. They are diagnostic only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .costs import NodeProblem, ProblemStack
from .errors import DimensionMismatch, NonPositiveSeries

CSV_COLUMNS = (
    "k",
    "kkt_residual",
    "gradient_consensus",
    "constraint_violation",
    "consensus_error",
    "dual_grad_norm",
    "dist_to_opt",
)

SURROGATE_NOTE = (
    "surrogate constants: delta_AF = delta_BF = 1, delta_FA = delta_FB = sqrt(n); "
    "sigma from the deflated spectral radius; tracker deviation in Frobenius norm"
)


@dataclass
class MetricRecord:
    k: int
    kkt_residual: float | None = None
    gradient_consensus: float | None = None
    constraint_violation: float | None = None
    consensus_error: float | None = None
    dual_grad_norm: float | None = None
    dist_to_opt: float | None = None

    def as_row(self) -> list[str]:
        # repr gives the shortest round-trip form, so reruns are byte-identical
        return ["" if v is None else repr(v) for v in (getattr(self, c) for c in CSV_COLUMNS)]

    def as_dict(self) -> dict:
        return asdict(self)


def _stack(problems) -> ProblemStack:
    return problems if isinstance(problems, ProblemStack) else ProblemStack(problems)


def kkt_residual(problems: Sequence[NodeProblem] | ProblemStack, W) -> tuple[float, float, float]:
    """Return ``(total, gradient_consensus, constraint_violation)`` at allocations ``W``.

    ``gradient_consensus`` is the spread of the local gradients around their
    mean and ``constraint_violation`` is ``||sum_i w_i - d||^2`` (squared).
    """
    stack = _stack(problems)
    W = np.asarray(W, dtype=float).reshape(stack.n, -1) if np.ndim(W) == 1 else np.asarray(W, float)
    if W.shape != (stack.n, stack.m):
        raise DimensionMismatch(f"expected allocations of shape {(stack.n, stack.m)}, got {W.shape}")
    G = stack.gradient(W)
    gc = float(np.sum((G - G.mean(axis=0)) ** 2))
    cv = float(np.sum((W.sum(axis=0) - stack.total_demand) ** 2))
    return gc + cv, gc, cv


def consensus_error(X, pi) -> float:
    """``||X - 1 xbar^T||_F^2`` with ``xbar = X^T pi``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (X.shape[0],):
        raise DimensionMismatch("Perron vector length must equal the number of rows")
    xbar = X.T @ pi
    return float(np.sum((X - xbar) ** 2))


def dist_to_opt(W, W_star) -> float:
    return float(np.sum((np.asarray(W) - np.asarray(W_star)) ** 2))


def global_dual_gradient(stack: ProblemStack, x, guess=None) -> np.ndarray:
    """``grad f(x) = sum_i grad f_i(x)`` with every node at the common point ``x``."""
    X = np.broadcast_to(np.asarray(x, dtype=float), (stack.n, stack.m))
    return stack.dual_gradient(X, guess).sum(axis=0)


class DualGradientProbe:
    """``x -> ||grad f(x)||`` that warm-starts each inner solve from the previous call."""

    def __init__(self, stack: ProblemStack):
        self.stack = stack
        self._root = None

    def __call__(self, x) -> float:
        X = np.broadcast_to(np.asarray(x, dtype=float), (self.stack.n, self.stack.m))
        root = self.stack.unconstrained_argmin(-X, guess=self._root)
        self._root = root
        W = np.clip(root, self.stack.lower, self.stack.upper)
        return float(np.linalg.norm((self.stack.demand - W).sum(axis=0)))


@np.errstate(over="ignore", invalid="ignore")
def ddgt_record(stack: ProblemStack, k: int, wbar, w, pi_A, w_star=None, probe=None) -> MetricRecord:
    total, gc, cv = kkt_residual(stack, w)
    X = -np.asarray(wbar)
    xbar = X.T @ pi_A
    if probe is None:
        gnorm = float(np.linalg.norm(global_dual_gradient(stack, xbar)))
    else:
        gnorm = probe(xbar)
    return MetricRecord(
        k=k,
        kkt_residual=total,
        gradient_consensus=gc,
        constraint_violation=cv,
        consensus_error=consensus_error(X, pi_A),
        dual_grad_norm=gnorm,
        dist_to_opt=None if w_star is None else dist_to_opt(w, w_star),
    )


def running_average(series) -> np.ndarray:
    s = np.asarray(series, dtype=float)
    return np.cumsum(s) / np.arange(1, s.size + 1)


def running_min(series) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(series, dtype=float))


@dataclass(frozen=True)
class RateFit:
    value: float
    r_squared: float
    mode: str
    window: tuple[int, int]


def default_window(series, floor_rel: float = 1e-22, frac: float = 0.6) -> tuple[int, int]:
    """Middle ``frac`` of the iterations before the series reaches its floor.

    The floor is the first index where the series drops below ``floor_rel``
    times its initial value; that tail is rounding noise, not rate.
    """
    s = np.asarray(series, dtype=float)
    end = s.size
    below = np.nonzero(s <= floor_rel * s[0])[0] if s[0] > 0 else np.array([], dtype=int)
    if below.size:
        end = int(below[0])
    margin = int(round(end * (1.0 - frac) / 2.0))
    return margin, max(end - margin, margin + 2)


def fit_rate(series, window: tuple[int, int] | None = None, mode: str = "geometric", ks=None) -> RateFit:
    """Least-squares rate fit of ``log e_k``.

    ``geometric`` regresses on ``k`` and reports ``lambda = exp(slope)``;
    ``power_law`` regresses on ``log k`` and reports the exponent. ``window``
    is a half-open index range into ``series``; ``ks`` gives the iteration
    numbers (defaults to the indices).
    """
    s = np.asarray(series, dtype=float)
    k_all = np.arange(s.size, dtype=float) if ks is None else np.asarray(ks, dtype=float)
    if window is None:
        window = default_window(s)
    lo, hi = window
    y = s[lo:hi]
    k = k_all[lo:hi]
    if y.size < 2:
        raise ValueError("fit window needs at least two points")
    if not (y > 0).all() or not np.isfinite(y).all():
        raise NonPositiveSeries("rate fits need a strictly positive, finite series")
    if mode == "geometric":
        t = k
    elif mode == "power_law":
        if (k <= 0).any():
            raise ValueError("power-law fits need k >= 1")
        t = np.log(k)
    else:
        raise ValueError(f"unknown fit mode {mode!r}")
    ly = np.log(y)
    slope, intercept = np.polyfit(t, ly, 1)
    ss_res = float(np.sum((ly - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    value = math.exp(slope) if mode == "geometric" else float(slope)
    return RateFit(value=value, r_squared=r2, mode=mode, window=(lo, hi))


@dataclass(frozen=True)
class TheoreticalConstants:
    alpha: float
    P11: float
    P12: float
    P21: float
    P22: float
    psi: float
    psi_lower: float
    theta1: float
    theta: float
    c0: float
    c1: float
    c2: float
    c3: float
    gamma: float
    k0: float
    alpha_max_joint: float
    vacuous: bool
    surrogate_note: str = SURROGATE_NOTE

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _p_matrix(sA, sB, L, n, alpha):
    rn = math.sqrt(n)
    d_af = d_bf = 1.0
    d_fa = d_fb = rn
    P11 = sA + alpha * sA * d_af * d_fa * L * rn
    P12 = alpha * sA * d_af * d_fb
    P21 = rn * L * d_bf * d_fa * (2.0 + rn * L * alpha)
    P22 = sB + L * alpha * rn * d_bf * d_fb
    return P11, P12, P21, P22


def _psi(P11, P12, P21, P22):
    return math.sqrt((P11 - P22) ** 2 + 4.0 * P12 * P21)


def theoretical_constants(
    sigma_A: float,
    sigma_B: float,
    pi_A,
    pi_B,
    L: float,
    n: int,
    alpha: float,
    tracker_dev: float | None = None,
    grad_norm_x1: float | None = None,
) -> TheoreticalConstants:
    """Evaluate the contraction matrix, its eigenvalues and the rate constants.

    ``tracker_dev`` is ``||Y_1 - pi_B yhat_1^T||_F`` from an actual run; when
    it is missing, ``grad_norm_x1 = (sum_i ||grad f_i(x_1)||^2)^(1/2)`` gives
    the upper bound instead. With neither, ``c0``, ``c2`` and everything
    downstream are NaN.
    """
    sA, sB = float(sigma_A), float(sigma_B)
    if abs(sA - sB) < 1e-9:
        # the analysis allows inflating sigma towards 1; it needs sigma_A != sigma_B
        sB = sB + 1e-6 * (1.0 - sB)
    rn = math.sqrt(n)
    P11, P12, P21, P22 = _p_matrix(sA, sB, L, n, alpha)
    psi = _psi(P11, P12, P21, P22)
    theta1 = (P11 + P22 - psi) / 2.0
    theta = (P11 + P22 + psi) / 2.0
    psi_lower = min(_psi(*_p_matrix(sA, sB, L, n, a)) for a in np.linspace(0.0, alpha, 257))

    c1 = sA + rn / (n * L * psi_lower)
    c3 = 3.0 * rn * L * sA * rn / psi_lower + rn * L
    if tracker_dev is not None:
        dev = float(tracker_dev)
    elif grad_norm_x1 is not None:
        dev = float(grad_norm_x1)
    else:
        dev = math.nan
    c0 = dev / (n * L**2 * psi_lower)
    c2 = dev

    pbpa = float(np.dot(pi_B, pi_A))
    K = 3.0 * L**3 * c1**2 + 3.0 * L * c3**2 + L * rn * (c0 + c1) + c2 + c3
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = (1.0 - theta) ** 2 * pbpa
        gamma = alpha * pbpa * (1.0 - 1.5 * L * alpha * pbpa - alpha * K / gap)
        alpha_max_joint = 1.0 / (1.5 * L * pbpa + K / gap)
    k0 = (math.log(alpha) - math.log(1.0 - theta)) / math.log(theta) if 0.0 < theta < 1.0 else math.nan
    return TheoreticalConstants(
        alpha=alpha,
        P11=P11,
        P12=P12,
        P21=P21,
        P22=P22,
        psi=psi,
        psi_lower=psi_lower,
        theta1=theta1,
        theta=theta,
        c0=c0,
        c1=c1,
        c2=c2,
        c3=c3,
        gamma=float(gamma),
        k0=k0,
        alpha_max_joint=float(alpha_max_joint),
        vacuous=theta >= 1.0,
    )


def theta_threshold(sigma_A: float, sigma_B: float, L: float, n: int) -> float:
    """Supremum of the stepsizes with ``theta < 1`` under the surrogate constants.

    For the nonnegative 2x2 contraction matrix, ``theta < 1`` iff
    ``(1 - P11)(1 - P22) > P12 P21``; the ``alpha^2`` terms cancel, leaving
    ``alpha (u (1 - sB) + v (1 - sA) + 2 u v / (sqrt(n) L)) < (1 - sA)(1 - sB)``.
    """
    rn = math.sqrt(n)
    u = rn * L * sigma_A * rn
    v = rn * L * rn
    if L <= 0:
        return math.inf
    den = u * (1.0 - sigma_B) + v * (1.0 - sigma_A) + 2.0 * u * v / (rn * L)
    return (1.0 - sigma_A) * (1.0 - sigma_B) / den if den > 0 else math.inf


def stepsize_bound_single(sigma_A: float, sigma_B: float, L: float, n: int) -> float:
    """Sufficient stepsize for ``theta < 1`` under the surrogate constants.

    The closed-form bound ``(1-sA)(1-sB) / (2 (sqrt(n) L sA dAF dFA + 1)(sqrt(n) L dBF dFB + 1))``
    only implies ``theta < 1`` when ``sqrt(n) L >= 1``, so it is capped at
    :func:`theta_threshold`. The cap is inactive in the usual regime.
    """
    rn = math.sqrt(n)
    d_af = d_bf = 1.0
    d_fa = d_fb = rn
    num = (1.0 - sigma_A) * (1.0 - sigma_B)
    den = 2.0 * (rn * L * sigma_A * d_af * d_fa + 1.0) * (rn * L * d_bf * d_fb + 1.0)
    return min(num / den, theta_threshold(sigma_A, sigma_B, L, n))
