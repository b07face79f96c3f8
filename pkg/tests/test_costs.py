import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from ddgt.costs import (
    BoxConstraint,
    NodeProblem,
    ProblemStack,
    Quadratic,
    Quartic,
    dual_gradient,
    dual_value,
    evaluate,
    gradient,
    local_argmin,
    solve_stationarity,
)
from ddgt.errors import DimensionMismatch, InnerSolverFailure

R = BoxConstraint.unbounded()
BOX = BoxConstraint(-2.0, 2.0)

reals = st.floats(-5, 5, allow_nan=False)
quadratics = st.builds(Quadratic, st.floats(0.05, 5), reals)
quartics = st.builds(Quartic, st.floats(0.05, 5), reals, st.floats(0, 10), reals)
costs = st.one_of(quadratics, quartics)
boxes = st.one_of(st.just(R), st.just(BOX))


def fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_evaluate_examples():
    assert evaluate(Quadratic(1, 2), 2) == 0
    assert evaluate(Quadratic(1, 2), 3) == 1
    assert evaluate(Quartic(1, 0, 1, 0), 2) == 20


def test_gradient_examples():
    assert gradient(Quadratic(1, 2), 2)[0] == 0
    assert gradient(Quartic(1, 0, 1, 0), 1)[0] == 6


@given(costs, reals)
def test_gradient_matches_finite_difference(cost, w):
    g = gradient(cost, w)[0]
    num = fd(lambda v: evaluate(cost, v), w)
    assert abs(g - num) <= 1e-5 * max(1.0, abs(g))


def test_local_argmin_examples():
    assert local_argmin(NodeProblem(Quadratic(1, 2), R, [0]), 2)[0] == pytest.approx(3)
    assert local_argmin(NodeProblem(Quadratic(1, 2), BOX, [0]), 2)[0] == 2
    assert local_argmin(NodeProblem(Quartic(1, 0, 1, 0), R, [0]), 0)[0] == pytest.approx(0, abs=1e-14)


@settings(max_examples=200)
@given(costs, boxes, st.floats(-50, 50))
def test_local_argmin_matches_scalar_minimizer(cost, box, wbar):
    p = NodeProblem(cost, box, [0])
    w = local_argmin(p, wbar)[0]
    assert box.lower[0] <= w <= box.upper[0]
    lo = max(box.lower[0], -60.0)
    hi = min(box.upper[0], 60.0)
    ref = minimize_scalar(
        lambda v: evaluate(cost, v) - v * wbar, bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    obj = lambda v: evaluate(cost, v) - v * wbar  # noqa: E731
    assert obj(w) <= ref.fun + 1e-7 * (1 + abs(ref.fun))


def test_dual_gradient_examples():
    assert dual_gradient(NodeProblem(Quadratic(1, 0), R, [0]), 0)[0] == 0
    assert dual_gradient(NodeProblem(Quadratic(1, 2), R, [1]), 2)[0] == pytest.approx(0, abs=1e-14)


def test_dual_value_examples():
    assert dual_value(NodeProblem(Quadratic(1, 0), R, [0]), 0) == 0
    assert dual_value(NodeProblem(Quadratic(1, 0), R, [0]), 2) == pytest.approx(1)


@settings(max_examples=100)
@given(costs, boxes, reals, st.floats(-10, 10))
def test_dual_gradient_matches_finite_difference(cost, box, d, x):
    p = NodeProblem(cost, box, [d])
    g = dual_gradient(p, x)[0]
    num = fd(lambda v: dual_value(p, v), x)
    assert abs(g - num) <= 1e-5 * max(1.0, abs(g))


@given(costs, boxes, reals, st.floats(-10, 10), st.floats(-10, 10))
def test_dual_gradient_lipschitz(cost, box, d, x, y):
    assume(abs(x - y) > 1e-6)
    p = NodeProblem(cost, box, [d])
    ratio = abs(dual_gradient(p, x)[0] - dual_gradient(p, y)[0]) / abs(x - y)
    assert ratio <= 1 / cost.mu + 1e-9


@given(costs, boxes, reals, st.floats(-10, 10), st.floats(-10, 10))
def test_dual_value_convex_along_segments(cost, box, d, x, y):
    p = NodeProblem(cost, box, [d])
    mid = dual_value(p, (x + y) / 2)
    assert mid <= (dual_value(p, x) + dual_value(p, y)) / 2 + 1e-9 * (1 + abs(mid))


def test_vector_quadratic():
    p = NodeProblem(Quadratic(0.5, [1.0, -1.0]), BoxConstraint(-0.5, 0.5), [0.0, 0.0])
    assert p.box.lower.shape == (2,)
    np.testing.assert_allclose(local_argmin(p, [0.0, 0.0]), [0.5, -0.5])
    g = dual_gradient(p, [1.0, 2.0])
    assert g.shape == (2,)


def test_solve_stationarity_residual():
    rng = np.random.default_rng(0)
    a, b, c, q = rng.uniform(0.01, 1, 50), rng.normal(0, 2, 50), rng.uniform(0, 10, 50), rng.normal(0, 2, 50)
    t = rng.normal(0, 1e3, 50)
    w = solve_stationarity(a, b, c, q, t)
    res = 2 * a * (w - b) + 4 * c * (w - q) ** 3 - t
    assert np.all(np.abs(res) <= 1e-12 * (1 + np.abs(t)))
    warm = solve_stationarity(a, b, c, q, t, guess=w + 0.3)
    np.testing.assert_allclose(warm, w, rtol=1e-14, atol=1e-14)


def test_solve_stationarity_reports_failure():
    with pytest.raises(InnerSolverFailure):
        solve_stationarity(1.0, 0.0, 10.0, 0.0, 1e6, max_iter=1)


def test_validation():
    with pytest.raises(ValueError):
        Quadratic(0, 1)
    with pytest.raises(ValueError):
        Quartic(1, 0, -1, 0)
    with pytest.raises(ValueError):
        BoxConstraint(1, 0)
    with pytest.raises(DimensionMismatch):
        NodeProblem(Quadratic(1, [0, 0]), R, [1.0])
    with pytest.raises(DimensionMismatch):
        evaluate(Quadratic(1, 0), [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        ProblemStack([NodeProblem(Quadratic(1, 0), R, [0]), NodeProblem(Quadratic(1, [0, 0]), R, [0, 0])])


@given(st.lists(st.tuples(costs, boxes), min_size=1, max_size=6), st.floats(-20, 20))
def test_stack_matches_node_routines(items, x):
    problems = [NodeProblem(c, b, [1.0]) for c, b in items]
    stack = ProblemStack(problems)
    X = np.full((len(problems), 1), x)
    batched = stack.dual_gradient(X)
    single = np.array([dual_gradient(p, x) for p in problems])
    np.testing.assert_allclose(batched, single, rtol=1e-12, atol=1e-12)
    W = stack.argmin(-X)
    np.testing.assert_allclose(stack.values(W), [evaluate(p.cost, w) for p, w in zip(problems, W)])
