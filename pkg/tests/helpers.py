"""Instance builders shared by the test modules."""

import numpy as np

from ddgt.costs import BoxConstraint, NodeProblem, Quadratic, Quartic
from ddgt.graph import build_weights, random_digraph


def quadratic_problems(n, seed, m=1, total=50.0, box=None):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.2, 1.0, n)
    b = rng.normal(0.0, 2.0, (n, m))
    bx = BoxConstraint.unbounded(m) if box is None else BoxConstraint(*box)
    return [NodeProblem(Quadratic(a[i], b[i]), bx, np.full(m, total / n)) for i in range(n)]


def quartic_problems(n, seed, total=50.0, box=None):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.2, 1.0, n)
    b = rng.normal(0.0, 2.0, n)
    c = rng.uniform(0.0, 10.0, n)
    d = rng.normal(0.0, 2.0, n)
    bx = BoxConstraint.unbounded(1) if box is None else BoxConstraint(*box)
    return [NodeProblem(Quartic(a[i], b[i], c[i], d[i]), bx, [total / n]) for i in range(n)]


def weights(n, seed, p=0.3):
    return build_weights(random_digraph(n, p, seed))
