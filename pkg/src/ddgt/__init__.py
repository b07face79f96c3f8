"""Distributed dual gradient tracking for resource allocation over unbalanced digraphs."""

from .costs import BoxConstraint, NodeProblem, ProblemStack, Quadratic, Quartic
from .graph import (
    DirectedGraph,
    WeightMatrices,
    build_weights,
    complete_graph,
    import_edge_list,
    is_strongly_connected,
    random_digraph,
    ring_graph,
)
from .solvers import centralized_solve, ddgt_run, ppg_run, stepsize_bound

__version__ = "0.1.0"
