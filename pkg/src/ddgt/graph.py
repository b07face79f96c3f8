"""Directed communication graphs and their stochastic weight matrices.

Nodes are 0-based internally; the edge-list text format is 1-based.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidWeights, NoConvergence, NotStronglyConnected, ParseError

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class DirectedGraph:
    """Communication topology given by in-neighbor sets.

    ``in_neighbors[i]`` holds every ``j`` with an edge ``j -> i`` and always
    contains ``i`` itself.
    """

    n: int
    in_neighbors: tuple[frozenset[int], ...]
    out_neighbors: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        if len(self.in_neighbors) != self.n:
            raise ValueError("in_neighbors must have one entry per node")
        out: list[set[int]] = [set() for _ in range(self.n)]
        for i, nbrs in enumerate(self.in_neighbors):
            if i not in nbrs:
                raise ValueError(f"node {i} is missing its self-loop")
            for j in nbrs:
                if not 0 <= j < self.n:
                    raise ValueError(f"neighbor id {j} out of range")
                out[j].add(i)
        object.__setattr__(self, "out_neighbors", tuple(frozenset(s) for s in out))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> DirectedGraph:
        """Build from 0-based ``(src, dst)`` pairs; self-loops are added."""
        nbrs = [{i} for i in range(n)]
        for src, dst in edges:
            nbrs[dst].add(src)
        return cls(n, tuple(frozenset(s) for s in nbrs))

    def edges(self) -> list[tuple[int, int]]:
        """Sorted 0-based ``(src, dst)`` pairs, self-loops included."""
        return sorted((j, i) for i in range(self.n) for j in self.in_neighbors[i])

    def in_adjacency(self) -> np.ndarray:
        """Boolean matrix ``M`` with ``M[i, j]`` true iff ``j`` is an in-neighbor of ``i``."""
        M = np.zeros((self.n, self.n), dtype=bool)
        for i, nbrs in enumerate(self.in_neighbors):
            M[i, sorted(nbrs)] = True
        return M


@dataclass(frozen=True, eq=False)
class WeightMatrices:
    A: np.ndarray
    B: np.ndarray
    pi_A: np.ndarray
    pi_B: np.ndarray
    sigma_A: float
    sigma_B: float

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _reachable(start: int, nbrs: tuple[frozenset[int], ...]) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_strongly_connected(g: DirectedGraph) -> bool:
    # one forward and one backward search from node 0 suffice
    return (
        len(_reachable(0, g.out_neighbors)) == g.n
        and len(_reachable(0, g.in_neighbors)) == g.n
    )


def left_perron(A: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Normalized left Perron vector of a row-stochastic matrix by power iteration.

    Starts from the uniform vector and iterates ``pi <- A^T pi``. The returned
    vector satisfies ``||A^T pi - pi|| <= tol`` and sums to one.
    """
    A = np.asarray(A, dtype=float)
    return _power_perron(A.T, tol, max_iter)


def right_perron(B: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Normalized right Perron vector of a column-stochastic matrix (``B pi = pi``)."""
    return _power_perron(np.asarray(B, dtype=float), tol, max_iter)


def _power_perron(M: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    n = M.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        v = M @ pi
        if np.linalg.norm(v - pi) <= tol:
            return pi
        pi = v / v.sum()
    raise NoConvergence(f"Perron power iteration did not reach residual {tol:g} in {max_iter} steps")


def second_modulus(
    M: np.ndarray,
    perron: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    kind: str | None = None,
    block: int = 4,
    method: str = "auto",
    dense_max: int = 1024,
) -> float:
    """Second-largest eigenvalue modulus of a stochastic matrix.

    The Perron eigenvalue is deflated away (``M - 1 pi^T`` for row-stochastic,
    ``M - pi 1^T`` for column-stochastic) and the spectral radius of the
    remainder is taken. Up to ``dense_max`` nodes this is a dense eigensolve;
    beyond that it is block power (subspace) iteration with Rayleigh-Ritz
    extraction. A block of size >= 2 resolves complex-conjugate pairs, which a
    single-vector iteration cannot. The iterative path converges like
    ``sqrt(tol)`` on defective eigenvalues.

    Parameters
    ----------
    M : ndarray
        Row- or column-stochastic matrix.
    perron : ndarray
        Its Perron vector (left for row-stochastic, right for column-stochastic).
    tol : float
        Stop once the dominant Ritz pair has residual ``||D u - theta u|| <= tol``.
    kind : {"row", "col"}, optional
        Which deflation to apply; inferred from the row sums when omitted.
    block : int
        Subspace dimension, capped at ``n``.
    method : {"auto", "dense", "subspace"}
        ``auto`` picks ``dense`` when ``n <= dense_max``.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    pi = np.asarray(perron, dtype=float)
    if kind is None:
        kind = "row" if np.allclose(M.sum(axis=1), 1.0, atol=1e-10) else "col"
    if kind == "row":
        D = M - np.outer(np.ones(n), pi)
    elif kind == "col":
        D = M - np.outer(pi, np.ones(n))
    else:
        raise ValueError(f"kind must be 'row' or 'col', got {kind!r}")
    if method not in ("auto", "dense", "subspace"):
        raise ValueError(f"method must be 'auto', 'dense' or 'subspace', got {method!r}")
    if n == 1:
        return 0.0
    if method == "dense" or (method == "auto" and n <= dense_max):
        return float(np.abs(np.linalg.eigvals(D)).max())

    p = min(block, n)
    # uniform start would lie in the kernel of D for the row case
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, p)))
    prev = math.inf
    for it in range(max_iter):
        Z = D @ Q
        H = Q.T @ Z
        vals, vecs = np.linalg.eig(H)
        top = int(np.argmax(np.abs(vals)))
        theta = vals[top]
        u = Q @ vecs[:, top]
        res = np.linalg.norm(D @ u - theta * u) / max(np.linalg.norm(u), 1e-300)
        # the random start can contain a subdominant eigenvector exactly,
        # so a small residual alone is not enough
        if it > 0 and abs(abs(theta) - prev) <= tol and (res <= tol or abs(theta) <= tol):
            return float(abs(theta))
        prev = abs(theta)
        Q, _ = np.linalg.qr(Z)
    raise NoConvergence(f"subspace iteration did not reach residual {tol:g} in {max_iter} steps")


def build_weights(g: DirectedGraph) -> WeightMatrices:
    """Uniform weights ``a_ij = 1/|N_i^in|`` and ``b_ij = 1/|N_j^out|``."""
    if not is_strongly_connected(g):
        raise NotStronglyConnected("weights need a strongly connected graph")
    n = g.n
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    for i, nbrs in enumerate(g.in_neighbors):
        for j in nbrs:
            A[i, j] = 1.0 / len(nbrs)
            B[i, j] = 1.0 / len(g.out_neighbors[j])
    return _with_spectra(A, B)


def validate_weights(g: DirectedGraph, A: np.ndarray, B: np.ndarray) -> WeightMatrices:
    """Accept user-supplied matrices after checking stochasticity and support."""
    if not is_strongly_connected(g):
        raise NotStronglyConnected("weights need a strongly connected graph")
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    if A.shape != (g.n, g.n) or B.shape != (g.n, g.n):
        raise InvalidWeights(f"expected {g.n}x{g.n} matrices")
    if (A < 0).any() or (B < 0).any():
        raise InvalidWeights("weights must be nonnegative")
    if np.abs(A.sum(axis=1) - 1).max() > STOCHASTIC_TOL:
        raise InvalidWeights("A is not row-stochastic")
    if np.abs(B.sum(axis=0) - 1).max() > STOCHASTIC_TOL:
        raise InvalidWeights("B is not column-stochastic")
    support = g.in_adjacency()
    if not np.array_equal(A > 0, support):
        raise InvalidWeights("support of A differs from the in-neighbor sets")
    if not np.array_equal(B > 0, support):
        raise InvalidWeights("support of B differs from the in-neighbor sets")
    return _with_spectra(A, B)


def _with_spectra(A: np.ndarray, B: np.ndarray) -> WeightMatrices:
    pi_A = left_perron(A)
    pi_B = right_perron(B)
    return WeightMatrices(
        A=A,
        B=B,
        pi_A=pi_A,
        pi_B=pi_B,
        sigma_A=second_modulus(A, pi_A, kind="row"),
        sigma_B=second_modulus(B, pi_B, kind="col"),
    )


def random_digraph(n: int, p: float, seed: int) -> DirectedGraph:
    """Directed ring ``i -> i+1 (mod n)`` plus each other ordered pair with probability ``p``."""
    if n < 2:
        raise ValueError("random_digraph needs n >= 2")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    extra = rng.random((n, n)) < p
    edges = [(i, (i + 1) % n) for i in range(n)]
    edges += [(int(i), int(j)) for i, j in zip(*np.nonzero(extra)) if i != j]
    return DirectedGraph.from_edges(n, edges)


def complete_graph(n: int) -> DirectedGraph:
    return DirectedGraph(n, tuple(frozenset(range(n)) for _ in range(n)))


def ring_graph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def import_edge_list(text: str) -> DirectedGraph:
    """Parse whitespace-separated 1-based ``src dst`` lines.

    Blank lines and lines starting with ``#`` or ``%`` are skipped. Columns
    after the second (weights, timestamps) are ignored. The node count is the
    largest id seen.
    """
    edges = []
    n = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError(lineno, f"expected 'src dst', got {line!r}")
        try:
            src, dst = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(lineno, f"non-integer node id in {line!r}") from None
        if src < 1 or dst < 1:
            raise ParseError(lineno, "node ids are 1-based")
        n = max(n, src, dst)
        edges.append((src - 1, dst - 1))
    if n == 0:
        raise ParseError(0, "no edges found")
    return DirectedGraph.from_edges(n, edges)


def read_edge_list(path) -> DirectedGraph:
    with open(path) as fh:
        return import_edge_list(fh.read())
