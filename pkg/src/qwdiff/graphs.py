"""Cycle graphs and classical random walks on them.

Probability vectors are columns and evolve as ``p <- S @ p``; ``S`` is
normalised by the degree of the source node so its columns sum to one.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGraphError, ShapeError


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.int64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidGraphError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise InvalidGraphError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0) or not np.isin(a, (0, 1)).all():
            raise InvalidGraphError("adjacency must be 0/1 with zero diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise InvalidGraphError(f"a cycle needs at least 3 nodes, got {n}")
    a = np.zeros((n, n), dtype=np.int64)
    idx = np.arange(n)
    a[idx, (idx + 1) % n] = 1
    a[idx, (idx - 1) % n] = 1
    return Graph(a)


def path_graph(n: int) -> Graph:
    if n < 2:
        raise InvalidGraphError(f"a path needs at least 2 nodes, got {n}")
    a = np.zeros((n, n), dtype=np.int64)
    idx = np.arange(n - 1)
    a[idx, idx + 1] = 1
    a[idx + 1, idx] = 1
    return Graph(a)


def _check_no_isolated(g: Graph):
    if np.any(g.degrees == 0):
        raise InvalidGraphError("graph has an isolated node")


def transition_matrix(g: Graph) -> np.ndarray:
    """Column-stochastic hopping matrix, ``S[i, j] = A[i, j] / d_j``."""
    _check_no_isolated(g)
    return g.adjacency / g.degrees[np.newaxis, :]


def crw_step(p, s):
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[1] != p.shape[0]:
        raise ShapeError(f"cannot apply {s.shape} matrix to vector of length {p.shape[0]}")
    return s @ p


def crw_evolve(p0, s, steps: int) -> np.ndarray:
    """Distributions ``p_0 .. p_steps`` of the discrete-time walk, one per row."""
    out = np.empty((steps + 1, len(p0)))
    out[0] = p0
    for t in range(steps):
        out[t + 1] = crw_step(out[t], s)
    return out


def stationary_distribution(g: Graph) -> np.ndarray:
    _check_no_isolated(g)
    d = g.degrees.astype(float)
    return d / d.sum()


def ctrw_kernel(g: Graph, tau: float) -> np.ndarray:
    """Transition matrix of the continuous-time walk ``dp/dt = (S - I) p`` over ``tau``."""
    from scipy.linalg import expm

    s = transition_matrix(g)
    k = expm(tau * (s - np.eye(g.n_nodes)))
    k = np.clip(k, 0.0, None)
    return k / k.sum(axis=0, keepdims=True)
