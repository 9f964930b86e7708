"""Factor graph for MP_G: z = Psi^H y, G = Psi^H Psi.

The likelihood factors into singleton terms on z and the diagonal of G and
pairwise terms on each nonzero G[i, j], i < j. Pairwise factors have
degree 2 and there is at most one per variable pair, so the graph cannot
contain 4-cycles.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..modem import ChannelMatrix, adjoint_channel

DEFAULT_PRUNE = 1e-6


@dataclass(frozen=True)
class DetectionGraph:
    z: np.ndarray
    g_diag: np.ndarray
    ei: np.ndarray
    ej: np.ndarray
    g_edge: np.ndarray
    sigma_w2: float
    prune_threshold: float

    @property
    def n_vars(self) -> int:
        return self.z.size

    @property
    def n_edges(self) -> int:
        return self.ei.size

    def neighbours(self):
        """Adjacency list: variable -> list of (factor index, other variable)."""
        adj = [[] for _ in range(self.n_vars)]
        for e, (i, j) in enumerate(zip(self.ei, self.ej)):
            adj[i].append((e, j))
            adj[j].append((e, i))
        return adj


def build_graph(psi, y, sigma_w2: float, prune_threshold: float | None = None) -> DetectionGraph:
    """Sufficient statistics and pairwise factors.

    ``psi`` is a ChannelMatrix or a dense matrix. ``prune_threshold`` is an
    absolute cut on |G[i, j]|; None means 1e-6 * max|G|.
    """
    if not sigma_w2 > 0:
        raise ValueError("sigma_w2 must be positive")
    y = np.asarray(y).ravel()
    if isinstance(psi, ChannelMatrix):
        G = psi.gram
        z = adjoint_channel(y, psi.paths, psi.frame)
    else:
        psi = np.asarray(psi)
        if psi.shape[0] != y.size:
            raise ValueError("psi and y dimensions disagree")
        G = psi.conj().T @ psi
        z = psi.conj().T @ y
    if prune_threshold is None:
        prune_threshold = DEFAULT_PRUNE * float(np.abs(G).max())
    mag = np.abs(G)
    iu = np.triu(mag > prune_threshold, k=1)
    ei, ej = np.nonzero(iu)
    return DetectionGraph(z, np.real(np.diag(G)).copy(), ei.astype(np.intp),
                          ej.astype(np.intp), G[ei, ej].copy(), float(sigma_w2),
                          float(prune_threshold))


def incidence(graph: DetectionGraph) -> sparse.csr_matrix:
    """Variable x pairwise-factor incidence matrix."""
    E = graph.n_edges
    rows = np.concatenate([graph.ei, graph.ej])
    cols = np.concatenate([np.arange(E), np.arange(E)])
    return sparse.csr_matrix((np.ones(2 * E), (rows, cols)), shape=(graph.n_vars, E))


def count_four_cycles(graph: DetectionGraph) -> int:
    """Number of length-4 cycles (var-factor-var-factor) in the factor graph.

    Two variables sharing k factors close k(k-1)/2 such cycles.
    """
    inc = incidence(graph)
    common = (inc @ inc.T).tocoo()
    off = common.row < common.col
    k = common.data[off]
    return int(np.sum(k * (k - 1) // 2))


def girth(graph: DetectionGraph) -> float:
    """Shortest cycle length of the bipartite factor graph (inf if a forest).

    Breadth-first search from every node; meant for toy sizes.
    """
    n, E = graph.n_vars, graph.n_edges
    adj = [[] for _ in range(n + E)]
    for e, (i, j) in enumerate(zip(graph.ei, graph.ej)):
        adj[i].append(n + e)
        adj[j].append(n + e)
        adj[n + e].extend((i, j))
    best = np.inf
    for src in range(n + E):
        dist = {src: 0}
        parent = {src: -1}
        q = deque([src])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    parent[v] = u
                    q.append(v)
                elif parent[u] != v:
                    best = min(best, dist[u] + dist[v] + 1)
    return best
