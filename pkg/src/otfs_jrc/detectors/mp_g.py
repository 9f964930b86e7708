"""Sum-product detection on the girth-6 factor graph of G = Psi^H Psi."""

from __future__ import annotations

import numpy as np

from ..grid import Constellation
from ..kernels import get_backend
from .common import NumericalFailure, SoftOutput, log_prior, softmax
from .graph import DetectionGraph


def singleton_logs(graph: DetectionGraph, constellation: Constellation, prior=None) -> np.ndarray:
    """log F_i(c_a) + log prior, with F_i = exp[(2/s2) Re{z_i c_a^*} - (G_ii/s2)|c_a|^2]."""
    pts = constellation.points
    s2 = graph.sigma_w2
    lf = (2.0 / s2) * np.real(graph.z[:, None] * np.conj(pts)[None, :]) \
        - (graph.g_diag[:, None] / s2) * (np.abs(pts) ** 2)[None, :]
    return np.ascontiguousarray(lf + log_prior(prior, graph.n_vars, pts.size))


def mp_g_detect(graph: DetectionGraph, constellation: Constellation, prior=None,
                iterations: int = 15, damping: float = 0.0, tol: float = 1e-6,
                backend: str | None = None, callback=None, counter=None) -> SoftOutput:
    """Flooding sum-product with log-domain messages.

    ``callback(iteration, V)`` receives the normalized marginals after every
    round. ``counter`` (a dict) accumulates kernel-term counts.
    """
    be = get_backend(backend)
    pts = constellation.points
    Q = pts.size
    log_f = singleton_logs(graph, constellation, prior)
    E = graph.n_edges
    msg_i = np.zeros((E, Q))
    msg_j = np.zeros((E, Q))
    log_v = log_f.copy()
    w = -(2.0 / graph.sigma_w2) * graph.g_edge
    ei = np.ascontiguousarray(graph.ei, dtype=np.intp)
    ej = np.ascontiguousarray(graph.ej, dtype=np.intp)
    converged = E == 0
    it = 0
    if callback is not None:
        callback(0, softmax(log_v))
    while not converged and it < iterations:
        it += 1
        delta = be.flood(ei, ej, w, pts, log_v, msg_i, msg_j, damping, counter)
        be.accumulate(log_f, ei, ej, msg_i, msg_j, log_v)
        if not np.all(np.isfinite(log_v)):
            raise NumericalFailure("mp_g", it)
        if callback is not None:
            callback(it, softmax(log_v))
        converged = delta < tol
    return SoftOutput(constellation, pmf=softmax(log_v), iterations=it, converged=converged,
                      info={"edges": E, "prune_threshold": graph.prune_threshold,
                            "backend": be.__name__.rsplit(".", 1)[-1]})
