"""Soft interference cancellation on the girth-4 graph of Psi (MP_Psi).

Each observation y_d talks to the symbols in its row of the (nominal)
channel matrix. The message from y_d to x_c models all other symbols of
the row as one Gaussian with their current means and variances, which
gives a Gaussian likelihood for every candidate value of x_c.
"""

from __future__ import annotations

import numpy as np

from ..channel import round_delays
from ..grid import Constellation
from ..modem import ChannelMatrix, build_channel
from .common import NumericalFailure, SoftOutput, log_prior, softmax

DEFAULT_PRUNE = 1e-6


def nominal_matrix(channel: ChannelMatrix, integer_rounding: bool) -> np.ndarray:
    if not integer_rounding:
        return channel.psi
    return build_channel(round_delays(channel.paths, channel.frame), channel.frame,
                         keep_paths=False).psi


def mp_psi_detect(psi, y, sigma_w2: float, constellation: Constellation,
                  iterations: int = 30, damping: float = 0.5, integer_rounding: bool = False,
                  prune_threshold: float | None = None, prior=None, tol: float = 1e-6,
                  max_edges: int = 20_000_000) -> SoftOutput:
    """``damping`` mixes new and previous factor-to-variable log messages
    (weight on the previous one); the first round is undamped."""
    if integer_rounding and not isinstance(psi, ChannelMatrix):
        raise ValueError("integer rounding needs a ChannelMatrix with its paths")
    H = nominal_matrix(psi, integer_rounding) if isinstance(psi, ChannelMatrix) else np.asarray(psi)
    y = np.asarray(y).ravel()
    if H.shape[0] != y.size:
        raise ValueError("psi and y dimensions disagree")
    if not sigma_w2 > 0:
        raise ValueError("sigma_w2 must be positive")
    mag = np.abs(H)
    thr = DEFAULT_PRUNE * mag.max() if prune_threshold is None else prune_threshold
    rows, cols = np.nonzero(mag > thr)
    if rows.size > max_edges:
        raise MemoryError(f"{rows.size} edges exceed max_edges; raise prune_threshold")
    h = H[rows, cols]
    n_obs, n = H.shape
    pts = constellation.points
    Q = pts.size
    e2 = np.abs(pts) ** 2
    lp = log_prior(prior, n, Q)
    h2 = np.abs(h) ** 2

    p_edge = softmax(lp[cols])
    L = np.zeros((rows.size, Q))
    converged = False
    it = 0
    lam = lp.copy()
    while it < iterations:
        it += 1
        mean = p_edge @ pts
        var = np.maximum(p_edge @ e2 - np.abs(mean) ** 2, 0.0)
        hm = h * mean
        tot = np.bincount(rows, weights=hm.real, minlength=n_obs) \
            + 1j * np.bincount(rows, weights=hm.imag, minlength=n_obs)
        tv = np.bincount(rows, weights=h2 * var, minlength=n_obs) + sigma_w2
        mu = tot[rows] - hm
        s2 = np.maximum(tv[rows] - h2 * var, 1e-300)
        resid = (y[rows] - mu)[:, None] - h[:, None] * pts[None, :]
        new = -np.abs(resid) ** 2 / s2[:, None]
        new -= new.max(axis=1, keepdims=True)
        if it > 1 and damping:
            new = (1 - damping) * new + damping * L
        delta = float(np.max(np.abs(new - L), initial=0.0))
        L = new
        lam = lp.copy()
        for a in range(Q):
            lam[:, a] += np.bincount(cols, weights=L[:, a], minlength=n)
        if not np.all(np.isfinite(lam)):
            raise NumericalFailure("mp_psi", it)
        p_edge = softmax(lam[cols] - L)
        if it > 1 and delta < tol:
            converged = True
            break
    return SoftOutput(constellation, pmf=softmax(lam), iterations=it, converged=converged,
                      info={"edges": int(rows.size), "prune_threshold": float(thr),
                            "integer_rounding": integer_rounding})
