"""Pure numpy implementation of the MP_G flooding round.

Mirrors the compiled kernel in ``_kernels.pyx``; used when the extension
is unavailable or when OTFS_JRC_PURE_PYTHON=1.
"""

from __future__ import annotations

import numpy as np

CHUNK = 16384


def _lse(a, axis):
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def accumulate(log_f, ei, ej, msg_i, msg_j, out):
    """out = log_f + sum of incoming factor messages per variable."""
    out[...] = log_f
    Q = log_f.shape[1]
    for a in range(Q):
        out[:, a] += np.bincount(ei, weights=msg_i[:, a], minlength=out.shape[0])
        out[:, a] += np.bincount(ej, weights=msg_j[:, a], minlength=out.shape[0])
    return out


def factor_messages(L, mu_i, mu_j, counter=None):
    """Messages of pairwise factors exp(L[e, a, b]) to both neighbours.

    Returns (to_i, to_j), each normalized to a zero maximum. Every output
    entry is a sum over |C| kernel terms; ``counter`` tallies them.
    """
    to_i = _lse(L + mu_j[:, None, :], axis=2)
    to_j = _lse(L + mu_i[:, :, None], axis=1)
    if counter is not None:
        E, Q = mu_i.shape
        counter["terms"] = counter.get("terms", 0) + 2 * E * Q * Q
        counter["entries"] = counter.get("entries", 0) + 2 * E * Q
        counter["factors"] = counter.get("factors", 0) + E
    to_i -= to_i.max(axis=1, keepdims=True)
    to_j -= to_j.max(axis=1, keepdims=True)
    return to_i, to_j


def flood(ei, ej, w, points, log_v, msg_i, msg_j, damping=0.0, counter=None):
    """One flooding round, in place on msg_i / msg_j.

    w[e] = -(2/sigma^2) G[ei, ej]; the pairwise factor is
    exp(Re{w conj(c_a) c_b}) with x_ei = c_a and x_ej = c_b.
    Returns the largest absolute message change.
    """
    cc = np.conj(points)[:, None] * points[None, :]
    cre, cim = cc.real, cc.imag
    delta = 0.0
    for s in range(0, ei.size, CHUNK):
        sl = slice(s, s + CHUNK)
        wc = w[sl]
        L = wc.real[:, None, None] * cre - wc.imag[:, None, None] * cim
        mu_i = log_v[ei[sl]] - msg_i[sl]
        mu_j = log_v[ej[sl]] - msg_j[sl]
        mu_i -= mu_i.max(axis=1, keepdims=True)
        mu_j -= mu_j.max(axis=1, keepdims=True)
        to_i, to_j = factor_messages(L, mu_i, mu_j, counter)
        if damping:
            to_i = (1 - damping) * to_i + damping * msg_i[sl]
            to_j = (1 - damping) * to_j + damping * msg_j[sl]
        delta = max(delta, float(np.max(np.abs(to_i - msg_i[sl]), initial=0.0)),
                    float(np.max(np.abs(to_j - msg_j[sl]), initial=0.0)))
        msg_i[sl] = to_i
        msg_j[sl] = to_j
    return delta
