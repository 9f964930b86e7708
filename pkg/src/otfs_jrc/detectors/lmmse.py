"""Full-block linear MMSE equalizer.

x_hat = Psi^H (Psi Psi^H + s2 I)^{-1} y = (G + s2 I)^{-1} z, and the
per-symbol bias mu_i = [(G + s2 I)^{-1} G]_ii = 1 - s2 [(G + s2 I)^{-1}]_ii.
One Cholesky factorisation gives both; the cost is cubic in NM.
"""

from __future__ import annotations

import time

import numpy as np
from scipy import linalg

from ..grid import Constellation
from ..modem import ChannelMatrix, adjoint_channel
from .common import SoftOutput


class SolverFailure(np.linalg.LinAlgError):
    pass


def lmmse_detect(psi, y, sigma_w2: float, constellation: Constellation,
                 gram: np.ndarray | None = None) -> SoftOutput:
    y = np.asarray(y).ravel()
    if not sigma_w2 > 0:
        raise ValueError("sigma_w2 must be positive")
    t0 = time.perf_counter()
    if isinstance(psi, ChannelMatrix):
        G = psi.gram if gram is None else gram
        z = adjoint_channel(y, psi.paths, psi.frame)
    else:
        H = np.asarray(psi)
        if H.shape[0] != y.size:
            raise ValueError("psi and y dimensions disagree")
        G = H.conj().T @ H if gram is None else gram
        z = H.conj().T @ y
    K = G + sigma_w2 * np.eye(G.shape[0])
    try:
        c, lower = linalg.cho_factor(K, lower=False, check_finite=False)
    except linalg.LinAlgError as exc:
        cond = np.linalg.cond(K)
        raise SolverFailure(f"Cholesky failed, condition estimate {cond:.3g}") from exc
    x_hat = linalg.cho_solve((c, lower), z, check_finite=False)
    inv, info = linalg.lapack.zpotri(c, lower=0)
    if info != 0:
        raise SolverFailure(f"zpotri returned {info}")
    kdiag = np.real(np.diag(inv))
    mu = np.clip(1.0 - sigma_w2 * kdiag, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        sinr = np.where(mu < 1.0, mu / (1.0 - mu), np.inf)
    return SoftOutput(constellation, estimate=x_hat, sinr=sinr, bias=mu, iterations=1,
                      converged=True, info={"wall_time_s": time.perf_counter() - t0})
