"""Cramer-Rao and threshold-region (waterfall) bounds for delay/Doppler."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ROUND_TRIP, PathSet
from .grid import SPEED_OF_LIGHT, FrameParams, unvec
from .modem import column_phase, delay_taps
from .radar import SearchGrid, correlate

I0_SWITCH = 20.0
PARAM_NAMES = ("abs", "arg", "tau", "nu")


def _sum_operator(n_terms, arg, weights=None):
    """(1/K) sum_i w_i exp(j2pi arg * i / K) with arg an array."""
    i = np.arange(n_terms)
    e = np.exp(2j * np.pi * np.multiply.outer(arg, i) / n_terms)
    if weights is not None:
        e = e * weights
    return e.sum(axis=-1) / n_terms


def _operators(tau, nu, params: FrameParams):
    N, M, T = params.N, params.M, params.symbol_duration
    k = np.arange(N)
    l = np.arange(M)
    argA = k[None, :] - k[:, None] + nu * N * T
    argB = l[:, None] - l[None, :] - tau * M * params.subcarrier_spacing
    A = _sum_operator(N, argA)
    dA = _sum_operator(N, argA, 2j * np.pi * np.arange(N) * T)
    B = _sum_operator(M, argB)
    dB = _sum_operator(M, argB, -2j * np.pi * np.arange(M) * params.subcarrier_spacing)
    return A, dA, B, dB


def signal_derivatives(path, x, params: FrameParams, l_tau: int | None = None) -> dict:
    """Derivatives of s = h' Psi(tau, nu) x w.r.t. |h'|, arg h', tau and nu.

    Returned arrays are N x M. ``l_tau`` pins the ICI/ISI split so that
    derivatives can be compared with finite differences across a tap edge.
    """
    X = np.asarray(x)
    if X.ndim == 1:
        X = unvec(X, params.N, params.M)
    tau, nu, h = path.delay, path.doppler, complex(path.gain)
    M, T = params.M, params.symbol_duration
    lt = delay_taps(tau, params) if l_tau is None else l_tau
    A, dA, B, dB = _operators(tau, nu, params)
    d = column_phase(tau, nu, params, lt)
    xd = X * d
    base = A @ xd @ B.T
    lphase = 2j * np.pi * np.arange(M) * T / M
    if lt > 0:
        lphase = lphase.copy()
        lphase[M - lt:] -= 2j * np.pi * T
    dnu = dA @ xd @ B.T + A @ (xd * lphase[None, :]) @ B.T
    dtau = A @ xd @ dB.T
    unit = h / abs(h) if h != 0 else 1.0
    return {"abs": unit * base, "arg": 1j * h * base, "tau": h * dtau, "nu": h * dnu}


@dataclass(frozen=True)
class FisherMatrix:
    matrix: np.ndarray
    names: tuple
    paths: PathSet
    frame: FrameParams
    snr: float


def fisher(x, paths: PathSet, params: FrameParams, snr: float) -> FisherMatrix:
    """4P x 4P Fisher information, parameter order (|h|..., arg h..., tau..., nu...)."""
    P = len(paths)
    cols, names = [None] * (4 * P), [None] * (4 * P)
    for p, path in enumerate(paths):
        der = signal_derivatives(path, x, params)
        for j, key in enumerate(PARAM_NAMES):
            cols[j * P + p] = der[key].ravel()
            names[j * P + p] = f"{key}{p}"
    J = np.stack(cols, axis=1)
    F = 2.0 * snr * np.real(J.conj().T @ J)
    F = 0.5 * (F + F.T)
    return FisherMatrix(F, tuple(names), paths, params, float(snr))


@dataclass(frozen=True)
class CrlbReport:
    variances: np.ndarray
    names: tuple
    delay: float
    doppler: float
    range_rmse: float
    velocity_rmse: float
    condition: float

    def __getitem__(self, name):
        return self.variances[self.names.index(name)]


def crlb(fm: FisherMatrix, path: int = 0) -> CrlbReport:
    """Diagonal of the inverse Fisher matrix with range/velocity conversion."""
    F = fm.matrix
    diag = np.diag(F)
    if np.any(diag <= 0):
        raise np.linalg.LinAlgError("singular Fisher matrix (zero-information parameter)")
    D = 1.0 / np.sqrt(diag)
    Fs = F * np.outer(D, D)
    cond = np.linalg.cond(Fs)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn(f"ill-conditioned Fisher matrix (cond {cond:.3g}); using pseudo-inverse",
                      RuntimeWarning, stacklevel=2)
        inv = np.linalg.pinv(Fs)
    else:
        inv = np.linalg.inv(Fs)
    var = np.diag(inv) * D ** 2
    P = len(fm.paths)
    vt, vn = var[2 * P + path], var[3 * P + path]
    scale = 0.5 if fm.paths.mode == ROUND_TRIP else 1.0
    r = scale * SPEED_OF_LIGHT * math.sqrt(vt)
    v = scale * SPEED_OF_LIGHT * math.sqrt(vn) / fm.frame.carrier_freq
    return CrlbReport(var, fm.names, float(vt), float(vn), r, v, float(cond))


def log_i0(x):
    """log of the modified Bessel function I0, stable for large arguments."""
    xa = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(xa)
    small = xa <= I0_SWITCH
    if np.any(small):
        q = (xa[small] / 2.0) ** 2
        term = np.ones_like(q)
        acc = np.zeros_like(q)
        for k in range(1, 80):
            term = term * q / (k * k)
            acc += term
            if np.all(term <= 1e-17 * (1.0 + acc)):
                break
        out[small] = np.log1p(acc)
    big = ~small
    if np.any(big):
        z = xa[big]
        term = np.ones_like(z)
        acc = np.ones_like(z)
        for k in range(1, 40):
            nxt = term * (2 * k - 1) ** 2 / (k * 8.0 * z)
            if np.all(nxt >= term):
                break
            term = nxt
            acc += term
            if np.all(term < 1e-17):
                break
        out[big] = z - 0.5 * np.log(2 * np.pi * z) + np.log(acc)
    if np.ndim(x) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class WaterfallBound:
    snr: np.ndarray
    delay_mse: np.ndarray
    doppler_mse: np.ndarray
    delay_pairwise: np.ndarray
    doppler_pairwise: np.ndarray
    delay_random: float
    doppler_random: float


def pairwise_log_probs(x, params: FrameParams, path, grid: SearchGrid, snr: float) -> np.ndarray:
    """log Pr(node i beats the true shift) for every coarse node, shape (n_nu, n_tau).

    ``snr`` is P_avg / sigma_w^2. The NM*P_avg normalisation is replaced by
    ||x||^2, which makes the far-node value exact and Pr -> 1/2 as snr -> 0.
    """
    X = np.asarray(x)
    if X.ndim == 1:
        X = unvec(X, params.N, params.M)
    from .modem import apply_path

    s = apply_path(X, path.delay, path.doppler, params)
    rho = np.abs(correlate(s, X, grid.delay_axis, grid.doppler_axis, params))
    E = float(np.vdot(X, X).real)
    g2 = abs(path.gain) ** 2
    c = g2 * snr / 2.0
    return np.log(0.5) - c * E + log_i0(c * rho)


def waterfall_bound(x, params: FrameParams, path, grid: SearchGrid, snrs) -> WaterfallBound:
    """Outlier MSE bound min(sum_i Pr_i err_i^2, mean_i err_i^2) per SNR."""
    snrs = np.atleast_1d(np.asarray(snrs, dtype=float))
    taus, nus = np.meshgrid(grid.delay_axis, grid.doppler_axis)
    et2 = (taus - path.delay) ** 2
    en2 = (nus - path.doppler) ** 2
    rand_t, rand_n = float(et2.mean()), float(en2.mean())
    pt, pn = [], []
    for snr in snrs:
        lp = pairwise_log_probs(x, params, path, grid, snr)
        pr = np.exp(lp)
        pt.append(float(np.sum(pr * et2)))
        pn.append(float(np.sum(pr * en2)))
    pt, pn = np.array(pt), np.array(pn)
    return WaterfallBound(snrs, np.minimum(pt, rand_t), np.minimum(pn, rand_n), pt, pn,
                          rand_t, rand_n)


def threshold_snr(snr_db, mse, crlb_mse, factor: float = 10.0) -> float:
    """Lowest SNR (dB, interpolated) from which mse stays below factor * crlb."""
    snr_db = np.asarray(snr_db, dtype=float)
    ratio = np.log10(np.asarray(mse) / (factor * np.asarray(crlb_mse)))
    above = np.flatnonzero(ratio > 0)
    if above.size == 0:
        return float(snr_db[0])
    i = above[-1]
    if i == snr_db.size - 1:
        return float("nan")
    r0, r1 = ratio[i], ratio[i + 1]
    return float(snr_db[i] + (snr_db[i + 1] - snr_db[i]) * r0 / (r0 - r1))
