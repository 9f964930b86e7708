"""Doppler-delay cross-talk matrices and the block relation y = Psi x + w.

A single path acts on the N x M symbol matrix as

    (Psi_p x)[k, l] = sum_{k', l'} A[k, k'] B[l, l'] d[k', l'] x[k', l']

with A[k, k'] = D_N(k' - k + nu N T) / N along Doppler,
B[l, l'] = D_M(l - l' - tau M df) / M along delay, and the column phase
d = exp(j2pi nu l' T/M), times exp(-j2pi(k'/N + nu T)) on the ISI columns
l' >= M - l_tau. Both A and B are unitary, so every Psi_p is unitary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import PathParams, PathSet
from .grid import FrameParams, SymbolFrame, awgn, dirichlet_ratio, unvec, vec

PSI_MAGIC = 0x5346544F  # b"OTFS" little-endian
PSI_VERSION = 1


@dataclass(frozen=True)
class IndexSets:
    ici: np.ndarray
    isi: np.ndarray
    l_tau: int


def delay_taps(tau: float, params: FrameParams) -> int:
    """l_tau = ceil(tau / (T/M)), robust to round-off on exact multiples."""
    a = tau / params.delay_bin
    r = np.round(a)
    if abs(a - r) < 1e-9:
        return int(r)
    return int(np.ceil(a))


def index_sets(tau: float, params: FrameParams) -> IndexSets:
    lt = delay_taps(tau, params)
    M = params.M
    return IndexSets(np.arange(0, M - lt), np.arange(M - lt, M), lt)


def cross_ambiguity(tau: float, nu: float, params: FrameParams) -> complex:
    """Sampled cross-ambiguity of unit rectangular pulses at lag -tau."""
    T = params.symbol_duration
    if not 0 <= tau < T:
        raise ValueError("tau must lie in [0, T)")
    M = params.M
    i = np.arange(M - delay_taps(tau, params))
    return complex(np.exp(2j * np.pi * nu * i * T / M).sum() / M)


def doppler_operator(nu: float, params: FrameParams) -> np.ndarray:
    N = params.N
    k = np.arange(N)
    b = nu * N * params.symbol_duration
    return dirichlet_ratio(k[None, :] - k[:, None] + b, N) / N


def delay_operator(tau: float, params: FrameParams) -> np.ndarray:
    M = params.M
    l = np.arange(M)
    a = tau * M * params.subcarrier_spacing
    return dirichlet_ratio(l[:, None] - l[None, :] - a, M) / M


def column_phase(tau: float, nu: float, params: FrameParams,
                 l_tau: int | None = None) -> np.ndarray:
    """N x M unit-modulus factor d[k', l'] applied before the two operators."""
    N, M, T = params.N, params.M, params.symbol_duration
    lt = delay_taps(tau, params) if l_tau is None else l_tau
    l = np.arange(M)
    k = np.arange(N)
    d = np.broadcast_to(np.exp(2j * np.pi * nu * l * T / M), (N, M)).copy()
    if lt > 0:
        d[:, M - lt:] *= np.exp(-2j * np.pi * (k / N + nu * T))[:, None]
    return d


def apply_path(x: np.ndarray, tau: float, nu: float, params: FrameParams,
               l_tau: int | None = None) -> np.ndarray:
    """Psi_p x for a unit-gain path without forming the NM x NM matrix.

    ``x`` is N x M (or a stack ... x N x M); the result has the same shape.
    """
    A = doppler_operator(nu, params)
    B = delay_operator(tau, params)
    xd = x * column_phase(tau, nu, params, l_tau)
    return A @ xd @ B.T


def build_path_matrix(path: PathParams | tuple, params: FrameParams,
                      l_tau: int | None = None) -> np.ndarray:
    """Dense unit-gain NM x NM matrix Psi_p in column-stacked ordering."""
    tau, nu = (path.delay, path.doppler) if isinstance(path, PathParams) else path
    N, M = params.N, params.M
    A = doppler_operator(nu, params)
    B = delay_operator(tau, params)
    d = column_phase(tau, nu, params, l_tau)
    # psi4[l, k, l', k'] -> row l*N + k, column l'*N + k'
    psi4 = np.einsum("ab,kq,qb->akbq", B, A, d, optimize=True)
    return psi4.reshape(N * M, N * M)


@dataclass(frozen=True)
class ChannelMatrix:
    """Composite Psi = sum_p h'_p Psi_p together with its unit-gain parts."""

    psi: np.ndarray
    per_path: tuple
    frame: FrameParams
    paths: PathSet

    @cached_property
    def gram(self) -> np.ndarray:
        return gram_matrix(self.paths, self.frame)


def build_channel(paths: PathSet, params: FrameParams, keep_paths: bool = True) -> ChannelMatrix:
    per = []
    psi = np.zeros((params.size, params.size), dtype=complex)
    for p in paths:
        m = build_path_matrix(p, params)
        psi += p.gain * m
        if keep_paths:
            per.append(m)
    return ChannelMatrix(psi, tuple(per), params, paths)


def identity_channel(params: FrameParams) -> ChannelMatrix:
    paths = PathSet.single(1.0, 0.0, 0.0)
    return ChannelMatrix(np.eye(params.size, dtype=complex),
                         (np.eye(params.size, dtype=complex),), params, paths)


def apply_channel(x: np.ndarray, paths: PathSet, params: FrameParams) -> np.ndarray:
    """sum_p h'_p Psi_p x on N x M input, using the fast per-path operator."""
    out = np.zeros(np.shape(x), dtype=complex)
    for p in paths:
        out += p.gain * apply_path(x, p.delay, p.doppler, params)
    return out


def transmit(frame: SymbolFrame | np.ndarray, channel: ChannelMatrix, sigma_w2: float,
             rng=None) -> np.ndarray:
    """y = Psi x + w as an NM vector; noiseless when sigma_w2 == 0."""
    x = frame.vector if isinstance(frame, SymbolFrame) else np.asarray(frame).ravel()
    if x.size != channel.psi.shape[1]:
        raise ValueError(f"frame has {x.size} symbols, channel expects {channel.psi.shape[1]}")
    y = channel.psi @ x
    if sigma_w2 > 0:
        y = y + awgn(y.size, sigma_w2, rng)
    elif sigma_w2 < 0:
        raise ValueError("sigma_w2 must be nonnegative")
    return y


def transmit_fast(x: np.ndarray, paths: PathSet, params: FrameParams, sigma_w2: float,
                  rng=None) -> np.ndarray:
    """Same as transmit() but never builds Psi; returns an NM vector."""
    X = x.symbols if isinstance(x, SymbolFrame) else np.asarray(x)
    if X.ndim == 1:
        X = unvec(X, params.N, params.M)
    y = vec(apply_channel(X, paths, params))
    if sigma_w2 > 0:
        y = y + awgn(y.size, sigma_w2, rng)
    return y


def isfft(x: np.ndarray) -> np.ndarray:
    """X[n, m] = sum_{k,l} x[k, l] exp(j2pi(nk/N - ml/M))."""
    N = x.shape[0]
    return N * np.fft.ifft(np.fft.fft(x, axis=1), axis=0)


def sfft(Y: np.ndarray) -> np.ndarray:
    """y[k, l] = 1/(NM) sum_{n,m} Y[n, m] exp(-j2pi(nk/N - ml/M))."""
    N = Y.shape[0]
    return np.fft.fft(np.fft.ifft(Y, axis=1), axis=0) / N


def dump_psi(path, channel: ChannelMatrix | np.ndarray, params: FrameParams | None = None,
             n_paths: int | None = None, flags: int = 0):
    """Binary dump: 8 little-endian int32 header words, then complex64 rows."""
    psi = channel.psi if isinstance(channel, ChannelMatrix) else np.asarray(channel)
    if isinstance(channel, ChannelMatrix):
        params = channel.frame
        n_paths = len(channel.paths)
    header = struct.pack("<8i", PSI_MAGIC, PSI_VERSION, params.N, params.M,
                         n_paths or 0, flags, 0, 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(psi, dtype="<c8").tobytes())


def load_psi(path):
    with open(path, "rb") as fh:
        magic, version, N, M, P, flags, _, _ = struct.unpack("<8i", fh.read(32))
        if magic != PSI_MAGIC:
            raise ValueError("not a Psi dump")
        data = np.frombuffer(fh.read(), dtype="<c8")
    NM = N * M
    return data.reshape(NM, NM), dict(version=version, N=N, M=M, P=P, flags=flags)


def path_factors(tau: float, nu: float, params: FrameParams, l_tau: int | None = None):
    """(A, B, d) with Psi_p = (B kron A) diag(vec(d))."""
    return (doppler_operator(nu, params), delay_operator(tau, params),
            column_phase(tau, nu, params, l_tau))


def gram_matrix(paths: PathSet, params: FrameParams) -> np.ndarray:
    """G = Psi^H Psi assembled from Kronecker blocks of the per-path factors.

    Costs O(P^2 (NM)^2) instead of the O((NM)^3) dense product.
    """
    facs = [(p.gain,) + path_factors(p.delay, p.doppler, params) for p in paths]
    NM = params.size
    G = np.zeros((NM, NM), dtype=complex)
    for hp, Ap, Bp, dp in facs:
        for hq, Aq, Bq, dq in facs:
            K = np.kron(Bp.conj().T @ Bq, Ap.conj().T @ Aq)
            G += (np.conj(hp) * hq) * (np.conj(vec(dp))[:, None] * K * vec(dq)[None, :])
    return 0.5 * (G + G.conj().T)


def adjoint_channel(y: np.ndarray, paths: PathSet, params: FrameParams) -> np.ndarray:
    """Psi^H y for an NM vector y, returned as an NM vector."""
    Y = unvec(np.asarray(y), params.N, params.M)
    out = np.zeros_like(Y, dtype=complex)
    for p in paths:
        A, B, d = path_factors(p.delay, p.doppler, params)
        out += np.conj(p.gain) * np.conj(d) * (A.conj().T @ Y @ B.conj())
    return vec(out)
