"""FMCW radar baseline and Gaussian-input capacity accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import PathSet
from .grid import FrameParams, as_generator
from .modem import ChannelMatrix


@dataclass(frozen=True)
class FmcwParams:
    """Chirp train: N pulses of length T every T0 = T + T_GI, sampled at M/T."""

    pulse_duration: float
    guard: float
    n_pulses: int
    m_samples: int
    bandwidth: float
    cp_samples: int

    @classmethod
    def from_frame(cls, params: FrameParams) -> "FmcwParams":
        C = int(math.ceil(params.guard_interval / params.delay_bin - 1e-9))
        return cls(params.symbol_duration, params.guard_interval, params.N, params.M,
                   params.bandwidth, C)

    @property
    def samples_per_pulse(self) -> int:
        return self.m_samples + self.cp_samples

    @property
    def sample_rate(self) -> float:
        return self.m_samples / self.pulse_duration

    @property
    def slope(self) -> float:
        return self.bandwidth / self.pulse_duration

    @property
    def repetition(self) -> float:
        return self.pulse_duration + self.guard

    def beat_frequency(self, tau: float) -> float:
        return self.slope * tau


def fmcw_samples(paths: PathSet, fp: FmcwParams, sigma_w2: float = 0.0, rng=None) -> np.ndarray:
    """Dechirped samples y[i, l] (N x L) with optional complex AWGN."""
    i = np.arange(fp.n_pulses)[:, None]
    l = np.arange(fp.samples_per_pulse)[None, :]
    y = np.zeros((fp.n_pulses, fp.samples_per_pulse), dtype=complex)
    for p in paths:
        fb = fp.beat_frequency(p.delay)
        y += p.gain * np.exp(2j * np.pi * (fb + p.doppler) * l / fp.sample_rate) \
            * np.exp(2j * np.pi * p.doppler * i * fp.repetition)
    if sigma_w2 > 0:
        gen = as_generator(rng)
        y += math.sqrt(sigma_w2 / 2) * (gen.standard_normal(y.shape)
                                         + 1j * gen.standard_normal(y.shape))
    return y


@dataclass(frozen=True)
class RangeDopplerMap:
    """|2-D DFT| with axis 0 over beat frequency and axis 1 over Doppler."""

    power: np.ndarray
    pad_fast: int
    pad_slow: int


@dataclass(frozen=True)
class FmcwEstimate:
    delays: np.ndarray
    dopplers: np.ndarray
    degraded: bool
    rd_map: RangeDopplerMap


def range_doppler_map(y: np.ndarray, pad_fast: int = 8, pad_slow: int = 8) -> RangeDopplerMap:
    N, L = y.shape
    Z = np.fft.fft2(y, s=(pad_slow * N, pad_fast * L))
    return RangeDopplerMap(np.abs(Z.T) ** 2, pad_fast, pad_slow)


def _parabolic(m1, m0, p1):
    den = m1 - 2 * m0 + p1
    return 0.0 if den == 0 else 0.5 * (m1 - p1) / den


def fmcw_estimate(y: np.ndarray, fp: FmcwParams, P: int = 1, pad_fast: int = 8,
                  pad_slow: int = 8) -> FmcwEstimate:
    """Top-P peaks of the range-Doppler map with per-axis quadratic refinement.

    The fast-axis tone sits at f_b + nu; the slow-axis estimate of nu is
    subtracted before converting the beat frequency into a delay.
    """
    rd = range_doppler_map(y, pad_fast, pad_slow)
    A = np.sqrt(rd.power)
    nf, ns = A.shape
    pad = np.pad(A, 1, mode="wrap")
    core = pad[1:-1, 1:-1]
    is_max = np.ones_like(core, dtype=bool)
    for df in (-1, 0, 1):
        for ds in (-1, 0, 1):
            if df or ds:
                is_max &= core >= pad[1 + df:nf + 1 + df, 1 + ds:ns + 1 + ds]
    cand = np.flatnonzero(is_max.ravel())
    cand = cand[np.argsort(A.ravel()[cand])[::-1]][:P]
    degraded = cand.size < P
    fs, T0 = fp.sample_rate, fp.repetition
    L, N = y.shape[1], y.shape[0]
    delays, dopplers = [], []
    for c in cand:
        a, b = np.unravel_index(c, A.shape)
        da = _parabolic(A[(a - 1) % nf, b], A[a, b], A[(a + 1) % nf, b])
        db = _parabolic(A[a, (b - 1) % ns], A[a, b], A[a, (b + 1) % ns])
        fa = (a + da) / nf
        fb = (b + db) / ns
        fa -= np.round(fa)
        fb -= np.round(fb)
        nu = fb / T0
        f_fast = fa * fs
        delays.append((f_fast - nu) / fp.slope)
        dopplers.append(nu)
    order = np.argsort(delays)
    return FmcwEstimate(np.array(delays)[order], np.array(dopplers)[order], degraded, rd)


def otfs_overhead(params: FrameParams) -> float:
    NT = params.N * params.symbol_duration
    return NT / (NT + params.guard_interval)


def capacity_gaussian_otfs(psi, snr: float, params: FrameParams, gram=None) -> float:
    """(NT/(NT+T_GI)) (1/NM) log2 det(I + snr Psi Psi^H) in bit/s/Hz.

    det(I + snr Psi Psi^H) = det(I + snr Psi^H Psi), so a precomputed Gram
    matrix can stand in for Psi (pass psi=None, gram=G).
    """
    if gram is not None:
        G = np.asarray(gram)
    elif isinstance(psi, ChannelMatrix):
        G = psi.gram
    else:
        H = np.asarray(psi)
        G = H.conj().T @ H
    n = G.shape[0]
    K = np.eye(n) + snr * G
    L = np.linalg.cholesky(0.5 * (K + K.conj().T))
    logdet = 2.0 * np.sum(np.log(np.real(np.diag(L))))
    return otfs_overhead(params) * logdet / (n * math.log(2))


def cp_samples(tau_max: float, params: FrameParams) -> int:
    return int(math.ceil(tau_max / params.delay_bin - 1e-9))


def capacity_gaussian_ofdm(snr: float, params: FrameParams, tau_max: float | None = None) -> float:
    """(T/(T+T_GI)) log2(1+snr) with T_GI = C T/M, C = ceil(tau_max/(T/M))."""
    T = params.symbol_duration
    t_gi = params.guard_interval if tau_max is None else cp_samples(tau_max, params) * params.delay_bin
    return T / (T + t_gi) * math.log2(1.0 + snr)
