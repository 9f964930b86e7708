"""Pragmatic capacity, symmetric AWGN capacity and RMSE reducers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Constellation, as_generator

PMF_FLOOR = 1e-15


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    stderr: float
    count: int


class CapacityAccumulator:
    """Mergeable running sums of per-symbol information values."""

    def __init__(self):
        self.n = 0
        self.s = 0.0
        self.s2 = 0.0

    def add(self, values):
        v = np.asarray(values, dtype=float).ravel()
        self.n += v.size
        self.s += float(v.sum())
        self.s2 += float(np.dot(v, v))
        return self

    def merge(self, other: "CapacityAccumulator"):
        self.n += other.n
        self.s += other.s
        self.s2 += other.s2
        return self

    def result(self, offset: float = 0.0) -> CapacityEstimate:
        if self.n == 0:
            raise ValueError("no samples")
        mean = self.s / self.n
        var = max(self.s2 / self.n - mean * mean, 0.0)
        se = math.sqrt(var / self.n) if self.n > 1 else 0.0
        return CapacityEstimate(offset + mean, se, self.n)


def symbol_information(pmf: np.ndarray, constellation: Constellation, true_idx=None,
                       estimator: str = "entropy") -> np.ndarray:
    """Per-symbol contributions log2|C| - H(V) (or - log2 1/V(x_true)).

    ``estimator="entropy"`` is the symbol-by-symbol mutual information
    formula; ``"true-symbol"`` uses the posterior mass of the transmitted
    symbol, which stays an achievable rate for miscalibrated detectors.
    """
    V = np.asarray(pmf, dtype=float)
    if V.ndim != 2 or V.shape[1] != constellation.size:
        raise ValueError("pmf must be (n_symbols, |C|)")
    if np.any(V < -1e-12) or np.any(np.abs(V.sum(axis=1) - 1) > 1e-6):
        raise ValueError("pmf rows must be normalized")
    logq = math.log2(constellation.size)
    if estimator == "entropy":
        Vc = np.maximum(V, PMF_FLOOR)
        h = -np.sum(np.where(V > 0, V * np.log2(Vc), 0.0), axis=1)
        return logq - h
    if estimator == "true-symbol":
        if true_idx is None:
            raise ValueError("true-symbol estimator needs the transmitted indices")
        vt = np.maximum(V[np.arange(V.shape[0]), np.asarray(true_idx)], PMF_FLOOR)
        return logq + np.log2(vt)
    raise ValueError(f"unknown estimator {estimator!r}")


def pragmatic_capacity(true_idx, pmf, constellation: Constellation,
                       estimator: str = "entropy") -> CapacityEstimate:
    vals = symbol_information(pmf, constellation, true_idx, estimator)
    return CapacityAccumulator().add(vals).result()


def awgn_symmetric_capacity(constellation: Constellation, snr: float, draws: int = 100_000,
                            rng=0) -> float:
    """Monte Carlo I(x; x + w) in bits, x uniform on C, E|w|^2 = 1/snr."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    gen = as_generator(rng)
    pts = constellation.points
    s2 = 1.0 / snr
    x = pts[gen.integers(0, pts.size, draws)]
    w = math.sqrt(s2 / 2) * (gen.standard_normal(draws) + 1j * gen.standard_normal(draws))
    total = 0.0
    for s in range(0, draws, 8192):
        xs, ws = x[s:s + 8192], w[s:s + 8192]
        d = -(np.abs(xs[:, None] + ws[:, None] - pts[None, :]) ** 2 - np.abs(ws[:, None]) ** 2) / s2
        m = d.max(axis=1)
        total += float(np.sum(m + np.log(np.exp(d - m[:, None]).sum(axis=1))))
    return math.log2(pts.size) - total / draws / math.log(2)


def _quadrature_capacity(points: np.ndarray, snr: float, order: int = 32) -> float:
    s = math.sqrt(1.0 / (2.0 * snr))
    g, wts = np.polynomial.hermite.hermgauss(order)
    n = math.sqrt(2) * s * (g[:, None] + 1j * g[None, :])
    w2 = np.outer(wts, wts) / math.pi
    acc = 0.0
    for a in points:
        d = -(np.abs(a - points[:, None, None] + n[None]) ** 2 - np.abs(n[None]) ** 2) / (2 * s * s)
        m = d.max(axis=0)
        acc += float(np.sum(w2 * (m + np.log(np.exp(d - m).sum(axis=0)))))
    return math.log2(points.size) - acc / points.size / math.log(2)


@lru_cache(maxsize=16)
def _capacity_table(key: tuple):
    pts = np.array(key)
    snr_db = np.linspace(-30.0, 50.0, 161)
    vals = np.array([_quadrature_capacity(pts, 10 ** (s / 10)) for s in snr_db])
    return snr_db, np.clip(vals, 0.0, math.log2(pts.size))


def symmetric_capacity_curve(constellation: Constellation, snr) -> np.ndarray:
    """Tabulated (Gauss-Hermite) symmetric capacity, vectorized over snr."""
    key = tuple(complex(p) for p in constellation.points)
    grid, vals = _capacity_table(key)
    s = np.asarray(snr, dtype=float)
    with np.errstate(divide="ignore"):
        sdb = 10 * np.log10(np.maximum(s, 1e-300))
    out = np.interp(sdb, grid, vals, left=0.0, right=math.log2(constellation.size))
    return np.where(np.isinf(s), math.log2(constellation.size), out)


def lmmse_information(sinr, constellation: Constellation) -> np.ndarray:
    """Per-symbol symmetric capacity at each output SINR."""
    return symmetric_capacity_curve(constellation, sinr)


@dataclass(frozen=True)
class RmseRow:
    rmse: float
    trials: int
    outlier_fraction: float
    stderr: float


class RmseAccumulator:
    """Mergeable squared-error sums; outliers are errors above a limit."""

    def __init__(self, outlier_limit: float = np.inf):
        self.limit = outlier_limit
        self.n = 0
        self.s = 0.0
        self.s2 = 0.0
        self.out = 0

    def add(self, errors):
        e = np.abs(np.asarray(errors, dtype=float).ravel())
        sq = e * e
        self.n += e.size
        self.s += float(sq.sum())
        self.s2 += float(np.dot(sq, sq))
        self.out += int(np.sum(e > self.limit))
        return self

    def merge(self, other: "RmseAccumulator"):
        self.n += other.n
        self.s += other.s
        self.s2 += other.s2
        self.out += other.out
        return self

    def result(self) -> RmseRow:
        if self.n == 0:
            raise ValueError("rmse of an empty sample")
        mse = self.s / self.n
        var = max(self.s2 / self.n - mse * mse, 0.0)
        r = math.sqrt(mse)
        # delta method: se(rmse) = se(mse) / (2 rmse)
        se = math.sqrt(var / self.n) / (2 * r) if r > 0 and self.n > 1 else 0.0
        return RmseRow(r, self.n, self.out / self.n, se)


def rmse(estimates, truths, window: float = np.inf) -> RmseRow:
    """RMSE with the share of errors larger than half the search window."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truths, dtype=float)
    if est.size == 0:
        raise ValueError("rmse of an empty sample")
    return RmseAccumulator(window / 2).add(est - tru).result()
