"""Frame geometry, constellations, random draws and the Dirichlet ratio."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# |1 - exp(j2pi x/K)| below this is treated as the 0/0 limit.
DIRICHLET_EPS = 1e-9


@dataclass(frozen=True)
class FrameParams:
    """OTFS frame geometry.

    ``symbol_duration`` is derived from the subcarrier spacing so that
    T * df == 1 holds by construction.
    """

    n_doppler: int = 50
    m_delay: int = 64
    subcarrier_spacing: float = 156.25e3
    carrier_freq: float = 5.89e9
    guard_interval: float | None = None

    def __post_init__(self):
        if int(self.n_doppler) != self.n_doppler or self.n_doppler < 1:
            raise ValueError("n_doppler must be a positive integer")
        if int(self.m_delay) != self.m_delay or self.m_delay < 1:
            raise ValueError("m_delay must be a positive integer")
        if not self.subcarrier_spacing > 0:
            raise ValueError("subcarrier_spacing must be positive")
        if not self.carrier_freq > 0:
            raise ValueError("carrier_freq must be positive")
        if self.guard_interval is None:
            object.__setattr__(self, "guard_interval", self.symbol_duration / 4)
        if self.guard_interval < 0:
            raise ValueError("guard_interval must be nonnegative")

    @property
    def N(self) -> int:
        return int(self.n_doppler)

    @property
    def M(self) -> int:
        return int(self.m_delay)

    @property
    def size(self) -> int:
        return self.N * self.M

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.subcarrier_spacing

    @property
    def bandwidth(self) -> float:
        return self.M * self.subcarrier_spacing

    @property
    def delay_bin(self) -> float:
        """Delay resolution T/M."""
        return self.symbol_duration / self.M

    @property
    def doppler_bin(self) -> float:
        """Doppler resolution 1/(NT)."""
        return 1.0 / (self.N * self.symbol_duration)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @classmethod
    def standard(cls, **overrides) -> "FrameParams":
        """Full-frame defaults (5.89 GHz, 10 MHz, N=50, M=64, T_GI=T/4)."""
        base = dict(n_doppler=50, m_delay=64, subcarrier_spacing=10e6 / 64,
                    carrier_freq=5.89e9)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class Constellation:
    """Unit-energy symbol alphabet. ``labels`` holds the Gray bit labels."""

    points: np.ndarray
    label: str
    labels: tuple = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        if pts.size == 0:
            raise ValueError("constellation must be nonempty")
        if np.unique(np.round(pts, 12)).size != pts.size:
            raise ValueError("constellation points must be distinct")
        energy = np.mean(np.abs(pts) ** 2)
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"mean energy must be 1, got {energy}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits(self) -> float:
        return float(np.log2(self.size))

    def is_conjugate_symmetric(self) -> bool:
        conj = np.conj(self.points)
        return all(np.min(np.abs(self.points - c)) < 1e-12 for c in conj)

    def nearest(self, values) -> np.ndarray:
        """Index of the closest point for each value."""
        v = np.asarray(values)[..., None]
        return np.argmin(np.abs(v - self.points), axis=-1)


def _gray(n: int) -> list[int]:
    return [i ^ (i >> 1) for i in range(n)]


def bpsk() -> Constellation:
    return Constellation(np.array([1.0, -1.0]), "bpsk", ("0", "1"))


def qpsk() -> Constellation:
    # Gray mapping: bit0 -> sign of I, bit1 -> sign of Q
    pts, labels = [], []
    for b in range(4):
        i = 1 - 2 * (b >> 1)
        q = 1 - 2 * (b & 1)
        pts.append((i + 1j * q) / np.sqrt(2))
        labels.append(format(b, "02b"))
    return Constellation(np.array(pts), "qpsk", tuple(labels))


def qam16() -> Constellation:
    levels = np.array([-3.0, -1.0, 1.0, 3.0])
    gray = _gray(4)
    pts, labels = [], []
    for gi in range(4):
        for gq in range(4):
            pts.append(levels[gi] + 1j * levels[gq])
            labels.append(format(gray[gi], "02b") + format(gray[gq], "02b"))
    return Constellation(np.array(pts) / np.sqrt(10.0), "16qam", tuple(labels))


CONSTELLATIONS = {"bpsk": bpsk, "qpsk": qpsk, "16qam": qam16, "qam16": qam16}


def get_constellation(name: str) -> Constellation:
    try:
        return CONSTELLATIONS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}") from None


class RngStream:
    """Counter-based generator keyed by (seed, stream).

    Philox makes every (seed, stream) pair an independent substream, so
    Monte Carlo cells can run in any order and still draw the same values.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64)))

    def spawn(self, stream: int) -> "RngStream":
        # Mix the parent stream into the child key so trees of streams differ.
        return RngStream(self.seed, (self.stream * 1_000_003 + int(stream) + 1))

    def __getattr__(self, name):
        return getattr(self.generator, name)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class SymbolFrame:
    """N x M Doppler-delay symbols x[k, l] with a fixed column-stacking view."""

    symbols: np.ndarray
    constellation: Constellation | None = None
    indices: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.symbols.shape

    @cached_property
    def vector(self) -> np.ndarray:
        return vec(self.symbols)


def vec(x: np.ndarray) -> np.ndarray:
    """Stack the columns of an N x M matrix: index k + N*l."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, N: int, M: int) -> np.ndarray:
    return np.asarray(v).reshape((N, M), order="F")


def draw_frame(params: FrameParams, constellation: Constellation, rng) -> SymbolFrame:
    gen = as_generator(rng)
    idx = gen.integers(0, constellation.size, size=(params.N, params.M))
    return SymbolFrame(constellation.points[idx], constellation, idx)


def awgn(length: int, variance: float, rng) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise with E|w|^2 = variance."""
    if not variance > 0:
        raise ValueError("noise variance must be positive")
    gen = as_generator(rng)
    scale = np.sqrt(variance / 2.0)
    return scale * (gen.standard_normal(length) + 1j * gen.standard_normal(length))


def dirichlet_ratio(x, K: int):
    """sum_{n=0}^{K-1} exp(j 2pi x n / K), closed form with a singularity guard.

    x is first reduced modulo K (the sum has period K), then evaluated as
    exp(j pi x (K-1)/K) sin(pi x) / sin(pi x / K), which keeps full relative
    accuracy next to the removable singularity. Where |1 - exp(j2pi x/K)|
    falls below DIRICHLET_EPS the explicit sum is used. Works elementwise on
    arrays; returns a complex scalar for scalar input.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    xa = np.asarray(x, dtype=float)
    xr = xa - K * np.round(xa / K)
    s_den = np.sin(np.pi * xr / K)
    near = 2.0 * np.abs(s_den) < DIRICHLET_EPS
    safe = np.where(near, 1.0, s_den)
    out = np.exp(1j * np.pi * xr * (K - 1) / K) * np.sin(np.pi * xr) / safe
    # integer x off the period grid is an exact null of the sum
    out = np.where((xr == np.round(xr)) & ~near, 0.0, out)
    if np.any(near):
        n = np.arange(K)
        out = np.array(out, dtype=complex)
        out[near] = np.exp(2j * np.pi * np.multiply.outer(xr[near], n) / K).sum(axis=-1)
    if np.ndim(x) == 0:
        return complex(out)
    return out
