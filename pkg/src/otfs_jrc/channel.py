"""Multipath channel parameters, link budgets and scenario generation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import SPEED_OF_LIGHT, FrameParams, as_generator

ONE_WAY = "one-way"
ROUND_TRIP = "round-trip"


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain h', delay (s), Doppler (Hz)."""

    gain: complex
    delay: float
    doppler: float

    @property
    def range(self) -> float:
        return SPEED_OF_LIGHT * self.delay

    def velocity(self, carrier_freq: float) -> float:
        return SPEED_OF_LIGHT * self.doppler / carrier_freq


@dataclass(frozen=True)
class PathSet:
    paths: tuple
    mode: str = ONE_WAY

    def __post_init__(self):
        if self.mode not in (ONE_WAY, ROUND_TRIP):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ValueError("a PathSet needs at least one path")
        d0 = self.paths[0].delay
        if any(p.delay < d0 for p in self.paths[1:]):
            raise ValueError("path 0 (LoS) must have the smallest delay")

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i):
        return self.paths[i]

    @property
    def gains(self) -> np.ndarray:
        return np.array([p.gain for p in self.paths], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths])

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([p.doppler for p in self.paths])

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    def validate(self, params: FrameParams, tau_max: float | None = None):
        T = params.symbol_duration
        for p in self.paths:
            if not 0 <= p.delay < T:
                raise ValueError(f"delay {p.delay} outside [0, T)")
            if tau_max is not None and p.delay >= tau_max:
                raise ValueError(f"delay {p.delay} >= tau_max {tau_max}")
            if abs(p.doppler) >= params.subcarrier_spacing:
                raise ValueError(f"|doppler| {abs(p.doppler)} >= subcarrier spacing")

    @classmethod
    def single(cls, gain, delay, doppler, mode=ONE_WAY):
        return cls((PathParams(complex(gain), float(delay), float(doppler)),), mode)


@dataclass(frozen=True)
class LinkBudget:
    rcs: float = 1.0
    antenna_gain: float = 100.0
    range: float = 20.0
    wavelength: float = SPEED_OF_LIGHT / 5.89e9
    p_avg_over_noise: float = 1.0

    def __post_init__(self):
        for name in ("rcs", "antenna_gain", "range", "wavelength", "p_avg_over_noise"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _radar_factor(b: LinkBudget) -> float:
    return b.wavelength ** 2 * b.rcs * b.antenna_gain ** 2 / ((4 * np.pi) ** 3 * b.range ** 4)


def _comm_factor(b: LinkBudget) -> float:
    return b.wavelength ** 2 * b.antenna_gain ** 2 / ((4 * np.pi) ** 2 * b.range ** 2)


def snr_radar(budget: LinkBudget) -> float:
    return _radar_factor(budget) * budget.p_avg_over_noise


def snr_comm(budget: LinkBudget) -> float:
    return _comm_factor(budget) * budget.p_avg_over_noise


def noise_for_snr_radar(budget: LinkBudget, snr: float, p_avg: float = 1.0) -> float:
    """Noise variance that puts the radar SNR at ``snr`` (linear)."""
    return _radar_factor(budget) * p_avg / snr


def noise_for_snr_comm(budget: LinkBudget, snr: float, p_avg: float = 1.0) -> float:
    return _comm_factor(budget) * p_avg / snr


def default_tau_max(params: FrameParams) -> float:
    if params.guard_interval and params.guard_interval > 0:
        return params.guard_interval
    return params.symbol_duration / 4


def los_shifts(los_range: float, los_velocity: float, carrier_freq: float, mode: str):
    factor = 2.0 if mode == ROUND_TRIP else 1.0
    tau = factor * los_range / SPEED_OF_LIGHT
    nu = factor * los_velocity * carrier_freq / SPEED_OF_LIGHT
    return tau, nu


def make_scenario(params: FrameParams, P: int, los_range: float = 20.0,
                  los_velocity: float = 80 / 3.6, decay_db_per_path: float = 3.0,
                  rng=None, mode: str = ROUND_TRIP, tau_max: float | None = None,
                  nu_max: float | None = None, on_grid: bool = False,
                  los_gain: complex | None = None, max_redraws: int = 1000) -> PathSet:
    """LoS path plus P-1 weaker random paths.

    Path p sits p*decay dB below the LoS; every gain gets a uniform random
    phase. Non-LoS delays are uniform in (tau0, tau_max) and are redrawn when
    they fall within one delay bin of an existing path.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    gen = as_generator(rng)
    tau_max = default_tau_max(params) if tau_max is None else tau_max
    nu_max = params.subcarrier_spacing / 2 if nu_max is None else nu_max
    if tau_max >= params.symbol_duration:
        raise ValueError("tau_max must be below the symbol duration")
    tau0, nu0 = los_shifts(los_range, los_velocity, params.carrier_freq, mode)
    if not tau0 < tau_max:
        raise ValueError("LoS delay must be below tau_max")
    if on_grid:
        tau0 = np.round(tau0 / params.delay_bin) * params.delay_bin
        nu0 = np.round(nu0 / params.doppler_bin) * params.doppler_bin
    if los_gain is None:
        los_gain = np.exp(2j * np.pi * gen.uniform())
    delays, dopplers = [tau0], [nu0]
    bin_ = params.delay_bin
    for p in range(1, P):
        for _ in range(max_redraws):
            tau = gen.uniform(tau0, tau_max)
            if on_grid:
                tau = np.round(tau / bin_) * bin_
            if all(abs(tau - d) >= bin_ for d in delays) and tau < tau_max:
                break
        else:
            raise RuntimeError("could not place non-colliding paths; reduce P")
        nu = gen.uniform(-nu_max, nu_max)
        if on_grid:
            nu = np.round(nu / params.doppler_bin) * params.doppler_bin
        delays.append(float(tau))
        dopplers.append(float(nu))
    paths = []
    for p in range(P):
        amp = abs(los_gain) * 10 ** (-p * decay_db_per_path / 20)
        g = los_gain if p == 0 else amp * np.exp(2j * np.pi * gen.uniform())
        paths.append(PathParams(complex(g), float(delays[p]), float(dopplers[p])))
    return PathSet(tuple(paths), mode)


def with_gains(paths: PathSet, gains) -> PathSet:
    return PathSet(tuple(replace(p, gain=complex(g)) for p, g in zip(paths, gains)), paths.mode)


def round_delays(paths: PathSet, params: FrameParams) -> PathSet:
    """Nominal channel with delays snapped to integer multiples of T/M."""
    b = params.delay_bin
    return PathSet(tuple(replace(p, delay=float(np.round(p.delay / b) * b)) for p in paths),
                   paths.mode)
