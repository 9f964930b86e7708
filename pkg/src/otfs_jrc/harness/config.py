"""Experiment configuration: YAML loading, defaults and validation."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..channel import ONE_WAY, ROUND_TRIP, default_tau_max, los_shifts
from ..grid import CONSTELLATIONS, FrameParams

SCHEMA_VERSION = 1
EXPERIMENTS = ("radar-rmse", "crlb", "waterfall", "capacity-gaussian", "pragmatic-capacity",
               "fmcw-rmse")
DETECTORS = ("mp_g", "mp_psi", "lmmse")
DENSE_WARN_BYTES = 1 << 30
LMMSE_WARN_SIZE = 1024


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(d.message for d in self.diagnostics if d.level == "error"))


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning" | "info"
    code: str
    message: str
    field: str = ""

    def __str__(self):
        where = f" [{self.field}]" if self.field else ""
        return f"{self.level.upper()} {self.code}{where}: {self.message}"


@dataclass
class FrameSection:
    n_doppler: int = 50
    m_delay: int = 64
    subcarrier_spacing: float = 10e6 / 64
    carrier_freq: float = 5.89e9
    guard_interval: float | None = None

    def params(self) -> FrameParams:
        return FrameParams(self.n_doppler, self.m_delay, self.subcarrier_spacing,
                           self.carrier_freq, self.guard_interval)


@dataclass
class ScenarioSection:
    paths: list = field(default_factory=lambda: [1])
    decay_db_per_path: float = 3.0
    mode: str | None = None  # None: round-trip for radar kinds, one-way for comm kinds
    on_grid: bool = False
    los_range: float = 20.0
    los_velocity_kmh: float = 80.0
    tau_max: float | None = None
    nu_max: float | None = None


@dataclass
class SweepSection:
    start: float = -20.0
    stop: float = 20.0
    step: float = 5.0

    def values(self) -> np.ndarray:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(n), 10)


@dataclass
class RadarSection:
    oversampling: int = 10
    fine_levels: int = 2
    max_iters: int = 5
    tol: float = 0.1
    schedule: str = "jacobi"
    objective: str = "interference"
    bounds: bool = True
    fmcw_padding: int = 8


@dataclass
class DetectionSection:
    constellation: str = "16qam"
    detectors: list = field(default_factory=lambda: ["mp_g", "mp_psi", "lmmse"])
    iterations: int = 15
    damping: float = 0.0
    mp_psi_iterations: int = 30
    mp_psi_damping: float = 0.5
    integer_rounding: bool = True
    prune_relative: float = 1e-6
    estimator: str = "entropy"
    backend: str = "auto"


@dataclass
class HarnessSection:
    record_timing: bool = False


@dataclass
class ExperimentConfig:
    experiment: str = "radar-rmse"
    seed: int = 0
    trials: int = 10
    frame: FrameSection = field(default_factory=FrameSection)
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    radar: RadarSection = field(default_factory=RadarSection)
    detection: DetectionSection = field(default_factory=DetectionSection)
    harness: HarnessSection = field(default_factory=HarnessSection)
    output: str | None = None

    @property
    def mode(self) -> str:
        if self.scenario.mode is not None:
            return self.scenario.mode
        comm = self.experiment in ("capacity-gaussian", "pragmatic-capacity")
        return ONE_WAY if comm else ROUND_TRIP

    def frame_params(self) -> FrameParams:
        return self.frame.params()

    def output_path(self) -> Path:
        if self.output:
            return Path(self.output)
        return Path("results") / (time.strftime("%Y%m%d-%H%M%S") + ".csv")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        return d


_SECTIONS = {"frame": FrameSection, "scenario": ScenarioSection, "sweep": SweepSection,
             "radar": RadarSection, "detection": DetectionSection, "harness": HarnessSection}


def _build(cls, data, name, diags):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        diags.append(Diagnostic("error", "type", "section must be a mapping", name))
        return cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in known:
            diags.append(Diagnostic("error", "unknown-key", f"unknown key {k!r}", f"{name}.{k}"))
    return cls(**{k: v for k, v in data.items() if k in known})


def parse_config(data: dict) -> tuple[ExperimentConfig, list]:
    """Build a config from a nested mapping; unknown keys become errors."""
    diags: list[Diagnostic] = []
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([Diagnostic("error", "type", "config must be a mapping")])
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} | {"schema_version"}
    for k in data:
        if k not in top:
            diags.append(Diagnostic("error", "unknown-key", f"unknown key {k!r}", k))
    kw = {}
    for k in ("experiment", "seed", "trials", "output"):
        if k in data:
            kw[k] = data[k]
    for name, cls in _SECTIONS.items():
        kw[name] = _build(cls, data.get(name), name, diags)
    cfg = ExperimentConfig(**kw)
    if isinstance(cfg.scenario.paths, int):
        cfg.scenario.paths = [cfg.scenario.paths]
    if isinstance(cfg.detection.detectors, str):
        cfg.detection.detectors = [cfg.detection.detectors]
    return cfg, diags


def load_config(path) -> tuple[ExperimentConfig, list]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([Diagnostic("error", "io", str(exc))]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([Diagnostic("error", "yaml", str(exc))]) from exc
    try:
        return parse_config(data)
    except TypeError as exc:
        raise ConfigError([Diagnostic("error", "type", str(exc))]) from exc


def dense_psi_bytes(params: FrameParams) -> int:
    return params.size ** 2 * 16


def validate(cfg: ExperimentConfig) -> list:
    """Load-time checks of every precondition the run relies on."""
    out: list[Diagnostic] = []

    def err(code, msg, f=""):
        out.append(Diagnostic("error", code, msg, f))

    def warn(code, msg, f=""):
        out.append(Diagnostic("warning", code, msg, f))

    if cfg.experiment not in EXPERIMENTS:
        err("experiment", f"unknown experiment {cfg.experiment!r}; one of {', '.join(EXPERIMENTS)}",
            "experiment")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        err("seed", "seed must be a nonnegative integer", "seed")
    if not isinstance(cfg.trials, int) or cfg.trials < 1:
        err("trials", "trials must be a positive integer", "trials")
    try:
        params = cfg.frame_params()
    except (TypeError, ValueError) as exc:
        err("frame", str(exc), "frame")
        return out
    sc = cfg.scenario
    df = params.subcarrier_spacing
    tau_max = default_tau_max(params) if sc.tau_max is None else sc.tau_max
    nu_max = df / 2 if sc.nu_max is None else sc.nu_max
    if not tau_max < params.symbol_duration:
        err("tau-max", f"tau_max = {tau_max:.4g} s must be below the symbol duration "
            f"T = {params.symbol_duration:.4g} s", "scenario.tau_max")
    if not nu_max < df:
        err("nu-max", f"nu_max = {nu_max:.4g} Hz violates the bandwidth assumption |nu| < df "
            f"= {df:.4g} Hz (Doppler spread must stay below the subcarrier spacing)",
            "scenario.nu_max")
    if sc.mode not in (None, ONE_WAY, ROUND_TRIP):
        err("mode", f"mode must be {ONE_WAY!r} or {ROUND_TRIP!r}", "scenario.mode")
    paths = sc.paths
    if not paths or any(not isinstance(p, int) or p < 1 for p in paths):
        err("paths", "scenario.paths must be a list of positive integers", "scenario.paths")
    if sc.decay_db_per_path < 0:
        err("decay", "decay_db_per_path must be nonnegative", "scenario.decay_db_per_path")
    mode = cfg.mode if sc.mode in (None, ONE_WAY, ROUND_TRIP) else ROUND_TRIP
    tau0, nu0 = los_shifts(sc.los_range, sc.los_velocity_kmh / 3.6, params.carrier_freq, mode)
    if not 0 <= tau0 < tau_max:
        err("los-delay", f"LoS delay {tau0:.4g} s outside [0, tau_max)", "scenario.los_range")
    if not abs(nu0) < df:
        err("los-doppler", f"LoS Doppler {nu0:.4g} Hz violates |nu| < df", "scenario.los_velocity_kmh")
    sw = cfg.sweep
    if not sw.step > 0 or sw.stop < sw.start:
        err("sweep", "sweep needs step > 0 and stop >= start", "sweep")

    if cfg.experiment in ("radar-rmse", "waterfall"):
        rd = cfg.radar
        if rd.oversampling < 1 or rd.fine_levels < 0 or rd.max_iters < 1:
            err("grid", "oversampling >= 1, fine_levels >= 0, max_iters >= 1 required", "radar")
        if rd.schedule not in ("jacobi", "gauss-seidel"):
            err("schedule", "schedule must be jacobi or gauss-seidel", "radar.schedule")
        if rd.objective not in ("interference", "exact"):
            err("objective", "objective must be interference or exact", "radar.objective")
        if not abs(nu0) <= df / 2:
            err("grid-coverage", "search window |nu| <= df/2 does not cover the LoS Doppler",
                "scenario.los_velocity_kmh")
        if nu_max > df / 2 and max(paths or [1]) > 1:
            warn("grid-coverage", "non-LoS Dopplers may fall outside the +-df/2 search window",
                 "scenario.nu_max")
    if cfg.experiment == "waterfall" and any(p != 1 for p in paths or []):
        err("paths", "the waterfall bound is defined for P = 1 only", "scenario.paths")
    if cfg.experiment == "fmcw-rmse" and not tau_max <= params.guard_interval:
        err("fmcw-guard", "FMCW needs tau_max <= T_GI", "scenario.tau_max")

    if cfg.experiment == "pragmatic-capacity":
        det = cfg.detection
        if det.constellation.lower() not in CONSTELLATIONS:
            err("constellation", f"unknown constellation {det.constellation!r}",
                "detection.constellation")
        bad = [d for d in det.detectors if d not in DETECTORS]
        if bad or not det.detectors:
            err("detectors", f"detectors must be a subset of {DETECTORS}", "detection.detectors")
        if det.estimator not in ("entropy", "true-symbol"):
            err("estimator", "estimator must be entropy or true-symbol", "detection.estimator")
        if not 0 <= det.damping < 1 or not 0 <= det.mp_psi_damping < 1:
            err("damping", "damping must lie in [0, 1)", "detection")
        if det.backend not in ("auto", "numpy", "cython"):
            err("backend", "backend must be auto, numpy or cython", "detection.backend")
        if "lmmse" in det.detectors and params.size > LMMSE_WARN_SIZE:
            warn("lmmse-cost", f"full-block LMMSE at NM = {params.size} costs O((NM)^3) per frame",
                 "detection.detectors")
        if "mp_psi" in det.detectors and not det.integer_rounding and params.size > LMMSE_WARN_SIZE:
            warn("mp-psi-dense", "MP_Psi on the exact fractional matrix is dense at this size",
                 "detection.integer_rounding")

    if cfg.experiment in ("capacity-gaussian", "pragmatic-capacity"):
        nbytes = dense_psi_bytes(params)
        lvl = "warning" if nbytes > DENSE_WARN_BYTES else "info"
        out.append(Diagnostic(lvl, "memory", f"dense Psi needs {nbytes / 1e6:.3g} MB per matrix "
                              f"({params.size}^2 x 16 B)", "frame"))
    if not cfg.output:
        out.append(Diagnostic("info", "output", f"no output path; using {cfg.output_path()}",
                              "output"))
    return out


def has_errors(diags) -> bool:
    return any(d.level == "error" for d in diags)
