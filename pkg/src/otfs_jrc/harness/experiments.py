"""Per-trial bodies of the six experiment kinds.

A trial receives the shared context, the path count P, the SNR in dB and two
generators: ``draw`` (scenario and frame, shared by every SNR of the same
trial index) and ``noise`` (private to the cell). It returns a list of
Sample records plus a list of failure messages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..baselines import (FmcwParams, capacity_gaussian_ofdm, capacity_gaussian_otfs,
                         fmcw_estimate, fmcw_samples)
from ..bounds import crlb, fisher, threshold_snr, waterfall_bound
from ..channel import ROUND_TRIP, default_tau_max, make_scenario
from ..detectors import (build_graph, lmmse_detect, mp_g_detect, mp_psi_detect)
from ..grid import SPEED_OF_LIGHT, draw_frame, get_constellation
from ..metrics import lmmse_information, symbol_information
from ..modem import build_channel, gram_matrix, transmit, transmit_fast
from ..radar import SearchGrid, estimate, range_velocity
from .config import ExperimentConfig

RMSE = "rmse"   # value = sqrt(mean(v^2))
MEAN = "mean"   # value = mean(v)


@dataclass
class Sample:
    metric: str
    kind: str
    values: np.ndarray
    limit: float = math.inf


@dataclass
class Context:
    cfg: ExperimentConfig
    params: object
    constellation: object
    grid: SearchGrid | None = None
    fmcw: FmcwParams | None = None
    extra: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return 0.5 if self.cfg.mode == ROUND_TRIP else 1.0


def make_context(cfg: ExperimentConfig) -> Context:
    params = cfg.frame_params()
    ctx = Context(cfg, params, get_constellation(cfg.detection.constellation))
    if cfg.experiment in ("radar-rmse", "waterfall"):
        rd = cfg.radar
        tau_hi = cfg.scenario.tau_max if cfg.scenario.tau_max is not None else None
        ctx.grid = SearchGrid.for_window(params, tau_hi=tau_hi, oversampling=rd.oversampling,
                                         fine_levels=rd.fine_levels)
    if cfg.experiment == "fmcw-rmse":
        ctx.fmcw = FmcwParams.from_frame(params)
    return ctx


def _scenario(ctx: Context, P: int, draw):
    sc = ctx.cfg.scenario
    return make_scenario(ctx.params, P, los_range=sc.los_range,
                         los_velocity=sc.los_velocity_kmh / 3.6,
                         decay_db_per_path=sc.decay_db_per_path, rng=draw, mode=ctx.cfg.mode,
                         tau_max=sc.tau_max, nu_max=sc.nu_max, on_grid=sc.on_grid)


def _windows(ctx: Context):
    """Half search windows in metres and m/s (outlier limits)."""
    p = ctx.params
    sc = ctx.cfg.scenario
    tau_max = default_tau_max(p) if sc.tau_max is None else sc.tau_max
    r = ctx.scale * SPEED_OF_LIGHT * tau_max / 2
    v = ctx.scale * SPEED_OF_LIGHT * p.subcarrier_spacing / p.carrier_freq / 2
    return r, v


def _range_velocity_errors(ctx, est_paths, true_paths):
    fc = ctx.params.carrier_freq
    r_hat, v_hat = range_velocity(est_paths, fc, ctx.cfg.mode)
    r, v = range_velocity(true_paths, fc, ctx.cfg.mode)
    return r_hat - r, v_hat - v


def trial_radar_rmse(ctx: Context, P: int, snr_db: float, draw, noise):
    cfg, params = ctx.cfg, ctx.params
    snr = 10 ** (snr_db / 10)
    ps = _scenario(ctx, P, draw)
    x = draw_frame(params, ctx.constellation, draw).symbols
    s2 = abs(ps[0].gain) ** 2 / snr
    y = transmit_fast(x, ps, params, s2, noise)
    rd = cfg.radar
    res = estimate(y, x, P, ctx.grid, params, max_iters=rd.max_iters, tol=rd.tol,
                   schedule=rd.schedule, mode=cfg.mode, objective=rd.objective)
    er, ev = _range_velocity_errors(ctx, res, ps)
    wr, wv = _windows(ctx)
    out = [Sample("rmse_range_m", RMSE, np.array([er]), wr),
           Sample("rmse_velocity_mps", RMSE, np.array([ev]), wv),
           Sample("edge_flag_fraction", MEAN, np.array([float(res.edge_flags[0])])),
           Sample("iterations", MEAN, np.array([float(res.iterations)]))]
    if rd.bounds:
        rep = crlb(fisher(x, ps, params, 1.0 / s2))
        out += [Sample("crlb_range_m", RMSE, np.array([rep.range_rmse])),
                Sample("crlb_velocity_mps", RMSE, np.array([rep.velocity_rmse]))]
        if P == 1:
            wb = waterfall_bound(x, params, ps[0], ctx.grid, [1.0 / s2])
            k = ctx.scale * SPEED_OF_LIGHT
            out += [Sample("waterfall_range_m", RMSE, np.sqrt(wb.delay_mse) * k),
                    Sample("waterfall_velocity_mps", RMSE,
                           np.sqrt(wb.doppler_mse) * k / params.carrier_freq)]
    return out


def trial_crlb(ctx: Context, P: int, snr_db: float, draw, noise):
    params = ctx.params
    ps = _scenario(ctx, P, draw)
    x = draw_frame(params, ctx.constellation, draw).symbols
    snr = 10 ** (snr_db / 10) / abs(ps[0].gain) ** 2
    rep = crlb(fisher(x, ps, params, snr))
    return [Sample("crlb_delay_s", RMSE, np.array([math.sqrt(rep.delay)])),
            Sample("crlb_doppler_hz", RMSE, np.array([math.sqrt(rep.doppler)])),
            Sample("crlb_range_m", RMSE, np.array([rep.range_rmse])),
            Sample("crlb_velocity_mps", RMSE, np.array([rep.velocity_rmse]))]


def trial_waterfall(ctx: Context, P: int, snr_db: float, draw, noise):
    cfg, params = ctx.cfg, ctx.params
    ps = _scenario(ctx, 1, draw)
    x = draw_frame(params, ctx.constellation, draw).symbols
    s2 = abs(ps[0].gain) ** 2 / 10 ** (snr_db / 10)
    y = transmit_fast(x, ps, params, s2, noise)
    rd = cfg.radar
    res = estimate(y, x, 1, ctx.grid, params, max_iters=rd.max_iters, tol=rd.tol, mode=cfg.mode)
    rep = crlb(fisher(x, ps, params, 1.0 / s2))
    wb = waterfall_bound(x, params, ps[0], ctx.grid, [1.0 / s2])
    (tl, th), (fl, fh) = ctx.grid.window
    return [Sample("rmse_delay_s", RMSE, np.array([res.delays[0] - ps[0].delay]), (th - tl) / 2),
            Sample("rmse_doppler_hz", RMSE, np.array([res.dopplers[0] - ps[0].doppler]),
                   (fh - fl) / 2),
            Sample("crlb_delay_s", RMSE, np.array([math.sqrt(rep.delay)])),
            Sample("crlb_doppler_hz", RMSE, np.array([math.sqrt(rep.doppler)])),
            Sample("bound_delay_s", RMSE, np.sqrt(wb.delay_mse)),
            Sample("bound_doppler_hz", RMSE, np.sqrt(wb.doppler_mse))]


def summarize_waterfall(ctx: Context, snr_db: np.ndarray, table: dict):
    """Threshold SNRs (10x CRLB crossing) of the bound and of the ML estimator."""
    rows = []
    for P in sorted({k[0] for k in table}):
        for axis in ("delay_s", "doppler_hz"):
            crb = table.get((P, f"crlb_{axis}"))
            if crb is None:
                continue
            for src, name in (("bound", "bound"), ("rmse", "ml")):
                v = table.get((P, f"{src}_{axis}"))
                if v is None or np.any(~np.isfinite(v)):
                    continue
                t = threshold_snr(snr_db, v ** 2, crb ** 2)
                rows.append((P, f"threshold_db_{name}_{axis.split('_')[0]}", t))
    return rows


def trial_capacity_gaussian(ctx: Context, P: int, snr_db: float, draw, noise):
    params = ctx.params
    ps = _scenario(ctx, P, draw)
    snr = 10 ** (snr_db / 10)
    G = gram_matrix(ps, params)
    tau_max = default_tau_max(params) if ctx.cfg.scenario.tau_max is None \
        else ctx.cfg.scenario.tau_max
    return [Sample("capacity_otfs", MEAN, np.array([capacity_gaussian_otfs(None, snr, params,
                                                                           gram=G)])),
            Sample("capacity_ofdm", MEAN, np.array([capacity_gaussian_ofdm(snr, params,
                                                                           tau_max)]))]


def _run_detector(ctx, name, ch, y, s2):
    det = ctx.cfg.detection
    c = ctx.constellation
    if name == "mp_g":
        thr = det.prune_relative * float(np.abs(ch.gram).max())
        graph = build_graph(ch, y, s2, prune_threshold=thr)
        return mp_g_detect(graph, c, iterations=det.iterations, damping=det.damping,
                           backend=det.backend)
    if name == "mp_psi":
        thr = det.prune_relative * float(np.abs(ch.psi).max())
        return mp_psi_detect(ch, y, s2, c, iterations=det.mp_psi_iterations,
                             damping=det.mp_psi_damping, integer_rounding=det.integer_rounding,
                             prune_threshold=thr)
    return lmmse_detect(ch, y, s2, c)


def trial_pragmatic(ctx: Context, P: int, snr_db: float, draw, noise):
    det = ctx.cfg.detection
    params, c = ctx.params, ctx.constellation
    ps = _scenario(ctx, P, draw)
    frame = draw_frame(params, c, draw)
    s2 = abs(ps[0].gain) ** 2 / 10 ** (snr_db / 10)
    ch = build_channel(ps, params)
    y = transmit(frame, ch, s2, noise)
    idx = frame.indices.reshape(-1, order="F")
    out, failures = [], []
    for name in det.detectors:
        try:
            so = _run_detector(ctx, name, ch, y, s2)
        except (MemoryError, ArithmeticError, np.linalg.LinAlgError) as exc:
            failures.append(f"{name}: {type(exc).__name__}: {exc}")
            continue
        pmf = so.probabilities()
        if name == "lmmse":
            out.append(Sample("pragmatic_capacity_lmmse", MEAN, lmmse_information(so.sinr, c)))
        else:
            out.append(Sample(f"pragmatic_capacity_{name}", MEAN,
                              symbol_information(pmf, c, idx, det.estimator)))
        alt = "true-symbol" if det.estimator == "entropy" else "entropy"
        out.append(Sample(f"pragmatic_capacity_{alt.replace('-', '_')}_{name}", MEAN,
                          symbol_information(pmf, c, idx, alt)))
        out.append(Sample(f"ser_{name}", MEAN,
                          (np.argmax(pmf, axis=1) != idx).astype(float)))
    return out, failures


def trial_fmcw(ctx: Context, P: int, snr_db: float, draw, noise):
    ps = _scenario(ctx, P, draw)
    s2 = abs(ps[0].gain) ** 2 / 10 ** (snr_db / 10)
    y = fmcw_samples(ps, ctx.fmcw, s2, noise)
    pad = ctx.cfg.radar.fmcw_padding
    est = fmcw_estimate(y, ctx.fmcw, P, pad, pad)
    wr, wv = _windows(ctx)
    if est.delays.size == 0:
        return [Sample("degraded_fraction", MEAN, np.array([1.0]))]
    k = ctx.scale * SPEED_OF_LIGHT
    er = k * (est.delays[0] - ps[0].delay)
    ev = k * (est.dopplers[0] - ps[0].doppler) / ctx.params.carrier_freq
    return [Sample("rmse_range_m", RMSE, np.array([er]), wr),
            Sample("rmse_velocity_mps", RMSE, np.array([ev]), wv),
            Sample("degraded_fraction", MEAN, np.array([float(est.degraded)]))]


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    trial: object
    summarize: object = None


REGISTRY = {e.name: e for e in (
    Experiment("radar-rmse", "ML range/velocity RMSE vs radar SNR with CRLB and waterfall bound",
               trial_radar_rmse),
    Experiment("crlb", "CRLB of LoS range and velocity vs radar SNR", trial_crlb),
    Experiment("waterfall", "P=1 ML MSE against the waterfall bound; threshold SNRs",
               trial_waterfall, summarize_waterfall),
    Experiment("capacity-gaussian", "Gaussian-input OTFS capacity and OFDM reference",
               trial_capacity_gaussian),
    Experiment("pragmatic-capacity", "pragmatic capacity of MP_G, MP_Psi and LMMSE",
               trial_pragmatic),
    Experiment("fmcw-rmse", "FMCW range/velocity RMSE vs SNR", trial_fmcw),
)}
