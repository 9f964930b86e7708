"""Approximate maximum-likelihood delay/Doppler/gain estimation.

The transmitted frame x is known (mono-static radar). For every candidate
shift pair the estimator needs correlations of the form o^H Psi(tau, nu) x
for a handful of observation vectors o; ``correlate`` evaluates them for a
whole tensor grid of delays and Dopplers with FFTs instead of building any
NM x NM matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ONE_WAY, ROUND_TRIP, PathParams, PathSet, default_tau_max
from .grid import SPEED_OF_LIGHT, FrameParams, unvec, vec
from .modem import apply_path, delay_taps

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


class DegenerateGeometryError(RuntimeError):
    """Paths are too close for the gain system to be solvable."""


def _as_matrix(v, params: FrameParams) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim == 1:
        return unvec(v, params.N, params.M)
    return v


def correlate(obs, x, taus, nus, params: FrameParams, chunk: int = 64) -> np.ndarray:
    """c[o, i_nu, i_tau] = obs_o^H Psi(tau, nu) x over a tensor grid.

    ``obs`` is a stack (n_obs, N, M) or a single N x M / NM array.
    """
    N, M, T = params.N, params.M, params.symbol_duration
    x = _as_matrix(x, params)
    obs = np.asarray(obs)
    single = obs.ndim == 1 or (obs.ndim == 2 and obs.shape == (N, M))
    if obs.ndim == 1:
        obs = unvec(obs, N, M)
    if obs.ndim == 2:
        obs = obs[None]
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    nus = np.atleast_1d(np.asarray(nus, dtype=float))
    n_obs = obs.shape[0]
    out = np.empty((n_obs, nus.size, taus.size), dtype=complex)

    ohat = np.fft.fft(obs.conj(), axis=1)
    k = np.arange(N)
    m = np.arange(M)
    a = taus * M * params.subcarrier_spacing
    tau_phase = np.exp(-2j * np.pi * np.outer(m, a) / M)
    L = np.array([delay_taps(t, params) for t in taus])
    groups = [(lt, np.flatnonzero(L == lt)) for lt in np.unique(L)]

    for s in range(0, nus.size, chunk):
        nu = nus[s:s + chunk]
        dop = np.exp(2j * np.pi * np.outer(nu * N * T, k) / N)
        U = np.fft.ifft(ohat[:, None] * dop[None, :, :, None], axis=2)
        Q = np.fft.ifft(U, axis=3)
        base = x[None] * np.exp(2j * np.pi * np.outer(nu, m) * T / M)[:, None, :]
        phi = np.exp(-2j * np.pi * (k[None, :] / N + nu[:, None] * T))
        for lt, sel in groups:
            xd = base
            if lt > 0:
                xd = base.copy()
                xd[:, :, M - lt:] *= phi[:, :, None]
            xh = np.fft.fft(xd, axis=2)
            R = np.einsum("ocnm,cnm->ocm", Q, xh)
            out[:, s:s + chunk, sel] = R @ tau_phase[:, sel]
    return out[0] if single else out


@dataclass(frozen=True)
class SearchGrid:
    """Coarse tensor grid plus the refinement schedule.

    The coarse pass visits every node of ``delay_axis`` x ``doppler_axis``
    (integer multiples of T/M and 1/(NT)). Each of ``fine_levels`` refinement
    passes searches a +-1 step neighbourhood of the running argmax with the
    step divided by ``oversampling``.
    """

    delay_axis: np.ndarray
    doppler_axis: np.ndarray
    oversampling: int = 10
    window: tuple = ((0.0, 0.0), (0.0, 0.0))
    delay_step: float = 1.0
    doppler_step: float = 1.0
    fine_levels: int = 1

    @classmethod
    def for_window(cls, params: FrameParams, tau_lo=0.0, tau_hi=None, nu_lo=None, nu_hi=None,
                   oversampling: int = 10, fine_levels: int = 1) -> "SearchGrid":
        tau_hi = default_tau_max(params) if tau_hi is None else tau_hi
        half = params.subcarrier_spacing / 2
        nu_lo = -half if nu_lo is None else nu_lo
        nu_hi = half if nu_hi is None else nu_hi
        db, fb = params.delay_bin, params.doppler_bin
        d = np.arange(np.ceil(tau_lo / db - 1e-9), np.floor(tau_hi / db + 1e-9) + 1) * db
        f = np.arange(np.ceil(nu_lo / fb - 1e-9), np.floor(nu_hi / fb + 1e-9) + 1) * fb
        d = d[d < params.symbol_duration]
        if d.size == 0 or f.size == 0:
            raise ValueError("search window contains no grid node")
        return cls(d, f, int(oversampling), ((tau_lo, tau_hi), (nu_lo, nu_hi)), db, fb,
                   int(fine_levels))

    @property
    def size(self) -> int:
        return self.delay_axis.size * self.doppler_axis.size

    @property
    def resolution(self):
        s = self.oversampling ** self.fine_levels
        return self.delay_step / s, self.doppler_step / s

    def covers(self, tau: float, nu: float) -> bool:
        (tl, th), (fl, fh) = self.window
        return tl <= tau <= th and fl <= nu <= fh


@dataclass
class EstimationResult:
    paths: PathSet
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    edge_flags: tuple = ()

    @property
    def gains(self):
        return self.paths.gains

    @property
    def delays(self):
        return self.paths.delays

    @property
    def dopplers(self):
        return self.paths.dopplers


def log_likelihood(y, x, paths: PathSet, params: FrameParams) -> float:
    """||y - sum_p h'_p Psi_p x||^2 (to be minimized)."""
    Y = _as_matrix(y, params)
    X = _as_matrix(x, params)
    r = Y.astype(complex)
    for p in paths:
        r = r - p.gain * apply_path(X, p.delay, p.doppler, params)
    return float(np.vdot(r, r).real)


def _signals(x, shifts, params):
    X = _as_matrix(x, params)
    return np.stack([apply_path(X, t, f, params) for t, f in shifts])


def solve_gains(y, x, shifts, params: FrameParams, signals=None) -> np.ndarray:
    """Least-squares gains for fixed (tau_p, nu_p) pairs: A h = b."""
    S = _signals(x, shifts, params) if signals is None else signals
    S = S.reshape(len(S), -1)
    A = S.conj() @ S.T
    b = S.conj() @ _as_matrix(y, params).reshape(-1)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegenerateGeometryError(f"gain system condition number {cond:.3g}")
    return np.linalg.solve(A, b)


def _ordered_argmax(J, taus, nus):
    """Argmax with ties broken by smallest delay, then smallest |Doppler|."""
    iv, it = np.meshgrid(np.arange(nus.size), np.arange(taus.size), indexing="ij")
    order = np.lexsort((np.abs(nus)[iv.ravel()], taus[it.ravel()]))
    flat = J.ravel()
    best = order[np.argmax(flat[order])]
    return np.unravel_index(best, J.shape)


OBJECTIVES = ("interference", "exact")


class _PathSearch:
    """Per-path search objective over tensor grids.

    ``interference``: S_p - Re I_p with the other paths' gains held fixed.
    ``exact``: |b_p - sum_q a_pq h_q|^2 / a_pp, the least-squares fit of
    path p to y minus the other paths; it differs from the interference form by
    -Re I_p + |sum_q a_pq h_q|^2 / a_pp, a term that moves with (tau_p, nu_p)
    when the cross-terms a_pq are not negligible.
    """

    def __init__(self, Y, X, params, grid: SearchGrid, objective: str = "interference"):
        self.Y, self.X, self.params, self.grid = Y, X, params, grid
        self.energy = float(np.vdot(X, X).real)
        self.exact = objective == "exact"

    def objective(self, taus, nus, others, exact=None):
        """others: list of (gain, signal N x M) for the interfering paths."""
        exact = self.exact if exact is None else exact
        obs = [self.Y] + [s for _, s in others]
        c = correlate(np.stack(obs), self.X, taus, nus, self.params)
        cy = c[0]
        if others and exact:
            r = cy - sum(np.conj(h) * c[1 + i] for i, (h, _) in enumerate(others))
            return np.abs(r) ** 2 / self.energy
        J = np.abs(cy) ** 2 / self.energy
        if others:
            # a_pq = x^H Psi_p^H Psi_q x = conj(s_q^H Psi_p x)
            mix = sum(h * np.conj(c[1 + i]) for i, (h, _) in enumerate(others))
            J = J - np.real(mix * cy) / self.energy
        return J

    def search(self, others):
        g = self.grid
        taus, nus = g.delay_axis, g.doppler_axis
        J = self.objective(taus, nus, others)
        iv, it = _ordered_argmax(J, taus, nus)
        edge = (it in (0, taus.size - 1) and taus.size > 1) or \
               (iv in (0, nus.size - 1) and nus.size > 1)
        tau, nu = taus[it], nus[iv]
        dstep, fstep = g.delay_step, g.doppler_step
        (tl, th), (fl, fh) = g.window
        best = J[iv, it]
        for _ in range(g.fine_levels):
            dstep /= g.oversampling
            fstep /= g.oversampling
            j = np.arange(-g.oversampling, g.oversampling + 1)
            # j = 0 reproduces the coarse node bit for bit
            ft = tau + j * dstep
            fn = nu + j * fstep
            ft = ft[(ft >= tl - 1e-15) & (ft <= th + 1e-15) & (ft >= 0)
                    & (ft < self.params.symbol_duration)]
            fn = fn[(fn >= fl - 1e-9) & (fn <= fh + 1e-9)]
            Jf = self.objective(ft, fn, others)
            iv, it = _ordered_argmax(Jf, ft, fn)
            tau, nu, best = ft[it], fn[iv], Jf[iv, it]
        return float(tau), float(nu), float(best), bool(edge)


def estimate(y, x, P: int, grid: SearchGrid, params: FrameParams, max_iters: int = 5,
             tol: float = 0.1, schedule: str = "jacobi", mode: str = ONE_WAY,
             objective: str = "interference") -> EstimationResult:
    """Alternating ML search for P paths.

    The first sweep places paths one at a time, each against the already
    placed ones (successive cancellation); later sweeps follow the
    alternating update with Jacobi (default) or Gauss-Seidel ordering.
    For P = 1 the first sweep is the exact grid ML and the loop stops.
    ``objective`` selects the per-path criterion (see ``_PathSearch``).
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    if schedule not in ("jacobi", "gauss-seidel"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    Y = _as_matrix(y, params).astype(complex)
    X = _as_matrix(x, params).astype(complex)
    search = _PathSearch(Y, X, params, grid, objective)

    shifts: list[tuple] = []
    gains = np.zeros(0, dtype=complex)
    edges = []
    sigs = []
    for p in range(P):
        others = list(zip(gains, sigs))
        tau, nu, _, edge = search.search(others)
        shifts.append((tau, nu))
        edges.append(edge)
        sigs = list(_signals(X, shifts, params))
        gains = solve_gains(Y, X, shifts, params, signals=np.stack(sigs))
    trace = [_l2(search, shifts, gains, sigs)]
    iters, converged = 1, P == 1
    dbin, fbin = grid.delay_step, grid.doppler_step

    while not converged and iters < max_iters:
        iters += 1
        new_shifts = list(shifts)
        for p in range(P):
            ref = new_shifts if schedule == "gauss-seidel" else shifts
            ref_sigs = _signals(X, ref, params) if schedule == "gauss-seidel" else sigs
            others = [(gains[q], ref_sigs[q]) for q in range(P) if q != p]
            tau, nu, _, edge = search.search(others)
            new_shifts[p] = (tau, nu)
            edges[p] = edge
        change = max(max(abs(a[0] - b[0]) / dbin, abs(a[1] - b[1]) / fbin)
                     for a, b in zip(new_shifts, shifts))
        shifts = new_shifts
        sigs = list(_signals(X, shifts, params))
        gains = solve_gains(Y, X, shifts, params, signals=np.stack(sigs))
        trace.append(_l2(search, shifts, gains, sigs))
        if trace[-1] < trace[-2] - 1e-9 * abs(trace[-2]):
            log.info("objective decreased at iteration %d: %g -> %g", iters, trace[-2], trace[-1])
        converged = change < tol

    order = np.argsort([s[0] for s in shifts], kind="stable")
    paths = PathSet(tuple(PathParams(complex(gains[i]), shifts[i][0], shifts[i][1])
                          for i in order), mode)
    return EstimationResult(paths, iters, converged, trace, tuple(edges[i] for i in order))


def _l2(search: _PathSearch, shifts, gains, sigs) -> float:
    """sum_p S_p - Re I_p at the given parameters."""
    P = len(shifts)
    total = 0.0
    for p in range(P):
        others = [(gains[q], sigs[q]) for q in range(P) if q != p]
        total += float(search.objective([shifts[p][0]], [shifts[p][1]], others, False)[0, 0])
    return total


def range_velocity(result: EstimationResult | PathSet, carrier_freq: float, mode: str | None = None):
    """LoS range (m) and radial velocity (m/s) from the estimated shifts."""
    paths = result.paths if isinstance(result, EstimationResult) else result
    mode = paths.mode if mode is None else mode
    los = paths[0]
    scale = 0.5 if mode == ROUND_TRIP else 1.0
    return (scale * SPEED_OF_LIGHT * los.delay,
            scale * SPEED_OF_LIGHT * los.doppler / carrier_freq)
