import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import i0e

from otfs_jrc.bounds import (crlb, fisher, log_i0, signal_derivatives, threshold_snr,
                             waterfall_bound)
from otfs_jrc.channel import ROUND_TRIP, PathParams, PathSet, los_shifts
from otfs_jrc.grid import FrameParams, RngStream, draw_frame, qam16, qpsk, vec
from otfs_jrc.modem import apply_path, delay_taps
from otfs_jrc.radar import SearchGrid, log_likelihood

TOY = FrameParams(8, 8)


def frame(params=TOY, seed=0, c=qpsk()):
    return draw_frame(params, c, RngStream(seed)).symbols


def signal(theta, x, params, l_tau=None):
    mag, arg, tau, nu = theta
    return mag * np.exp(1j * arg) * apply_path(x, tau, nu, params, l_tau)


class TestDerivatives:
    def test_finite_differences_20_configurations(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for i in range(20):
            p = FrameParams(int(rng.integers(4, 12)), int(rng.integers(4, 16)))
            x = frame(p, i, qam16())
            h = rng.uniform(0.3, 2) * np.exp(1j * rng.uniform(-np.pi, np.pi))
            tau = rng.uniform(0, 0.9) * p.symbol_duration
            nu = rng.uniform(-0.9, 0.9) * p.subcarrier_spacing
            lt = delay_taps(tau, p)
            der = signal_derivatives(PathParams(h, tau, nu), x, p)
            theta = np.array([abs(h), np.angle(h), tau, nu])
            steps = 1e-4 * np.array([1.0, 1.0, p.delay_bin, p.doppler_bin])
            for j, key in enumerate(("abs", "arg", "tau", "nu")):
                e = np.zeros(4)
                e[j] = steps[j]
                fd = (signal(theta + e, x, p, lt) - signal(theta - e, x, p, lt)) / (2 * steps[j])
                worst = max(worst, np.linalg.norm(der[key] - fd) / np.linalg.norm(fd))
        assert worst < 1e-5

    def test_phase_derivative_is_j_s(self):
        x = frame(seed=2)
        path = PathParams(0.6 - 0.8j, 3.3 * TOY.delay_bin, 0.4 * TOY.doppler_bin)
        der = signal_derivatives(path, x, TOY)
        s = path.gain * apply_path(x, path.delay, path.doppler, TOY)
        assert np.allclose(der["arg"], 1j * s, atol=1e-14)
        assert np.allclose(der["abs"] * abs(path.gain), s, atol=1e-14)

    def test_doppler_derivative_at_origin_on_impulse(self):
        x = np.zeros((TOY.N, TOY.M), dtype=complex)
        x[0, 0] = 1.0
        der = signal_derivatives(PathParams(1.0, 0.0, 0.0), x, TOY)
        st_ = 1e-4 * TOY.doppler_bin
        fd = (apply_path(x, 0.0, st_, TOY) - apply_path(x, 0.0, -st_, TOY)) / (2 * st_)
        assert np.linalg.norm(der["nu"] - fd) / np.linalg.norm(fd) < 1e-5


class TestFisher:
    def setup_method(self):
        self.x = frame(seed=5)
        self.ps = PathSet((PathParams(0.9 * np.exp(0.3j), 2 * TOY.delay_bin, 1 * TOY.doppler_bin),))

    def test_symmetric_linear_psd(self):
        F1 = fisher(self.x, self.ps, TOY, 3.0).matrix
        F2 = fisher(self.x, self.ps, TOY, 6.0).matrix
        assert np.max(np.abs(F1 - F1.T)) < 1e-12
        assert np.allclose(F2, 2 * F1, rtol=1e-14, atol=0)
        assert np.linalg.eigvalsh(F1).min() >= -1e-9 * np.linalg.norm(F1)

    def test_matches_loglikelihood_second_differences(self):
        snr = 2.0
        x, path = self.x, self.ps[0]
        theta0 = np.array([abs(path.gain), np.angle(path.gain), path.delay, path.doppler])
        y = vec(signal(theta0, x, TOY))
        lt = delay_taps(path.delay, TOY)

        def L(th):
            s = vec(signal(th, x, TOY, lt))
            return snr * np.vdot(y - s, y - s).real

        h = np.array([1e-3, 1e-3, 1e-3 * TOY.delay_bin, 1e-3 * TOY.doppler_bin])
        H = np.empty((4, 4))
        for i in range(4):
            for j in range(4):
                ei, ej = np.eye(4)[i] * h[i], np.eye(4)[j] * h[j]
                H[i, j] = (L(theta0 + ei + ej) - L(theta0 + ei - ej) - L(theta0 - ei + ej)
                           + L(theta0 - ei - ej)) / (4 * h[i] * h[j])
        # at the truth the Hessian of snr*||y - s||^2 is exactly 2 snr Re(J^H J)
        F = fisher(x, self.ps, TOY, snr).matrix
        D = np.sqrt(np.outer(np.diag(F), np.diag(F)))
        assert np.max(np.abs(H - F) / D) < 1e-4

    def test_loglikelihood_function_agrees(self):
        theta = (0.7, 0.2, 1.5 * TOY.delay_bin, -0.3 * TOY.doppler_bin)
        ps = PathSet((PathParams(theta[0] * np.exp(1j * theta[1]), theta[2], theta[3]),))
        y = np.zeros(TOY.N * TOY.M, complex)
        s = signal(theta, self.x, TOY)
        assert log_likelihood(y, self.x, ps, TOY) == pytest.approx(np.vdot(s, s).real)


class TestCrlb:
    def test_halves_when_snr_doubles(self):
        x = frame(seed=1)
        ps = PathSet((PathParams(1.0, 1.3 * TOY.delay_bin, 0.2 * TOY.doppler_bin),))
        a = crlb(fisher(x, ps, TOY, 10.0))
        b = crlb(fisher(x, ps, TOY, 20.0))
        assert np.allclose(b.variances, a.variances / 2, rtol=1e-12)
        assert np.all(a.variances > 0)

    def test_more_paths_cannot_help(self):
        p = FrameParams(16, 16)
        x = frame(p, 3)
        los = PathParams(1.0, 1.2 * p.delay_bin, 0.3 * p.doppler_bin)
        one = crlb(fisher(x, PathSet((los,)), p, 5.0))
        two = crlb(fisher(x, PathSet((los, PathParams(0.7j, 2.6 * p.delay_bin,
                                                       -1.4 * p.doppler_bin))), p, 5.0))
        assert two.delay >= one.delay * (1 - 1e-12)
        assert two.doppler >= one.doppler * (1 - 1e-12)

    def test_full_frame_units(self):
        p = FrameParams.standard()
        x = frame(p, 0, qam16())
        tau, nu = los_shifts(20.0, 80 / 3.6, p.carrier_freq, ROUND_TRIP)
        ps = PathSet((PathParams(1.0, tau, nu),), ROUND_TRIP)
        r = [crlb(fisher(x, ps, p, 10 ** (s / 10))) for s in (-20, -10, 0)]
        assert 1e-4 < r[2].range_rmse < 1.0 and 1e-4 < r[2].velocity_rmse < 10.0
        # straight line of slope -1/2 decade per decade in log-log
        for a, b in zip(r, r[1:]):
            assert a.range_rmse / b.range_rmse == pytest.approx(np.sqrt(10), rel=1e-9)
        one_way = crlb(fisher(x, PathSet((PathParams(1.0, tau, nu),)), p, 1.0))
        assert one_way.range_rmse == pytest.approx(2 * r[2].range_rmse, rel=1e-9)

    def test_zero_gain_is_singular(self):
        x = frame()
        with pytest.raises(np.linalg.LinAlgError):
            crlb(fisher(x, PathSet((PathParams(0.0, 0.0, 0.0),)), TOY, 1.0))

    def test_lookup_by_name(self):
        x = frame()
        r = crlb(fisher(x, PathSet((PathParams(1.0, 0.0, 0.0),)), TOY, 1.0))
        assert r["tau0"] == r.delay and r["nu0"] == r.doppler


class TestLogI0:
    def test_matches_scipy_on_0_700(self):
        x = np.concatenate([np.linspace(0, 700, 20001), [19.999, 20.0, 20.001]])
        ref = np.log(i0e(x)) + x
        rel = np.abs(log_i0(x) - ref) / np.maximum(np.abs(ref), 1e-300)
        assert np.max(rel[x > 0]) < 1e-10
        assert log_i0(0.0) == 0.0

    def test_no_overflow(self):
        v = log_i0(np.array([1e3, 1e5, 1e6]))
        assert np.all(np.isfinite(v))
        assert v[-1] == pytest.approx(np.log(i0e(1e6)) + 1e6, rel=1e-12)

    @given(st.floats(0, 1e6))
    def test_property_symmetric_and_finite(self, x):
        assert log_i0(-x) == log_i0(x) and np.isfinite(log_i0(x))


class TestWaterfall:
    def setup_method(self):
        self.p = FrameParams(8, 16)
        self.x = frame(self.p, 2)
        self.grid = SearchGrid.for_window(self.p, fine_levels=0)
        self.path = PathParams(1.0, 1.3 * self.p.delay_bin, 0.25 * self.p.doppler_bin)

    def test_limits(self):
        wb = waterfall_bound(self.x, self.p, self.path, self.grid, [1e-12, 1e6])
        assert wb.delay_mse[0] == pytest.approx(wb.delay_random, rel=1e-9)
        assert wb.doppler_mse[0] == pytest.approx(wb.doppler_random, rel=1e-9)
        assert wb.delay_mse[1] < 1e-12 * wb.delay_random
        assert wb.doppler_mse[1] < 1e-12 * wb.doppler_random

    def test_monotone_in_snr(self):
        snrs = 10 ** (np.arange(-40, 21, 2) / 10)
        wb = waterfall_bound(self.x, self.p, self.path, self.grid, snrs)
        assert np.all(np.diff(wb.delay_mse) <= 1e-15 * wb.delay_random)
        assert np.all(np.diff(wb.doppler_mse) <= 1e-15 * wb.doppler_random)

    def test_threshold_snr(self):
        snr = np.arange(0, 50, 10.0)
        crlb_mse = 10 ** (-snr / 10)
        mse = np.where(snr < 25, 100 * crlb_mse, crlb_mse)
        assert threshold_snr(snr, mse, crlb_mse) == pytest.approx(25.0)
        assert threshold_snr(snr, crlb_mse, crlb_mse) == 0.0
        assert np.isnan(threshold_snr(snr, 100 * crlb_mse, crlb_mse))
