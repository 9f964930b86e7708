import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otfs_jrc.detectors import build_graph, mp_g_detect
from otfs_jrc.grid import FrameParams, RngStream, awgn, bpsk, draw_frame, qam16, qpsk
from otfs_jrc.metrics import (CapacityAccumulator, RmseAccumulator, awgn_symmetric_capacity,
                              lmmse_information, pragmatic_capacity, rmse,
                              symbol_information, symmetric_capacity_curve)
from otfs_jrc.modem import identity_channel

from oracles import bpsk_real_capacity, symmetric_capacity_quadrature


class TestPragmatic:
    @pytest.mark.parametrize("c", [bpsk(), qpsk(), qam16()])
    def test_perfect_and_uniform(self, c):
        idx = np.arange(50) % c.size
        delta = np.eye(c.size)[idx]
        assert pragmatic_capacity(idx, delta, c).value == math.log2(c.size)
        assert pragmatic_capacity(idx, delta, c, "true-symbol").value == math.log2(c.size)
        uni = np.full((50, c.size), 1.0 / c.size)
        assert abs(pragmatic_capacity(idx, uni, c).value) < 1e-12

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            pragmatic_capacity([0], np.array([[0.5, 0.6, 0, 0]]), qpsk())
        with pytest.raises(ValueError):
            symbol_information(np.full((2, 4), 0.25), qpsk(), estimator="bogus")
        with pytest.raises(ValueError):
            symbol_information(np.full((2, 4), 0.25), qpsk(), estimator="true-symbol")

    @pytest.mark.parametrize("snr_db", [0.0, 10.0])
    def test_mp_g_on_identity_matches_quadrature(self, snr_db):
        c = qpsk()
        p = FrameParams(16, 16)
        ch = identity_channel(p)
        s2 = 10 ** (-snr_db / 10)
        rng = RngStream(3)
        acc = CapacityAccumulator()
        for _ in range(40):
            f = draw_frame(p, c, rng)
            y = f.vector + awgn(p.N * p.M, s2, rng)
            out = mp_g_detect(build_graph(ch, y, s2), c)
            acc.add(symbol_information(out.pmf, c, f.indices))
        ref = symmetric_capacity_quadrature(c.points, 1 / s2)
        assert abs(acc.result().value - ref) < 0.05

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_bounded_by_log_size(self, seed):
        rng = np.random.default_rng(seed)
        c = qam16()
        V = rng.dirichlet(np.full(16, 0.3), size=64)
        est = pragmatic_capacity(rng.integers(0, 16, 64), V, c)
        assert -1e-12 <= est.value <= 4 + 3 * est.stderr


class TestAwgnCapacity:
    def test_bpsk_examples(self):
        # complex noise E|w|^2 = 1/snr; the real-channel 0 dB case is snr = 0.5 here
        assert bpsk_real_capacity(1.0) == pytest.approx(0.486, abs=5e-4)
        assert awgn_symmetric_capacity(bpsk(), 0.5, rng=1) == pytest.approx(0.486, abs=0.01)
        ref = symmetric_capacity_quadrature(bpsk().points, 1.0)
        assert awgn_symmetric_capacity(bpsk(), 1.0, rng=2) == pytest.approx(ref, abs=0.01)

    def test_limits(self):
        assert awgn_symmetric_capacity(qam16(), 1e6, draws=20_000) == pytest.approx(4.0, abs=1e-6)
        assert awgn_symmetric_capacity(qpsk(), 1e-6, draws=20_000) == pytest.approx(0.0, abs=0.01)
        with pytest.raises(ValueError):
            awgn_symmetric_capacity(qpsk(), 0.0)

    @pytest.mark.parametrize("c", [bpsk(), qpsk(), qam16()])
    def test_tabulated_curve(self, c):
        for snr_db in (-10.0, 0.0, 7.3, 20.0):
            snr = 10 ** (snr_db / 10)
            ref = symmetric_capacity_quadrature(c.points, snr, order=60)
            assert symmetric_capacity_curve(c, snr) == pytest.approx(ref, abs=2e-3)
        v = symmetric_capacity_curve(c, np.array([0.0, np.inf]))
        assert v[0] == 0.0 and v[1] == math.log2(c.size)
        assert np.all(np.diff(symmetric_capacity_curve(c, np.logspace(-3, 4, 50))) >= 0)

    def test_lmmse_information_uses_sinr(self):
        s = np.array([0.5, 2.0, 30.0])
        assert np.allclose(lmmse_information(s, qam16()), symmetric_capacity_curve(qam16(), s))


class TestRmse:
    def test_examples(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]).rmse == 0.0
        r = rmse([11.0, 9.0], [10.0, 10.0])
        assert r.rmse == 1.0 and r.trials == 2
        assert rmse([0.0, 0.0, 5.0, -5.0], np.zeros(4), window=8.0).outlier_fraction == 0.5
        with pytest.raises(ValueError):
            rmse([], [])

    def test_uniform_outliers_reach_random_level(self):
        # errors uniform on the window: RMSE -> window / sqrt(12)
        rng = np.random.default_rng(0)
        w = 2.0
        r = rmse(rng.uniform(-w / 2, w / 2, 200_000), np.zeros(200_000))
        assert r.rmse == pytest.approx(w / math.sqrt(12), rel=0.01)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60), st.integers(1, 5))
    @settings(max_examples=40)
    def test_merge_equals_serial(self, errs, parts):
        serial = RmseAccumulator(10.0).add(errs).result()
        chunks = np.array_split(np.array(errs), parts)
        acc = RmseAccumulator(10.0)
        for ch in chunks:
            acc.merge(RmseAccumulator(10.0).add(ch))
        merged = acc.result()
        assert merged.rmse == pytest.approx(serial.rmse, rel=1e-12, abs=1e-12)
        assert merged.outlier_fraction == serial.outlier_fraction
        cs = CapacityAccumulator().add(errs).result()
        cm = CapacityAccumulator()
        for ch in chunks:
            cm.merge(CapacityAccumulator().add(ch))
        assert cm.result().value == pytest.approx(cs.value, rel=1e-12, abs=1e-9)
        assert cm.result().count == cs.count
