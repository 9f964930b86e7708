import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otfs_jrc.channel import (ONE_WAY, ROUND_TRIP, LinkBudget, PathParams, PathSet,
                              default_tau_max, make_scenario, noise_for_snr_comm,
                              noise_for_snr_radar, round_delays, snr_comm, snr_radar, with_gains)
from otfs_jrc.grid import SPEED_OF_LIGHT, FrameParams

P1 = FrameParams.standard()


class TestScenario:
    def test_los_round_trip(self):
        ps = make_scenario(P1, 1, rng=0, mode=ROUND_TRIP)
        assert ps[0].delay == pytest.approx(133.4e-9, rel=1e-3)
        oracle = 2 * (80 / 3.6) * 5.89e9 / SPEED_OF_LIGHT
        assert ps[0].doppler == pytest.approx(oracle, rel=1e-12)
        assert ps[0].doppler == pytest.approx(873, rel=2e-3)

    def test_round_trip_is_twice_one_way(self):
        a = make_scenario(P1, 1, rng=0, mode=ONE_WAY)
        b = make_scenario(P1, 1, rng=0, mode=ROUND_TRIP)
        assert b[0].delay == 2 * a[0].delay and b[0].doppler == 2 * a[0].doppler
        assert a[0].delay == pytest.approx(66.7e-9, rel=1e-3)
        assert a[0].doppler == pytest.approx(436.5, rel=2e-3)

    def test_decay_profile(self):
        ps = make_scenario(P1, 3, rng=1, decay_db_per_path=3)
        g2 = np.abs(ps.gains) ** 2
        assert g2[1] / g2[0] == pytest.approx(10 ** -0.3)
        assert g2[2] / g2[0] == pytest.approx(10 ** -0.6)

    def test_power_grows_with_p(self):
        powers = [make_scenario(P1, P, rng=2).total_power() for P in range(1, 6)]
        assert all(b > a for a, b in zip(powers, powers[1:]))

    def test_rejects_zero_paths(self):
        with pytest.raises(ValueError):
            make_scenario(P1, 0)

    @given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_invariants(self, P, seed, on_grid):
        ps = make_scenario(P1, P, rng=seed, on_grid=on_grid)
        tau_max = default_tau_max(P1)
        assert len(ps) == P
        assert np.all(ps.delays >= 0) and np.all(ps.delays < tau_max) and tau_max < P1.symbol_duration
        assert np.all(np.abs(ps.dopplers) < P1.subcarrier_spacing)
        assert np.argmin(ps.delays) == 0
        d = np.sort(ps.delays)
        assert np.all(np.diff(d) >= P1.delay_bin * (1 - 1e-9))
        ps.validate(P1)

    def test_on_grid_rounding(self):
        ps = make_scenario(P1, 3, rng=4, on_grid=True)
        assert np.allclose(ps.delays / P1.delay_bin, np.round(ps.delays / P1.delay_bin))
        assert np.allclose(ps.dopplers / P1.doppler_bin, np.round(ps.dopplers / P1.doppler_bin))

    def test_pathset_rejects_los_not_first(self):
        with pytest.raises(ValueError):
            PathSet((PathParams(1, 2e-7, 0), PathParams(1, 1e-7, 0)))

    def test_validate_rejects_bandwidth_violation(self):
        ps = PathSet.single(1.0, 1e-7, 2 * P1.subcarrier_spacing)
        with pytest.raises(ValueError):
            ps.validate(P1)

    def test_helpers(self):
        ps = make_scenario(P1, 2, rng=5)
        assert np.allclose(with_gains(ps, [2, 3]).gains, [2, 3])
        r = round_delays(ps, P1)
        assert np.allclose(r.delays / P1.delay_bin, np.round(r.delays / P1.delay_bin))
        assert np.array_equal(r.dopplers, ps.dopplers)
        assert ps[0].range == pytest.approx(SPEED_OF_LIGHT * ps[0].delay)


class TestLinkBudget:
    def test_range_laws(self):
        b = LinkBudget(p_avg_over_noise=1e12)
        b2 = LinkBudget(range=40.0, p_avg_over_noise=1e12)
        assert snr_radar(b2) / snr_radar(b) == pytest.approx(1 / 16)
        assert snr_comm(b2) / snr_comm(b) == pytest.approx(1 / 4)

    def test_gain_law(self):
        b = LinkBudget()
        assert snr_radar(LinkBudget(antenna_gain=200.0)) / snr_radar(b) == pytest.approx(4)

    def test_ratio(self):
        b = LinkBudget(rcs=2.0, range=33.0)
        assert snr_radar(b) / snr_comm(b) == pytest.approx(2.0 / (4 * math.pi * 33.0 ** 2))

    def test_standard_calibration(self):
        b = LinkBudget()
        s2 = noise_for_snr_radar(b, 1.0)
        assert snr_radar(LinkBudget(p_avg_over_noise=1.0 / s2)) == pytest.approx(1.0)
        s2c = noise_for_snr_comm(b, 10.0)
        assert snr_comm(LinkBudget(p_avg_over_noise=1.0 / s2c)) == pytest.approx(10.0)
        # closed form of the radar factor at the standard frame values
        lam = SPEED_OF_LIGHT / 5.89e9
        assert s2 == pytest.approx(lam ** 2 * 1.0 * 100 ** 2 / ((4 * math.pi) ** 3 * 20 ** 4))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            LinkBudget(rcs=0.0)
