from dataclasses import replace

import numpy as np
import pytest

from btmpv.series import DayNightMask
from btmpv.synth import (
    CloudField,
    CloudParams,
    ScenarioConfig,
    SolarModel,
    build_panel,
    fleet,
    pvwatts_surrogate,
    scenario_clouds,
    simulate_clouds,
    simulate_native_load,
    simulate_pv,
)

CFG = ScenarioConfig(days=28, n_with_pv=10, n_without_pv=10)


def daily_argmax(series, start_hour=0):
    v = series.values
    n = (start_hour + v.size) // 24
    return np.array([int(np.argmax(v[24 * d : 24 * d + 24])) for d in range(n)])


class TestSolar:
    def test_declination_extremes(self):
        from btmpv.synth.solar import declination

        assert np.degrees(declination(np.array([172.0])))[0] == pytest.approx(23.45, abs=0.1)
        assert np.degrees(declination(np.array([355.0])))[0] == pytest.approx(-23.45, abs=0.1)

    def test_noon_zenith_matches_geometry(self):
        # at solar noon the zenith is |latitude - declination|; search the day finely for the minimum
        from btmpv.synth.solar import declination

        sm = SolarModel(30.3)
        hours = np.linspace(10, 15, 5001)
        zen, _ = sm.zenith_azimuth(np.full_like(hours, 172.0), hours)
        expected = abs(30.3 - np.degrees(declination(np.array([172.0])))[0])
        assert zen.min() == pytest.approx(expected, abs=0.05)

    def test_sun_down_is_zero(self):
        sm = SolarModel(30.3)
        h = np.arange(24) + 0.5
        poa = sm.poa_irradiance(np.full(24, 10.0), h, 25.0, 180.0)
        _, _, up = sm.sun_vector(np.full(24, 10.0), h)
        assert np.all(poa[up <= 0] == 0.0)
        assert np.all(poa >= 0.0)

    def test_poa_below_stc(self):
        sm = SolarModel(30.3)
        doy = np.repeat(np.arange(1, 366), 24).astype(float)
        h = np.tile(np.arange(24) + 0.5, 365)
        for az in (90.0, 180.0, 270.0):
            assert sm.poa_irradiance(doy, h, 25.0, az).max() < 1000.0


class TestSimulatePV:
    def test_south_argmax_midday(self):
        # with no clouds, south output peaks at 11, 12 or 13 local every day
        s = simulate_pv(CFG, 5.0, 180.0, CloudField.clear(CFG.n_hours))
        assert set(daily_argmax(s).tolist()) <= {11, 12, 13}

    def test_night_zero(self):
        s = simulate_pv(CFG, 5.0, 135.0, scenario_clouds(CFG))
        _, _, up = CFG.solar.sun_vector(s.days_of_year, s.hours + 0.5)
        assert np.all(s.values[up <= 0] == 0.0)

    def test_linear_in_capacity(self):
        cloud = scenario_clouds(CFG)
        a = simulate_pv(CFG, 3.0, 200.0, cloud).values
        b = simulate_pv(CFG, 6.0, 200.0, cloud).values
        np.testing.assert_array_equal(b, 2.0 * a)

    def test_peak_below_capacity(self):
        year = replace(CFG, days=365)
        for az in (90.0, 180.0, 270.0):
            assert simulate_pv(year, 7.0, az).values.max() <= 7.0

    def test_east_before_west(self):
        east = daily_argmax(simulate_pv(CFG, 1.0, 90.0))
        west = daily_argmax(simulate_pv(CFG, 1.0, 270.0))
        assert np.all(east < west)

    def test_validation(self):
        with pytest.raises(ValueError):
            simulate_pv(CFG, -1.0, 180.0)
        with pytest.raises(ValueError):
            simulate_pv(CFG, 1.0, 400.0)


class TestClouds:
    def test_range_and_autocorrelation(self):
        c = simulate_clouds(np.random.default_rng(0), 24 * 200, CloudParams())
        assert c.values.min() >= 0 and c.values.max() <= 1
        x = c.values - c.values.mean()
        assert (x[1:] @ x[:-1]) / (x @ x) > 0

    def test_field_validation(self):
        with pytest.raises(ValueError):
            CloudField(np.array([0.5, 1.2]))

    def test_clear_days(self):
        vals = np.ones(48)
        vals[30] = 0.5
        assert CloudField(vals).clear_days().tolist() == [True, False]


class TestNativeLoad:
    def test_zero_noise_scalar_multiples(self):
        cfg = replace(CFG, load_noise=0.0, day_noise=0.0)
        a = simulate_native_load(cfg, 0).values
        b = simulate_native_load(cfg, 1).values
        ratio = b / a
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)

    def test_positive(self):
        assert simulate_native_load(CFG, 3).values.min() > 0

    def test_group_correlation(self):
        # Pearson correlation of two disjoint group aggregates (40 vs 80 customers)
        cfg = replace(CFG, days=60)
        a = sum(simulate_native_load(cfg, i).values for i in range(40))
        b = sum(simulate_native_load(cfg, i).values for i in range(40, 120))
        assert np.corrcoef(a, b)[0, 1] > 0.95

    def test_mean_level(self):
        cfg = replace(CFG, days=60)
        level = np.mean([simulate_native_load(cfg, i).values.mean() for i in range(300)])
        assert level == pytest.approx(cfg.base_load, rel=0.05)


class TestPanel:
    def test_dimensions_default(self):
        cfg = ScenarioConfig()
        caps, az = fleet(cfg)
        assert caps.size == 100 and az.size == 100
        p = build_panel(replace(cfg, days=7))
        assert p.net.shape == (168, 100) and p.native_o.shape == (168, 115)

    def test_identity(self):
        p = build_panel(CFG)
        np.testing.assert_array_equal(p.net, p.true_native - p.true_gen)
        np.testing.assert_allclose(p.net + p.true_gen, p.true_native, rtol=0, atol=1e-12)

    def test_zero_capacity(self):
        cfg = replace(CFG, pv_capacities=(0.0,) * CFG.n_with_pv)
        p = build_panel(cfg)
        np.testing.assert_array_equal(p.net, p.true_native)

    def test_deterministic(self):
        a, b = build_panel(CFG), build_panel(CFG)
        assert a.net.tobytes() == b.net.tobytes()
        assert a.native_o.tobytes() == b.native_o.tobytes()
        assert a.true_gen.tobytes() == b.true_gen.tobytes()

    def test_seed_changes_output(self):
        assert not np.array_equal(build_panel(CFG).net, build_panel(replace(CFG, seed=CFG.seed + 1)).net)

    def test_azimuth_mix_counts(self):
        _, az = fleet(ScenarioConfig())
        assert np.sum(az == 180.0) == 80
        assert all(np.sum(az == a) == 5 for a in (90.0, 135.0, 225.0, 270.0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(days=6)
        with pytest.raises(ValueError):
            ScenarioConfig(n_with_pv=2, azimuths=(180.0, 400.0))
        with pytest.raises(ValueError):
            ScenarioConfig(n_with_pv=2, pv_capacities=(1.0,))

    def test_dict_roundtrip(self):
        cfg = ScenarioConfig(seed=9, azimuths=None, days=30)
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            ScenarioConfig.from_dict({"bogus": 1})


class TestFindings:
    def test_nocturnal_ratio_tracks_full_ratio(self):
        # any two disjoint groups of >= 20 customers: r over all hours vs r over nights within 5%
        p = build_panel(replace(ScenarioConfig(), days=60, n_with_pv=40, n_without_pv=60))
        night = DayNightMask().is_night(p.hours())
        native = np.hstack([p.true_native, p.native_o])
        rng = np.random.default_rng(1)
        for _ in range(10):
            idx = rng.permutation(native.shape[1])
            a, b = native[:, idx[:20]].sum(1), native[:, idx[20:60]].sum(1)
            r = a.sum() / b.sum()
            r_n = a[night].sum() / b[night].sum()
            assert abs(r_n / r - 1) < 0.05

    def test_same_azimuth_identical_shapes(self):
        cloud = scenario_clouds(CFG)
        a = simulate_pv(CFG, 3.0, 225.0, cloud).values
        b = simulate_pv(CFG, 8.0, 225.0, cloud).values
        np.testing.assert_allclose(a / a.max(), b / b.max(), rtol=1e-12)


class TestSurrogate:
    def test_south_matches_clear_pv(self):
        s = pvwatts_surrogate(180.0, CFG)
        pv = simulate_pv(CFG, 4.0, 180.0, CloudField.clear(CFG.n_hours)).values
        np.testing.assert_allclose(s.values, pv / pv.max(), rtol=1e-12)

    def test_peak_one(self):
        for az in (90.0, 135.0, 270.0):
            assert pvwatts_surrogate(az, CFG).values.max() == 1.0

    def test_east_west_every_day(self):
        east = daily_argmax(pvwatts_surrogate(90.0, CFG))
        west = daily_argmax(pvwatts_surrogate(270.0, CFG))
        assert np.all(east < west)
