from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from btmpv.metrics import NOISE_CASES, NoiseSpec, apply_noise, cv, mape, metric_set, mse, percentile_table
from btmpv.series import MeterPanel

T0 = datetime(2019, 1, 1)
vals = st.floats(-100, 100, allow_nan=False, allow_subnormal=False)


def loop_stats(est, truth, day, ddof):
    errs = [float(e - t) for e, t, d in zip(est, truth, day) if d]
    n = len(errs)
    mu = sum(errs) / n
    var = sum((e - mu) ** 2 for e in errs) / (n - ddof)
    return errs, mu, var


class TestMape:
    def test_identity(self):
        y = np.arange(10.0)
        assert mape(y, y, 9.0, np.ones(10, bool)) == 0.0

    def test_constant_error(self):
        y = np.zeros(10)
        assert mape(y + 1.0, y, 100.0, np.ones(10, bool)) == pytest.approx(1.0)

    def test_daytime_only(self):
        day = np.array([True, False] * 5)
        est = np.where(day, 1.0, 50.0)
        assert mape(est, np.zeros(10), 10.0, day) == pytest.approx(10.0)

    def test_loop_oracle(self, rng):
        est, truth = rng.normal(size=200), rng.normal(size=200)
        day = rng.uniform(size=200) < 0.6
        errs, _, _ = loop_stats(est, truth, day, 0)
        expected = 100.0 * sum(abs(e) / 3.5 for e in errs) / len(errs)
        assert mape(est, truth, 3.5, day) == pytest.approx(expected, rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            mape(np.ones(3), np.ones(3), 0.0, np.ones(3, bool))
        with pytest.raises(ValueError):
            mape(np.ones(3), np.ones(4), 1.0, np.ones(3, bool))
        with pytest.raises(ValueError):
            mape(np.ones(3), np.ones(3), 1.0, np.zeros(3, bool))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 20, elements=vals), arrays(float, 20, elements=vals), st.floats(0.1, 1e3))
    def test_inverse_in_peak(self, est, truth, peak):
        day = np.ones(20, bool)
        assert mape(est, truth, 2 * peak, day) == pytest.approx(mape(est, truth, peak, day) / 2, rel=1e-12, abs=1e-300)


class TestMseCv:
    def test_identity(self):
        y = np.arange(5.0)
        day = np.ones(5, bool)
        assert mse(y, y, day) == 0.0
        assert np.isnan(cv(y, y, day))

    def test_symmetric_errors(self):
        day = np.ones(2, bool)
        assert mse(np.array([1.0, -1.0]), np.zeros(2), day) == 1.0
        assert np.isnan(cv(np.array([1.0, -1.0]), np.zeros(2), day))
        assert not metric_set(np.array([2.0, 1.0]), np.array([1.0, 2.0]), day, "G").cv_defined

    @pytest.mark.parametrize("ddof", [0, 1])
    def test_loop_oracle(self, rng, ddof):
        est, truth = rng.normal(1, 1, 300), rng.normal(size=300)
        day = rng.uniform(size=300) < 0.7
        errs, mu, var = loop_stats(est, truth, day, ddof)
        assert mse(est, truth, day) == pytest.approx(sum(e * e for e in errs) / len(errs), rel=1e-12)
        assert cv(est, truth, day, ddof) == pytest.approx(var**0.5 / mu, rel=1e-10)

    def test_scope_divisors(self, rng):
        est, truth = rng.normal(1, 1, 50), rng.uniform(1, 2, 50)
        day = np.ones(50, bool)
        assert metric_set(est, truth, day, "G").cv == cv(est, truth, day, 1)
        assert metric_set(est, truth, day, "G", scope="c1").cv == cv(est, truth, day, 0)
        assert metric_set(est, truth, day, "G", scope="c1", unify_divisor=True).cv == cv(est, truth, day, 1)

    def test_metric_set_normalizes_by_true_peak(self):
        truth = np.array([0.0, 2.0, 4.0])
        m = metric_set(truth + 1.0, truth, np.ones(3, bool), "P")
        assert m.mape == pytest.approx(25.0) and m.target == "P"

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            mse(np.ones(1), np.ones(1), np.ones(1, bool))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 24, elements=vals), arrays(float, 24, elements=vals), st.randoms())
    def test_reordering_invariance(self, est, truth, rnd):
        perm = list(range(24))
        rnd.shuffle(perm)
        day = np.arange(24) % 3 != 0
        a = (mape(est, truth, 7.0, day), mse(est, truth, day))
        b = (mape(est[perm], truth[perm], 7.0, day[perm]), mse(est[perm], truth[perm], day[perm]))
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


class TestPercentiles:
    def test_identical(self):
        assert set(percentile_table([3.3] * 100).values()) == {3.3}

    def test_order_statistic(self):
        assert percentile_table(range(1, 11), (0.5,))[0.5] == 5
        t = percentile_table(range(1, 11))
        assert [t[p] for p in (0.1, 0.2, 0.5, 0.7, 0.9)] == [1, 2, 5, 7, 9]

    def test_sort_and_index_oracle(self, rng):
        v = rng.lognormal(size=97)
        t = percentile_table(v)
        s = sorted(v)
        for p, x in t.items():
            rank = next(k for k in range(1, 98) if k / 97 >= p - 1e-12)
            assert x == s[rank - 1]

    def test_skips_nan(self):
        assert percentile_table([np.nan, 1.0, 2.0], (1.0,))[1.0] == 2.0

    def test_errors(self):
        with pytest.raises(ValueError):
            percentile_table([])
        with pytest.raises(ValueError):
            percentile_table([1.0], (0.0,))


def positive_panel(n_hours=400, n_w=10, n_o=15):
    rng = np.random.default_rng(0)
    return MeterPanel(
        T0,
        [f"pv{i}" for i in range(n_w)],
        rng.uniform(0.5, 3, (n_hours, n_w)),
        [f"np{i}" for i in range(n_o)],
        rng.uniform(0.5, 3, (n_hours, n_o)),
        true_native=np.full((n_hours, n_w), 2.0),
        true_gen=np.zeros((n_hours, n_w)),
    )


class TestNoise:
    def test_identity(self):
        p = positive_panel()
        assert apply_noise(p, NoiseSpec(0.0, 0.0)) is p

    def test_exact_count(self):
        p = positive_panel()
        noisy = apply_noise(p, NoiseSpec(0.03, 0.005, seed=9))
        zeros = int((noisy.net == 0).sum() + (noisy.native_o == 0).sum())
        assert p.net.size + p.native_o.size == 10_000
        assert zeros == 300

    def test_all_lost(self):
        noisy = apply_noise(positive_panel(), NoiseSpec(1.0, 0.005))
        assert not noisy.net.any() and not noisy.native_o.any()

    def test_factor_range_and_truth(self):
        p = positive_panel()
        noisy = apply_noise(p, NoiseSpec(0.0, 0.005, seed=1))
        ratio = noisy.net / p.net
        assert ratio.min() >= 0.995 and ratio.max() <= 1.005
        np.testing.assert_array_equal(noisy.true_native, p.true_native)
        np.testing.assert_array_equal(noisy.true_gen, p.true_gen)

    def test_deterministic(self):
        p = positive_panel()
        a, b = apply_noise(p, NOISE_CASES[5]), apply_noise(p, NOISE_CASES[5])
        assert a.net.tobytes() == b.net.tobytes()
        c = apply_noise(p, NoiseSpec(0.05, 0.005, seed=1))
        assert a.net.tobytes() != c.net.tobytes()

    def test_cases(self):
        assert [NOISE_CASES[k].packet_loss_rate for k in range(1, 6)] == [0.01, 0.02, 0.03, 0.04, 0.05]
        assert all(s.measurement_error == 0.005 for s in NOISE_CASES.values())

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(1.5)
        with pytest.raises(ValueError):
            NoiseSpec(0.1, -0.1)
