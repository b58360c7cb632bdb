import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btmpv.aggregate import concatenate, run_aggregate_layer
from btmpv.gpr import (
    CandidateSet,
    GprModel,
    build_candidate_set,
    cross_validate,
    features,
    infer_candidate,
    kernel,
    kernel_matrix,
    subsample,
)
from btmpv.series import HourlySeries
from btmpv.synth import scenario_clouds

unit = st.floats(0, 1, allow_nan=False)


def smooth_data(rng, n):
    X = rng.uniform(0, 1, size=(n, 3))
    y = np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1]) + 0.5 * X[:, 2]
    return X, y


class TestKernel:
    def test_closed_forms(self):
        assert kernel([0, 0, 0], [0, 0, 0], 1.0, 1.0) == 1.0
        assert kernel([1, 0, 0], [0, 0, 0], 1.0, 1.0) == pytest.approx(math.exp(-0.5))
        assert kernel([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], 2.0, 0.3) == pytest.approx(4.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            kernel([0], [0], 0.0, 1.0)

    def test_matrix_matches_scalar_oracle(self, rng):
        A, B = rng.uniform(size=(7, 3)), rng.uniform(size=(5, 3))
        M = kernel_matrix(A, B, 1.3, 0.4)
        for i in range(7):
            for j in range(5):
                assert M[i, j] == pytest.approx(kernel(A[i], B[j], 1.3, 0.4), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(unit, min_size=3, max_size=3), st.lists(unit, min_size=3, max_size=3), st.floats(0.1, 3), st.floats(0.05, 2))
    def test_symmetric_and_bounded(self, a, b, sf, ls):
        k = kernel(a, b, sf, ls)
        assert k == kernel(b, a, sf, ls)
        assert 0 <= k <= sf**2 * (1 + 1e-12)

    def test_features(self):
        X = features(np.array([-0.1, 0.5, 1.2]), np.array([0, 12, 23]), np.array([1, 183.5, 366]))
        np.testing.assert_allclose(X[:, 0], [0, 0.5, 1])
        np.testing.assert_allclose(X[:, 1], [0, 12 / 23, 1])
        np.testing.assert_allclose(X[:, 2], [0, 0.5, 1])


class TestPosterior:
    def test_interpolates_as_jitter_vanishes(self, rng):
        X, y = smooth_data(rng, 40)
        m = GprModel.fit(X, y, 1.0, 0.3, jitter=1e-10)
        np.testing.assert_allclose(m.predict(X), y, atol=1e-6)

    def test_variance_nonnegative(self, rng):
        X, y = smooth_data(rng, 200)
        m = GprModel.fit(X, y, 2.0, 1.0)
        _, var = m.predict(rng.uniform(-0.5, 1.5, size=(500, 3)), return_var=True)
        _, var_train = m.predict(X, return_var=True)
        assert var.min() >= -1e-8 and var_train.min() >= -1e-8

    def test_variance_smaller_near_data(self, rng):
        X, y = smooth_data(rng, 50)
        m = GprModel.fit(X, y, 1.0, 0.1)
        _, v_in = m.predict(X, return_var=True)
        _, v_out = m.predict(X + 5.0, return_var=True)
        assert v_in.max() <= v_out.min()

    def test_far_field_returns_mean(self, rng):
        X, y = smooth_data(rng, 30)
        m = GprModel.fit(X, y, 1.0, 0.1)
        assert m.predict(np.full((1, 3), 50.0))[0] == pytest.approx(y.mean(), abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_mean_linear_in_targets(self, a, b):
        rng = np.random.default_rng(0)
        X, y1 = smooth_data(rng, 30)
        y2 = rng.normal(size=30)
        Xq = rng.uniform(size=(10, 3))
        f = lambda y: GprModel.fit(X, y, 1.0, 0.3).predict(Xq)
        np.testing.assert_allclose(f(a * y1 + b * y2), a * f(y1) + b * f(y2), atol=1e-7)

    def test_held_out_rmse(self, rng):
        X, y = smooth_data(rng, 600)
        Xt, yt = smooth_data(rng, 200)
        sf, ls, scores = cross_validate(X, y)
        assert len(scores) == 9
        rmse = np.sqrt(np.mean((GprModel.fit(X, y, sf, ls).predict(Xt) - yt) ** 2))
        assert rmse < 0.05

    def test_duplicate_rows_train(self, rng):
        X, y = smooth_data(rng, 20)
        m = GprModel.fit(np.vstack([X, X]), np.concatenate([y, y]), 1.0, 0.3)
        assert np.all(np.isfinite(m.predict(X)))

    def test_save_load_roundtrip(self, rng, tmp_path):
        X, y = smooth_data(rng, 50)
        m = GprModel.fit(X, y, 2.0, 0.3, azimuth=135.0)
        m.save(tmp_path / "m.csv")
        m2 = GprModel.load(tmp_path / "m.csv")
        Xq = rng.uniform(size=(20, 3))
        assert (m2.sigma_f, m2.sigma, m2.azimuth, m2.jitter) == (2.0, 0.3, 135.0, m.jitter)
        np.testing.assert_array_equal(m2.predict(Xq), m.predict(Xq))


def test_subsample():
    assert subsample(1000).tolist() == list(range(1000))
    idx = subsample(5840)
    assert len(idx) <= 2000 and idx[0] == 0


@pytest.fixture(scope="module")
def cands(small_panel, mask, models_iii):
    _, G, _ = concatenate(run_aggregate_layer(small_panel, mask))
    return build_candidate_set(HourlySeries(small_panel.start, G), (90.0, 135.0, 180.0, 225.0, 270.0), models_iii, mask)


class TestCandidates:
    def test_contract(self, cands, small_panel, mask):
        G = cands.G_e
        assert cands.azimuths == (180.0, 90.0, 135.0, 225.0, 270.0)
        assert G.shape == (small_panel.n_hours, 5)
        assert G.min() >= 0 and G.max() <= 1
        night = mask.is_night(small_panel.hours())
        assert not G[night].any()
        assert G[:, 0].max() == 1.0

    def test_argmax_ordering_clear_days(self, cands, small_cfg):
        clear = scenario_clouds(small_cfg).clear_days()
        days = np.flatnonzero(clear)
        assert days.size >= 5
        G = cands.G_e
        col = {a: i for i, a in enumerate(cands.azimuths)}
        ok = 0
        for d in days:
            block = G[24 * d : 24 * d + 24]
            e, s, w = (int(np.argmax(block[:, col[a]])) for a in (90.0, 180.0, 270.0))
            ok += e < s < w
        assert ok / days.size >= 0.9

    def test_zero_input_stays_dark(self, models_iii, small_panel, mask):
        zero = HourlySeries(small_panel.start, np.zeros(small_panel.n_hours))
        for m in models_iii.values():
            assert infer_candidate(m, zero, mask).values.max() <= 0.05

    def test_missing_model(self, small_panel, mask):
        G = HourlySeries(small_panel.start, small_panel.true_gen.sum(1))
        with pytest.raises(KeyError):
            build_candidate_set(G, (90.0, 180.0), {}, mask)

    def test_set_validation(self):
        with pytest.raises(ValueError):
            CandidateSet(np.ones((24, 2)), (180.0,))

    def test_variance_returned(self, models_iii, small_panel, mask):
        G = HourlySeries(small_panel.start, small_panel.true_gen[:, 0] / small_panel.true_gen[:, 0].max())
        series, var = infer_candidate(models_iii[90.0], G, mask, return_var=True)
        assert var.min() >= -1e-8 and len(series) == small_panel.n_hours
