import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from climregion import clustering
from climregion.clustering import MixtureModel, RegionAssignment, Scaler
from climregion.errors import DegenerateComponent, TooFewPoints

import oracles

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def blobs(rng, centers, per, sd=0.1):
    centers = np.asarray(centers, dtype=float)
    pts = np.concatenate([c + sd * rng.standard_normal((per, centers.shape[1])) for c in centers])
    labels = np.repeat(np.arange(len(centers)), per)
    return pts, labels


class TestStandardize:
    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(float, st.tuples(st.integers(2, 20), st.integers(1, 7)), elements=finite))
    def test_round_trip(self, x):
        z, scaler = clustering.standardize(x)
        np.testing.assert_allclose(scaler.inverse(z), x, atol=1e-9 * (1 + np.abs(x).max()))
        assert np.all(scaler.scale > 0)

    def test_unit_moments(self, rng):
        x = rng.normal(3.0, 5.0, size=(100, 4))
        z, _ = clustering.standardize(x)
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-12)

    def test_constant_column_keeps_unit_scale(self):
        x = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        z, scaler = clustering.standardize(x)
        assert scaler.scale[1] == 1.0
        assert np.all(z[:, 1] == 0.0)

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            clustering.standardize(np.ones((1, 3)))

    def test_dict_round_trip(self, rng):
        _, scaler = clustering.standardize(rng.normal(size=(5, 3)))
        back = Scaler.from_dict(json.loads(json.dumps(scaler.to_dict())))
        np.testing.assert_array_equal(back.mean, scaler.mean)
        np.testing.assert_array_equal(back.scale, scaler.scale)


class TestEStep:
    def test_matches_naive_density_ratio(self, rng):
        pts = rng.normal(size=(12, 3))
        w = np.array([0.2, 0.5, 0.3])
        m = rng.normal(size=(3, 3))
        v = rng.uniform(0.5, 2.0, size=(3, 3))
        model = MixtureModel(w, m, v, Scaler.identity(3))
        expected = oracles.naive_responsibilities(pts, w, m, v)
        np.testing.assert_allclose(clustering.e_step(pts, model), expected, atol=1e-12)

    def test_single_component(self, rng):
        model = MixtureModel(np.ones(1), np.zeros((1, 2)), np.ones((1, 2)), Scaler.identity(2))
        np.testing.assert_array_equal(clustering.e_step(rng.normal(size=(5, 2)), model), 1.0)

    def test_far_point_stays_finite(self):
        model = MixtureModel(np.array([0.5, 0.5]), np.array([[0.0], [1.0]]),
                             np.full((2, 1), 1e-6), Scaler.identity(1))
        resp = clustering.e_step(np.array([[1e4]]), model)
        assert np.all(np.isfinite(resp))
        assert resp[0, 1] == pytest.approx(1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_rows_sum_to_one(self, k, n, seed):
        rng = np.random.default_rng(seed)
        model = MixtureModel(rng.dirichlet(np.ones(k)), 5 * rng.normal(size=(k, 7)),
                             rng.uniform(1e-3, 4, size=(k, 7)), Scaler.identity(7))
        resp = clustering.e_step(20 * rng.normal(size=(n, 7)), model)
        assert np.all(resp >= 0)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)


class TestMStep:
    def test_matches_weighted_moments(self, rng):
        pts = rng.normal(size=(15, 2))
        resp = rng.dirichlet(np.ones(3), size=15)
        w, m, v = clustering.m_step(pts, resp, variance_floor=0.0)
        ew, em, ev = oracles.weighted_moments(pts.tolist(), resp.tolist())
        np.testing.assert_allclose(w, ew, rtol=1e-12)
        np.testing.assert_allclose(m, em, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(v, ev, rtol=1e-10)

    def test_hard_responsibilities(self):
        pts = np.array([[0.0], [2.0], [10.0], [12.0]])
        resp = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
        w, m, v = clustering.m_step(pts, resp)
        np.testing.assert_array_equal(w, [0.5, 0.5])
        np.testing.assert_array_equal(m[:, 0], [1.0, 11.0])
        np.testing.assert_array_equal(v[:, 0], [1.0, 1.0])

    def test_variance_floor(self):
        pts = np.array([[1.0], [1.0], [5.0]])
        resp = np.array([[1, 0], [1, 0], [0, 1]], dtype=float)
        _, _, v = clustering.m_step(pts, resp, variance_floor=1e-6)
        assert np.all(v == 1e-6)

    def test_empty_component(self):
        with pytest.raises(DegenerateComponent):
            clustering.m_step(np.ones((3, 1)), np.array([[1.0, 0.0]] * 3))


class TestLogLikelihood:
    def test_matches_extended_precision(self, rng):
        pts = rng.normal(10.0, 3.0, size=(20, 3))
        model = clustering.em_fit(pts, 2, seed=1)
        expected = oracles.mp_log_likelihood(
            model.scaler.transform(pts), model.weights, model.means, model.variances,
            log_det=model.scaler.log_det)
        assert clustering.log_likelihood(pts, model) == pytest.approx(expected, rel=1e-10)
        assert model.final_log_likelihood == pytest.approx(expected, rel=1e-7)

    def test_jacobian_makes_single_gaussian_scale_covariant(self, rng):
        pts = rng.normal(size=(50, 2))
        a = clustering.em_fit(pts, 1)
        b = clustering.em_fit(pts * 10.0, 1)
        shift = 50 * 2 * np.log(10.0)
        assert clustering.log_likelihood(pts * 10, b) == pytest.approx(
            clustering.log_likelihood(pts, a) - shift, rel=1e-10)


class TestEmFit:
    def test_k1_is_sample_moments(self, rng):
        pts = rng.normal(size=(40, 3)) * [1, 2, 3]
        model = clustering.em_fit(pts, 1)
        assert model.weights[0] == 1.0
        np.testing.assert_allclose(model.scaler.inverse(model.means)[0], pts.mean(axis=0),
                                   atol=1e-12)
        np.testing.assert_allclose(model.variances[0], 1.0, atol=1e-12)

    def test_two_separated_blobs(self, rng):
        pts, labels = blobs(rng, [[0.0, 0.0], [10.0, 10.0]], 50)
        model = clustering.em_fit(pts, 2, seed=4)
        assign = clustering.assign_hard(pts, model)
        from climregion.synth import adjusted_rand_index
        assert adjusted_rand_index(assign.labels, labels) == 1.0
        np.testing.assert_allclose(np.sort(model.weights), [0.5, 0.5])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(30, 150), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_monotone_history(self, n, k, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(n, 7)) + 3 * rng.integers(0, 3, size=(n, 1))
        try:
            model = clustering.em_fit(pts, k, seed=seed, n_init=1)
        except DegenerateComponent:
            return
        h = np.array(model.history)
        assert np.all(np.diff(h) >= -1e-9)
        assert abs(model.weights.sum() - 1.0) <= 1e-9

    def test_deterministic(self, rng):
        pts, _ = blobs(rng, [[0, 0, 0], [4, 4, 4], [8, 0, 8]], 20, sd=1.0)
        a = clustering.em_fit(pts, 3, seed=9)
        b = clustering.em_fit(pts, 3, seed=9)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_model_round_trip(self, rng):
        pts, _ = blobs(rng, [[0, 0], [5, 5]], 10)
        model = clustering.em_fit(pts, 2)
        back = clustering.model_from_dict(json.loads(json.dumps(model.to_dict())))
        np.testing.assert_array_equal(clustering.e_step(pts, back), clustering.e_step(pts, model))

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            clustering.em_fit(np.ones((2, 3)), 3)

    def test_duplicates_do_not_crash(self):
        pts = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0]]), 10, axis=0)
        model = clustering.em_fit(pts, 2)
        assert np.all(model.variances >= 1e-6)
        assert np.isfinite(model.final_log_likelihood)


class TestSelectK:
    def test_single_gaussian_prefers_one(self, rng):
        pts = rng.normal(size=(200, 2))
        assert clustering.select_k_cv(pts, k_max=5, seed=0) == 1

    def test_three_blobs(self, rng):
        pts, _ = blobs(rng, [[0, 0], [6, 0], [0, 6]], 40, sd=0.5)
        assert clustering.select_k_cv(pts, k_max=6, seed=0) == 3

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            clustering.select_k_cv(np.zeros((5, 2)), folds=10)


class TestKMeans:
    def test_matches_exhaustive_optimum(self, rng):
        hits = 0
        for _ in range(10):
            pts = rng.normal(size=(7, 2))
            model = clustering.kmeans_fit(pts, 2, seed=0)
            z = model.scaler.transform(pts)
            best = oracles.kmeans_optimal_inertia(z, 2)
            hits += abs(model.inertia - best) <= 1e-9 * best
        assert hits >= 9

    def test_lloyd_inertia_non_increasing(self, rng):
        z = rng.normal(size=(60, 3))
        init = clustering._kmeans_pp(z, 4, np.random.default_rng(1))
        _, _, inertia, history = clustering._lloyd(z, init)
        assert np.all(np.diff(history) <= 1e-12)
        assert inertia == pytest.approx(history[-1])

    def test_k_equals_n(self, rng):
        pts = rng.normal(size=(5, 2))
        model = clustering.kmeans_fit(pts, 5)
        assert model.inertia == pytest.approx(0.0, abs=1e-20)
        assert sorted(clustering.kmeans_assign(pts, model).labels) == [0, 1, 2, 3, 4]

    def test_empty_cluster_reseeded(self):
        z = np.array([[0.0], [0.1], [10.0]])
        centroids = np.array([[0.0], [100.0]])
        _, labels, _, _ = clustering._lloyd(z, centroids)
        assert set(labels.tolist()) == {0, 1}

    def test_ties_go_to_lowest_index(self):
        model = clustering.KMeansModel(np.array([[-1.0], [1.0]]), Scaler.identity(1), 0.0)
        assert clustering.kmeans_assign(np.array([[0.0]]), model).labels[0] == 0


class TestRegionAssignment:
    def test_compact(self):
        a = RegionAssignment([3, 0, 3, 1], 5).compact()
        assert a.region_count == 3
        assert a.labels.tolist() == [2, 0, 2, 1]

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            RegionAssignment([0, 2], 2)
