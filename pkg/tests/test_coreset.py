import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcoreset import (
    Center,
    Coreset,
    CoresetError,
    KernelSpec,
    PointKernel,
    WeightedSet,
    build_coreset,
    cost_z,
    dz_sampling,
    importance_sampling,
    load_coreset,
    merge_reduce_stream,
    save_coreset,
    sensitivities,
    uniform_coreset,
)
from kcoreset.coreset import SeedCenters, inverse_cdf_draws, iterated_log, sample_count

LIN = KernelSpec("linear")


def line(*xs):
    return PointKernel(np.array(xs, dtype=float)[:, None], LIN)


def blobs(n, seed=0, d=2):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=6, size=(5, d))
    lab = rng.integers(0, 5, n)
    return centers[lab] + rng.normal(size=(n, d))


class TestDzSampling:
    def test_identical_points(self, hot_path):
        o = line(*[4.0] * 6)
        X = WeightedSet.full(6)
        seeds = dz_sampling(o, X, 2, 2, seed=0)
        # one distinct element: every point is a seed of the degenerate answer
        assert len(seeds.indices) == 1
        total, _ = cost_z(o, X, [Center.point(i) for i in seeds.indices], 2)
        assert total == 0 and np.all(seeds.distance == 0)

    def test_forced_second_seed(self, hot_path):
        o = line(0, 0, 0, 100)
        X = WeightedSet.full(4)
        # enumerate: with the first seed on a 0, D^2 mass is (0, 0, 0, 10^4)
        mass = np.array([0, 0, 0, 100.0]) ** 2
        assert (mass / mass.sum()).tolist() == [0, 0, 0, 1]
        firsts = set()
        for s in range(200):
            seeds = dz_sampling(o, X, 2, 2, seed=s)
            firsts.add(int(seeds.indices[0]))
            if seeds.indices[0] != 3:
                assert seeds.indices[1] == 3
            else:
                assert seeds.indices[1] in (0, 1, 2)
        assert firsts == {0, 1, 2, 3}

    def test_k1_distances(self, hot_path):
        X = np.random.default_rng(0).normal(size=(30, 2))
        o = PointKernel(X, KernelSpec("rbf", sigma=1.0))
        seeds = dz_sampling(o, WeightedSet.full(30), 1, 2, seed=5)
        c = int(seeds.indices[0])
        from kcoreset import kernel_distance
        expected = [kernel_distance(o, i, c) for i in range(30)]
        np.testing.assert_allclose(seeds.distance, expected, rtol=1e-12, atol=1e-12)
        assert np.all(seeds.assignment == 0)

    def test_first_seed_follows_weight(self):
        o = line(0, 1, 2)
        X = WeightedSet(np.arange(3), [1.0, 1e-9, 1e-9])
        firsts = [int(dz_sampling(o, X, 1, 2, seed=s).indices[0]) for s in range(50)]
        assert firsts.count(0) == 50
        uni = [int(dz_sampling(o, X, 1, 2, seed=s, first="uniform").indices[0]) for s in range(300)]
        assert set(uni) == {0, 1, 2}

    def test_fewer_distinct_than_k(self):
        o = line(1, 1, 2, 2, 2)
        seeds = dz_sampling(o, WeightedSet.full(5), 4, 2, seed=0)
        assert sorted(o.points[seeds.indices, 0].tolist()) == [1.0, 2.0]
        assert np.all(seeds.distance == 0)

    def test_zero_cost_fallback_uses_unchosen_points(self):
        o = line(1, 1, 2, 2)
        for s in range(20):
            seeds = dz_sampling(o, WeightedSet.full(4), 2, 2, seed=s)
            assert len(set(o.points[seeds.indices, 0].tolist())) == 2

    def test_bad_k(self):
        with pytest.raises(CoresetError):
            dz_sampling(line(0, 1), WeightedSet.full(2), 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 6))
    def test_never_reselects(self, seed, k):
        rng = np.random.default_rng(seed)
        pts = rng.integers(0, 4, size=(12, 1)).astype(float)
        o = PointKernel(pts, LIN)
        seeds = dz_sampling(o, WeightedSet.full(12), k, 2, seed=seed)
        keys = o.keys[seeds.indices]
        assert len(set(keys.tolist())) == len(keys)
        assert len(keys) == min(k, o.distinct_count())


class TestSensitivities:
    def test_identical_points_uniform(self):
        o = line(*[3.0] * 5)
        X = WeightedSet.full(5)
        prof = sensitivities(o, X, dz_sampling(o, X, 1, 2, seed=0), 2)
        np.testing.assert_allclose(prof.sigma, 0.2, rtol=1e-15)
        np.testing.assert_allclose(prof.p, 0.2, rtol=1e-15)

    def test_two_points_by_hand(self):
        o = line(0, 2)
        X = WeightedSet.full(2)
        seeds = SeedCenters(np.array([0]), np.array([0, 0]), np.array([0.0, 2.0]))
        prof = sensitivities(o, X, seeds, 2)
        # independent re-evaluation of w d^z / cost + w / w(cluster)
        w, d = np.array([1.0, 1.0]), np.array([0.0, 2.0])
        sigma = w * d**2 / (w @ d**2) + w / w.sum()
        assert sigma.tolist() == [0.5, 1.5]
        np.testing.assert_allclose(prof.sigma, sigma, rtol=1e-15)
        np.testing.assert_allclose(prof.p, [0.25, 0.75], rtol=1e-15)

    def test_weight_doubling_keeps_p(self):
        X = blobs(80)
        o = PointKernel(X, KernelSpec("rbf", sigma=2.0))
        w = np.random.default_rng(1).random(80) + 0.5
        a = WeightedSet(np.arange(80), w)
        b = WeightedSet(np.arange(80), 2 * w)
        seeds = dz_sampling(o, a, 3, 2, seed=4)
        np.testing.assert_allclose(sensitivities(o, a, seeds).p, sensitivities(o, b, seeds).p, rtol=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([1.0, 2.0, 3.0]))
    def test_normalized(self, seed, z):
        X = np.random.default_rng(seed).normal(size=(50, 2))
        o = PointKernel(X, KernelSpec("rbf", sigma=1.0))
        S = WeightedSet.full(50)
        prof = sensitivities(o, S, dz_sampling(o, S, 4, z, seed=seed), z)
        assert abs(prof.p.sum() - 1) <= 1e-12
        assert np.all(prof.sigma >= 0)


class TestImportanceSampling:
    def test_single_point(self):
        o = line(7.0)
        cs = importance_sampling(o, WeightedSet(np.array([0]), np.array([2.5])), 3, 2, 40, seed=0)
        assert cs.indices.tolist() == [0]
        assert cs.weights.tolist() == [2.5]

    def test_aggregation_and_size(self, hot_path):
        X = blobs(400)
        o = PointKernel(X, KernelSpec("rbf", sigma=3.0))
        cs = importance_sampling(o, WeightedSet.full(400), 5, 2, 150, seed=1)
        assert len(cs) <= 150
        assert np.unique(cs.indices).size == len(cs)
        assert np.all(cs.weights > 0)

    def test_aggregated_weight_is_sum_of_draws(self):
        X = blobs(60)
        o = PointKernel(X, KernelSpec("rbf", sigma=3.0))
        S = WeightedSet.full(60)
        rng = np.random.default_rng(9)
        seeds = dz_sampling(o, S, 3, 2, rng)
        prof = sensitivities(o, S, seeds, 2)
        draws = inverse_cdf_draws(rng, prof.p, 500)
        cs = importance_sampling(o, S, 3, 2, 500, seed=9)
        expected = {}
        for d in draws.tolist():
            expected[d] = expected.get(d, 0.0) + 1.0 / (prof.p[d] * 500)
        assert sorted(expected) == cs.indices.tolist()
        np.testing.assert_allclose(cs.weights, [expected[i] for i in cs.indices.tolist()], rtol=1e-12)

    def test_uniform_profile(self):
        o = line(*[1.0] * 10)
        S = WeightedSet.full(10)
        prof = sensitivities(o, S, dz_sampling(o, S, 1, 2, seed=0))
        assert np.all(prof.p == 0.1)

    def test_unbiased_monte_carlo(self):
        X = blobs(100, seed=3)
        o = PointKernel(X, KernelSpec("rbf", sigma=2.0))
        S = WeightedSet.full(100)
        C = [Center.point(i) for i in (3, 50, 77)]
        exact, _ = cost_z(o, S, C, 2)
        ratios = [cost_z(o, importance_sampling(o, S, 3, 2, 30, seed=s), C, 2)[0] / exact for s in range(1000)]
        assert abs(np.mean(ratios) - 1) <= 0.02

    def test_deterministic(self):
        X = blobs(300, seed=7)
        o = PointKernel(X, KernelSpec("rbf", sigma=3.0))
        a = importance_sampling(o, WeightedSet.full(300), 4, 2, 80, seed=123)
        b = importance_sampling(o, WeightedSet.full(300), 4, 2, 80, seed=123)
        assert a.indices.tobytes() == b.indices.tobytes()
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_bad_N(self):
        with pytest.raises(CoresetError):
            importance_sampling(line(0, 1), WeightedSet.full(2), 1, 2, 0)


class TestBuildCoreset:
    def test_small_input_returned(self):
        X = np.arange(10.0)[:, None]
        o = PointKernel(X, LIN)
        w = np.linspace(1, 2, 10)
        cs = build_coreset(o, WeightedSet(np.arange(10), w), 3, 2, N=100, seed=0)
        assert cs.indices.tolist() == list(range(10))
        assert cs.weights.tolist() == w.tolist()
        assert cs.source_distinct == 10

    def test_iterated_identical_points(self):
        o = line(*[2.0] * 50)
        cs = build_coreset(o, WeightedSet.full(50), 2, 2, epsilon=0.5, mode="iterated", seed=0)
        assert cs.meta["rounds"] <= 2

    def test_iterated_reduces_and_terminates(self):
        X = blobs(3000, seed=2)
        o = PointKernel(X, KernelSpec("rbf", sigma=3.0))
        cs = build_coreset(o, WeightedSet.full(3000), 2, 2, epsilon=0.9, mode="iterated", seed=0, c0=1e-3)
        assert 1 <= cs.meta["rounds"]
        assert len(cs) < 3000
        assert cs.source_distinct == 3000

    def test_single_formula_count(self):
        assert sample_count(0.5, 5, 2, 10**5) == int(np.ceil(
            0.05 * 0.5**-4 * 16 * 2 * 25 * np.log2(6) ** 2 * np.log2(1e5)))

    def test_iterated_log(self):
        assert iterated_log(2**16, 1) == 16
        assert iterated_log(2**16, 2) == 4
        assert iterated_log(2**16, 3) == 2
        assert iterated_log(2**16, 9) == 1

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
    def test_bad_epsilon(self, eps):
        with pytest.raises(CoresetError):
            build_coreset(line(0, 1), WeightedSet.full(2), 1, 2, epsilon=eps)


class TestUniform:
    def test_expected_total_weight(self):
        S = WeightedSet.full(40)
        totals = [uniform_coreset(S, 40, seed=s).total_weight for s in range(300)]
        # every draw carries weight n/N: the total is exactly n
        np.testing.assert_allclose(totals, 40.0, rtol=1e-12)

    def test_single_point(self):
        cs = uniform_coreset(WeightedSet(np.array([4]), np.array([3.0])), 10, seed=0)
        assert cs.indices.tolist() == [4] and cs.weights.tolist() == [3.0]

    def test_unbiased_monte_carlo(self):
        X = blobs(100, seed=5)
        o = PointKernel(X, KernelSpec("rbf", sigma=2.0))
        S = WeightedSet(np.arange(100), np.random.default_rng(0).random(100) + 0.5)
        C = [Center.point(i) for i in (1, 2, 60)]
        exact, _ = cost_z(o, S, C, 2)
        ratios = [cost_z(o, uniform_coreset(S, 30, seed=s), C, 2)[0] / exact for s in range(1000)]
        assert abs(np.mean(ratios) - 1) <= 0.02


class TestStream:
    def factory(self, pts):
        return PointKernel(pts, KernelSpec("rbf", sigma=3.0))

    def test_short_stream_equals_batch(self):
        X = blobs(300)
        cs = merge_reduce_stream(self.factory, iter(X), 3, 2, N_per_bucket=50, bucket_size=400, seed=11)
        ref = build_coreset(self.factory(X), WeightedSet.full(300), 3, 2, N=50, seed=11)
        assert cs.indices.tolist() == ref.indices.tolist()
        np.testing.assert_array_equal(cs.weights, ref.weights)

    def test_two_buckets_structure(self):
        X = blobs(400, seed=1)
        cs = merge_reduce_stream(self.factory, iter(X), 3, 2, N_per_bucket=40, bucket_size=200, seed=5)
        kids = np.random.SeedSequence(5).spawn(3)
        b1 = build_coreset(self.factory(X[:200]), WeightedSet.full(200), 3, 2, N=40, seed=kids[0])
        b2 = build_coreset(self.factory(X[200:]), WeightedSet.full(200), 3, 2, N=40, seed=kids[1])
        ids = np.concatenate([b1.indices, b2.indices + 200])
        w = np.concatenate([b1.weights, b2.weights])
        merged = importance_sampling(self.factory(X[ids]), WeightedSet(np.arange(ids.size), w), 3, 2, 40,
                                     seed=kids[2])
        order = np.argsort(ids[merged.indices])
        assert cs.indices.tolist() == ids[merged.indices][order].tolist()
        np.testing.assert_allclose(cs.weights, merged.weights[order], rtol=1e-15)
        assert cs.meta["levels"] == 2

    def test_peak_retained_logarithmic(self):
        X = blobs(6400, seed=2)
        N, B = 50, 200
        cs = merge_reduce_stream(self.factory, iter(X), 3, 2, N_per_bucket=N, bucket_size=B, seed=0)
        levels = int(np.ceil(np.log2(6400 / B))) + 1
        assert cs.meta["peak_retained"] <= B + 2 * N * levels
        assert len(cs) <= N
        assert cs.total_weight == pytest.approx(6400, rel=0.25)

    def test_weighted_items(self):
        X = blobs(50)
        cs = merge_reduce_stream(self.factory, ((x, 2.0) for x in X), 3, 2, N_per_bucket=100, seed=0)
        assert cs.total_weight == pytest.approx(100.0)

    def test_errors(self):
        with pytest.raises(CoresetError):
            merge_reduce_stream(self.factory, iter([]), 3, 2, 10, 20)
        with pytest.raises(CoresetError):
            merge_reduce_stream(self.factory, iter(blobs(5)), 3, 2, 10, 5)


def test_serialization_roundtrip(tmp_path):
    cs = Coreset(np.array([2, 5, 9]), np.array([1.5, 0.1 + 0.2, 7.0]), source_distinct=12, meta={"mode": "single"})
    json_path = save_coreset(cs, tmp_path / "c.csv", {"k": 3, "kernel": {"kind": "rbf", "sigma": 1.0}})
    back = load_coreset(tmp_path / "c.csv")
    assert back.indices.tolist() == [2, 5, 9]
    assert back.weights.tobytes() == cs.weights.tobytes()
    assert back.source_distinct == 12
    assert back.meta["k"] == 3 and json_path.exists()
