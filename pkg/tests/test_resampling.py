import numpy as np
import pytest

from evforecast.embedding import WindowDataset, WindowPair, embed, joint_matrix
from evforecast.relevance import ControlPoints, build_pchip, partition
from evforecast.resampling import (
    ResampleStrategy,
    compute_bins,
    interpolate_pair,
    knn_extremes,
    replicate_oversample,
    resample,
    smoter,
    smoter_bin,
)
from evforecast.series import TimeSeries

IDENTITY = build_pchip(ControlPoints([0.0, 1.0], [0.0, 1.0]))


def make_partition(rng, n=60, window=3, horizon=2, threshold=0.6):
    ds = embed(TimeSeries(rng.uniform(0, 1, n)), window, horizon)
    return partition(ds, IDENTITY, threshold)


def dataset_from_rows(rows, horizon=1):
    rows = np.asarray(rows, dtype=float)
    return WindowDataset(rows[:, :-horizon], rows[:, -horizon:], np.arange(len(rows)))


class TestKnn:
    def test_three_points_on_a_line(self):
        ds = dataset_from_rows([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
        table = knn_extremes(ds, 1)
        assert table[:, 0].tolist() == [1, 0, 1]

    def test_k_truncated(self):
        ds = dataset_from_rows([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
        assert knn_extremes(ds, 5).shape == (3, 2)

    def test_matches_bruteforce_all_pairs_sort(self):
        rng = np.random.default_rng(0)
        rows = rng.normal(size=(20, 5))
        ds = dataset_from_rows(rows, horizon=2)
        table = knn_extremes(ds, 3)
        z = joint_matrix(ds)
        for i in range(20):
            dists = [(float(np.linalg.norm(z[i] - z[j])), j) for j in range(20) if j != i]
            expected = [j for _, j in sorted(dists)][:3]
            assert table[i].tolist() == expected

    def test_needs_two_extremes(self):
        ds = dataset_from_rows([[0.0, 0.0]])
        with pytest.raises(ValueError, match="at least 2"):
            knn_extremes(ds, 1)


class TestInterpolatePair:
    SEED = WindowPair(np.array([0.2, 0.4]), np.array([0.6]), 3)
    NBR = WindowPair(np.array([0.6, 0.8]), np.array([1.0]), 7)

    def test_midpoint(self):
        new = interpolate_pair(self.SEED, self.NBR, 0.5)
        assert new.x.tolist() == pytest.approx([0.4, 0.6])
        assert new.y.tolist() == pytest.approx([0.8])
        assert new.synthetic
        assert (new.seed_origin, new.neighbor_origin) == (3, 7)

    def test_endpoints(self):
        assert np.array_equal(interpolate_pair(self.SEED, self.NBR, 0.0).x, self.SEED.x)
        assert np.array_equal(interpolate_pair(self.SEED, self.NBR, 1.0).y, self.NBR.y)

    def test_dimension_mismatch(self):
        bad = WindowPair(np.array([0.1]), np.array([0.2]), 0)
        with pytest.raises(ValueError, match="dimensions"):
            interpolate_pair(self.SEED, bad, 0.5)

    def test_segment_ratio(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            d, p = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            seed = WindowPair(rng.normal(size=d), rng.normal(size=p), 0)
            nbr = WindowPair(rng.normal(size=d), rng.normal(size=p), 1)
            r = float(rng.uniform())
            new = interpolate_pair(seed, nbr, r)
            joint = np.concatenate
            full = np.linalg.norm(joint([nbr.x, nbr.y]) - joint([seed.x, seed.y]))
            got = np.linalg.norm(joint([new.x, new.y]) - joint([seed.x, seed.y]))
            assert got / full == pytest.approx(r, abs=1e-10)


class TestSmoter:
    def test_counts(self):
        rng = np.random.default_rng(2)
        part = make_partition(rng, n=80, threshold=0.8)
        n_ext, n_com = len(part.extremes), len(part.commons)
        assert n_ext >= 2
        out = smoter(part, ResampleStrategy("smoter", 3, 3.0, 1.0, 0))
        assert len(out) == n_com + n_ext + int(np.ceil(2.0 * n_ext))
        assert int(out.synthetic.sum()) == int(np.ceil(2.0 * n_ext))

    def test_over_ratio_one_adds_nothing(self):
        rng = np.random.default_rng(3)
        part = make_partition(rng)
        out = smoter(part, ResampleStrategy("smoter", 3, 1.0, 1.0, 0))
        assert int(out.synthetic.sum()) == 0
        assert len(out) == len(part.extremes) + len(part.commons)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(4)
        part = make_partition(rng)
        strat = ResampleStrategy("smoter", 4, 2.5, 0.8, 99)
        a = smoter(part, strat)
        b = smoter(part, strat)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.Y, b.Y)
        assert np.array_equal(a.seed_origins, b.seed_origins)

    def test_undersampling_count(self):
        rng = np.random.default_rng(5)
        part = make_partition(rng, n=100, threshold=0.5)
        strat = ResampleStrategy("smoter", 3, 1.0, 0.4, 1)
        out = smoter(part, strat)
        expected_commons = int(np.ceil(0.4 * len(part.commons)))
        assert len(out) == expected_commons + len(part.extremes)

    def test_needs_two_extremes(self):
        ds = embed(TimeSeries(np.linspace(0, 0.2, 12)), 2, 2)
        part = partition(ds, IDENTITY, 0.9)
        with pytest.raises(ValueError):
            smoter(part, ResampleStrategy("smoter"))

    def test_segment_containment_and_provenance(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            part = make_partition(rng, n=int(rng.integers(40, 90)))
            if len(part.extremes) < 2:
                continue
            out = smoter(part, ResampleStrategy("smoter", 3, 2.0, 1.0, int(rng.integers(1e6))))
            ext_by_origin = {int(o): i for i, o in enumerate(part.extremes.origins)}
            for i in np.flatnonzero(out.synthetic):
                s, nb = int(out.seed_origins[i]), int(out.neighbor_origins[i])
                assert s in ext_by_origin and nb in ext_by_origin
                lo = np.minimum(part.extremes.X[ext_by_origin[s]], part.extremes.X[ext_by_origin[nb]])
                hi = np.maximum(part.extremes.X[ext_by_origin[s]], part.extremes.X[ext_by_origin[nb]])
                assert np.all(out.X[i] >= lo - 1e-12) and np.all(out.X[i] <= hi + 1e-12)
                lo_y = np.minimum(part.extremes.Y[ext_by_origin[s]], part.extremes.Y[ext_by_origin[nb]])
                hi_y = np.maximum(part.extremes.Y[ext_by_origin[s]], part.extremes.Y[ext_by_origin[nb]])
                assert np.all(out.Y[i] >= lo_y - 1e-12) and np.all(out.Y[i] <= hi_y + 1e-12)


class TestBins:
    def _partition_with_origins(self, extreme_origins, n=16):
        values = np.full(n + 4, 0.1)
        for o in extreme_origins:
            values[o + 1] = 0.9  # first target step of window at origin o
        ds = embed(TimeSeries(values), 1, 1)
        part = partition(ds, IDENTITY, 0.5)
        assert sorted(int(o) for o in part.extremes.origins) == sorted(extreme_origins)
        return part

    def test_runs_split_correctly(self):
        part = self._partition_with_origins([3, 4, 5, 9, 12, 13])
        assert [b.members for b in compute_bins(part)] == [(3, 4, 5), (9,), (12, 13)]

    def test_all_extreme_single_bin(self):
        ds = embed(TimeSeries(np.full(10, 0.9)), 1, 1)
        part = partition(ds, IDENTITY, 0.5)
        bins = compute_bins(part)
        assert len(bins) == 1
        assert len(bins[0].members) == len(ds)

    def test_alternating_gives_singletons(self):
        part = self._partition_with_origins([2, 4, 6, 8])
        assert all(len(b.members) == 1 for b in compute_bins(part))

    def test_no_extremes_no_bins(self):
        ds = embed(TimeSeries(np.full(10, 0.1)), 1, 1)
        part = partition(ds, IDENTITY, 0.5)
        assert compute_bins(part) == []


class TestSmoterBin:
    def test_bin_confinement_audit(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(30):
            part = make_partition(rng, n=int(rng.integers(40, 90)), threshold=0.55)
            if len(part.extremes) < 2:
                continue
            out = smoter_bin(part, ResampleStrategy("smoter-bin", 3, 3.0, 1.0, int(rng.integers(1e6))))
            bin_of = {}
            for b in compute_bins(part):
                for o in b.members:
                    bin_of[o] = b.members
            for i in np.flatnonzero(out.synthetic):
                s, nb = int(out.seed_origins[i]), int(out.neighbor_origins[i])
                assert nb in bin_of[s]
                checked += 1
        assert checked > 100

    def test_singleton_bin_replicates(self):
        values = np.full(20, 0.1)
        values[6] = 0.9  # a single isolated extreme window
        ds = embed(TimeSeries(values), 1, 1)
        part = partition(ds, IDENTITY, 0.5)
        assert len(part.extremes) == 1
        out = smoter_bin(part, ResampleStrategy("smoter-bin", 3, 4.0, 1.0, 0))
        synth = np.flatnonzero(out.synthetic)
        assert len(synth) == 3
        for i in synth:
            assert np.array_equal(out.X[i], part.extremes.X[0])
            assert out.seed_origins[i] == out.neighbor_origins[i]

    def test_single_bin_reduces_to_smoter(self):
        rng = np.random.default_rng(8)
        # every window extreme: one spanning bin, so candidates match plain smoter
        ds = embed(TimeSeries(rng.uniform(0.7, 1.0, 40)), 3, 2)
        part = partition(ds, IDENTITY, 0.1)
        assert len(part.commons) == 0
        strat = ResampleStrategy("smoter", 4, 2.0, 1.0, 123)
        strat_bin = ResampleStrategy("smoter-bin", 4, 2.0, 1.0, 123)
        a = smoter(part, strat)
        b = smoter_bin(part, strat_bin)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.Y, b.Y)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        part = make_partition(rng)
        strat = ResampleStrategy("smoter-bin", 5, 2.0, 1.0, 55)
        a, b = smoter_bin(part, strat), smoter_bin(part, strat)
        assert np.array_equal(a.X, b.X)


class TestReplicate:
    def test_copies_and_counts(self):
        rng = np.random.default_rng(10)
        part = make_partition(rng, n=50, threshold=0.7)
        n_ext = len(part.extremes)
        out = replicate_oversample(part, ResampleStrategy("replicate", 1, 2.0, 1.0, 0))
        synth = np.flatnonzero(out.synthetic)
        assert len(synth) == n_ext
        originals = {tuple(row) for row in np.hstack([part.extremes.X, part.extremes.Y])}
        for i in synth:
            assert tuple(np.concatenate([out.X[i], out.Y[i]])) in originals

    def test_ratio_one_no_copies(self):
        rng = np.random.default_rng(11)
        part = make_partition(rng)
        out = replicate_oversample(part, ResampleStrategy("replicate", 1, 1.0, 1.0, 0))
        assert int(out.synthetic.sum()) == 0


class TestCountContract:
    @pytest.mark.parametrize("kind", ["replicate", "smoter", "smoter-bin"])
    def test_exact_counts_randomized(self, kind):
        rng = np.random.default_rng(12)
        for _ in range(40):
            part = make_partition(rng, n=int(rng.integers(40, 120)),
                                  threshold=float(rng.uniform(0.4, 0.8)))
            if len(part.extremes) < 2:
                continue
            over = float(rng.uniform(1.0, 4.0))
            under = float(rng.uniform(0.2, 1.0))
            strat = ResampleStrategy(kind, int(rng.integers(1, 8)), over, under,
                                     int(rng.integers(1e6)))
            out = resample(part, strat)
            expected = (int(np.ceil(under * len(part.commons)))
                        + len(part.extremes)
                        + int(np.ceil((over - 1.0) * len(part.extremes))))
            assert len(out) == expected

    def test_balance_mode_roughly_equalises(self):
        rng = np.random.default_rng(13)
        part = make_partition(rng, n=120, threshold=0.8)
        out = resample(part, ResampleStrategy("smoter", 3, None, 1.0, 0))
        n_synthetic = int(out.synthetic.sum())
        assert n_synthetic + len(part.extremes) >= len(part.commons)
        assert n_synthetic + len(part.extremes) <= len(part.commons) + len(part.extremes)

    def test_none_strategy_returns_original_windows(self):
        rng = np.random.default_rng(14)
        ds = embed(TimeSeries(rng.uniform(0, 1, 50)), 3, 2)
        part = partition(ds, IDENTITY, 0.6)
        out = resample(part, ResampleStrategy("none"))
        assert np.array_equal(out.X, ds.X)
        assert np.array_equal(out.Y, ds.Y)
        assert np.array_equal(out.origins, ds.origins)
