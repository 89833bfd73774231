import numpy as np
import pytest

from fedarena.aggregation import (
    AggregationRule,
    ClientUpdate,
    coord_median,
    fedavg,
    inclusion_stats,
    trimmed_mean,
)
from fedarena.errors import LayoutError
from fedarena.model import LayoutEntry, ParamVector


def scalar_layout(dim):
    return (LayoutEntry(0, "weight", (1, dim)),)


def make_updates(rows, weights=None, adversaries=()):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    m = rows.shape[0]
    layout = scalar_layout(rows.shape[1])
    if weights is None:
        weights = np.full(m, 1.0 / m)
    return [
        ClientUpdate(i, ParamVector(rows[i], layout), float(weights[i]), i in adversaries)
        for i in range(m)
    ]


class TestFedavg:
    def test_fixed_point(self):
        g = ParamVector(np.array([1.0, -2.0]), scalar_layout(2))
        ups = make_updates([[1.0, -2.0], [1.0, -2.0]])
        np.testing.assert_array_equal(fedavg(g, ups).values, g.values)

    def test_worked_two_client_example(self):
        g = ParamVector(np.array([0.0]), scalar_layout(1))
        ups = make_updates([[0.2], [1.8]])
        np.testing.assert_allclose(fedavg(g, ups).values, [1.0])

    def test_single_client_identity(self):
        g = ParamVector(np.array([5.0]), scalar_layout(1))
        ups = make_updates([[2.5]], weights=[1.0])
        np.testing.assert_allclose(fedavg(g, ups).values, [2.5])

    def test_weight_sum_checked(self):
        g = ParamVector(np.array([0.0]), scalar_layout(1))
        ups = make_updates([[1.0], [2.0]], weights=[0.5, 0.4])
        with pytest.raises(ValueError):
            fedavg(g, ups)

    def test_layout_mismatch(self):
        g = ParamVector(np.zeros(2), scalar_layout(2))
        bad = ClientUpdate(0, ParamVector(np.zeros(3), scalar_layout(3)), 1.0)
        with pytest.raises(LayoutError):
            fedavg(g, [bad])


class TestTrimmedMean:
    def test_beta_zero_is_plain_mean(self):
        import math

        rng = np.random.default_rng(0)
        rows = rng.normal(size=(7, 11))
        out = trimmed_mean(make_updates(rows), 0.0)
        expected = np.array([math.fsum(col) / len(col) for col in rows.T])
        np.testing.assert_array_equal(out.values, expected)

    def test_sort_and_slice_example(self):
        rows = np.array([[1.0], [2.0], [3.0], [4.0], [10.0]])
        out = trimmed_mean(make_updates(rows), 0.2)
        np.testing.assert_allclose(out.values, [3.0])

    def test_identical_updates(self):
        rows = np.tile([2.0, -1.0, 0.5], (6, 1))
        out = trimmed_mean(make_updates(rows), 0.3)
        np.testing.assert_allclose(out.values, [2.0, -1.0, 0.5])

    def test_overtrim_raises(self):
        # any beta in [0, 0.5) leaves a survivor; 0.5 trims both of two
        with pytest.raises(ValueError):
            trimmed_mean(make_updates([[1.0], [2.0]]), 0.5)


class TestCoordMedian:
    def test_odd_count(self):
        out = coord_median(make_updates([[5.0], [1.0], [9.0]]))
        np.testing.assert_allclose(out.values, [5.0])

    def test_even_count_averages_middles(self):
        out = coord_median(make_updates([[1.0], [2.0], [3.0], [100.0]]))
        np.testing.assert_allclose(out.values, [2.5])

    def test_outlier_independence(self):
        base = np.arange(9, dtype=float).reshape(9, 1)
        for outlier in (1e3, 1e9):
            rows = base.copy()
            rows[0, 0] = outlier
            out = coord_median(make_updates(rows))
            np.testing.assert_allclose(out.values, [5.0])

    def test_output_within_input_range(self):
        rng = np.random.default_rng(1)
        rows = rng.normal(size=(6, 20))
        out = coord_median(make_updates(rows))
        assert np.all(out.values >= rows.min(axis=0))
        assert np.all(out.values <= rows.max(axis=0))


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force_sort_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 10))
        dim = int(rng.integers(1, 21))
        rows = rng.normal(size=(m, dim))
        ups = make_updates(rows)

        beta = float(rng.uniform(0, 0.5))
        k = int(np.floor(beta * m))
        if m - 2 * k >= 1:
            import math

            expected = np.empty(dim)
            for c in range(dim):
                vals = sorted(rows[:, c])
                kept = vals[k : m - k]
                expected[c] = math.fsum(kept) / len(kept)
            np.testing.assert_array_equal(trimmed_mean(ups, beta).values, expected)

        med = np.empty(dim)
        for c in range(dim):
            vals = sorted(rows[:, c])
            if m % 2 == 1:
                med[c] = vals[m // 2]
            else:
                med[c] = (vals[m // 2 - 1] + vals[m // 2]) / 2.0
        np.testing.assert_array_equal(coord_median(ups).values, med)


class TestPermutationInvariance:
    def test_all_rules(self):
        rng = np.random.default_rng(5)
        rows = rng.normal(size=(7, 9))
        w = rng.uniform(0.1, 1, size=7)
        w /= w.sum()
        g = ParamVector(rng.normal(size=9), scalar_layout(9))
        ups = make_updates(rows, weights=w)
        perm = rng.permutation(7)
        shuffled = [ups[i] for i in perm]
        np.testing.assert_allclose(fedavg(g, ups).values, fedavg(g, shuffled).values, atol=1e-12)
        np.testing.assert_array_equal(
            trimmed_mean(ups, 0.2).values, trimmed_mean(shuffled, 0.2).values
        )
        np.testing.assert_array_equal(
            coord_median(ups).values, coord_median(shuffled).values
        )


class TestMedianBreakdown:
    def test_bounded_by_inputs_under_adversarial_rows(self):
        rng = np.random.default_rng(6)
        m = 9
        benign = rng.normal(size=(m - 3, 15))
        hostile = rng.normal(size=(3, 15)) * 1e9
        rows = np.vstack([benign, hostile])
        out = coord_median(make_updates(rows))
        assert np.all(out.values >= benign.min(axis=0) - 1e-12)
        assert np.all(out.values <= benign.max(axis=0) + 1e-12)


class TestInclusionStats:
    def g(self, dim):
        return ParamVector(np.zeros(dim), scalar_layout(dim))

    def test_identical_updates_full_inclusion(self):
        rows = np.tile([1.0, 2.0], (5, 1))
        ups = make_updates(rows, adversaries={0})
        stats = inclusion_stats(self.g(2), ups, AggregationRule("trimmed_mean", beta=0.2))
        assert stats.adversary_inclusion == 1.0
        assert stats.benign_inclusion == 1.0

    def test_always_max_adversary_excluded(self):
        rng = np.random.default_rng(2)
        rows = rng.normal(size=(5, 10))
        rows[0] = rows.max(axis=0) + 1.0  # strict max everywhere
        ups = make_updates(rows, adversaries={0})
        stats = inclusion_stats(self.g(10), ups, AggregationRule("trimmed_mean", beta=0.2))
        assert stats.adversary_inclusion == 0.0

    def test_median_counts_middle_contributors(self):
        rows = np.array([[1.0], [2.0], [3.0]])
        ups = make_updates(rows, adversaries={1})
        stats = inclusion_stats(self.g(1), ups, AggregationRule("median"))
        assert stats.adversary_inclusion == 1.0
        assert stats.benign_inclusion == 0.0

    def test_requires_adversary_tags(self):
        ups = make_updates(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            inclusion_stats(self.g(2), ups, AggregationRule("median"))

    def test_rejects_fedavg_rule(self):
        ups = make_updates(np.zeros((3, 2)), adversaries={0})
        with pytest.raises(ValueError):
            inclusion_stats(self.g(2), ups, AggregationRule("fedavg"))
