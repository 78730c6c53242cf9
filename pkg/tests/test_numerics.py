import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icusynth.errors import InputError, NumericError, UndefinedMetricError
from icusynth.numerics import (
    ConfidenceInterval,
    RngStream,
    auroc,
    finite_diff_grad,
    mean_ci95,
    median_heuristic_bandwidth,
    mmd_biased,
    rbf_kernel,
)


def mmd_brute_force(X, Y, bw):
    """Naive four-loop double sum, the independent oracle for mmd_biased."""
    B = len(X)
    kxx = math.fsum(rbf_kernel(xi, xj, bw) for xi in X for xj in X)
    kyy = math.fsum(rbf_kernel(yi, yj, bw) for yi in Y for yj in Y)
    kxy = math.fsum(rbf_kernel(xi, yj, bw) for xi in X for yj in Y)
    return kxx / B**2 + kyy / B**2 - 2.0 * kxy / B**2


def auroc_pair_counting(scores, labels):
    """All (positive, negative) pairs; ties get half credit."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRbfKernel:
    def test_zero_distance_is_one(self):
        assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.5) == 1.0
        assert rbf_kernel([0.0], [0.0], 3.0) == 1.0

    def test_closed_form_point(self):
        sigma = 1.7
        assert rbf_kernel([0.0], [sigma * math.sqrt(2)], sigma) == pytest.approx(
            math.exp(-1), rel=1e-12
        )

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            rbf_kernel([1.0], [1.0, 2.0], 1.0)

    def test_bad_bandwidth(self):
        with pytest.raises(InputError):
            rbf_kernel([1.0], [1.0], 0.0)


class TestMmdBiased:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(8, 3))
        assert mmd_biased(X, X.copy(), 1.3) <= 1e-12

    def test_single_point_closed_form(self):
        d, sigma = 2.0, 1.5
        expected = 2.0 * (1.0 - math.exp(-(d**2) / (2 * sigma**2)))
        assert mmd_biased([[0.0]], [[d]], sigma) == pytest.approx(expected, rel=1e-12)

    def test_matches_brute_force_exactly(self):
        # 100 random instances, B <= 32: bit-exact agreement with the
        # four-loop oracle (both totals are correctly rounded via fsum).
        rng = np.random.default_rng(42)
        for _ in range(100):
            B = int(rng.integers(1, 33))
            d = int(rng.integers(1, 6))
            X = rng.normal(size=(B, d)) * 2.0
            Y = rng.normal(size=(B, d)) * 2.0 + rng.normal()
            bw = float(rng.uniform(0.3, 3.0))
            assert mmd_biased(X, Y, bw) == mmd_brute_force(X, Y, bw)

    def test_rejects_unequal_batches(self):
        with pytest.raises(InputError):
            mmd_biased([[0.0], [1.0]], [[0.0]], 1.0)

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            mmd_biased([], [], 1.0)

    def test_rejects_dim_mismatch(self):
        with pytest.raises(InputError):
            mmd_biased([[0.0]], [[0.0, 1.0]], 1.0)

    @given(
        st.lists(
            st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2),
            min_size=1,
            max_size=8,
        ),
        st.floats(0.2, 4.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_self_mmd_zero_property(self, X, bw):
        assert mmd_biased(X, [row[:] for row in X], bw) <= 1e-12

    def test_symmetry_and_permutation_invariance(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(6, 2))
        Y = rng.normal(size=(6, 2)) + 0.5
        bw = 1.1
        assert mmd_biased(X, Y, bw) == pytest.approx(mmd_biased(Y, X, bw), rel=1e-12)
        perm = rng.permutation(6)
        assert mmd_biased(X[perm], Y, bw) == pytest.approx(mmd_biased(X, Y, bw), rel=1e-12)


class TestMedianBandwidth:
    def test_two_points(self):
        assert median_heuristic_bandwidth([[0.0]], [[3.0]]) == pytest.approx(3.0)

    def test_degenerate_falls_back(self):
        assert median_heuristic_bandwidth([[1.0]], [[1.0]]) == 1.0


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert auroc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_worked_example(self):
        assert auroc([0.9, 0.2, 0.8, 0.3], [1, 0, 0, 1]) == 0.75

    def test_single_class_raises(self):
        with pytest.raises(UndefinedMetricError):
            auroc([0.1, 0.9], [1, 1])

    def test_non_binary_labels_rejected(self):
        with pytest.raises(InputError):
            auroc([0.1, 0.9], [1, 2])

    def test_matches_pair_counting_on_200_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 51))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # quantized scores force plenty of ties
            scores = np.round(rng.normal(size=n), 1)
            assert auroc(scores, labels) == auroc_pair_counting(scores, labels)

    def test_label_flip_complement(self):
        rng = np.random.default_rng(11)
        scores = rng.normal(size=30)
        labels = rng.integers(0, 2, size=30)
        labels[0], labels[1] = 0, 1
        assert auroc(scores, labels) == pytest.approx(
            1.0 - auroc(scores, 1 - labels), abs=1e-12
        )


class TestMeanCi95:
    def test_single_run_degenerate(self):
        ci = mean_ci95([0.5])
        assert (ci.mean, ci.lo, ci.hi, ci.n_runs) == (0.5, 0.5, 0.5, 1)

    def test_zero_variance(self):
        ci = mean_ci95([1.0] * 5)
        assert (ci.mean, ci.lo, ci.hi) == (1.0, 1.0, 1.0)

    def test_two_point_t_interval(self):
        # n=2: t_{0.975,1} = 12.706, sd = 0.7071 -> half-width 6.353
        ci = mean_ci95([0.0, 1.0])
        assert ci.mean == 0.5
        assert (ci.hi - ci.lo) / 2 == pytest.approx(6.353, abs=1e-3)

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            mean_ci95([])

    def test_interval_ordering_enforced(self):
        with pytest.raises(NumericError):
            ConfidenceInterval(mean=0.0, lo=0.5, hi=1.0, n_runs=3)


class TestFiniteDiffGrad:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda x: 0.5 * float(np.sum(x**2)), [3.0, 4.0])
        assert np.allclose(grad, [3.0, 4.0], atol=1e-6)

    def test_constant(self):
        grad = finite_diff_grad(lambda x: 7.0, [1.0, -2.0, 0.5])
        assert np.allclose(grad, 0.0)

    def test_sin_sum(self):
        grad = finite_diff_grad(lambda x: float(np.sum(np.sin(x))), [0.0])
        assert grad[0] == pytest.approx(1.0, abs=1e-8)

    def test_nonfinite_reported(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda x: float(np.log(x[0])), [0.0])


class TestRngStream:
    def test_same_seed_identical_sequence(self):
        a = RngStream(123).normal(16)
        b = RngStream(123).normal(16)
        assert np.array_equal(a, b)

    def test_children_reproducible_and_distinct(self):
        r1 = RngStream(5).child("alpha").normal(8)
        r2 = RngStream(5).child("alpha").normal(8)
        r3 = RngStream(5).child("beta").normal(8)
        assert np.array_equal(r1, r2)
        assert not np.array_equal(r1, r3)

    def test_nested_children_independent_of_draw_order(self):
        root = RngStream(9)
        c1 = root.child("x")
        _ = root.normal(100)  # draws on the parent must not affect children
        c2 = RngStream(9).child("x")
        assert np.array_equal(c1.normal(4), c2.normal(4))

    def test_known_generator_is_philox(self):
        assert isinstance(RngStream(0)._gen.bit_generator, np.random.Philox)

    def test_rejects_bad_seed(self):
        with pytest.raises(InputError):
            RngStream(-1)
