"""Probabilistic patterns: renormalization, binarization, gradients, baseline."""

import numpy as np
import pytest

from megre.patterns import (
    PatternWeights,
    apply_calibration,
    build_prob_pattern,
    equalize_mask_counts,
    manual_vd_pattern,
    sample_binary,
    schedule_budget,
    straight_through_grad,
    zero_weights,
)
from megre.rng import make_rng


class TestProbPattern:
    def test_zero_weights_gamma_half(self):
        p = build_prob_pattern(np.zeros((1, 6, 6)), slope=0.25, gamma=0.5)
        assert np.allclose(p, 0.5)

    def test_zero_weights_renorm_down(self):
        p = build_prob_pattern(np.zeros((1, 6, 6)), slope=0.25, gamma=0.25)
        assert np.allclose(p, 0.25)  # 0.5 scaled by 0.25/0.5

    def test_zero_weights_renorm_up_complement_rule(self):
        p = build_prob_pattern(np.zeros((1, 6, 6)), slope=0.25, gamma=0.75)
        assert np.allclose(p, 0.75)  # 1 - 0.5 * (0.25/0.5)

    def test_mean_equals_gamma_random_weights(self, rng):
        for gamma in (0.125, 0.25, 0.6, 0.9):
            w = rng.normal(0, 2.0, size=(3, 10, 12))
            p = build_prob_pattern(w, slope=0.25, gamma=gamma)
            assert p.min() >= 0.0 and p.max() <= 1.0
            for j in range(3):
                assert abs(p[j].mean() - gamma) < 1e-9

    def test_gamma_validation(self):
        with pytest.raises(ValueError):
            build_prob_pattern(np.zeros((1, 4, 4)), 0.25, 0.0)
        with pytest.raises(ValueError):
            build_prob_pattern(np.zeros((1, 4, 4)), 0.25, 1.5)


class TestSampleBinary:
    def test_certain_probabilities(self):
        rng = make_rng(0)
        assert np.all(sample_binary(np.ones((2, 5, 5)), rng) == 1.0)
        assert np.all(sample_binary(np.zeros((2, 5, 5)), rng) == 0.0)

    def test_calibration_block_forced_on(self):
        u = sample_binary(np.zeros((1, 10, 8)), make_rng(0), calib_size=4)
        assert np.all(u[0, 3:7, 2:6] == 1.0)
        assert u.sum() == 16

    def test_calibration_too_large(self):
        with pytest.raises(ValueError):
            sample_binary(np.zeros((1, 6, 6)), make_rng(0), calib_size=7)

    def test_deterministic_given_seed(self):
        p = np.full((2, 16, 16), 0.3)
        a = sample_binary(p, make_rng(42))
        b = sample_binary(p, make_rng(42))
        assert np.array_equal(a, b)

    def test_echoes_draw_independently(self):
        p = np.full((4, 24, 24), 0.5)
        u = sample_binary(p, make_rng(1))
        assert not np.array_equal(u[0], u[1])

    def test_empirical_rate_within_three_standard_errors(self):
        p = np.full((1, 206, 80), 0.125)
        n = p.size
        total = 0.0
        n_seeds = 1000
        for seed in range(n_seeds):
            total += sample_binary(p, make_rng(seed)).mean()
        rate = total / n_seeds
        se = np.sqrt(0.125 * 0.875 / (n * n_seeds))
        assert abs(rate - 0.125) < 3 * se


class TestStraightThroughGrad:
    def test_analytic_value_at_zero_weights(self):
        # at w = 0 with gamma = 0.5 the renorm scale is 1 and the per-entry
        # derivative is a * sigma'(0) = 0.0625, up to the O(1/M) coupling the
        # renormalization introduces by pinning the mean (here M = 64*64)
        w = zero_weights(1, (64, 64), gamma=0.5, slope=0.25)
        g = np.zeros((1, 64, 64))
        g[0, 10, 20] = 1.0
        got = straight_through_grad(g, w)
        m = 64 * 64
        assert got[0, 10, 20] == pytest.approx(0.25 * 0.5 * 0.5, rel=1e-3)
        assert got[0, 10, 20] == pytest.approx(0.0625 * (1 - 1 / m), rel=1e-12)
        # the mean of P is pinned at gamma, so a uniform upstream gradient
        # must map to (numerically) zero weight gradient
        uniform = straight_through_grad(np.ones((1, 64, 64)), w)
        assert np.abs(uniform).max() < 1e-15

    def test_zero_upstream_gradient(self, rng):
        w = PatternWeights(rng.normal(size=(2, 4, 4)), 2, gamma=0.3)
        assert np.all(straight_through_grad(np.zeros((2, 4, 4)), w) == 0.0)

    def test_matches_finite_difference_of_prob_pattern(self, rng):
        for trial, (gamma, lead) in enumerate([(0.25, 2), (0.7, 1), (0.35, 3)]):
            w_arr = rng.normal(0, 0.5, size=(lead, 6, 7))
            pw = PatternWeights(w_arr, lead, slope=0.25, gamma=gamma)
            g = rng.normal(size=(lead, 6, 7))
            got = straight_through_grad(g, pw)
            eps = 1e-6
            fd = np.zeros_like(w_arr)
            for idx in np.ndindex(w_arr.shape):
                wp = w_arr.copy()
                wp[idx] += eps
                wm = w_arr.copy()
                wm[idx] -= eps
                pp = build_prob_pattern(wp, 0.25, gamma)
                pm = build_prob_pattern(wm, 0.25, gamma)
                fd[idx] = np.sum(g * (pp - pm)) / (2 * eps)
            denom = np.maximum(np.abs(fd), 1e-8)
            assert (np.abs(got - fd) / denom).max() < 1e-6, trial

    def test_shared_weights_accumulate_over_echoes(self, rng):
        w = PatternWeights(rng.normal(size=(1, 5, 5)), n_echoes=3, gamma=0.4)
        g = rng.normal(size=(3, 5, 5))
        got = straight_through_grad(g, w)
        assert got.shape == (1, 5, 5)
        per_echo = sum(
            straight_through_grad(
                np.concatenate([g[j : j + 1]] + [np.zeros((1, 5, 5))] * 0),
                PatternWeights(w.w, 1, gamma=0.4),
            )
            for j in range(3)
        )
        assert np.allclose(got, per_echo)

    def test_shape_mismatch(self, rng):
        w = PatternWeights(rng.normal(size=(2, 4, 4)), 2)
        with pytest.raises(ValueError):
            straight_through_grad(np.zeros((2, 5, 4)), w)


class TestSharedMode:
    def test_spo1_masks_identical_across_echoes(self):
        pw = zero_weights(4, (12, 12), shared=True, gamma=0.3)
        p = build_prob_pattern(pw.w, pw.slope, pw.gamma)
        assert p.shape == (1, 12, 12)
        u = sample_binary(p, make_rng(3))
        full = np.broadcast_to(u, (4, 12, 12))
        for j in range(1, 4):
            assert np.array_equal(full[j], full[0])

    def test_expanded_slabs_identical(self):
        pw = zero_weights(3, (6, 6), shared=True)
        full = pw.expanded()
        assert full.shape == (3, 6, 6)
        assert np.array_equal(full[0], full[2])


class TestManualVd:
    def test_gamma_one_all_ones(self):
        u = manual_vd_pattern((16, 16), 1.0, 5, make_rng(0))
        assert np.all(u == 1.0)

    def test_expected_ratio_over_seeds(self):
        gamma = 0.25
        rates = [
            manual_vd_pattern((32, 32), gamma, 5, make_rng(seed)).mean() for seed in range(100)
        ]
        mean_rate = np.mean(rates)
        se = np.std(rates) / np.sqrt(len(rates))
        assert abs(mean_rate - gamma) < 3 * max(se, 1e-4)

    def test_echo_invariant(self):
        u = manual_vd_pattern((16, 16), 0.3, 4, make_rng(1), n_echoes=5)
        for j in range(1, 5):
            assert np.array_equal(u[j], u[0])

    def test_center_fully_sampled(self):
        u = manual_vd_pattern((32, 32), 0.2, 5, make_rng(2))
        assert u[0, 16, 16] == 1.0
        assert u[0, 15:18, 15:18].min() == 1.0

    def test_infeasible_gamma(self):
        with pytest.raises(ValueError):
            manual_vd_pattern((16, 16), 0.01, 2, make_rng(0))


class TestEqualize:
    def test_exact_counts_and_calibration_kept(self, rng):
        p = build_prob_pattern(rng.normal(size=(3, 20, 18)), 0.25, 0.25)
        u = sample_binary(p, make_rng(5), calib_size=4)
        target = schedule_budget((20, 18), 0.25, 7)
        eq = equalize_mask_counts(u, target, make_rng(6), prob=p, calib_size=4)
        for j in range(3):
            assert int(eq[j].sum()) == target
        assert np.all(eq[:, 8:12, 7:11] == 1.0)

    def test_paper_protocol_budget(self):
        # 206 x 80 at R = 8 rounds 2060 up to 188 per segment * 11 segments
        assert schedule_budget((206, 80), 0.125, 11) == 2068
        assert 2068 == 188 * 11

    def test_bad_targets(self, rng):
        u = np.ones((1, 8, 8))
        with pytest.raises(ValueError):
            equalize_mask_counts(u, 3, make_rng(0), calib_size=2)
        with pytest.raises(ValueError):
            equalize_mask_counts(u, 100, make_rng(0))
