"""Binning, one-hot encoding, and the two focal losses with their gradients."""

import math

import numpy as np
import pytest

from ealss.losses import (
    DepthBinning,
    FocalParams,
    bin_index,
    eadf_loss,
    fgd_loss,
    one_hot,
    softmax,
    total_loss,
    validate_distribution,
)

from oracles import fd_grad, grad_rel_err

# Exact float64 value of the worked focal example:
# alpha * (1 - p_t)^gamma * (-log p_t) at p_t = 1/4, alpha = 1/4, gamma = 2.
WORKED_FOCAL = 0.25 * 0.75**2 * math.log(4.0)


def make_instance(rng, n_views=1, n_bins=8, size=8, zero_frac=0.3):
    """Random logits plus a sparse ground-truth map with some zero pixels."""
    binning = DepthBinning(1.0, 1.0 + n_bins, n_bins)
    logits = rng.normal(0.0, 1.0, (n_views, n_bins, size, size))
    depth = rng.uniform(binning.d_min, binning.d_max, (n_views, size, size))
    gt = np.where(rng.random((n_views, size, size)) < 1.0 - zero_frac, depth, 0.0)
    return binning, logits, gt


class TestBinning:
    def test_worked_example(self):
        binning = DepthBinning(1.0, 41.0, 40)
        assert bin_index(2.5, binning) == 1

    def test_lower_boundary(self):
        binning = DepthBinning(1.0, 41.0, 40)
        assert bin_index(1.0, binning) == 0

    def test_upper_clamp(self):
        binning = DepthBinning(1.0, 41.0, 40)
        assert bin_index(41.0, binning) == 39
        assert bin_index(400.0, binning) == 39

    def test_below_range_clamps_to_zero(self):
        binning = DepthBinning(5.0, 45.0, 40)
        assert bin_index(0.5, binning) == 0

    def test_rejects_nonpositive_depth(self):
        binning = DepthBinning(1.0, 41.0, 40)
        with pytest.raises(ValueError, match="positive"):
            bin_index(0.0, binning)

    def test_matches_scan_oracle(self):
        """The closed-form index equals a linear scan over bin edges."""
        rng = np.random.default_rng(0)
        binning = DepthBinning(1.0, 60.0, 40)
        edges = binning.d_min + binning.width * np.arange(binning.n_bins + 1)
        for depth in rng.uniform(0.01, 80.0, 500):
            scan = 0
            for b in range(binning.n_bins):
                if depth >= edges[b + 1] and b + 1 < binning.n_bins:
                    scan = b + 1
            assert bin_index(depth, binning) == scan

    def test_one_hot_basis(self):
        np.testing.assert_array_equal(one_hot(0, 3), [1.0, 0.0, 0.0])

    def test_one_hot_sums_to_one(self):
        rng = np.random.default_rng(1)
        idx = rng.integers(0, 12, size=(4, 5))
        vectors = one_hot(idx, 12)
        np.testing.assert_array_equal(vectors.sum(axis=-1), np.ones((4, 5)))

    def test_one_hot_of_binned_depth(self):
        binning = DepthBinning(1.0, 9.0, 8)
        rng = np.random.default_rng(2)
        for depth in rng.uniform(1.0, 8.99, 100):
            vec = one_hot(bin_index(depth, binning), 8)
            b = int(np.argmax(vec))
            assert binning.d_min + b * binning.width <= depth
            assert depth < binning.d_min + (b + 1) * binning.width

    def test_one_hot_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            one_hot(5, 5)

    def test_invalid_binning(self):
        with pytest.raises(ValueError, match="d_min < d_max"):
            DepthBinning(10.0, 1.0, 4)
        with pytest.raises(ValueError, match="n_bins"):
            DepthBinning(1.0, 10.0, 1)


class TestFgdLoss:
    def test_worked_value(self):
        """One active pixel with p_t = 1/4 under the default focal params."""
        pred = np.full((1, 4, 1, 1), 0.25)
        gt = np.full((1, 1, 1), 2.5)
        binning = DepthBinning(1.0, 5.0, 4)
        report = fgd_loss(pred, gt, binning, FocalParams(0.25, 2.0))
        assert report.value == pytest.approx(WORKED_FOCAL, abs=1e-12)
        assert report.n_active == 1

    def test_perfect_prediction_is_zero(self):
        binning = DepthBinning(1.0, 5.0, 4)
        gt = np.array([[[1.5, 2.5], [3.5, 4.5]]])
        idx = np.array([[[0, 1], [2, 3]]])
        pred = np.moveaxis(
            np.eye(4)[idx].astype(float), -1, 1
        )
        report = fgd_loss(pred, gt, binning, FocalParams(0.25, 2.0))
        assert report.value == 0.0

    def test_all_zero_gt(self):
        pred = np.full((1, 4, 3, 3), 0.25)
        gt = np.zeros((1, 3, 3))
        binning = DepthBinning(1.0, 5.0, 4)
        report = fgd_loss(pred, gt, binning, FocalParams(), want_grad=True)
        assert report.value == 0.0
        assert report.n_active == 0
        assert not report.grad.any()

    def test_zero_pixels_masked(self):
        """Perturbing logits at zero-gt pixels changes nothing."""
        rng = np.random.default_rng(3)
        binning, logits, gt = make_instance(rng)
        base = fgd_loss(softmax(logits, axis=1), gt, binning, FocalParams())
        bumped = logits.copy()
        bumped[:, :, gt[0] == 0] += rng.normal(0, 3, bumped[:, :, gt[0] == 0].shape)
        # Perturbed logits change that pixel's softmax only; masked pixels
        # contribute no terms either way.
        after = fgd_loss(softmax(bumped, axis=1), gt, binning, FocalParams())
        assert after.value == base.value

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        fp = FocalParams(0.25, 2.0)
        for _ in range(3):
            binning, logits, gt = make_instance(rng)
            report = fgd_loss(softmax(logits, axis=1), gt, binning, fp,
                              want_grad=True)
            numeric = fd_grad(
                lambda z: fgd_loss(softmax(z, axis=1), gt, binning, fp).value,
                logits,
            )
            assert grad_rel_err(report.grad, numeric) <= 1e-5

    def test_gradient_zero_at_masked_pixels(self):
        rng = np.random.default_rng(5)
        binning, logits, gt = make_instance(rng)
        report = fgd_loss(softmax(logits, axis=1), gt, binning, FocalParams(),
                          want_grad=True)
        assert not report.grad[:, :, gt[0] == 0].any()

    def test_monotone_in_confidence(self):
        """Raising p_t while rescaling the rest strictly lowers the loss."""
        binning = DepthBinning(1.0, 5.0, 4)
        gt = np.full((1, 1, 1), 1.5)  # bin 0
        fp = FocalParams(0.25, 2.0)
        rng = np.random.default_rng(6)
        for _ in range(50):
            p = rng.dirichlet(np.ones(4))
            pt2 = p[0] + (1.0 - p[0]) * rng.uniform(0.05, 0.5)
            scaled = p * (1.0 - pt2) / (1.0 - p[0])
            scaled[0] = pt2
            lo = fgd_loss(p.reshape(1, 4, 1, 1), gt, binning, fp)
            hi = fgd_loss(scaled.reshape(1, 4, 1, 1), gt, binning, fp)
            assert hi.value < lo.value

    def test_gamma0_alpha1_is_masked_cross_entropy(self):
        rng = np.random.default_rng(7)
        binning, logits, gt = make_instance(rng)
        pred = softmax(logits, axis=1)
        report = fgd_loss(pred, gt, binning, FocalParams(1.0, 0.0))
        views, rows, cols = np.nonzero(gt)
        target = bin_index(gt[gt > 0], binning)
        ce = -np.log(pred[views, target, rows, cols]).sum()
        assert report.value == pytest.approx(ce, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        binning = DepthBinning(1.0, 5.0, 4)
        with pytest.raises(ValueError, match="does not match"):
            fgd_loss(np.full((1, 4, 2, 2), 0.25), np.zeros((1, 3, 3)), binning,
                     FocalParams())

    def test_unnormalized_pred_rejected(self):
        binning = DepthBinning(1.0, 5.0, 4)
        with pytest.raises(ValueError, match="sum to 1"):
            fgd_loss(np.full((1, 4, 2, 2), 0.3), np.ones((1, 2, 2)), binning,
                     FocalParams())

    def test_bin_count_mismatch_rejected(self):
        binning = DepthBinning(1.0, 5.0, 8)
        with pytest.raises(ValueError, match="bins"):
            fgd_loss(np.full((1, 4, 2, 2), 0.25), np.ones((1, 2, 2)), binning,
                     FocalParams())


class TestEadfLoss:
    def test_worked_value(self):
        """Two pixels, weights (0, 1), second pixel p_t = 1/2."""
        pred = np.zeros((1, 2, 1, 2))
        pred[0, :, 0, 0] = [0.3, 0.7]
        pred[0, :, 0, 1] = [0.5, 0.5]
        gt = np.array([[[1.2, 1.2]]])
        weights = np.array([[[0.0, 1.0]]])
        binning = DepthBinning(1.0, 3.0, 2)
        report = eadf_loss(pred, gt, weights, binning, FocalParams(0.25, 2.0))
        assert report.value == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-12)
        assert report.n_active == 1

    def test_zero_weights_zero_loss(self):
        rng = np.random.default_rng(8)
        binning, logits, gt = make_instance(rng, zero_frac=0.0)
        report = eadf_loss(softmax(logits, axis=1), gt, np.zeros_like(gt),
                           binning, FocalParams(), want_grad=True)
        assert report.value == 0.0
        assert not report.grad.any()

    def test_equals_fgd_on_dense_gt_with_unit_weights(self):
        rng = np.random.default_rng(9)
        binning, logits, gt = make_instance(rng, zero_frac=0.0)
        pred = softmax(logits, axis=1)
        fp = FocalParams(0.25, 2.0)
        a = eadf_loss(pred, gt, np.ones_like(gt), binning, fp, want_grad=True)
        b = fgd_loss(pred, gt, binning, fp, want_grad=True)
        assert a.value == pytest.approx(b.value, rel=1e-12)
        np.testing.assert_array_equal(a.grad, b.grad)
        assert a.n_active == b.n_active

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        fp = FocalParams(0.25, 2.0)
        for _ in range(3):
            binning, logits, gt = make_instance(rng, zero_frac=0.1)
            weights = rng.random(gt.shape)
            weights[rng.random(gt.shape) < 0.25] = 0.0
            report = eadf_loss(softmax(logits, axis=1), gt, weights, binning,
                               fp, want_grad=True)
            numeric = fd_grad(
                lambda z: eadf_loss(softmax(z, axis=1), gt, weights, binning,
                                    fp).value,
                logits,
            )
            assert grad_rel_err(report.grad, numeric) <= 1e-5

    def test_zero_weight_pixels_masked(self):
        rng = np.random.default_rng(11)
        binning, logits, gt = make_instance(rng, zero_frac=0.0)
        weights = (rng.random(gt.shape) < 0.5).astype(float)
        pred = softmax(logits, axis=1)
        base = eadf_loss(pred, gt, weights, binning, FocalParams())
        bumped = logits.copy()
        bumped[:, :, weights[0] == 0] += 5.0
        after = eadf_loss(softmax(bumped, axis=1), gt, weights, binning,
                          FocalParams())
        assert after.value == base.value

    def test_weight_range_enforced(self):
        binning = DepthBinning(1.0, 5.0, 4)
        pred = np.full((1, 4, 1, 1), 0.25)
        gt = np.ones((1, 1, 1))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            eadf_loss(pred, gt, np.full((1, 1, 1), 1.5), binning, FocalParams())

    def test_weight_shape_enforced(self):
        binning = DepthBinning(1.0, 5.0, 4)
        pred = np.full((1, 4, 2, 2), 0.25)
        gt = np.ones((1, 2, 2))
        with pytest.raises(ValueError, match="weight shape"):
            eadf_loss(pred, gt, np.ones((1, 2, 3)), binning, FocalParams())

    def test_weights_scale_terms_linearly(self):
        rng = np.random.default_rng(12)
        binning, logits, gt = make_instance(rng, zero_frac=0.0)
        pred = softmax(logits, axis=1)
        fp = FocalParams(0.25, 2.0)
        half = eadf_loss(pred, gt, np.full(gt.shape, 0.5), binning, fp)
        unit = eadf_loss(pred, gt, np.ones(gt.shape), binning, fp)
        assert half.value == pytest.approx(0.5 * unit.value, rel=1e-12)


class TestTotalLoss:
    def test_sum(self):
        assert total_loss(0.5, 0.3, 0.0, 0.0) == pytest.approx(0.8, abs=0.0)

    def test_zeros(self):
        assert total_loss(0.0, 0.0, 0.0, 0.0) == 0.0

    def test_commutative(self):
        assert total_loss(0.1, 0.2, 0.3, 0.4) == total_loss(0.4, 0.3, 0.2, 0.1)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="cls"):
            total_loss(0.0, 0.0, float("nan"), 0.0)
        with pytest.raises(ValueError, match="box"):
            total_loss(0.0, 0.0, 0.0, float("inf"))


class TestDistributionValidation:
    def test_accepts_one_hot(self):
        """Exact one-hot predictions are valid; the log floor handles the
        zero entries inside the losses."""
        pred = np.zeros((1, 4, 1, 1))
        pred[0, 0, 0, 0] = 1.0
        validate_distribution(pred)
        binning = DepthBinning(1.0, 5.0, 4)
        report = fgd_loss(pred, np.full((1, 1, 1), 1.5), binning, FocalParams())
        assert report.value == 0.0

    def test_rejects_negative_entries(self):
        pred = np.full((1, 2, 1, 1), 0.5)
        pred[0, 0] = -0.1
        pred[0, 1] = 1.1
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            validate_distribution(pred)

    def test_rejects_bad_sums(self):
        with pytest.raises(ValueError, match="sum to 1"):
            validate_distribution(np.full((1, 4, 2, 2), 0.3))

    def test_softmax_output_is_valid(self):
        rng = np.random.default_rng(13)
        pred = softmax(rng.normal(0, 5, (2, 8, 4, 4)), axis=1)
        validate_distribution(pred)
