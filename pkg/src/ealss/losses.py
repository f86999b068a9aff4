"""Depth-bin discretization and the two focal supervision losses.

Both losses score a per-pixel probability distribution over depth bins
against a binned ground-truth depth map with the focal term

    -alpha * (1 - p_t)^gamma * log(p_t)

where p_t is the predicted probability of the true bin. The fine-grained
loss sums over pixels whose sparse ground truth is non-zero; the edge-aware
loss sums over all pixels of the dense ground truth, weighted per pixel by
the edge map (zero-weight and zero-depth pixels contribute nothing).

Losses are sums, not means; `LossReport.n_active` carries the number of
contributing pixels so callers can normalize. log() is floored at 1e-12.

Gradients are analytic with respect to the pre-softmax logits that produced
the prediction, composed through the softmax Jacobian:

    dL/dz_c = g * p_t * ([c == t] - p_c),   g = dL/dp_t.

Sums run in fixed (view, row, col) pixel order via numpy pairwise
summation, so results are reproducible bit-for-bit.
"""

import math
from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-12
SUM_TOL = 1e-6


@dataclass(frozen=True)
class DepthBinning:
    """Uniform discretization of [d_min, d_max) into n_bins classes."""

    d_min: float
    d_max: float
    n_bins: int

    def __post_init__(self):
        object.__setattr__(self, "d_min", float(self.d_min))
        object.__setattr__(self, "d_max", float(self.d_max))
        object.__setattr__(self, "n_bins", int(self.n_bins))
        if not self.d_min < self.d_max:
            raise ValueError(
                f"binning requires d_min < d_max, got [{self.d_min}, {self.d_max})"
            )
        if self.n_bins < 2:
            raise ValueError(f"binning requires n_bins >= 2, got {self.n_bins}")

    @property
    def width(self) -> float:
        return (self.d_max - self.d_min) / self.n_bins

    def center(self, index):
        """Depth at the middle of a bin; used by the splat and scene maker."""
        return self.d_min + (np.asarray(index, dtype=np.float64) + 0.5) * self.width


@dataclass(frozen=True)
class FocalParams:
    """Focal-loss weight alpha in (0, 1] and focusing exponent gamma >= 0."""

    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "gamma", float(self.gamma))
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass
class LossReport:
    """Loss value, contributing pixel count, optional logit gradient."""

    value: float
    n_active: int
    grad: np.ndarray | None = None


def bin_index(depth, binning: DepthBinning):
    """Class index of a positive depth: clamp(floor((d - d_min)/width)).

    Depths below d_min clamp to bin 0 and depths at or above d_max to the
    last bin. Zero or negative depths are a caller error: mask them first.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("bin_index requires positive depths; mask zeros first")
    idx = np.floor((depth - binning.d_min) / binning.width)
    idx = np.clip(idx, 0, binning.n_bins - 1).astype(np.int64)
    return idx if idx.ndim else int(idx)


def one_hot(index, n_bins: int) -> np.ndarray:
    """Standard basis vector(s) for bin indices; last axis has n_bins."""
    index = np.asarray(index, dtype=np.int64)
    if np.any(index < 0) or np.any(index >= n_bins):
        raise ValueError(f"bin index out of range [0, {n_bins})")
    out = np.zeros(index.shape + (n_bins,), dtype=np.float64)
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out


def softmax(logits, axis: int) -> np.ndarray:
    """Numerically stable softmax in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def validate_distribution(pred) -> np.ndarray:
    """Check the (views, n_bins, H, W) prediction is per-pixel normalized."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 4:
        raise ValueError(
            f"prediction must be (views, n_bins, H, W), got shape {pred.shape}"
        )
    if np.any(pred < 0) or np.any(pred > 1):
        raise ValueError("prediction has entries outside [0, 1]")
    sums = pred.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > SUM_TOL:
        raise ValueError("prediction pixels do not sum to 1 within 1e-6")
    return pred


def _check_loss_shapes(pred, gt, binning):
    if gt.ndim != 3:
        raise ValueError(f"ground truth must be (views, H, W), got shape {gt.shape}")
    if pred.shape[0] != gt.shape[0] or pred.shape[2:] != gt.shape[1:]:
        raise ValueError(
            f"prediction shape {pred.shape} does not match ground truth {gt.shape}"
        )
    if pred.shape[1] != binning.n_bins:
        raise ValueError(
            f"prediction has {pred.shape[1]} bins but binning expects {binning.n_bins}"
        )


def _focal_terms(pt, fp: FocalParams, want_grad: bool):
    """Per-pixel focal terms and, optionally, d(term)/d(p_t).

    Differentiates exactly what is computed, including the log floor: below
    the floor the log is constant, so its derivative term vanishes there.
    """
    pt_safe = np.maximum(pt, LOG_FLOOR)
    log_pt = np.log(pt_safe)
    one_minus = 1.0 - pt
    pow_g = one_minus**fp.gamma
    terms = -fp.alpha * pow_g * log_pt
    if not want_grad:
        return terms, None
    if fp.gamma == 0.0:
        focus = np.zeros_like(pt)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pow_gm1 = np.where(one_minus > 0.0, one_minus ** (fp.gamma - 1.0), 0.0)
        focus = fp.gamma * pow_gm1 * log_pt
    inv_pt = np.where(pt > LOG_FLOOR, 1.0 / pt_safe, 0.0)
    dpt = fp.alpha * focus - fp.alpha * pow_g * inv_pt
    return terms, dpt


def _focal_loss(pred, gt, weights, binning, fp, want_grad) -> LossReport:
    """Shared core: masked, optionally weighted focal loss over depth bins."""
    pred = validate_distribution(pred)
    gt = np.asarray(gt, dtype=np.float64)
    _check_loss_shapes(pred, gt, binning)

    active = gt > 0
    if weights is not None:
        active &= weights > 0

    views, rows, cols = np.nonzero(active)
    n_active = int(views.size)
    if n_active == 0:
        grad = np.zeros_like(pred) if want_grad else None
        return LossReport(value=0.0, n_active=0, grad=grad)

    target = bin_index(gt[active], binning)
    pt = pred[views, target, rows, cols]
    terms, dpt = _focal_terms(pt, fp, want_grad)
    if weights is not None:
        w = weights[active]
        terms = terms * w
        if want_grad:
            dpt = dpt * w
    value = float(terms.sum())

    grad = None
    if want_grad:
        # dL/dz = g * p_t * (one_hot(t) - p) per active pixel; inactive
        # pixels keep an exactly zero gradient.
        grad = np.zeros_like(pred)
        coeff = dpt * pt
        pixel_grad = -coeff[:, None] * pred[views, :, rows, cols]
        pixel_grad[np.arange(n_active), target] += coeff
        grad[views, :, rows, cols] = pixel_grad
    return LossReport(value=value, n_active=n_active, grad=grad)


def fgd_loss(pred, gt_sparse, binning: DepthBinning, fp: FocalParams,
             want_grad: bool = False) -> LossReport:
    """Fine-grained depth loss: focal sum over non-zero sparse-depth pixels."""
    return _focal_loss(pred, gt_sparse, None, binning, fp, want_grad)


def eadf_loss(pred, gt_dense, weights, binning: DepthBinning, fp: FocalParams,
              want_grad: bool = False) -> LossReport:
    """Edge-aware loss: focal sum over the dense map, weighted by the edge map.

    Pixels whose weight or dense depth is zero contribute nothing and get a
    zero gradient; with unit weights and a fully dense ground truth this is
    exactly `fgd_loss`.
    """
    weights = np.asarray(weights, dtype=np.float64)
    gt_dense = np.asarray(gt_dense, dtype=np.float64)
    if weights.shape != gt_dense.shape:
        raise ValueError(
            f"weight shape {weights.shape} does not match ground truth {gt_dense.shape}"
        )
    if np.any(weights < 0) or np.any(weights > 1):
        raise ValueError("weights must lie in [0, 1]")
    return _focal_loss(pred, gt_dense, weights, binning, fp, want_grad)


def total_loss(fgd: float, eadf: float, cls: float, box: float) -> float:
    """Unweighted sum of the two depth losses and the external head losses.

    Summed exactly (math.fsum), so permuting the terms changes nothing.
    """
    parts = {"fgd": fgd, "eadf": eadf, "cls": cls, "box": box}
    for name, part in parts.items():
        if not np.isfinite(part):
            raise ValueError(f"total_loss: {name} term is not finite ({part})")
    return math.fsum((fgd, eadf, cls, box))
