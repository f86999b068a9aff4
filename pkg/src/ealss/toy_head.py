"""A minimal trainable depth-bin classifier for exercising the losses
end to end at desk scale.

The head is a per-pixel affine map plus softmax evaluated on a mean-pooled
low-resolution grid, followed by nearest-neighbor upsampling back to full
resolution (each fine pixel copies its coarse parent's distribution). Its
backward pass is the exact transpose chain: block-sum of the upstream
gradient, softmax Jacobian, affine transpose.

`make_synthetic_scene` builds the matching supervision problem: a
piecewise-constant rectangle depth image per view (nearer rectangle wins
where they overlap), noisy features that redundantly encode the true depth
bin, and a lidar-like point cloud sampling the true surface at a given
sparsity. `train_toy` runs plain gradient descent on the summed losses.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .eadf import EadfConfig, eadf_pipeline
from .geometry import CameraCalib, PointCloud, project_multiview, unproject_pixels
from .losses import (
    DepthBinning,
    FocalParams,
    bin_index,
    eadf_loss,
    fgd_loss,
    one_hot,
    softmax,
    total_loss,
)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class ToyHeadParams:
    """Affine weights (features x bins), bias, and the downscale factor."""

    weight: np.ndarray
    bias: np.ndarray
    downscale: int = 2

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weight must be 2-d and bias 1-d")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"weight columns {self.weight.shape[1]} do not match bias "
                f"size {self.bias.shape[0]}"
            )
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("parameters contain non-finite values")
        self.downscale = int(self.downscale)
        if self.downscale < 1:
            raise ValueError(f"downscale must be >= 1, got {self.downscale}")

    @staticmethod
    def zeros(n_features: int, n_bins: int, downscale: int = 2) -> "ToyHeadParams":
        return ToyHeadParams(
            weight=np.zeros((n_features, n_bins)),
            bias=np.zeros(n_bins),
            downscale=downscale,
        )


@dataclass
class SyntheticScene:
    """Features, point cloud, calibrations, and the true depth surface."""

    features: np.ndarray    # (views, F, H, W)
    cloud: PointCloud
    calibs: list
    true_depth: np.ndarray  # (views, H, W), all inside [d_min, d_max)


def _scene_calibs(n_views: int, height: int, width: int) -> list:
    """One inward-looking camera per view, yawed evenly around ego z.

    The base orientation maps camera forward (+z) onto ego +y, so view 0
    looks along +y and unprojected content lands in the BEV grid plane.
    """
    focal = float(max(height, width))
    K = np.array([
        [focal, 0.0, (width - 1) / 2.0],
        [0.0, focal, (height - 1) / 2.0],
        [0.0, 0.0, 1.0],
    ])
    base = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
    ])
    calibs = []
    for view in range(n_views):
        yaw = 2.0 * math.pi * view / n_views
        c, s = math.cos(yaw), math.sin(yaw)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        T = np.eye(4)
        T[:3, :3] = rz @ base
        calibs.append(CameraCalib(view_id=view, intrinsics=K, ego_from_camera=T))
    return calibs


def _box_blur(stack: np.ndarray, passes: int) -> np.ndarray:
    """Repeated 3x3 box filter over the spatial axes, edge padded."""
    def along(x, axis):
        first = np.take(x, [0], axis=axis)
        last = np.take(x, [x.shape[axis] - 1], axis=axis)
        padded = np.concatenate([first, x, last], axis=axis)
        n = x.shape[axis]
        idx = lambda a: tuple(
            slice(a, a + n) if d == axis else slice(None)
            for d in range(x.ndim)
        )
        return (padded[idx(0)] + padded[idx(1)] + padded[idx(2)]) / 3.0

    for _ in range(passes):
        stack = along(along(stack, 2), 3)
    return stack


def _size_choices(extent: int, align: int) -> np.ndarray:
    """Rectangle sizes: multiples of `align` from about extent/6 up to
    half the extent (always at least one choice)."""
    lo = max(align, -(-max(2, extent // 6) // align) * align)
    hi = max(lo, (extent // 2 // align) * align)
    return np.arange(lo, hi + 1, align)


def make_synthetic_scene(seed: int, n_boxes: int, shape, binning: DepthBinning,
                         sparsity: float = 0.08, noise: float = 0.4,
                         blur: int = 3, align: int = 1) -> SyntheticScene:
    """Deterministic rectangle-world scene driven by one PCG64 generator.

    Rectangle depths sit on bin centers, so binning the true surface is
    exact. Features are two copies of the true-bin one-hot, box blurred
    `blur` times (so features near depth jumps mix the adjacent bins the
    way a convolutional receptive field would), plus Gaussian noise. The
    point cloud samples each view's surface at `sparsity` (1.0 samples
    every pixel).

    `align` snaps rectangle corners and sizes to that pixel multiple;
    aligning to the densification block size makes the block-max labels
    exact at the jumps, which is what the training benchmark uses.
    """
    if n_boxes < 1:
        raise ValueError(f"n_boxes must be >= 1, got {n_boxes}")
    if not (0.0 <= sparsity <= 1.0):
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity}")
    if blur < 0:
        raise ValueError(f"blur must be >= 0, got {blur}")
    if align < 1:
        raise ValueError(f"align must be >= 1, got {align}")
    n_views, height, width = (int(v) for v in shape)
    if n_views > 6:
        raise ValueError("at most 6 views fit without frustum overlap")
    if align > min(height, width) // 2:
        raise ValueError(
            f"align={align} leaves no room for boxes in a {height}x{width} image"
        )
    if n_boxes > binning.n_bins - 2:
        raise ValueError(
            f"n_boxes={n_boxes} needs more distinct near bins than "
            f"n_bins={binning.n_bins} offers"
        )
    rng = np.random.default_rng(seed)
    calibs = _scene_calibs(n_views, height, width)

    background = binning.center(binning.n_bins - 2)
    true_depth = np.full((n_views, height, width), background, dtype=np.float64)
    heights = _size_choices(height, align)
    widths = _size_choices(width, align)
    for view in range(n_views):
        box_bins = rng.choice(binning.n_bins - 2, size=n_boxes, replace=False)
        for b in box_bins:
            bh = int(rng.choice(heights))
            bw = int(rng.choice(widths))
            r0 = int(rng.choice(np.arange(0, height - bh + 1, align)))
            c0 = int(rng.choice(np.arange(0, width - bw + 1, align)))
            region = true_depth[view, r0:r0 + bh, c0:c0 + bw]
            np.minimum(region, binning.center(int(b)), out=region)

    bins = bin_index(true_depth, binning)
    encoded = one_hot(bins, binning.n_bins).transpose(0, 3, 1, 2)
    encoded = _box_blur(encoded, blur)
    features = np.concatenate([encoded, encoded], axis=1)
    features = features + noise * rng.standard_normal(features.shape)

    points = []
    for view in range(n_views):
        mask = rng.random((height, width)) < sparsity
        rows, cols = np.nonzero(mask)
        if rows.size:
            points.append(
                unproject_pixels(calibs[view], rows, cols, true_depth[view][mask])
            )
    cloud = PointCloud(
        points=np.concatenate(points, axis=0) if points else np.zeros((0, 3))
    )
    return SyntheticScene(
        features=features, cloud=cloud, calibs=calibs, true_depth=true_depth
    )


def _pooled_features(params: ToyHeadParams, features: np.ndarray) -> np.ndarray:
    n_views, n_feat, height, width = features.shape
    s = params.downscale
    if n_feat != params.weight.shape[0]:
        raise ValueError(
            f"features carry {n_feat} channels but the head expects "
            f"{params.weight.shape[0]}"
        )
    if height % s or width % s:
        raise ValueError(
            f"downscale {s} must divide the image shape ({height}, {width})"
        )
    return features.reshape(n_views, n_feat, height // s, s, width // s, s).mean(
        axis=(3, 5)
    )


def head_forward(params: ToyHeadParams, features):
    """Low-resolution logits and the upsampled full-resolution distribution."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 4:
        raise ValueError(
            f"features must be (views, F, H, W), got shape {features.shape}"
        )
    s = params.downscale
    feat_lo = _pooled_features(params, features)
    logits = np.einsum("vfhw,fd->vdhw", feat_lo, params.weight, optimize=False)
    logits += params.bias[None, :, None, None]
    p_lo = softmax(logits, axis=1)
    pred = np.repeat(np.repeat(p_lo, s, axis=2), s, axis=3)
    return logits, pred


def _block_sum(full: np.ndarray, s: int) -> np.ndarray:
    n_views, n_bins, height, width = full.shape
    return full.reshape(n_views, n_bins, height // s, s, width // s, s).sum(
        axis=(3, 5)
    )


def _affine_grads(feat_lo: np.ndarray, dlogits: np.ndarray):
    d_weight = np.einsum("vfhw,vdhw->fd", feat_lo, dlogits, optimize=False)
    d_bias = dlogits.sum(axis=(0, 2, 3))
    return d_weight, d_bias


def head_backward(params: ToyHeadParams, features, upstream):
    """Parameter gradients from an upstream gradient on the full-resolution
    distribution: block-sum (upsample transpose), softmax Jacobian, affine
    transpose. Returns (d_weight, d_bias)."""
    features = np.asarray(features, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    feat_lo = _pooled_features(params, features)
    logits, _ = head_forward(params, features)
    if upstream.shape != (features.shape[0], params.bias.shape[0],
                          features.shape[2], features.shape[3]):
        raise ValueError(
            f"upstream gradient shape {upstream.shape} does not match the "
            "full-resolution distribution"
        )
    g_lo = _block_sum(upstream, params.downscale)
    p_lo = softmax(logits, axis=1)
    dlogits = p_lo * (g_lo - (g_lo * p_lo).sum(axis=1, keepdims=True))
    return _affine_grads(feat_lo, dlogits)


def _param_grads_from_logit_grad(params, features, dlogits_full):
    """Same tail as head_backward when the loss already supplies logit
    gradients at full resolution (copies of a coarse cell share its logit,
    so the coarse gradient is the block sum)."""
    feat_lo = _pooled_features(params, features)
    dz_lo = _block_sum(dlogits_full, params.downscale)
    return _affine_grads(feat_lo, dz_lo)


@dataclass
class TrainResult:
    """Per-iteration records plus final parameters and accuracies."""

    records: list
    params: ToyHeadParams
    accuracy: float
    edge_accuracy: float | None
    gt_sparse: np.ndarray = field(repr=False, default=None)
    dense: np.ndarray = field(repr=False, default=None)
    edges: np.ndarray = field(repr=False, default=None)

    @property
    def initial_total(self) -> float:
        return self.records[0]["total"]

    @property
    def final_total(self) -> float:
        return self.records[-1]["total"]


def train_toy(scene: SyntheticScene, cfg: EadfConfig, binning: DepthBinning,
              fp: FocalParams, lr: float, iters: int,
              params: ToyHeadParams | None = None,
              use_eadf: bool = True) -> TrainResult:
    """Plain gradient descent on the summed depth losses.

    Record i holds the losses at the parameters of iteration i; `iters`
    updates produce iters + 1 records, and the last record adds the bin
    accuracy over non-zero sparse ground-truth pixels. With `use_eadf`
    false the edge-aware term is still reported but excluded from the
    total and the update (the ablation the acceptance suite compares).
    """
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    n_views, _, height, width = scene.features.shape
    gt_sparse = project_multiview(
        scene.cloud, scene.calibs, (height, width), (binning.d_min, binning.d_max)
    )
    maps = eadf_pipeline(gt_sparse, cfg)
    if params is None:
        params = ToyHeadParams.zeros(scene.features.shape[1], binning.n_bins)

    records = []
    pred = None
    for it in range(iters + 1):
        _, pred = head_forward(params, scene.features)
        fgd = fgd_loss(pred, gt_sparse, binning, fp, want_grad=it < iters)
        ea = eadf_loss(pred, maps.dense, maps.edges, binning, fp,
                       want_grad=it < iters)
        total = total_loss(fgd.value, ea.value if use_eadf else 0.0, 0.0, 0.0)
        if not np.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss at iteration {it}: fgd={fgd.value}, eadf={ea.value}"
            )
        records.append(
            {"iter": it, "fgd": fgd.value, "eadf": ea.value, "total": total}
        )
        if it == iters:
            break
        dlogits = fgd.grad + ea.grad if use_eadf else fgd.grad
        d_weight, d_bias = _param_grads_from_logit_grad(
            params, scene.features, dlogits
        )
        params = ToyHeadParams(
            weight=params.weight - lr * d_weight,
            bias=params.bias - lr * d_bias,
            downscale=params.downscale,
        )

    predicted_bins = np.argmax(pred, axis=1)
    nz = gt_sparse > 0
    if np.any(nz):
        accuracy = float(
            np.mean(predicted_bins[nz] == bin_index(gt_sparse[nz], binning))
        )
    else:
        accuracy = 0.0
    edge_px = maps.edges > 0.5
    if np.any(edge_px):
        edge_accuracy = float(
            np.mean(
                predicted_bins[edge_px]
                == bin_index(scene.true_depth[edge_px], binning)
            )
        )
    else:
        edge_accuracy = None
    records[-1]["accuracy"] = accuracy
    return TrainResult(
        records=records,
        params=params,
        accuracy=accuracy,
        edge_accuracy=edge_accuracy,
        gt_sparse=gt_sparse,
        dense=maps.dense,
        edges=maps.edges,
    )


def write_trace(path, records) -> None:
    """Serialize training records as JSON lines, one object per iteration."""
    with open(path, "w", encoding="ascii") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
