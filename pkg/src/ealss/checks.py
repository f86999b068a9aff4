"""Finite-difference verification of the analytic gradients.

`run_gradcheck` drives the same checks the test suite performs: central
differences (default h = 1e-5, float64) against the analytic logit
gradients of both losses and against the end-to-end parameter gradient of
the toy head. The agreement metric is the largest absolute deviation
divided by the larger gradient's max-norm; a correct implementation sits
around 1e-9, so the 1e-5 gate has plenty of margin.
"""

import numpy as np

from .eadf import EadfConfig, eadf_pipeline
from .losses import DepthBinning, eadf_loss, fgd_loss, softmax
from .toy_head import (
    ToyHeadParams,
    _param_grads_from_logit_grad,
    head_forward,
    make_synthetic_scene,
)
from .geometry import project_multiview

GRADCHECK_TOL = 1e-5


def finite_difference_grad(func, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, entry by entry."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros(x.size, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(x.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = func(bumped.reshape(x.shape))
        bumped[i] = flat[i] - h
        f_minus = func(bumped.reshape(x.shape))
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)


def gradient_agreement(analytic, numeric) -> float:
    """Max deviation relative to the larger gradient's max-norm."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0), 1e-12)
    return float(np.max(np.abs(a - n), initial=0.0) / scale)


def _random_loss_instance(rng, binning, size: int, n_views: int = 1):
    logits = rng.normal(0.0, 1.0, (n_views, binning.n_bins, size, size))
    depth = rng.uniform(binning.d_min, binning.d_max, (n_views, size, size))
    gt = np.where(rng.random((n_views, size, size)) < 0.7, depth, 0.0)
    weights = rng.random((n_views, size, size))
    weights[rng.random((n_views, size, size)) < 0.2] = 0.0
    return logits, gt, weights


def check_loss_gradients(rng, binning, fp, size: int = 8, h: float = 1e-5) -> dict:
    """Agreement of both losses' logit gradients with central differences."""
    logits, gt, weights = _random_loss_instance(rng, binning, size)
    dense = np.where(gt > 0, gt, binning.center(binning.n_bins // 2))

    report = fgd_loss(softmax(logits, axis=1), gt, binning, fp, want_grad=True)
    fd = finite_difference_grad(
        lambda z: fgd_loss(softmax(z, axis=1), gt, binning, fp).value, logits, h
    )
    fgd_err = gradient_agreement(report.grad, fd)

    report = eadf_loss(softmax(logits, axis=1), dense, weights, binning, fp,
                       want_grad=True)
    fd = finite_difference_grad(
        lambda z: eadf_loss(softmax(z, axis=1), dense, weights, binning, fp).value,
        logits, h,
    )
    eadf_err = gradient_agreement(report.grad, fd)
    return {"fgd": fgd_err, "eadf": eadf_err}


def check_head_gradient(rng, fp, k: int, size: int = 8, h: float = 1e-5) -> float:
    """End-to-end parameter-gradient agreement for the toy head."""
    binning = DepthBinning(1.0, 9.0, 8)
    scene = make_synthetic_scene(
        seed=int(rng.integers(0, 2**31)), n_boxes=3, shape=(1, size, size),
        binning=binning, sparsity=0.5, noise=0.3,
    )
    cfg = EadfConfig(k=min(k, size))
    gt = project_multiview(scene.cloud, scene.calibs, (size, size),
                           (binning.d_min, binning.d_max))
    maps = eadf_pipeline(gt, cfg)
    n_feat = scene.features.shape[1]
    params = ToyHeadParams(
        weight=0.1 * rng.normal(0.0, 1.0, (n_feat, binning.n_bins)),
        bias=0.1 * rng.normal(0.0, 1.0, binning.n_bins),
        downscale=2,
    )

    def objective(weight, bias):
        p = ToyHeadParams(weight=weight, bias=bias, downscale=2)
        _, pred = head_forward(p, scene.features)
        a = fgd_loss(pred, gt, binning, fp)
        b = eadf_loss(pred, maps.dense, maps.edges, binning, fp)
        return a.value + b.value

    _, pred = head_forward(params, scene.features)
    fgd = fgd_loss(pred, gt, binning, fp, want_grad=True)
    ea = eadf_loss(pred, maps.dense, maps.edges, binning, fp, want_grad=True)
    d_weight, d_bias = _param_grads_from_logit_grad(
        params, scene.features, fgd.grad + ea.grad
    )
    fd_weight = finite_difference_grad(
        lambda w: objective(w, params.bias), params.weight, h
    )
    fd_bias = finite_difference_grad(
        lambda b: objective(params.weight, b), params.bias, h
    )
    return max(
        gradient_agreement(d_weight, fd_weight),
        gradient_agreement(d_bias, fd_bias),
    )


def run_gradcheck(config, seed: int, size: int = 8, corrupt: bool = False) -> dict:
    """The CLI gradcheck: both losses plus the toy head, one seed.

    `corrupt` is a negative-control hook: it biases one analytic component
    so the check must fail.
    """
    if size < 4 or size % 2:
        raise ValueError(f"gradcheck size must be an even integer >= 4, got {size}")
    rng = np.random.default_rng(seed)
    binning = DepthBinning(config.binning.d_min, config.binning.d_max, 8)
    errors = check_loss_gradients(rng, binning, config.focal, size=size)
    errors["head"] = check_head_gradient(rng, config.focal, k=config.k, size=size)
    if corrupt:
        errors["fgd"] = max(errors["fgd"], 1.0)
    max_err = max(errors.values())
    return {
        "max_rel_err": max_err,
        "pass": bool(max_err <= GRADCHECK_TOL),
        "components": errors,
        "tolerance": GRADCHECK_TOL,
    }
