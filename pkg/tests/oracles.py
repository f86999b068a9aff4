"""Naive, loop-based reference implementations used only by the tests.

These deliberately avoid the vectorized code paths of the package: block
maxima come from explicit slices, gradients and edge maps from per-pixel
scalar arithmetic, projections from a per-point loop, and finite
differences from two full function evaluations per entry.
"""

import numpy as np


def densify_oracle(depth, k):
    depth = np.asarray(depth, dtype=np.float64)
    out = np.zeros_like(depth)
    n_views, height, width = depth.shape
    for view in range(n_views):
        for r0 in range(0, height, k):
            for c0 in range(0, width, k):
                block = depth[view, r0:r0 + k, c0:c0 + k]
                out[view, r0:r0 + k, c0:c0 + k] = block.max()
    return out


def gradients_oracle(dense, k):
    dense = np.asarray(dense, dtype=np.float64)
    n_views, height, width = dense.shape
    grads = np.zeros((n_views, height, width, 4))
    for view in range(n_views):
        for i in range(height):
            for j in range(width):
                d = dense[view, i, j]
                if i + k < height:
                    grads[view, i, j, 0] = d - dense[view, i + k, j]
                if i - k >= 0:
                    grads[view, i, j, 1] = d - dense[view, i - k, j]
                if j + k < width:
                    grads[view, i, j, 2] = d - dense[view, i, j + k]
                if j - k >= 0:
                    grads[view, i, j, 3] = d - dense[view, i, j - k]
    return grads


def edge_map_oracle(grads):
    grads = np.asarray(grads, dtype=np.float64)
    n_views, height, width, _ = grads.shape
    out = np.zeros((n_views, height, width))
    for view in range(n_views):
        clamped = np.zeros((height, width))
        for i in range(height):
            for j in range(width):
                raw = max(grads[view, i, j, 0], grads[view, i, j, 1],
                          grads[view, i, j, 2], grads[view, i, j, 3])
                clamped[i, j] = raw if raw > 0.0 else 0.0
        vmax = clamped.max()
        if vmax > 0.0:
            for i in range(height):
                for j in range(width):
                    out[view, i, j] = clamped[i, j] / vmax
    return out


def pipeline_oracle(depth, k):
    dense = densify_oracle(depth, k)
    grads = gradients_oracle(dense, k)
    edges = edge_map_oracle(grads)
    return dense, grads, edges


def project_oracle(points, calib, shape, depth_range):
    """Per-point projection loop with min-depth collisions."""
    height, width = shape
    d_min, d_max = depth_range
    grid = np.zeros((height, width))
    K = calib.intrinsics
    T = calib.camera_from_ego
    for p in np.asarray(points, dtype=np.float64):
        cam = T[:3, :3] @ p + T[:3, 3]
        z = cam[2]
        if not (d_min <= z < d_max):
            continue
        u = (K[0, 0] * cam[0] + K[0, 1] * cam[1] + K[0, 2] * z) / z
        v = (K[1, 0] * cam[0] + K[1, 1] * cam[1] + K[1, 2] * z) / z
        col = int(np.rint(u))
        row = int(np.rint(v))
        if not (0 <= row < height and 0 <= col < width):
            continue
        if grid[row, col] == 0.0 or z < grid[row, col]:
            grid[row, col] = z
    return grid


def fd_grad(func, x, h=1e-5):
    """Central differences, two full evaluations per entry."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.size)
    flat = x.reshape(-1)
    for i in range(x.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        fp = func(bumped.reshape(x.shape))
        bumped[i] = flat[i] - h
        fm = func(bumped.reshape(x.shape))
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)


def grad_rel_err(analytic, numeric):
    """Largest deviation relative to the bigger gradient's max-norm."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0), 1e-12)
    return float(np.max(np.abs(a - n), initial=0.0) / scale)


def random_rotation(rng):
    """Uniform-ish proper rotation from a QR factorization."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_calib(rng, view_id, height, width, f_lo=10.0, f_hi=200.0, t_scale=5.0):
    from ealss.geometry import CameraCalib

    K = np.array([
        [float(rng.uniform(f_lo, f_hi)), 0.0, float(rng.uniform(0.0, width))],
        [0.0, float(rng.uniform(f_lo, f_hi)), float(rng.uniform(0.0, height))],
        [0.0, 0.0, 1.0],
    ])
    T = np.eye(4)
    T[:3, :3] = random_rotation(rng)
    T[:3, 3] = rng.uniform(-t_scale, t_scale, 3)
    return CameraCalib(view_id=view_id, intrinsics=K, ego_from_camera=T)
