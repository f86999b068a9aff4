"""Edge-aware depth fusion: block-max densification, directional gradients,
normalized edge maps, and the fused depth+edge feature.

The pipeline turns a sparse projected depth stack D (zeros where no lidar
return hit) into

- a dense stack D' where every k x k block is filled with its own maximum
  depth (ragged border blocks use only their actual pixels),
- four signed stride-k differences per pixel (down, up, right, left in
  (row, col) indexing; a difference whose neighbor falls off the grid is 0),
- an edge map: the per-pixel maximum over the four differences, clamped at
  zero, then divided by the per-view maximum so each view lands in [0, 1],
- the fused feature [D : edge], channel-stacked per view.

All operations are pure and deterministic; the vectorized implementations
are bit-identical to a per-pixel loop.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EadfConfig:
    """Block/stride size for densification and gradients.

    `normalization` names the edge-map scaling mode; only per-view max
    division is implemented.
    """

    k: int = 7
    normalization: str = "per-view-max"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if self.normalization != "per-view-max":
            raise ValueError(
                f"unsupported normalization {self.normalization!r}; "
                "only 'per-view-max' exists"
            )


@dataclass
class EadfResult:
    """All intermediates of the pipeline, kept for inspection and export."""

    dense: np.ndarray      # (views, H, W) block-max depth
    gradients: np.ndarray  # (views, H, W, 4) signed stride-k differences
    edges: np.ndarray      # (views, H, W) in [0, 1]
    fused: np.ndarray      # (views, 2, H, W), channel 0 depth, channel 1 edges


def _check_stack(depth) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 3:
        raise ValueError(f"expected a (views, H, W) stack, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)):
        raise ValueError("depth stack contains non-finite values")
    if np.any(depth < 0):
        raise ValueError("depth stack contains negative values")
    return depth


def _check_k(k: int, height: int, width: int) -> int:
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > min(height, width):
        raise ValueError(
            f"k={k} exceeds the smaller image dimension min({height}, {width})"
        )
    return k


def densify(depth, k: int) -> np.ndarray:
    """Fill each k x k block (anchored at (0, 0)) with its maximum depth."""
    depth = _check_stack(depth)
    _, height, width = depth.shape
    k = _check_k(k, height, width)
    if k == 1:
        return depth.copy()
    row_starts = np.arange(0, height, k)
    col_starts = np.arange(0, width, k)
    block_max = np.maximum.reduceat(depth, row_starts, axis=1)
    block_max = np.maximum.reduceat(block_max, col_starts, axis=2)
    row_counts = np.diff(np.append(row_starts, height))
    col_counts = np.diff(np.append(col_starts, width))
    return np.repeat(np.repeat(block_max, row_counts, axis=1), col_counts, axis=2)


def directional_gradients(dense, k: int) -> np.ndarray:
    """Signed stride-k depth differences, one channel per direction.

    Channel order: 0 toward larger row, 1 toward smaller row, 2 toward
    larger col, 3 toward smaller col. Out-of-bounds neighbors leave 0.
    """
    dense = _check_stack(dense)
    views, height, width = dense.shape
    k = _check_k(k, height, width)
    grads = np.zeros((views, height, width, 4), dtype=np.float64)
    if height > k:
        grads[:, : height - k, :, 0] = dense[:, : height - k, :] - dense[:, k:, :]
        grads[:, k:, :, 1] = dense[:, k:, :] - dense[:, : height - k, :]
    if width > k:
        grads[:, :, : width - k, 2] = dense[:, :, : width - k] - dense[:, :, k:]
        grads[:, :, k:, 3] = dense[:, :, k:] - dense[:, :, : width - k]
    return grads


def edge_map(grads) -> np.ndarray:
    """Reduce the gradient stack to a per-view edge map in [0, 1].

    The raw value is the maximum over the four directions; negative maxima
    (local depth minima) clamp to 0; each view then divides by its own
    maximum, so any view with a positive raw gradient peaks at exactly 1.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 4 or grads.shape[3] != 4:
        raise ValueError(
            f"expected a (views, H, W, 4) gradient stack, got shape {grads.shape}"
        )
    raw = np.maximum(grads.max(axis=3), 0.0)
    view_max = raw.max(axis=(1, 2))
    out = np.zeros_like(raw)
    for view in range(raw.shape[0]):
        if view_max[view] > 0.0:
            out[view] = raw[view] / view_max[view]
    return out


def fuse_eadf(depth, edges) -> np.ndarray:
    """Channel-stack the sparse depth map and the edge map per view."""
    depth = np.asarray(depth, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if depth.shape != edges.shape:
        raise ValueError(
            f"depth shape {depth.shape} does not match edge shape {edges.shape}"
        )
    if depth.ndim != 3:
        raise ValueError(f"expected (views, H, W) inputs, got shape {depth.shape}")
    return np.stack([depth, edges], axis=1)


def eadf_pipeline(depth, cfg: EadfConfig) -> EadfResult:
    """densify -> directional_gradients -> edge_map -> fuse, all returned."""
    depth = _check_stack(depth)
    dense = densify(depth, cfg.k)
    grads = directional_gradients(dense, cfg.k)
    edges = edge_map(grads)
    fused = fuse_eadf(depth, edges)
    return EadfResult(dense=dense, gradients=grads, edges=edges, fused=fused)
