"""Pinhole camera models and point-cloud-to-depth-map projection.

Conventions used everywhere in this package:

- Ego frame: right-handed metric frame shared by the point cloud and the
  BEV grid. Camera poses are given as `ego_from_camera` rigid transforms.
- Camera frame: x right, y down, z forward (optical axis). Depth is the
  camera-frame z coordinate and is always positive for visible points.
- Image indexing: (row, col) with row growing downward and col rightward.
  Projected coordinates are rounded to the nearest pixel (ties to even).
- Depth maps: zero marks "no measurement"; when several points land on the
  same pixel the minimum depth wins (the nearest surface is the visible one).

File formats:

- Point clouds: text, one `x,y,z[,intensity]` line per point, `#` comments;
  or raw binary (".bin") of consecutive little-endian float32 quadruplets
  (x, y, z, intensity).
- Calibrations: JSON list of objects with keys "view_id", "intrinsics"
  (row-major 3x3) and "ego_from_camera" (row-major 4x4).
"""

import json
from dataclasses import dataclass, field

import numpy as np

ROTATION_TOL = 1e-9


@dataclass
class PointCloud:
    """3D points in the ego frame, with optional per-point intensity.

    Intensity is carried for format fidelity only; no computation uses it.
    """

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if self.intensity.shape[0] != self.points.shape[0]:
                raise ValueError(
                    f"intensity count {self.intensity.shape[0]} does not match "
                    f"point count {self.points.shape[0]}"
                )

    def __len__(self):
        return self.points.shape[0]


@dataclass
class CameraCalib:
    """Per-view intrinsics and ego-from-camera extrinsics.

    The intrinsics are a full 3x3 matrix (skew supported, last row must be
    [0, 0, 1]); the extrinsics a 4x4 rigid transform whose rotation block is
    orthonormal within 1e-9.
    """

    view_id: int
    intrinsics: np.ndarray
    ego_from_camera: np.ndarray
    camera_from_ego: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.view_id = int(self.view_id)
        if self.view_id < 0:
            raise ValueError(f"view_id must be non-negative, got {self.view_id}")
        K = np.asarray(self.intrinsics, dtype=np.float64)
        T = np.asarray(self.ego_from_camera, dtype=np.float64)
        if K.shape != (3, 3):
            raise ValueError(f"intrinsics must be 3x3, got shape {K.shape}")
        if T.shape != (4, 4):
            raise ValueError(f"ego_from_camera must be 4x4, got shape {T.shape}")
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(T))):
            raise ValueError("calibration contains non-finite values")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError(
                f"intrinsics: fx and fy must be positive, got fx={K[0, 0]}, fy={K[1, 1]}"
            )
        if not np.allclose(K[2], [0.0, 0.0, 1.0], atol=1e-12, rtol=0.0):
            raise ValueError("intrinsics: last row must be [0, 0, 1]")
        R = T[:3, :3]
        if np.max(np.abs(R.T @ R - np.eye(3))) > ROTATION_TOL:
            raise ValueError("ego_from_camera: rotation block is not orthonormal")
        if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12, rtol=0.0):
            raise ValueError("ego_from_camera: last row must be [0, 0, 0, 1]")
        self.intrinsics = K
        self.ego_from_camera = T
        # Rigid inverse: [R | t]^-1 = [R^T | -R^T t].
        inv = np.eye(4)
        inv[:3, :3] = R.T
        inv[:3, 3] = -R.T @ T[:3, 3]
        self.camera_from_ego = inv

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def cx(self) -> float:
        return float(self.intrinsics[0, 2])

    @property
    def cy(self) -> float:
        return float(self.intrinsics[1, 2])

    @property
    def skew(self) -> float:
        return float(self.intrinsics[0, 1])


def _check_shape(shape):
    if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
        raise ValueError(f"image shape must be two positive ints, got {shape}")
    return int(shape[0]), int(shape[1])


def _check_range(depth_range):
    d_min, d_max = float(depth_range[0]), float(depth_range[1])
    if not (0.0 <= d_min < d_max):
        raise ValueError(
            f"depth range must satisfy 0 <= d_min < d_max, got [{d_min}, {d_max})"
        )
    return d_min, d_max


def project_points(cloud: PointCloud, calib: CameraCalib, shape, depth_range) -> np.ndarray:
    """Project a point cloud into one view's sparse depth map.

    Points are moved to the camera frame, dropped unless their depth lies in
    [d_min, d_max), rasterized with nearest-pixel rounding, and reduced with
    a per-pixel minimum. Untouched pixels stay 0.
    """
    n_rows, n_cols = _check_shape(shape)
    d_min, d_max = _check_range(depth_range)
    grid = np.zeros((n_rows, n_cols), dtype=np.float64)
    if len(cloud) == 0:
        return grid

    T = calib.camera_from_ego
    cam = cloud.points @ T[:3, :3].T + T[:3, 3]
    z = cam[:, 2]
    keep = (z >= d_min) & (z < d_max)
    cam = cam[keep]
    z = z[keep]
    if cam.shape[0] == 0:
        return grid

    K = calib.intrinsics
    u = (K[0, 0] * cam[:, 0] + K[0, 1] * cam[:, 1] + K[0, 2] * z) / z
    v = (K[1, 0] * cam[:, 0] + K[1, 1] * cam[:, 1] + K[1, 2] * z) / z
    col = np.rint(u).astype(np.int64)
    row = np.rint(v).astype(np.int64)
    inside = (row >= 0) & (row < n_rows) & (col >= 0) & (col < n_cols)
    row, col, z = row[inside], col[inside], z[inside]
    if row.size == 0:
        return grid

    # Min-reduce collisions; the reduction is order-independent, so the
    # result matches a per-point loop exactly.
    grid.fill(np.inf)
    np.minimum.at(grid, (row, col), z)
    grid[np.isinf(grid)] = 0.0
    return grid


def project_multiview(cloud: PointCloud, calibs, shape, depth_range) -> np.ndarray:
    """Project into every view; returns a (n_views, H, W) stack in view order.

    The calibrations must carry distinct view_ids covering [0, n_views).
    """
    if not calibs:
        raise ValueError("no calibrations given")
    ids = sorted(c.view_id for c in calibs)
    if ids != list(range(len(calibs))):
        raise ValueError(
            f"view_ids must be a permutation of 0..{len(calibs) - 1}, got {ids}"
        )
    ordered = sorted(calibs, key=lambda c: c.view_id)
    return np.stack(
        [project_points(cloud, c, shape, depth_range) for c in ordered], axis=0
    )


def unproject_pixel(calib: CameraCalib, row, col, depth) -> np.ndarray:
    """Lift one pixel at a given depth back to the ego frame.

    Inverse of `project_points` up to pixel rounding: re-projecting the
    result recovers (row, col, depth) within half a pixel.
    """
    depth = float(depth)
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    y = (row - calib.cy) * depth / calib.fy
    x = ((col - calib.cx) * depth - calib.skew * y) / calib.fx
    cam = np.array([x, y, depth])
    T = calib.ego_from_camera
    return T[:3, :3] @ cam + T[:3, 3]


def unproject_pixels(calib: CameraCalib, rows, cols, depths) -> np.ndarray:
    """Vectorized `unproject_pixel`; returns an (n, 3) array of ego points."""
    rows = np.asarray(rows, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    if np.any(depths <= 0):
        raise ValueError("depths must be positive")
    y = (rows - calib.cy) * depths / calib.fy
    x = ((cols - calib.cx) * depths - calib.skew * y) / calib.fx
    cam = np.stack([x, y, depths], axis=-1).reshape(-1, 3)
    T = calib.ego_from_camera
    return cam @ T[:3, :3].T + T[:3, 3]


def load_point_cloud(path) -> PointCloud:
    """Read a point cloud file; binary when the extension is ".bin"."""
    path = str(path)
    if path.endswith(".bin"):
        raw = np.fromfile(path, dtype="<f4")
        if raw.size % 4 != 0:
            raise ValueError(
                f"{path}: binary cloud length {raw.size} is not a multiple of 4"
            )
        quads = raw.reshape(-1, 4).astype(np.float64)
        return PointCloud(points=quads[:, :3], intensity=quads[:, 3])

    rows = []
    has_intensity = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(",")
            if len(fields) not in (3, 4):
                raise ValueError(
                    f"{path}:{lineno}: expected 3 or 4 comma-separated values"
                )
            with_i = len(fields) == 4
            if has_intensity is None:
                has_intensity = with_i
            elif has_intensity != with_i:
                raise ValueError(f"{path}:{lineno}: inconsistent column count")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        return PointCloud(points=np.zeros((0, 3)))
    data = np.asarray(rows, dtype=np.float64)
    if has_intensity:
        return PointCloud(points=data[:, :3], intensity=data[:, 3])
    return PointCloud(points=data)


def save_point_cloud(path, cloud: PointCloud) -> None:
    """Write a point cloud; binary when the extension is ".bin"."""
    path = str(path)
    if path.endswith(".bin"):
        intensity = (
            cloud.intensity
            if cloud.intensity is not None
            else np.zeros(len(cloud), dtype=np.float64)
        )
        quads = np.column_stack([cloud.points, intensity]).astype("<f4")
        quads.tofile(path)
        return
    with open(path, "w", encoding="ascii") as fh:
        for i in range(len(cloud)):
            # repr(float) is the shortest decimal that round-trips exactly.
            fields = [repr(float(v)) for v in cloud.points[i]]
            if cloud.intensity is not None:
                fields.append(repr(float(cloud.intensity[i])))
            fh.write(",".join(fields) + "\n")


def load_calibrations(path) -> list:
    """Read a JSON calibration file into a list of CameraCalib."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError(f"{path}: calibration file must hold a JSON list")
    calibs = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise ValueError(f"{path}: calibration entry {i} is not an object")
        required = {"view_id", "intrinsics", "ego_from_camera"}
        unknown = set(entry) - required
        if unknown:
            raise ValueError(
                f"{path}: calibration entry {i} has unknown keys {sorted(unknown)}"
            )
        missing = required - set(entry)
        if missing:
            raise ValueError(
                f"{path}: calibration entry {i} is missing keys {sorted(missing)}"
            )
        calibs.append(
            CameraCalib(
                view_id=entry["view_id"],
                intrinsics=entry["intrinsics"],
                ego_from_camera=entry["ego_from_camera"],
            )
        )
    return calibs


def save_calibrations(path, calibs) -> None:
    """Write CameraCalib objects as the JSON calibration format."""
    data = [
        {
            "view_id": c.view_id,
            "intrinsics": c.intrinsics.tolist(),
            "ego_from_camera": c.ego_from_camera.tolist(),
        }
        for c in calibs
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
