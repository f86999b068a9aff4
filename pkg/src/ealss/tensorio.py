"""Binary tensor persistence and PGM image export.

Tensor container format (magic "EALSS1"):

    EALSS1\\n
    dims: d0 d1 ... dn\\n
    dtype: f32|f64\\n
    <raw little-endian values, row-major>

All stacks and grids produced by this package are stored this way.
"""

import numpy as np

MAGIC = b"EALSS1\n"

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def save_tensor(path, array) -> None:
    """Write a float array to `path` in the EALSS1 container format."""
    array = np.asarray(array)
    if array.dtype not in _DTYPE_NAMES:
        array = array.astype(np.float64)
    name = _DTYPE_NAMES[array.dtype]
    header = MAGIC
    header += ("dims: " + " ".join(str(d) for d in array.shape) + "\n").encode("ascii")
    header += f"dtype: {name}\n".encode("ascii")
    payload = np.ascontiguousarray(array).astype(_DTYPES[name]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_tensor(path) -> np.ndarray:
    """Read an EALSS1 tensor. Returns a native-endian array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise ValueError(f"{path}: not an EALSS1 tensor (bad magic)")
    rest = blob[len(MAGIC):]
    dims_line, sep, rest = rest.partition(b"\n")
    if not sep or not dims_line.startswith(b"dims: "):
        raise ValueError(f"{path}: malformed dims header")
    try:
        dims = tuple(int(tok) for tok in dims_line[len(b"dims: "):].split())
    except ValueError:
        raise ValueError(f"{path}: malformed dims header") from None
    if any(d < 0 for d in dims):
        raise ValueError(f"{path}: negative dimension in header")
    dtype_line, sep, payload = rest.partition(b"\n")
    if not sep or not dtype_line.startswith(b"dtype: "):
        raise ValueError(f"{path}: malformed dtype header")
    name = dtype_line[len(b"dtype: "):].decode("ascii", errors="replace")
    if name not in _DTYPES:
        raise ValueError(f"{path}: unsupported dtype {name!r}")
    dtype = _DTYPES[name]
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    expected = count * dtype.itemsize
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return data.astype(data.dtype.newbyteorder("="))


def write_pgm16(path, image) -> None:
    """Write one [0,1] image as a 16-bit binary PGM (P5, maxval 65535).

    Samples are stored most-significant byte first per the netpbm format.
    Values outside [0,1] are clamped.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"PGM export expects a 2-d image, got shape {image.shape}")
    scaled = np.rint(np.clip(image, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(scaled.tobytes())


def export_stack_pgm(stack, directory, basename, max_value=1.0) -> list:
    """Export each view of a (views, H, W) stack as `<basename>_v<view>.pgm`.

    Pixel values are divided by `max_value` before the [0,1] clamp, so depth
    maps pass their binning d_max here and edge maps pass 1.0.
    Returns the written paths in view order.
    """
    import os

    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError(f"expected a (views, H, W) stack, got shape {stack.shape}")
    if max_value <= 0:
        raise ValueError("max_value must be positive")
    paths = []
    for view in range(stack.shape[0]):
        path = os.path.join(directory, f"{basename}_v{view}.pgm")
        write_pgm16(path, stack[view] / max_value)
        paths.append(path)
    return paths
