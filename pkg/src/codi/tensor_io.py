"""Binary tensor interchange.

File layout, all little-endian, no padding, no trailer:

    bytes 0..3   magic ``CFT1`` (ASCII)
    byte  4      rank r as u8, r in {1, 2, 3}
    next 4*r     dims, r x u32
    rest         prod(dims) x f32, row-major

Values are stored bit-exactly, so write followed by read round-trips
float32 payloads without change. Non-finite values are rejected on both
paths: files are the hand-off point between processes and a NaN that
crosses it silently is much harder to trace than one caught here.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ShapeError, TensorCorruptionError, TensorFormatError, ValidationError

MAGIC = b"CFT1"
_MAX_RANK = 3


def write_tensor(array: np.ndarray, path: str | Path) -> None:
    """Serialize ``array`` to ``path`` in the CFT1 layout.

    The array is converted to float32 before writing; callers that need
    bit-exact round-trips should pass float32 to begin with. Rank must
    be 1, 2, or 3 and every dimension strictly positive.
    """
    arr = np.asarray(array)
    if arr.ndim < 1 or arr.ndim > _MAX_RANK:
        raise ShapeError(f"tensor rank must be 1..{_MAX_RANK}, got {arr.ndim}")
    if any(d <= 0 for d in arr.shape):
        raise ShapeError(f"tensor dims must be positive, got {arr.shape}")
    data = np.ascontiguousarray(arr, dtype="<f4")
    if not np.isfinite(data).all():
        raise ValidationError("tensor contains NaN or Inf")
    header = MAGIC + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + data.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    """Load a CFT1 file and return its payload as a float32 array.

    Raises TensorFormatError for a bad magic or rank byte,
    TensorCorruptionError when the payload length disagrees with the
    declared shape (including trailing bytes), and ValidationError when
    the payload holds NaN or Inf.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 5:
        raise TensorFormatError(f"{path}: file shorter than the fixed header")
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    rank = raw[4]
    if rank < 1 or rank > _MAX_RANK:
        raise TensorFormatError(f"{path}: rank byte {rank} outside 1..{_MAX_RANK}")
    dims_end = 5 + 4 * rank
    if len(raw) < dims_end:
        raise TensorCorruptionError(f"{path}: header truncated before dims")
    dims = struct.unpack(f"<{rank}I", raw[5:dims_end])
    if any(d == 0 for d in dims):
        raise TensorCorruptionError(f"{path}: zero dimension in {dims}")
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + 4 * count
    if len(raw) != expected:
        raise TensorCorruptionError(
            f"{path}: payload is {len(raw) - dims_end} bytes, shape {dims} needs {4 * count}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=dims_end).reshape(dims)
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: payload contains NaN or Inf")
    # frombuffer returns a read-only view over the file bytes; hand the
    # caller an owned, writable array.
    return np.array(data, dtype=np.float32)


def flatten_spatial(tensor: np.ndarray) -> np.ndarray:
    """Collapse a (H, W, d) feature map to (H*W, d) token rows.

    Rank-2 input is passed through unchanged so pipeline code can accept
    either layout. Row-major order means token index i corresponds to
    spatial position (i // W, i % W).
    """
    arr = np.asarray(tensor)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3:
        h, w, d = arr.shape
        return arr.reshape(h * w, d)
    raise ShapeError(f"expected rank 2 or 3 features, got rank {arr.ndim}")
