"""
Binary PPM (P6) images for mask visualizations.
"""

from pathlib import Path
from typing import Union

import numpy as np

from ..errors import DatasetError, ShapeMismatchError

__all__ = ["encode_ppm", "decode_ppm", "write_ppm", "read_ppm"]


def encode_ppm(rgb: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 image as P6 bytes."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeMismatchError(f"expected an (H, W, 3) image, got {rgb.shape}")
    if rgb.dtype != np.uint8:
        raise ShapeMismatchError(f"expected uint8 pixels, got {rgb.dtype}")
    height, width = rgb.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(rgb).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    # magic, width, height, maxval separated by single whitespace characters
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetError("truncated PPM header")
        fields.append(data[start:pos].decode("ascii", errors="replace"))
    pos += 1
    if fields[0] != "P6" or fields[3] != "255":
        raise DatasetError(f"unsupported PPM header {fields}")
    try:
        width, height = int(fields[1]), int(fields[2])
    except ValueError:
        raise DatasetError(f"malformed PPM size {fields[1:3]}") from None
    pixels = data[pos:pos + width * height * 3]
    if len(pixels) != width * height * 3:
        raise DatasetError(f"PPM body holds {len(pixels)} bytes, expected {width * height * 3}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path: Union[str, Path], rgb: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(rgb))
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    try:
        return decode_ppm(Path(path).read_bytes())
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from None
