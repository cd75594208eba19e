"""
Model checkpoints: ``checkpoint.txt`` plus ``params.bin``.

Same container conventions as datasets::

    format = spadvision-checkpoint
    version = 1
    kind = histogram
    spec.in_channels = 16
    spec.base_channels = 16
    spec.n_levels = 3
    spec.kernel = 3
    meta.best_epoch = 14

    [param enc0.conv1.w]
    shape = 16,16,3,3
    offset = 0
    nbytes = 9216
    crc32 = 5a1e03c4

Parameters are stored as little-endian float32 in model order.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from ..errors import ChecksumError, DatasetError, TruncatedBlobError, VersionMismatchError
from ..nn.unet import UNet, UnetSpec
from .dataset import crc32
from .manifest import Manifest, format_manifest, parse_manifest

logger = logging.getLogger(__name__)

FORMAT_NAME = "spadvision-checkpoint"
FORMAT_VERSION = 1
MANIFEST_NAME = "checkpoint.txt"
BLOB_NAME = "params.bin"

_F32 = np.dtype("<f4")
_SPEC_FIELDS = ("in_channels", "n_classes", "base_channels", "n_levels", "kernel")


def save_checkpoint(path: Union[str, Path], model: UNet, meta: Optional[Mapping[str, Any]] = None) -> Path:
    """Write ``model`` (cast to float32) to the directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = {"format": FORMAT_NAME, "version": str(FORMAT_VERSION), "kind": model.kind or ""}
    header.update({f"spec.{name}": str(getattr(model.spec, name)) for name in _SPEC_FIELDS})
    header.update({f"meta.{key}": str(value) for key, value in (meta or {}).items()})
    manifest = Manifest(header)
    chunks, offset = [], 0
    for name, value in model.params.items():
        data = np.ascontiguousarray(value, dtype=_F32).tobytes()
        manifest.add_section(f"param {name}", {
            "shape": ",".join(str(d) for d in value.shape),
            "offset": str(offset),
            "nbytes": str(len(data)),
            "crc32": f"{crc32(data):08x}",
        })
        chunks.append(data)
        offset += len(data)
    (path / BLOB_NAME).write_bytes(b"".join(chunks))
    (path / MANIFEST_NAME).write_text(format_manifest(manifest), encoding="utf-8")
    logger.info("Saved %s checkpoint with %d parameters to %s", model.kind or "untyped",
                model.parameter_count(), path)
    return path


def _read_param(name: str, entries, blob: bytes) -> np.ndarray:
    try:
        shape = tuple(int(d) for d in entries["shape"].split(","))
        offset, nbytes = int(entries["offset"]), int(entries["nbytes"])
        expected = int(entries["crc32"], 16)
    except ValueError:
        raise DatasetError(f"parameter {name} has a malformed entry") from None
    if offset + nbytes > len(blob):
        raise TruncatedBlobError(f"parameter {name} ends at byte {offset + nbytes}, blob has {len(blob)}")
    data = blob[offset:offset + nbytes]
    actual = crc32(data)
    if actual != expected:
        raise ChecksumError(f"param {name}", expected, actual)
    if int(np.prod(shape)) * _F32.itemsize != nbytes:
        raise DatasetError(f"parameter {name}: {nbytes} bytes do not hold shape {shape}")
    return np.frombuffer(data, dtype=_F32).reshape(shape).astype(np.float32)


def load_checkpoint(path: Union[str, Path]) -> Tuple[UNet, Dict[str, str]]:
    """
    Read a checkpoint directory.

    Returns:
        (model, meta): the float32 model and the ``meta.*`` entries

    Raises:
        VersionMismatchError: for another format or version.
        ChecksumError: if a parameter's CRC does not match.
    """
    path = Path(path)
    try:
        manifest = parse_manifest((path / MANIFEST_NAME).read_text(encoding="utf-8"))
        blob = (path / BLOB_NAME).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read checkpoint {path}: {exc}") from None
    header = manifest.header
    if header.get("format") != FORMAT_NAME or header.get("version") != str(FORMAT_VERSION):
        raise VersionMismatchError(f"{path}: expected {FORMAT_NAME} version {FORMAT_VERSION}, "
                                   f"found {header.get('format')} version {header.get('version')}")
    try:
        spec = UnetSpec(**{name: int(header[f"spec.{name}"]) for name in _SPEC_FIELDS})
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{path}: malformed network spec ({exc})") from None
    params = {name: _read_param(name, section, blob) for name, section in manifest.iter_prefixed("param")}
    model = UNet(spec, params, header.get("kind") or None)
    meta = {key[len("meta."):]: value for key, value in header.items() if key.startswith("meta.")}
    return model, meta


__all__ = ["FORMAT_VERSION", "save_checkpoint", "load_checkpoint"]
