"""
Dataset container: ``manifest.txt`` plus ``data.bin``.

The manifest is key-value text (see :mod:`spadvision.io.manifest`)::

    format = spadvision-dataset
    version = 1
    n_frames = 2
    palette = 0:0:0 230:25:75 ...
    config.seed = 7

    [split]
    train = 0
    val = 1
    test =

    [record 0]
    offset = 0
    nbytes = 81920
    crc32 = 1c291ca3
    tensor.hist = u16 32,64,16 0
    tensor.spc = u16 128,256 65536
    labels = 4:10,5,6,6
    meta.sbr = 0.73

    [extra calibration]
    ...

Tensor offsets are relative to the record's offset. The blob holds the
records back to back as little-endian, row-major arrays.
"""

import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..datakit import DEFAULT_PALETTE, Example, LabelBox, labels_from_text
from ..errors import ChecksumError, DatasetError, TruncatedBlobError, VersionMismatchError
from .manifest import Manifest, ManifestSection, format_manifest, parse_manifest

logger = logging.getLogger(__name__)

FORMAT_NAME = "spadvision-dataset"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.txt"
BLOB_NAME = "data.bin"

DTYPES = {"u16": np.dtype("<u2"), "f32": np.dtype("<f4"), "u8": np.dtype("u1")}
_DTYPE_CODES = {dtype: code for code, dtype in DTYPES.items()}


def _dtype_code(array: np.ndarray) -> str:
    code = _DTYPE_CODES.get(array.dtype.newbyteorder("<"))
    if code is None:
        raise DatasetError(f"unsupported tensor dtype {array.dtype}; expected one of {sorted(DTYPES)}")
    return code


def _format_ids(ids: Sequence[int]) -> str:
    return ",".join(str(int(i)) for i in ids)


def _parse_ids(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise DatasetError(f"malformed id list {text!r}") from None


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


@dataclass
class TensorInfo:
    name: str
    dtype: str
    shape: Tuple[int, ...]
    offset: int

    @property
    def nbytes(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) * DTYPES[self.dtype].itemsize

    def to_text(self) -> str:
        return f"{self.dtype} {','.join(str(d) for d in self.shape)} {self.offset}"

    @classmethod
    def from_text(cls, name: str, text: str) -> "TensorInfo":
        try:
            dtype, dims, offset = text.split()
            shape = tuple(int(d) for d in dims.split(",") if d)
            info = cls(name, dtype, shape, int(offset))
        except ValueError:
            raise DatasetError(f"malformed tensor entry {name} = {text!r}") from None
        if dtype not in DTYPES:
            raise DatasetError(f"tensor {name} has unknown dtype {dtype!r}")
        return info


@dataclass
class RecordInfo:
    """Location, checksum and metadata of one record in the blob."""
    name: str
    offset: int
    nbytes: int
    crc32: int
    tensors: List[TensorInfo]
    labels: str = ""
    meta: Dict[str, str] = field(default_factory=dict)

    def to_entries(self) -> Dict[str, str]:
        entries = {"offset": str(self.offset), "nbytes": str(self.nbytes), "crc32": f"{self.crc32:08x}"}
        entries.update({f"tensor.{t.name}": t.to_text() for t in self.tensors})
        entries["labels"] = self.labels
        entries.update({f"meta.{key}": value for key, value in self.meta.items()})
        return entries

    @classmethod
    def from_section(cls, section: ManifestSection) -> "RecordInfo":
        try:
            offset, nbytes, checksum = int(section["offset"]), int(section["nbytes"]), int(section["crc32"], 16)
        except ValueError:
            raise DatasetError(f"[{section.name}] has malformed offset, size or checksum") from None
        tensors, meta = [], {}
        for key, value in section.entries.items():
            if key.startswith("tensor."):
                tensors.append(TensorInfo.from_text(key[len("tensor."):], value))
            elif key.startswith("meta."):
                meta[key[len("meta."):]] = value
        for info in tensors:
            if info.offset < 0 or info.offset + info.nbytes > nbytes:
                raise DatasetError(f"tensor {info.name} of [{section.name}] lies outside its record")
        return cls(section.name, offset, nbytes, checksum, tensors, section.get("labels", ""), meta)


def _pack(tensors: Mapping[str, np.ndarray]) -> Tuple[bytes, List[TensorInfo]]:
    chunks, infos, offset = [], [], 0
    for name, array in tensors.items():
        array = np.asarray(array)
        code = _dtype_code(array)
        data = np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes()
        infos.append(TensorInfo(name, code, tuple(array.shape), offset))
        chunks.append(data)
        offset += len(data)
    return b"".join(chunks), infos


class DatasetWriter:
    """
    Append-only writer. Records are streamed to the blob; the manifest is
    written on close.

    Example:
        >>> with DatasetWriter("out/ds", config={"seed": 1}) as writer:
        ...     writer.add_record({"hist": hist, "spc": spc}, labels="4:1,1,5,5")
        ...     writer.set_split(train=[0], val=[], test=[])
    """

    def __init__(self, path: Union[str, Path], config: Optional[Mapping[str, Any]] = None,
                 palette: np.ndarray = DEFAULT_PALETTE):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self._config = dict(config or {})
        self._palette = palette
        self._records: List[RecordInfo] = []
        self._extras: List[RecordInfo] = []
        self._split: Dict[str, List[int]] = {"train": [], "val": [], "test": []}
        self._offset = 0
        self._blob = open(self.path / BLOB_NAME, "wb")
        self._closed = False

    def _append(self, name: str, tensors: Mapping[str, np.ndarray], labels: str,
                meta: Optional[Mapping[str, Any]]) -> RecordInfo:
        if self._closed:
            raise DatasetError(f"writer for {self.path} is closed")
        data, infos = _pack(tensors)
        record = RecordInfo(name, self._offset, len(data), crc32(data), infos, labels,
                            {key: str(value) for key, value in (meta or {}).items()})
        self._blob.write(data)
        self._offset += len(data)
        return record

    def add_record(self, tensors: Mapping[str, np.ndarray], labels: Union[str, Sequence[LabelBox]] = "",
                   meta: Optional[Mapping[str, Any]] = None) -> int:
        """Append a frame and return its id."""
        if not isinstance(labels, str):
            labels = ";".join(box.to_text() for box in labels)
        index = len(self._records)
        self._records.append(self._append(f"record {index}", tensors, labels, meta))
        return index

    def add_extra(self, name: str, tensors: Mapping[str, np.ndarray],
                  meta: Optional[Mapping[str, Any]] = None) -> None:
        """Append a named non-frame record such as the calibration frame."""
        self._extras.append(self._append(f"extra {name}", tensors, "", meta))

    def set_split(self, train: Sequence[int] = (), val: Sequence[int] = (), test: Sequence[int] = ()) -> None:
        self._split = {"train": list(train), "val": list(val), "test": list(test)}

    def _manifest(self) -> Manifest:
        header = {
            "format": FORMAT_NAME,
            "version": str(FORMAT_VERSION),
            "n_frames": str(len(self._records)),
            "blob_bytes": str(self._offset),
            "palette": " ".join(":".join(str(int(c)) for c in rgb) for rgb in self._palette),
        }
        header.update({f"config.{key}": _config_text(value) for key, value in sorted(self._config.items())})
        manifest = Manifest(header)
        manifest.add_section("split", {name: _format_ids(ids) for name, ids in self._split.items()})
        for record in self._records + self._extras:
            manifest.add_section(record.name, record.to_entries())
        return manifest

    def close(self) -> None:
        if self._closed:
            return
        self._blob.close()
        n = len(self._records)
        for name, ids in self._split.items():
            bad = [i for i in ids if not 0 <= i < n]
            if bad:
                raise DatasetError(f"{name} split refers to missing frames {bad}")
        (self.path / MANIFEST_NAME).write_text(format_manifest(self._manifest()), encoding="utf-8")
        self._closed = True
        logger.debug("Closed dataset %s with %d records", self.path, n)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        del exc_value, traceback
        if exc_type is None:
            self.close()
        else:
            self._blob.close()
            self._closed = True
        return False


def _config_text(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(_config_text(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


class Dataset:
    """
    Read-only view of a dataset directory. Record checksums are verified
    each time a record is decoded.
    """

    def __init__(self, path: Union[str, Path], manifest: Manifest, blob: bytes):
        self.path = Path(path)
        self.manifest = manifest
        self._blob = blob
        header = manifest.header
        self.records: List[RecordInfo] = []
        self.extras: Dict[str, RecordInfo] = {}
        for suffix, section in manifest.iter_prefixed("record"):
            self.records.append(RecordInfo.from_section(section))
        for suffix, section in manifest.iter_prefixed("extra"):
            self.extras[suffix] = RecordInfo.from_section(section)
        try:
            declared = int(header.get("n_frames", "-1"))
        except ValueError:
            raise DatasetError(f"{self.path}: malformed n_frames") from None
        if declared != len(self.records):
            raise DatasetError(f"{self.path}: manifest declares {declared} frames but holds {len(self.records)}")
        split = manifest.section("split") if manifest.has_section("split") else ManifestSection("split")
        self.split = {name: _parse_ids(split.get(name, "")) for name in ("train", "val", "test")}
        for record in self.records + list(self.extras.values()):
            if record.offset + record.nbytes > len(blob):
                raise TruncatedBlobError(
                    f"{self.path}: [{record.name}] ends at byte {record.offset + record.nbytes}, "
                    f"blob has {len(blob)}"
                )

    @property
    def config(self) -> Dict[str, str]:
        return {key[len("config."):]: value for key, value in self.manifest.header.items()
                if key.startswith("config.")}

    @property
    def palette(self) -> np.ndarray:
        text = self.manifest.header.get("palette")
        if not text:
            return DEFAULT_PALETTE
        return np.array([[int(c) for c in rgb.split(":")] for rgb in text.split()], dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.records)

    def _decode(self, record: RecordInfo) -> Dict[str, np.ndarray]:
        data = self._blob[record.offset:record.offset + record.nbytes]
        actual = crc32(data)
        if actual != record.crc32:
            raise ChecksumError(record.name, record.crc32, actual)
        tensors = {}
        for info in record.tensors:
            chunk = data[info.offset:info.offset + info.nbytes]
            tensors[info.name] = np.frombuffer(chunk, dtype=DTYPES[info.dtype]).reshape(info.shape).copy()
        return tensors

    def tensors(self, index: int) -> Dict[str, np.ndarray]:
        if not 0 <= index < len(self.records):
            raise DatasetError(f"frame {index} out of range for {len(self.records)} frames")
        return self._decode(self.records[index])

    def labels(self, index: int) -> Tuple[LabelBox, ...]:
        return labels_from_text(self.records[index].labels)

    def meta(self, index: int) -> Dict[str, str]:
        return dict(self.records[index].meta)

    def example(self, index: int) -> Example:
        return Example(self.tensors(index), self.labels(index), self.meta(index))

    def extra(self, name: str) -> Dict[str, np.ndarray]:
        try:
            return self._decode(self.extras[name])
        except KeyError:
            raise DatasetError(f"{self.path} has no extra record {name!r}") from None

    def has_extra(self, name: str) -> bool:
        return name in self.extras

    def __iter__(self) -> Iterator[Example]:
        for index in range(len(self.records)):
            yield self.example(index)

    def verify(self) -> None:
        """Decode every record, raising ChecksumError on the first mismatch."""
        for record in self.records + list(self.extras.values()):
            self._decode(record)


def read_dataset(path: Union[str, Path], verify: bool = False) -> Dataset:
    """
    Open a dataset directory.

    Raises:
        VersionMismatchError: for another format or version.
        TruncatedBlobError: if records point past the end of the blob.
        ChecksumError: with ``verify=True``, for a corrupted record.
    """
    path = Path(path)
    try:
        manifest = parse_manifest((path / MANIFEST_NAME).read_text(encoding="utf-8"))
        blob = (path / BLOB_NAME).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from None
    fmt, version = manifest.header.get("format"), manifest.header.get("version")
    if fmt != FORMAT_NAME or version != str(FORMAT_VERSION):
        raise VersionMismatchError(
            f"{path}: expected {FORMAT_NAME} version {FORMAT_VERSION}, found {fmt} version {version}"
        )
    dataset = Dataset(path, manifest, blob)
    if verify:
        dataset.verify()
    return dataset


def write_dataset(path: Union[str, Path], examples: Sequence[Example],
                  split: Optional[Mapping[str, Sequence[int]]] = None,
                  config: Optional[Mapping[str, Any]] = None,
                  extras: Optional[Mapping[str, Mapping[str, np.ndarray]]] = None) -> Path:
    """Write a list of examples in one go."""
    with DatasetWriter(path, config=config) as writer:
        for name, tensors in (extras or {}).items():
            writer.add_extra(name, tensors)
        for example in examples:
            writer.add_record(example.tensors, example.labels, example.meta)
        if split is not None:
            writer.set_split(**split)
    return Path(path)


__all__ = [
    "FORMAT_VERSION",
    "TensorInfo",
    "RecordInfo",
    "DatasetWriter",
    "Dataset",
    "read_dataset",
    "write_dataset",
    "crc32",
]
