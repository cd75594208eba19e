# On-disk formats for SpadVision

"""
Text manifests, the dataset container, PPM images and report files.

Model checkpoints live in :mod:`spadvision.io.checkpoint`, imported on
demand since they depend on the network package.
"""

from .dataset import (
    Dataset,
    DatasetWriter,
    RecordInfo,
    TensorInfo,
    read_dataset,
    write_dataset,
)
from .manifest import Manifest, ManifestSection, format_manifest, parse_manifest
from .ppm import decode_ppm, encode_ppm, read_ppm, write_ppm
from .reports import (
    format_metrics_table,
    format_paired_table,
    format_verdict_grid,
    read_summary,
    write_summary,
)

__all__ = [
    # Key-value manifests
    "Manifest",
    "ManifestSection",
    "parse_manifest",
    "format_manifest",
    # Dataset container
    "Dataset",
    "DatasetWriter",
    "RecordInfo",
    "TensorInfo",
    "read_dataset",
    "write_dataset",
    # Images
    "encode_ppm",
    "decode_ppm",
    "write_ppm",
    "read_ppm",
    # Reports
    "format_metrics_table",
    "format_verdict_grid",
    "format_paired_table",
    "write_summary",
    "read_summary",
]
