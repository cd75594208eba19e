"""
Evaluation reports: fixed-width text tables and key-value summary files.
"""

import math
from pathlib import Path
from typing import Any, Dict, Mapping, Sequence, Tuple, Union

from ..errors import DatasetError
from .manifest import Manifest, format_manifest, parse_manifest

__all__ = [
    "format_metrics_table",
    "format_verdict_grid",
    "format_paired_table",
    "write_summary",
    "read_summary",
]

_VERDICT_MARKS = {"A higher": ">", "no difference": "=", "B higher": "<"}


def _name(class_id: int, names: Sequence[str]) -> str:
    return names[class_id] if class_id < len(names) else str(class_id)


def _pct(value: float) -> str:
    return "   n/a" if math.isnan(value) else f"{value:6.1f}"


def format_metrics_table(report, names: Sequence[str] = ()) -> str:
    """Per-class counts and scores of a MetricsReport, with the pooled row last."""
    header = f"{'class':<12}{'TP':>6}{'FP':>6}{'FN':>6}{'TN':>6}{'acc':>8}{'prec':>8}{'rec':>8}{'F1':>8}"
    lines = [header, "-" * len(header)]
    rows = [(_name(c, names), m) for c, m in report.per_class.items()] + [("all", report.aggregate)]
    for label, m in rows:
        lines.append(f"{label:<12}{m.tp:>6}{m.fp:>6}{m.fn:>6}{m.tn:>6}"
                     f"{m.accuracy:>8.3f}{m.precision:>8.3f}{m.recall:>8.3f}{m.f1:>8.3f}")
    return "\n".join(lines) + "\n"


def format_verdict_grid(results: Mapping[Tuple[str, str], Mapping[int, Any]], names: Sequence[str] = ()) -> str:
    """
    Welch verdicts per class (rows) and kind pair (columns).

    Each cell reads ``A>B``, ``A=B`` or ``A<B`` followed by the p-value.
    """
    pairs = list(results)
    if not pairs:
        return ""
    classes = sorted({c for per_class in results.values() for c in per_class})
    width = max(16, max(len(f"{a} vs {b}") for a, b in pairs) + 2)
    lines = [f"{'class':<12}" + "".join(f"{f'{a} vs {b}':>{width}}" for a, b in pairs)]
    for class_id in classes:
        cells = []
        for pair in pairs:
            result = results[pair].get(class_id)
            if result is None:
                cells.append(f"{'-':>{width}}")
                continue
            mark = _VERDICT_MARKS[result.direction]
            cells.append(f"{f'A{mark}B p={result.p_value:.3f}':>{width}}")
        lines.append(f"{_name(class_id, names):<12}" + "".join(cells))
    return "\n".join(lines) + "\n"


def format_paired_table(rows: Mapping[int, Any], label_a: str, label_b: str, names: Sequence[str] = ()) -> str:
    """Paired detection percentages per class."""
    columns = ("both ok", "both fail", f"only {label_a}", f"only {label_b}")
    width = max(12, max(len(c) for c in columns) + 2)
    lines = [f"{'class':<12}{'n':>6}" + "".join(f"{c:>{width}}" for c in columns)]
    for class_id, row in rows.items():
        values = (row.both_correct, row.both_wrong, row.only_a, row.only_b)
        lines.append(f"{_name(class_id, names):<12}{row.n_instances:>6}"
                     + "".join(f"{_pct(v):>{width}}" for v in values))
    return "\n".join(lines) + "\n"


def _flatten(values: Mapping[str, Any], prefix: str = "") -> Dict[str, str]:
    flat = {}
    for key, value in values.items():
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{prefix}{key}."))
        elif isinstance(value, float):
            flat[prefix + key] = repr(value)
        elif isinstance(value, (list, tuple)):
            flat[prefix + key] = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        else:
            flat[prefix + key] = str(value)
    return flat


def write_summary(path: Union[str, Path], values: Mapping[str, Any]) -> Path:
    """Write nested values as sorted ``key = value`` lines (nested keys dotted)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = _flatten(values)
    path.write_text(format_manifest(Manifest({key: flat[key] for key in sorted(flat)})), encoding="utf-8")
    return path


def read_summary(path: Union[str, Path]) -> Dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read summary {path}: {exc}") from None
    return dict(parse_manifest(text).header)
