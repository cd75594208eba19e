"""
Key-value text container shared by dataset manifests, checkpoints,
configuration files and report summaries.

The format is UTF-8 text made of ``key = value`` lines. Lines before the
first ``[section]`` header belong to the header block; every following
header opens a new named block. ``#`` starts a comment line. Section names
may repeat (records are stored as ``[record 0]``, ``[record 1]`` ...), keys
inside one block may not.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple

from ..errors import DatasetError

__all__ = [
    "Manifest",
    "ManifestSection",
    "parse_manifest",
    "format_manifest",
]


@dataclass
class ManifestSection:
    """One ``[name]`` block with its ordered entries."""
    name: str
    entries: Dict[str, str] = field(default_factory=dict)

    def __getitem__(self, key: str) -> str:
        try:
            return self.entries[key]
        except KeyError:
            raise DatasetError(f"Section [{self.name}] has no key {key!r}") from None

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self.entries


@dataclass
class Manifest:
    """Parsed key-value document: a header block plus named sections."""
    header: Dict[str, str] = field(default_factory=dict)
    sections: List[ManifestSection] = field(default_factory=list)

    def add_section(self, name: str, entries: Dict[str, str] = None) -> ManifestSection:
        section = ManifestSection(name, dict(entries or {}))
        self.sections.append(section)
        return section

    def section(self, name: str) -> ManifestSection:
        for section in self.sections:
            if section.name == name:
                return section
        raise DatasetError(f"Missing section [{name}]")

    def has_section(self, name: str) -> bool:
        return any(section.name == name for section in self.sections)

    def iter_prefixed(self, prefix: str) -> Iterator[Tuple[str, ManifestSection]]:
        """Yield ``(suffix, section)`` for every section named ``prefix <suffix>``."""
        marker = prefix + " "
        for section in self.sections:
            if section.name.startswith(marker):
                yield section.name[len(marker):], section


def parse_manifest(text: str) -> Manifest:
    """
    Parse key-value text into a Manifest.

    Raises:
        DatasetError: on malformed lines or duplicate keys within a block.
    """
    manifest = Manifest()
    current = manifest.header
    current_name = "<header>"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = manifest.add_section(line[1:-1].strip())
            current = section.entries
            current_name = section.name
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DatasetError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if not key:
            raise DatasetError(f"line {lineno}: empty key")
        if key in current:
            raise DatasetError(f"line {lineno}: duplicate key {key!r} in [{current_name}]")
        current[key] = value.strip()
    return manifest


def format_manifest(manifest: Manifest) -> str:
    """Render a Manifest back to text; entry order is preserved."""
    lines = [f"{key} = {value}" for key, value in manifest.header.items()]
    for section in manifest.sections:
        if lines:
            lines.append("")
        lines.append(f"[{section.name}]")
        lines.extend(f"{key} = {value}" for key, value in section.entries.items())
    return "\n".join(lines) + "\n"
