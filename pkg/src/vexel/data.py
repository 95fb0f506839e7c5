"""Training manifests: JSON lines of ``{"svg": path, "caption": text}``."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from vexel.errors import ManifestError, VexelError
from vexel.normalize import normalize_document
from vexel.svg.model import Document
from vexel.svg.parse import parse_svg


@dataclass(frozen=True)
class Sample:
    path: Path
    caption: str
    doc: Document


def read_manifest(path: str | Path) -> list[tuple[Path, str]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            item = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        if not isinstance(item, dict) or not isinstance(item.get("svg"), str):
            raise ManifestError(f"{path}:{lineno}: entry needs an 'svg' path")
        svg = Path(item["svg"])
        if not svg.is_absolute():
            svg = path.parent / svg
        entries.append((svg, str(item.get("caption", ""))))
    if not entries:
        raise ManifestError(f"manifest {path} has no entries")
    return entries


def load_samples(path: str | Path, canvas: int = 128) -> list[Sample]:
    """Read and normalize every manifest entry (normalization is idempotent)."""
    samples = []
    for svg, caption in read_manifest(path):
        try:
            text = svg.read_text(encoding="utf-8")
        except OSError as exc:
            raise ManifestError(f"cannot read {svg}: {exc}") from exc
        try:
            doc = normalize_document(parse_svg(text), canvas)
        except VexelError as exc:
            raise ManifestError(f"{svg}: {exc}") from exc
        samples.append(Sample(svg, caption, doc))
    return samples
