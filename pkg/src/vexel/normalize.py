"""Lossless cleaning and canonicalization of in-grammar SVG documents.

Stage order is fixed: :func:`clean` -> :func:`reshape_primitives` ->
:func:`resize_canvas` -> :func:`quantize_precision`. Only the last stage is
lossy, and only by sub-pixel coordinate rounding.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from vexel.errors import UnresolvableReference
from vexel.svg.geometry import (
    canonical_subpaths,
    expand_path,
    outline_area,
    shape_to_path,
    transform_element,
    translate_element,
)
from vexel.svg.model import BLACK, Document, Element, ElementKind, PathCommand
from vexel.svg.parse import parse_svg
from vexel.svg.serialize import serialize_svg

ZERO_AREA_EPS = 1e-6
DEFAULT_CANVAS = 128
DEFAULT_PRECISION = 2
OPACITY_PLACES = 4


def _find(doc: Document, ref: str) -> Element:
    for def_id, el in doc.defs:
        if def_id == ref:
            return el
    for el in doc.iter_elements():
        if el.id == ref:
            return el
    raise UnresolvableReference(ref)


def _leaves(doc: Document, el: Element, mult: float, paint, depth=0):
    if depth > 32:
        raise UnresolvableReference(el.href or "?")
    if el.kind == ElementKind.GROUP:
        m = mult * el.opacity
        for child in el.children:
            yield from _leaves(doc, child, m, paint, depth)
    elif el.kind == ElementKind.USE:
        # one inlined copy per use site
        target = translate_element(_find(doc, el.href), el.params[0], el.params[1])
        inner = el.fill if el.fill is not None else paint
        yield from _leaves(doc, target, mult * el.opacity, inner, depth + 1)
    else:
        fill = el.fill if el.fill is not None else (paint if paint is not None else BLACK)
        yield el.with_(fill=fill, opacity=el.opacity * mult, id=None)


def _canvas_extent(doc: Document) -> float:
    return doc.canvas if doc.viewbox is None else max(doc.viewbox[2], doc.viewbox[3])


def is_invisible(el: Element, scale: float = 1.0) -> bool:
    """Opacity zero, or outline area below ``ZERO_AREA_EPS`` after scaling."""
    return el.opacity == 0 or outline_area(el) * scale * scale < ZERO_AREA_EPS


def clean(doc: Document | str, target: int = DEFAULT_CANVAS) -> Document:
    """Drop non-rendering content and flatten structure.

    Accepts a parsed document or raw SVG text. XML declarations, comments,
    title/desc/metadata and style blocks never reach the document model; this
    pass inlines ``<use>`` references, flattens groups (group opacity
    multiplies into children), drops ids and definitions, and removes
    elements that are fully transparent or have zero area at the target
    canvas scale.
    """
    if isinstance(doc, str):
        doc = parse_svg(doc)
    scale = target / _canvas_extent(doc)
    kept = []
    for top in doc.elements:
        for leaf in _leaves(doc, top, 1.0, None):
            if not is_invisible(leaf, scale):
                kept.append(leaf)
    return Document(canvas=doc.canvas, elements=tuple(kept), viewbox=doc.viewbox)


def reshape_primitives(doc: Document) -> Document:
    """Rewrite line/polyline/polygon as paths and H/V/S/T as L/C/Q."""
    out = []
    for el in doc.elements:
        el = shape_to_path(el)
        if el.kind == ElementKind.PATH:
            cmds = canonical_subpaths(expand_path(el.commands))
            if not cmds:
                continue
            el = el.with_(commands=cmds)
        out.append(el)
    return doc.with_(elements=tuple(out))


def resize_canvas(doc: Document, target: int = DEFAULT_CANVAS) -> Document:
    """Scale uniformly onto a ``target`` x ``target`` canvas.

    Non-square viewBoxes are scaled by their longer side and centered.
    """
    if doc.viewbox is None:
        if doc.canvas == target:
            return doc
        s, ox, oy = target / doc.canvas, 0.0, 0.0
    else:
        vx, vy, w, h = doc.viewbox
        m = max(w, h)
        s, ox, oy = target / m, (m - w) / 2.0 - vx, (m - h) / 2.0 - vy
    elements = tuple(transform_element(el, s, ox, oy) for el in doc.elements)
    defs = tuple((i, transform_element(el, s, ox, oy)) for i, el in doc.defs)
    return doc.with_(canvas=target, elements=elements, viewbox=None, defs=defs)


def round_half_away(x: float, places: int) -> float:
    """Decimal rounding of the shortest repr of ``x`` (so 10.005 -> 10.01)."""
    q = Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    r = float(q)
    return 0.0 if r == 0 else r


def _quantize_command(cmd: PathCommand, places: int) -> PathCommand:
    if cmd.kind == "A":
        a = cmd.args
        q = [round_half_away(v, places) for v in a[:3]] + list(a[3:5]) + [round_half_away(v, places) for v in a[5:]]
        return PathCommand("A", tuple(q))
    return PathCommand(cmd.kind, tuple(round_half_away(v, places) for v in cmd.args))


def quantize_precision(doc: Document, places: int = DEFAULT_PRECISION) -> Document:
    """Round coordinates to ``places`` decimals (half away from zero).

    Opacity is rounded to four decimals so stored 32-bit matrices decode
    back to the same document.
    """
    if places < 0:
        raise ValueError("places must be >= 0")
    out = []
    for el in doc.elements:
        if el.kind == ElementKind.PATH:
            cmds = tuple(_quantize_command(c, places) for c in el.commands)
            if all(c.kind in "MLCQAZ" for c in cmds):
                cmds = canonical_subpaths(cmds)
            el = el.with_(commands=cmds)
        else:
            el = el.with_(params=tuple(round_half_away(v, places) for v in el.params))
        out.append(el.with_(opacity=round_half_away(el.opacity, OPACITY_PLACES)))
    return doc.with_(elements=tuple(out))


def normalize_document(doc: Document | str, canvas: int = DEFAULT_CANVAS,
                       precision: int = DEFAULT_PRECISION) -> Document:
    """Run the full pipeline: clean, reshape, resize, quantize."""
    return quantize_precision(resize_canvas(reshape_primitives(clean(doc, canvas)), canvas), precision)


def pipeline_stages(doc: Document | str, canvas: int = DEFAULT_CANVAS,
                    precision: int = DEFAULT_PRECISION) -> dict[str, Document]:
    """Every intermediate document, keyed by stage name (``input`` first)."""
    if isinstance(doc, str):
        doc = parse_svg(doc)
    stages = {"input": doc}
    stages["clean"] = clean(doc, canvas)
    stages["reshape"] = reshape_primitives(stages["clean"])
    stages["resize"] = resize_canvas(stages["reshape"], canvas)
    stages["quantize"] = quantize_precision(stages["resize"], precision)
    return stages


def element_counts(doc: Document) -> dict[str, int]:
    counts: Counter[str] = Counter(el.kind.value for el in doc.iter_elements())
    for _, el in doc.defs:
        counts[el.kind.value] += 1
    counts.update(dict(doc.extras))
    return dict(sorted(counts.items()))


def document_bytes(doc: Document) -> int:
    if doc.source_bytes is not None:
        return doc.source_bytes
    return len(serialize_svg(doc, coords="relative").encode("utf-8"))


@dataclass(frozen=True)
class StatsReport:
    before_counts: dict[str, int]
    after_counts: dict[str, int]
    before_bytes: int
    after_bytes: int
    file: str | None = None
    deltas: dict[str, int] = field(init=False)

    def __post_init__(self):
        kinds = sorted(set(self.before_counts) | set(self.after_counts))
        object.__setattr__(self, "deltas", {
            k: self.after_counts.get(k, 0) - self.before_counts.get(k, 0) for k in kinds
        })

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "before": {"counts": self.before_counts, "bytes": self.before_bytes},
            "after": {"counts": self.after_counts, "bytes": self.after_bytes},
        }


def element_stats(before: Document, after: Document, file: str | None = None) -> StatsReport:
    return StatsReport(element_counts(before), element_counts(after),
                       document_bytes(before), document_bytes(after), file)
