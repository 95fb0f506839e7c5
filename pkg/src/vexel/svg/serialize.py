"""Serializer for :class:`~vexel.svg.model.Document`."""
from __future__ import annotations

import math
from xml.sax.saxutils import quoteattr

from vexel.svg.model import BLACK, SHAPE_FIELDS, Document, Element, ElementKind, PathCommand

SVG_NS = "http://www.w3.org/2000/svg"


def fmt_num(x: float) -> str:
    if x == 0:
        return "0"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _rel(cur: float, target: float) -> str | None:
    """Shortest decimal delta d with ``cur + float(d) == target``, if any."""
    delta = target - cur
    for places in range(0, 13):
        d = round(delta, places)
        if cur + d == target:
            return fmt_num(d)
    d = delta
    for _ in range(4):
        for cand in (d, math.nextafter(d, math.inf), math.nextafter(d, -math.inf)):
            if cur + cand == target:
                return fmt_num(cand)
        d = math.nextafter(d, math.inf if cur + d < target else -math.inf)
    return None


def path_data(commands: tuple[PathCommand, ...], coords: str = "absolute") -> str:
    if coords not in ("absolute", "relative"):
        raise ValueError(f"coords must be 'absolute' or 'relative', not {coords!r}")
    parts = []
    cx = cy = 0.0
    sx = sy = 0.0
    for c in commands:
        k, a = c.kind, c.args
        if coords == "absolute":
            if k == "A":
                nums = [fmt_num(v) for v in a[:3]] + [str(int(a[3])), str(int(a[4]))] + [fmt_num(v) for v in a[5:]]
            else:
                nums = [fmt_num(v) for v in a]
            parts.append(k + " ".join(nums))
        else:
            if k == "Z":
                nums = []
            elif k == "H":
                nums = [_rel(cx, a[0])]
            elif k == "V":
                nums = [_rel(cy, a[0])]
            elif k == "A":
                nums = [fmt_num(v) for v in a[:3]] + [str(int(a[3])), str(int(a[4]))]
                nums += [_rel(cx, a[5]), _rel(cy, a[6])]
            else:
                nums = [_rel(cx if i % 2 == 0 else cy, v) for i, v in enumerate(a)]
            absolute = path_data((c,), "absolute")
            rel = None if None in nums else k.lower() + " ".join(nums)
            # absolute wins when no exact delta exists or it is shorter
            parts.append(absolute if rel is None or len(absolute) < len(rel) else rel)
        if k == "Z":
            cx, cy = sx, sy
        elif k == "H":
            cx = a[0]
        elif k == "V":
            cy = a[0]
        else:
            cx, cy = a[-2], a[-1]
            if k == "M":
                sx, sy = cx, cy
    return " ".join(parts)


def _attrs(pairs) -> str:
    return "".join(f" {k}={quoteattr(v)}" for k, v in pairs)


def _element(el: Element, coords: str, in_defs: bool, out: list[str]):
    pairs: list[tuple[str, str]] = []
    if el.id:
        pairs.append(("id", el.id))
    k = el.kind
    if k == ElementKind.GROUP:
        if el.opacity != 1:
            pairs.append(("opacity", fmt_num(el.opacity)))
        out.append(f"<g{_attrs(pairs)}>")
        for child in el.children:
            _element(child, coords, in_defs, out)
        out.append("</g>")
        return
    if k == ElementKind.USE:
        pairs.append(("href", "#" + el.href))
        for name, v in zip(("x", "y"), el.params):
            if v != 0:
                pairs.append((name, fmt_num(v)))
    elif k == ElementKind.PATH:
        pairs.append(("d", path_data(el.commands, coords)))
    elif k in (ElementKind.POLYGON, ElementKind.POLYLINE):
        pairs.append(("points", " ".join(fmt_num(v) for v in el.params)))
    else:
        for name, v in zip(SHAPE_FIELDS[k], el.params):
            if k == ElementKind.RECT and name in ("rx", "ry") and v == 0:
                continue
            pairs.append((name, fmt_num(v)))
    if el.fill is not None and (el.fill != BLACK or in_defs):
        pairs.append(("fill", el.fill.hex))
    if el.opacity != 1:
        pairs.append(("opacity", fmt_num(el.opacity)))
    out.append(f"<{k.value}{_attrs(pairs)}/>")


def serialize_svg(doc: Document, coords: str = "absolute") -> str:
    """Render ``doc`` as SVG text.

    ``coords="relative"`` writes lowercase path commands with deltas chosen so
    that re-parsing reproduces the absolute coordinates exactly.
    """
    if doc.viewbox is None:
        vb = f"0 0 {doc.canvas} {doc.canvas}"
    else:
        vb = " ".join(fmt_num(v) for v in doc.viewbox)
    head = f'<svg xmlns="{SVG_NS}" viewBox="{vb}"'
    body: list[str] = []
    if doc.defs:
        body.append("<defs>")
        seen = set()
        for def_id, el in doc.defs:
            # nested ids are registered too; emit only outermost definitions
            if any(x is el for _, top in doc.defs if top is not el for x in top.iter_tree()):
                continue
            if def_id in seen:
                continue
            seen.add(def_id)
            _element(el, coords, True, body)
        body.append("</defs>")
    for el in doc.elements:
        _element(el, coords, False, body)
    if not body:
        return head + "/>"
    return head + ">" + "".join(body) + "</svg>"
