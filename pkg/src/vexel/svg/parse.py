"""Strict parser for the supported SVG subset.

Presentation is resolved while parsing: ``class`` rules from ``<style>``,
inline ``style`` declarations and inherited ``fill``/``fill-opacity`` are
folded into each element, so the resulting :class:`Document` only carries
computed values. Structural forms (``<g>``, ``<use>``/``<defs>``, polygon and
friends, H/V/S/T commands) are kept for the normalizer to rewrite.
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass

from vexel.errors import BadAttribute, MalformedXml, UnsupportedElement
from vexel.svg.model import BLACK, Color, Document, Element, ElementKind, PathCommand

NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_SEP_RE = re.compile(r"[\s,]*")
_LENGTH_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(px)?\s*$")

BASIC_COLORS = {
    "black": (0, 0, 0), "silver": (192, 192, 192), "gray": (128, 128, 128),
    "white": (255, 255, 255), "maroon": (128, 0, 0), "red": (255, 0, 0),
    "purple": (128, 0, 128), "fuchsia": (255, 0, 255), "green": (0, 128, 0),
    "lime": (0, 255, 0), "olive": (128, 128, 0), "yellow": (255, 255, 0),
    "navy": (0, 0, 128), "blue": (0, 0, 255), "teal": (0, 128, 128),
    "aqua": (0, 255, 255),
}

SHAPE_TAGS = {"path", "circle", "ellipse", "rect", "line", "polyline", "polygon"}
SKIPPED_TAGS = {"title", "desc", "metadata", "style"}
# Attributes with no effect on a fill-only rendering; accepted silently.
IGNORED_ATTRS = {
    "id", "class", "style", "version", "baseProfile", "preserveAspectRatio",
    "xml:space", "enable-background", "overflow", "stroke-width", "stroke-linecap",
    "stroke-linejoin", "stroke-miterlimit", "stroke-dasharray", "stroke-opacity",
}
PRESENTATION = {"fill", "fill-opacity", "opacity", "stroke", "fill-rule", "transform", "display", "visibility"}
GEOMETRY_ATTRS = {
    "path": {"d"},
    "circle": {"cx", "cy", "r"},
    "ellipse": {"cx", "cy", "rx", "ry"},
    "rect": {"x", "y", "width", "height", "rx", "ry"},
    "line": {"x1", "y1", "x2", "y2"},
    "polyline": {"points"},
    "polygon": {"points"},
    "use": {"href", "x", "y", "width", "height"},
    "g": set(),
    "svg": {"viewBox", "width", "height", "x", "y"},
}

NONE = "none"


def local_name(tag: str) -> str:
    if tag.startswith("{"):
        tag = tag.split("}", 1)[1]
    return tag


def parse_color(value: str, element: str, attr: str = "fill") -> Color | str:
    """Parse a paint value; returns ``"none"`` for the none keyword."""
    v = value.strip().lower()
    if v == NONE:
        return NONE
    if v in BASIC_COLORS:
        return Color.from_bytes(*BASIC_COLORS[v])
    if v.startswith("#"):
        h = v[1:]
        if re.fullmatch(r"[0-9a-f]{3}", h):
            return Color.from_bytes(*(int(c * 2, 16) for c in h))
        if re.fullmatch(r"[0-9a-f]{6}", h):
            return Color.from_bytes(int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16))
    m = re.fullmatch(r"rgb\(([^)]*)\)", v)
    if m:
        parts = [p.strip() for p in m.group(1).split(",")]
        if len(parts) == 3:
            chans = []
            for p in parts:
                if p.endswith("%"):
                    num = float(p[:-1]) / 100.0
                else:
                    num = float(p) / 255.0
                chans.append(min(max(num, 0.0), 1.0))
            return Color.quantized(*chans)
    raise BadAttribute(element, attr, f"unsupported color {value!r}")


def parse_length(value: str, element: str, attr: str) -> float:
    m = _LENGTH_RE.match(value)
    if not m:
        raise BadAttribute(element, attr, f"not a number: {value!r}")
    return float(m.group(1))


def parse_numbers(text: str) -> list[float]:
    return [float(t) for t in NUMBER_RE.findall(text)]


class _PathScanner:
    def __init__(self, d: str):
        self.d = d
        self.pos = 0

    def skip(self):
        self.pos = _SEP_RE.match(self.d, self.pos).end()

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.d)

    def peek_command(self) -> str | None:
        self.skip()
        if self.pos < len(self.d) and self.d[self.pos] in "MmZzLlHhVvCcSsQqTtAa":
            return self.d[self.pos]
        return None

    def number(self) -> float:
        self.skip()
        m = NUMBER_RE.match(self.d, self.pos)
        if not m:
            raise ValueError(f"expected number at offset {self.pos}")
        self.pos = m.end()
        return float(m.group(0))

    def flag(self) -> int:
        self.skip()
        if self.pos < len(self.d) and self.d[self.pos] in "01":
            self.pos += 1
            return int(self.d[self.pos - 1])
        raise ValueError(f"expected arc flag at offset {self.pos}")


def parse_path_data(d: str, element: str = "path") -> tuple[PathCommand, ...]:
    """Parse a ``d`` attribute into absolute commands (H/V/S/T kept as-is)."""
    sc = _PathScanner(d)
    out: list[PathCommand] = []
    cx = cy = 0.0
    sx = sy = 0.0
    cmd: str | None = None
    try:
        while not sc.at_end():
            c = sc.peek_command()
            if c is not None:
                sc.pos += 1
                cmd = c
            elif cmd is None or cmd in "Zz":
                raise ValueError(f"expected command at offset {sc.pos}")
            elif cmd == "M":
                cmd = "L"
            elif cmd == "m":
                cmd = "l"
            if not out and cmd not in "Mm":
                raise ValueError("path data must start with M")
            rel = cmd.islower()
            up = cmd.upper()
            ox, oy = (cx, cy) if rel else (0.0, 0.0)
            if up == "Z":
                out.append(PathCommand("Z"))
                cx, cy = sx, sy
                continue
            if up in "ML":
                x, y = sc.number() + ox, sc.number() + oy
                out.append(PathCommand(up, (x, y)))
                cx, cy = x, y
                if up == "M":
                    sx, sy = x, y
            elif up == "H":
                x = sc.number() + ox
                out.append(PathCommand("H", (x,)))
                cx = x
            elif up == "V":
                y = sc.number() + (oy if rel else 0.0)
                out.append(PathCommand("V", (y,)))
                cy = y
            elif up in "CSQT":
                n = {"C": 3, "S": 2, "Q": 2, "T": 1}[up]
                pts: list[float] = []
                for _ in range(n):
                    pts += [sc.number() + ox, sc.number() + oy]
                out.append(PathCommand(up, tuple(pts)))
                cx, cy = pts[-2], pts[-1]
            elif up == "A":
                rx, ry, rot = sc.number(), sc.number(), sc.number()
                fa, fs = sc.flag(), sc.flag()
                x, y = sc.number() + ox, sc.number() + oy
                if rx < 0 or ry < 0:
                    rx, ry = abs(rx), abs(ry)
                out.append(PathCommand("A", (rx, ry, rot, float(fa), float(fs), x, y)))
                cx, cy = x, y
    except ValueError as exc:
        raise BadAttribute(element, "d", str(exc)) from None
    return tuple(out)


@dataclass(frozen=True)
class _Context:
    fill: Color | str | None  # "none", a Color, or None (unset, inside defs)
    fill_opacity: float


def _parse_style_rules(text: str) -> dict[str, dict[str, str]]:
    rules: dict[str, dict[str, str]] = {}
    text = re.sub(r"/\*.*?\*/", "", text, flags=re.S)
    for selectors, body in re.findall(r"([^{}]+)\{([^}]*)\}", text):
        decls = _parse_declarations(body)
        for sel in selectors.split(","):
            sel = sel.strip()
            if not re.fullmatch(r"\.[A-Za-z_][\w-]*", sel):
                raise BadAttribute("style", sel, "only class selectors are supported")
            rules.setdefault(sel[1:], {}).update(decls)
    return rules


def _parse_declarations(body: str) -> dict[str, str]:
    decls = {}
    for part in body.split(";"):
        if ":" in part:
            k, v = part.split(":", 1)
            decls[k.strip()] = v.strip()
    return decls


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.extras: Counter[str] = Counter()
        self.warnings: list[str] = []
        self.rules: dict[str, dict[str, str]] = {}
        self.defs: list[tuple[str, Element]] = []

    def run(self) -> Document:
        if self.text.lstrip().startswith("<?xml"):
            self.extras["xml-declaration"] += 1
        if "<!DOCTYPE" in self.text:
            self.extras["doctype"] += 1
        try:
            builder = ET.TreeBuilder(insert_comments=True, insert_pis=True)
            parser = ET.XMLParser(target=builder)
            parser.feed(self.text)
            root = parser.close()
        except ET.ParseError as exc:
            raise MalformedXml(str(exc)) from None
        if not isinstance(root.tag, str) or local_name(root.tag) != "svg":
            raise MalformedXml("root element must be <svg>")
        for node in root.iter():
            if isinstance(node.tag, str) and local_name(node.tag) == "style":
                self.rules.update(_parse_style_rules(node.text or ""))
        canvas, viewbox = self._canvas(root)
        props = self._props(root, "svg")
        if props.get("opacity") not in (None, "1"):
            raise BadAttribute("svg", "opacity", "root opacity is not supported")
        ctx = self._child_context(_Context(BLACK, 1.0), props, "svg")
        elements = self._children(root, ctx, in_defs=False)
        return Document(
            canvas=canvas,
            elements=tuple(elements),
            viewbox=viewbox,
            defs=tuple(self.defs),
            extras=tuple(sorted(self.extras.items())),
            warnings=tuple(self.warnings),
            source_bytes=len(self.text.encode("utf-8")),
        )

    def _canvas(self, root) -> tuple[int, tuple[float, float, float, float] | None]:
        vb = root.get("viewBox")
        if vb is not None:
            nums = parse_numbers(vb)
            if len(nums) != 4 or nums[2] <= 0 or nums[3] <= 0:
                raise BadAttribute("svg", "viewBox", f"invalid viewBox {vb!r}")
            x, y, w, h = nums
        else:
            if root.get("width") is None or root.get("height") is None:
                raise BadAttribute("svg", "viewBox", "missing viewBox and width/height")
            x = y = 0.0
            w = parse_length(root.get("width"), "svg", "width")
            h = parse_length(root.get("height"), "svg", "height")
            if w <= 0 or h <= 0:
                raise BadAttribute("svg", "width", "canvas must be positive")
        if x == 0 and y == 0 and w == h and float(w).is_integer():
            return int(w), None
        return max(1, int(round(max(w, h)))), (x, y, w, h)

    def _props(self, node, tag: str) -> dict[str, str]:
        """Cascade: presentation attributes < class rules < inline style."""
        props: dict[str, str] = {}
        for key, value in node.attrib.items():
            name = local_name(key)
            if key.startswith("{http://www.w3.org/1999/xlink}"):
                name = name if name == "href" else "xlink:" + name
            if name in PRESENTATION:
                props[name] = value
            elif name in GEOMETRY_ATTRS.get(tag, ()):
                continue
            elif name in IGNORED_ATTRS or key.startswith("{") or name.startswith(("data-", "aria-", "xmlns")):
                continue
            else:
                self.warnings.append(f"<{tag}> ignored attribute {name!r}")
        for cls in (node.get("class") or "").split():
            props.update(self.rules.get(cls, {}))
        if node.get("style"):
            props.update(_parse_declarations(node.get("style")))
        for name in list(props):
            if name not in PRESENTATION and name not in IGNORED_ATTRS:
                self.warnings.append(f"<{tag}> ignored style property {name!r}")
                del props[name]
        if props.get("transform"):
            raise BadAttribute(tag, "transform", "transforms are not supported")
        stroke = props.get("stroke")
        if stroke is not None and stroke.strip().lower() != NONE:
            raise BadAttribute(tag, "stroke", "strokes are not supported")
        if props.get("fill-rule", "nonzero").strip() != "nonzero":
            raise BadAttribute(tag, "fill-rule", "only nonzero is supported")
        vis = props.get("visibility", "visible").strip()
        if vis != "visible":
            raise BadAttribute(tag, "visibility", f"unsupported value {vis!r}")
        return props

    def _opacity(self, props, tag, name) -> float:
        if name not in props:
            return 1.0
        try:
            v = float(props[name])
        except ValueError:
            raise BadAttribute(tag, name, f"not a number: {props[name]!r}") from None
        return min(max(v, 0.0), 1.0)

    def _child_context(self, ctx: _Context, props, tag) -> _Context:
        fill = ctx.fill
        if "fill" in props:
            fill = parse_color(props["fill"], tag)
        fill_opacity = ctx.fill_opacity
        if "fill-opacity" in props:
            fill_opacity = self._opacity(props, tag, "fill-opacity")
        return _Context(fill, fill_opacity)

    def _own_opacity(self, props, tag) -> float:
        op = self._opacity(props, tag, "opacity")
        if props.get("display", "").strip() == NONE:
            op = 0.0
        return op

    def _children(self, node, ctx: _Context, in_defs: bool) -> list[Element]:
        out = []
        for child in node:
            if not isinstance(child.tag, str):
                kind = "comment" if child.tag is ET.Comment else "processing-instruction"
                self.extras[kind] += 1
                continue
            el = self._element(child, ctx, in_defs)
            if el is not None:
                out.append(el)
        return out

    def _element(self, node, ctx: _Context, in_defs: bool) -> Element | None:
        tag = local_name(node.tag)
        if tag in SKIPPED_TAGS:
            self.extras[tag] += 1
            return None
        if tag == "defs":
            self.extras["defs"] += 1
            for child in self._children(node, _Context(None, 1.0), in_defs=True):
                self._register(child)
            return None
        if tag not in SHAPE_TAGS and tag not in ("g", "use"):
            raise UnsupportedElement(tag)
        props = self._props(node, tag)
        sub = self._child_context(ctx, props, tag)
        opacity = self._own_opacity(props, tag)
        el_id = node.get("id")
        if tag == "g":
            children = self._children(node, sub, in_defs)
            return Element(ElementKind.GROUP, children=tuple(children), fill=None, opacity=opacity, id=el_id)
        if tag == "use":
            href = None
            for key, value in node.attrib.items():
                if local_name(key) == "href":
                    href = value
            if not href or not href.startswith("#"):
                raise BadAttribute("use", "href", "expected a local #id reference")
            x = parse_length(node.get("x", "0"), tag, "x")
            y = parse_length(node.get("y", "0"), tag, "y")
            if sub.fill == NONE:
                raise BadAttribute("use", "fill", "fill none is not supported on <use>")
            fill = sub.fill
            return Element(ElementKind.USE, params=(x, y), fill=fill,
                           opacity=opacity * sub.fill_opacity, id=el_id, href=href[1:])
        # leaf shape
        fill = sub.fill
        if fill == NONE:
            fill, opacity = BLACK, 0.0
        elif fill is None and not in_defs:
            fill = BLACK
        opacity *= sub.fill_opacity
        kind = ElementKind(tag)
        common = dict(fill=fill, opacity=opacity, id=el_id)
        if tag == "path":
            return Element(kind, commands=parse_path_data(node.get("d", ""), tag), **common)
        if tag in ("polyline", "polygon"):
            pts = parse_numbers(node.get("points", ""))
            if len(pts) % 2:
                raise BadAttribute(tag, "points", "odd number of coordinates")
            return Element(kind, params=tuple(pts), **common)
        return Element(kind, params=self._shape_params(node, tag), **common)

    def _shape_params(self, node, tag) -> tuple[float, ...]:
        def num(name, default=0.0):
            v = node.get(name)
            return default if v is None else parse_length(v, tag, name)

        if tag == "circle":
            r = num("r")
            if r < 0:
                raise BadAttribute(tag, "r", "negative radius")
            return (num("cx"), num("cy"), r)
        if tag == "ellipse":
            rx, ry = num("rx"), num("ry")
            if rx < 0 or ry < 0:
                raise BadAttribute(tag, "rx", "negative radius")
            return (num("cx"), num("cy"), rx, ry)
        if tag == "rect":
            w, h = num("width"), num("height")
            if w < 0 or h < 0:
                raise BadAttribute(tag, "width", "negative size")
            rx = node.get("rx")
            ry = node.get("ry")
            rxv = parse_length(rx, tag, "rx") if rx is not None else None
            ryv = parse_length(ry, tag, "ry") if ry is not None else None
            if rxv is None:
                rxv = ryv if ryv is not None else 0.0
            if ryv is None:
                ryv = rxv
            if rxv < 0 or ryv < 0:
                raise BadAttribute(tag, "rx", "negative corner radius")
            rxv, ryv = min(rxv, w / 2), min(ryv, h / 2)
            return (num("x"), num("y"), rxv, ryv, w, h)
        if tag == "line":
            return (num("x1"), num("y1"), num("x2"), num("y2"))
        raise UnsupportedElement(tag)

    def _register(self, el: Element):
        for node in el.iter_tree():
            if node.id:
                self.defs.append((node.id, node))


def parse_svg(text: str | bytes) -> Document:
    """Parse SVG source text into a :class:`Document`.

    Raises :class:`MalformedXml`, :class:`UnsupportedElement` or
    :class:`BadAttribute`; attributes that cannot affect a fill-only
    rendering are ignored and listed in ``Document.warnings``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).run()
