"""Geometry helpers shared by the normalizer and the rasterizer."""
from __future__ import annotations

import math

from vexel.svg.model import Element, ElementKind, PathCommand


def expand_path(commands: tuple[PathCommand, ...]) -> tuple[PathCommand, ...]:
    """Rewrite H/V as L and S/T as C/Q with reflected control points."""
    out: list[PathCommand] = []
    cx = cy = 0.0
    sx = sy = 0.0
    prev_kind = None
    prev_ctrl: tuple[float, float] | None = None
    for cmd in commands:
        k, a = cmd.kind, cmd.args
        ctrl = None
        if k == "H":
            cmd = PathCommand("L", (a[0], cy))
        elif k == "V":
            cmd = PathCommand("L", (cx, a[0]))
        elif k == "S":
            if prev_kind in ("C", "S") and prev_ctrl is not None:
                c1 = (2 * cx - prev_ctrl[0], 2 * cy - prev_ctrl[1])
            else:
                c1 = (cx, cy)
            cmd = PathCommand("C", (c1[0], c1[1], a[0], a[1], a[2], a[3]))
            ctrl = (a[0], a[1])
        elif k == "T":
            if prev_kind in ("Q", "T") and prev_ctrl is not None:
                c = (2 * cx - prev_ctrl[0], 2 * cy - prev_ctrl[1])
            else:
                c = (cx, cy)
            cmd = PathCommand("Q", (c[0], c[1], a[0], a[1]))
            ctrl = c
        elif k == "C":
            ctrl = (a[2], a[3])
        elif k == "Q":
            ctrl = (a[0], a[1])
        out.append(cmd)
        if cmd.kind == "Z":
            cx, cy = sx, sy
        else:
            cx, cy = cmd.end
            if cmd.kind == "M":
                sx, sy = cx, cy
        prev_kind, prev_ctrl = k, ctrl
    return tuple(out)


def canonical_subpaths(commands: tuple[PathCommand, ...]) -> tuple[PathCommand, ...]:
    """Make subpath boundaries unambiguous without changing the filled area.

    Every subpath except the first is closed explicitly before the next M,
    empty subpaths are dropped, an M that restates the just-closed subpath's
    start is dropped (drawing after Z already restarts there), and arc
    rotations are reduced to [0, 360).
    """
    cmds = list(commands)
    # drop empty subpaths: M immediately followed by M, or trailing M
    kept = []
    for i, c in enumerate(cmds):
        if c.kind == "M" and (i + 1 == len(cmds) or cmds[i + 1].kind == "M"):
            continue
        kept.append(c)
    out: list[PathCommand] = []
    sx = sy = 0.0
    open_sub = False
    after_close = False
    for c in kept:
        if c.kind == "M":
            if out and open_sub:
                out.append(PathCommand("Z"))
                open_sub = False
                after_close = True
            if out and after_close and c.args == (sx, sy):
                after_close = False
                continue
            sx, sy = c.args
            out.append(c)
            after_close = False
            continue
        if c.kind == "Z":
            out.append(c)
            open_sub = False
            after_close = True
            continue
        if c.kind == "A":
            rot = math.fmod(c.args[2], 360.0)
            if rot < 0:
                rot += 360.0
            if rot == 360.0:
                rot = 0.0
            c = PathCommand("A", (c.args[0], c.args[1], rot) + c.args[3:])
        out.append(c)
        open_sub = True
        after_close = False
    return tuple(out)


def _map_xy(args, s, ox, oy):
    return tuple((v + (ox if i % 2 == 0 else oy)) * s for i, v in enumerate(args))


def transform_command(cmd: PathCommand, s: float, ox: float, oy: float) -> PathCommand:
    k, a = cmd.kind, cmd.args
    if k == "Z":
        return cmd
    if k == "H":
        return PathCommand("H", ((a[0] + ox) * s,))
    if k == "V":
        return PathCommand("V", ((a[0] + oy) * s,))
    if k == "A":
        x, y = _map_xy(a[5:], s, ox, oy)
        return PathCommand("A", (a[0] * s, a[1] * s, a[2], a[3], a[4], x, y))
    return PathCommand(k, _map_xy(a, s, ox, oy))


def transform_element(el: Element, s: float, ox: float = 0.0, oy: float = 0.0) -> Element:
    """Map every point p to ``(p + o) * s``; lengths and radii scale by ``s``.

    The rasterizer and ``resize_canvas`` both go through this function so a
    resized document rasterizes from bit-identical coordinates.
    """
    k, p = el.kind, el.params
    if k == ElementKind.PATH:
        return el.with_(commands=tuple(transform_command(c, s, ox, oy) for c in el.commands))
    if k == ElementKind.CIRCLE:
        params = ((p[0] + ox) * s, (p[1] + oy) * s, p[2] * s)
    elif k == ElementKind.ELLIPSE:
        params = ((p[0] + ox) * s, (p[1] + oy) * s, p[2] * s, p[3] * s)
    elif k == ElementKind.RECT:
        params = ((p[0] + ox) * s, (p[1] + oy) * s, p[2] * s, p[3] * s, p[4] * s, p[5] * s)
    elif k in (ElementKind.LINE, ElementKind.POLYLINE, ElementKind.POLYGON, ElementKind.USE):
        params = _map_xy(p, s, ox, oy) if k != ElementKind.USE else (p[0] * s, p[1] * s)
    else:
        params = p
    children = tuple(transform_element(c, s, ox, oy) for c in el.children)
    return el.with_(params=params, children=children)


def translate_element(el: Element, dx: float, dy: float) -> Element:
    """Translate by (dx, dy) without scaling."""
    if dx == 0 and dy == 0:
        return el
    return transform_element(el, 1.0, dx, dy)


def shape_to_path(el: Element) -> Element:
    """Rewrite polygon/polyline/line as an equivalent path."""
    k, p = el.kind, el.params
    if k == ElementKind.LINE:
        cmds = (PathCommand("M", p[0:2]), PathCommand("L", p[2:4]))
    elif k in (ElementKind.POLYGON, ElementKind.POLYLINE):
        pts = [p[i:i + 2] for i in range(0, len(p), 2)]
        if not pts:
            cmds = ()
        else:
            cmds = (PathCommand("M", pts[0]),) + tuple(PathCommand("L", q) for q in pts[1:])
            if k == ElementKind.POLYGON:
                cmds += (PathCommand("Z"),)
    else:
        return el
    return el.with_(kind=ElementKind.PATH, commands=cmds, params=())


def control_points(el: Element) -> list[tuple[float, float]]:
    """All points defining the element's outline (for bounding boxes)."""
    k, p = el.kind, el.params
    if k == ElementKind.PATH:
        pts = []
        cx = cy = 0.0
        for c in el.commands:
            a = c.args
            if c.kind == "A":
                # the arc can bulge up to max(rx, ry) beyond its chord
                r = max(a[0], a[1])
                ex, ey = a[5], a[6]
                pts += [(min(cx, ex) - r, min(cy, ey) - r), (max(cx, ex) + r, max(cy, ey) + r)]
                cx, cy = ex, ey
            elif c.kind == "H":
                cx = a[0]
                pts.append((cx, cy))
            elif c.kind == "V":
                cy = a[0]
                pts.append((cx, cy))
            elif a:
                pts += [(a[i], a[i + 1]) for i in range(0, len(a), 2)]
                cx, cy = a[-2], a[-1]
        return pts
    if k == ElementKind.CIRCLE:
        return [(p[0] - p[2], p[1] - p[2]), (p[0] + p[2], p[1] + p[2])]
    if k == ElementKind.ELLIPSE:
        return [(p[0] - p[2], p[1] - p[3]), (p[0] + p[2], p[1] + p[3])]
    if k == ElementKind.RECT:
        return [(p[0], p[1]), (p[0] + p[4], p[1] + p[5])]
    if k in (ElementKind.LINE, ElementKind.POLYLINE, ElementKind.POLYGON):
        return [(p[i], p[i + 1]) for i in range(0, len(p), 2)]
    return []


def outline_area(el: Element) -> float:
    """Area bound used for zero-area detection.

    Exact for circle, ellipse and rect; for paths and polygons the
    control-point bounding box area, which is zero exactly when the
    outline is degenerate along an axis.
    """
    k, p = el.kind, el.params
    if k == ElementKind.CIRCLE:
        return math.pi * p[2] ** 2
    if k == ElementKind.ELLIPSE:
        return math.pi * p[2] * p[3]
    if k == ElementKind.RECT:
        return p[4] * p[5]
    if k == ElementKind.LINE:
        return 0.0
    pts = control_points(el)
    if len(pts) < 3 and k != ElementKind.PATH:
        return 0.0
    if not pts:
        return 0.0
    xs = [q[0] for q in pts]
    ys = [q[1] for q in pts]
    return (max(xs) - min(xs)) * (max(ys) - min(ys))
