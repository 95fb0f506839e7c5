"""Small CPU rasterizer for the supported primitive set.

Elements are flattened to closed polygons in pixel space and filled with the
nonzero winding rule on a 4x4 supersampled grid, then alpha-composited over a
white background in paint order.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vexel.errors import DegenerateArc, DimensionMismatch, UnresolvableReference
from vexel.svg.geometry import expand_path, shape_to_path, transform_element, translate_element
from vexel.svg.model import BLACK, Document, Element, ElementKind

SUPERSAMPLE = 4
DEFAULT_TOL_PX = 0.05
KAPPA = 4.0 * (math.sqrt(2.0) - 1.0) / 3.0
_MAX_DEPTH = 24


@dataclass(frozen=True)
class RasterGrid:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3), channels in [0, 1]

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def _dist_to_chord(p, a, b) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    return abs((p[0] - a[0]) * dy - (p[1] - a[1]) * dx) / norm


def _flatten_cubic(p0, p1, p2, p3, tol, out):
    stack = [(p0, p1, p2, p3, 0)]
    while stack:
        a, b, c, d, depth = stack.pop()
        flat = max(_dist_to_chord(b, a, d), _dist_to_chord(c, a, d))
        if flat < tol or depth >= _MAX_DEPTH:
            out.append(d)
            continue
        ab = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        bc = ((b[0] + c[0]) / 2, (b[1] + c[1]) / 2)
        cd = ((c[0] + d[0]) / 2, (c[1] + d[1]) / 2)
        abc = ((ab[0] + bc[0]) / 2, (ab[1] + bc[1]) / 2)
        bcd = ((bc[0] + cd[0]) / 2, (bc[1] + cd[1]) / 2)
        m = ((abc[0] + bcd[0]) / 2, (abc[1] + bcd[1]) / 2)
        # second half pushed first so the first half is emitted first
        stack.append((m, bcd, cd, d, depth + 1))
        stack.append((a, ab, abc, m, depth + 1))


def _flatten_quad(p0, p1, p2, tol, out):
    stack = [(p0, p1, p2, 0)]
    while stack:
        a, b, c, depth = stack.pop()
        if _dist_to_chord(b, a, c) < tol or depth >= _MAX_DEPTH:
            out.append(c)
            continue
        ab = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        bc = ((b[0] + c[0]) / 2, (b[1] + c[1]) / 2)
        m = ((ab[0] + bc[0]) / 2, (ab[1] + bc[1]) / 2)
        stack.append((m, bc, c, depth + 1))
        stack.append((a, ab, m, depth + 1))


def _angle(ux, uy, vx, vy) -> float:
    return math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)


def arc_to_cubics(x1, y1, rx, ry, phi_deg, large, sweep, x2, y2):
    """Endpoint-parameterized elliptical arc as cubic segments of at most 90 degrees.

    Returns a list of ``(c1, c2, end)`` triples, an empty list when the
    endpoints coincide, or ``None`` when a radius is zero (straight line).
    """
    if x1 == x2 and y1 == y2:
        return []
    if rx == 0 or ry == 0:
        return None
    rx, ry = abs(rx), abs(ry)
    phi = math.radians(phi_deg)
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    dx2, dy2 = (x1 - x2) / 2.0, (y1 - y2) / 2.0
    x1p = cos_p * dx2 + sin_p * dy2
    y1p = -sin_p * dx2 + cos_p * dy2
    lam = (x1p / rx) ** 2 + (y1p / ry) ** 2
    if lam > 1:
        s = math.sqrt(lam)
        rx, ry = rx * s, ry * s
    num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p
    den = rx * rx * y1p * y1p + ry * ry * x1p * x1p
    coef = math.sqrt(max(0.0, num / den)) if den else 0.0
    if bool(large) == bool(sweep):
        coef = -coef
    cxp = coef * rx * y1p / ry
    cyp = -coef * ry * x1p / rx
    cx = cos_p * cxp - sin_p * cyp + (x1 + x2) / 2.0
    cy = sin_p * cxp + cos_p * cyp + (y1 + y2) / 2.0
    ux, uy = (x1p - cxp) / rx, (y1p - cyp) / ry
    vx, vy = (-x1p - cxp) / rx, (-y1p - cyp) / ry
    theta1 = _angle(1.0, 0.0, ux, uy)
    dtheta = _angle(ux, uy, vx, vy)
    if not sweep and dtheta > 0:
        dtheta -= 2 * math.pi
    elif sweep and dtheta < 0:
        dtheta += 2 * math.pi
    n = max(1, int(math.ceil(abs(dtheta) / (math.pi / 2) - 1e-12)))
    step = dtheta / n
    k = 4.0 / 3.0 * math.tan(step / 4.0)

    def point(t):
        ct, st = math.cos(t), math.sin(t)
        return (cx + rx * ct * cos_p - ry * st * sin_p, cy + rx * ct * sin_p + ry * st * cos_p)

    def deriv(t):
        ct, st = math.cos(t), math.sin(t)
        return (-rx * st * cos_p - ry * ct * sin_p, -rx * st * sin_p + ry * ct * cos_p)

    segs = []
    for i in range(n):
        t0 = theta1 + i * step
        t1 = t0 + step
        p0, p3 = point(t0), point(t1)
        d0, d1 = deriv(t0), deriv(t1)
        c1 = (p0[0] + k * d0[0], p0[1] + k * d0[1])
        c2 = (p3[0] - k * d1[0], p3[1] - k * d1[1])
        segs.append((c1, c2, p3))
    segs[-1] = (segs[-1][0], segs[-1][1], (x2, y2))
    return segs


def _ellipse_polygon(cx, cy, rx, ry, tol):
    pts = [(cx + rx, cy)]
    corners = [(cx + rx, cy), (cx, cy + ry), (cx - rx, cy), (cx, cy - ry), (cx + rx, cy)]
    for i in range(4):
        a, d = corners[i], corners[i + 1]
        # tangent directions at quarter points
        ta = [(0, ry), (-rx, 0), (0, -ry), (rx, 0)][i]
        td = [(-rx, 0), (0, -ry), (rx, 0), (0, ry)][i]
        b = (a[0] + KAPPA * ta[0], a[1] + KAPPA * ta[1])
        c = (d[0] - KAPPA * td[0], d[1] - KAPPA * td[1])
        _flatten_cubic(a, b, c, d, tol, pts)
    return np.array(pts[:-1], dtype=np.float64)


def _rect_polygon(x, y, rx, ry, w, h, tol):
    rx, ry = min(rx, w / 2), min(ry, h / 2)
    if rx <= 0 or ry <= 0:
        return np.array([(x, y), (x + w, y), (x + w, y + h), (x, y + h)], dtype=np.float64)
    pts = [(x + rx, y), (x + w - rx, y)]
    _flatten_cubic((x + w - rx, y), (x + w - rx + KAPPA * rx, y), (x + w, y + ry - KAPPA * ry), (x + w, y + ry), tol, pts)
    pts.append((x + w, y + h - ry))
    _flatten_cubic((x + w, y + h - ry), (x + w, y + h - ry + KAPPA * ry), (x + w - rx + KAPPA * rx, y + h),
                   (x + w - rx, y + h), tol, pts)
    pts.append((x + rx, y + h))
    _flatten_cubic((x + rx, y + h), (x + rx - KAPPA * rx, y + h), (x, y + h - ry + KAPPA * ry), (x, y + h - ry), tol, pts)
    pts.append((x, y + ry))
    _flatten_cubic((x, y + ry), (x, y + ry - KAPPA * ry), (x + rx - KAPPA * rx, y), (x + rx, y), tol, pts)
    return np.array(pts[:-1], dtype=np.float64)


def _path_polygons(commands, tol) -> list[np.ndarray]:
    polys: list[np.ndarray] = []
    cur: list[tuple[float, float]] = []
    start = (0.0, 0.0)
    pos = (0.0, 0.0)
    pending = False  # subpath restarted implicitly after Z

    def close():
        if len(cur) >= 2:
            polys.append(np.array(cur, dtype=np.float64))

    for cmd in expand_path(commands):
        k, a = cmd.kind, cmd.args
        if k == "M":
            close()
            pos = start = (a[0], a[1])
            cur = [pos]
            pending = False
            continue
        if k == "Z":
            close()
            pos = start
            cur = [start]
            pending = True
            continue
        pending = False
        if k == "L":
            cur.append((a[0], a[1]))
        elif k == "C":
            _flatten_cubic(pos, (a[0], a[1]), (a[2], a[3]), (a[4], a[5]), tol, cur)
        elif k == "Q":
            _flatten_quad(pos, (a[0], a[1]), (a[2], a[3]), tol, cur)
        elif k == "A":
            segs = arc_to_cubics(pos[0], pos[1], a[0], a[1], a[2], a[3], a[4], a[5], a[6])
            if segs is None:
                warnings.warn(DegenerateArc("zero arc radius drawn as a straight line"), stacklevel=2)
                cur.append((a[5], a[6]))
            else:
                p = pos
                for c1, c2, end in segs:
                    _flatten_cubic(p, c1, c2, end, tol, cur)
                    p = end
        pos = (a[-2], a[-1])
    if not pending:
        close()
    return polys


def flatten(element: Element, tol: float) -> list[np.ndarray]:
    """Flatten a drawable element into closed polygons (arrays of shape (k, 2)).

    ``tol`` is the maximum control-point distance from the chord, in the
    element's own coordinate units.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    el = shape_to_path(element)
    p = el.params
    if el.kind == ElementKind.PATH:
        return _path_polygons(el.commands, tol)
    if el.kind == ElementKind.CIRCLE:
        return [_ellipse_polygon(p[0], p[1], p[2], p[2], tol)] if p[2] > 0 else []
    if el.kind == ElementKind.ELLIPSE:
        return [_ellipse_polygon(p[0], p[1], p[2], p[3], tol)] if p[2] > 0 and p[3] > 0 else []
    if el.kind == ElementKind.RECT:
        if p[4] <= 0 or p[5] <= 0:
            return []
        return [_rect_polygon(*p, tol)]
    raise ValueError(f"cannot flatten {el.kind.value}")


def coverage(polys: list[np.ndarray], size: int, ss: int = SUPERSAMPLE) -> np.ndarray:
    """Per-pixel fraction of inside samples under the nonzero winding rule."""
    n = size * ss
    if not polys:
        return np.zeros((size, size))
    a = np.concatenate(polys) * ss
    b = np.concatenate([np.roll(q, -1, axis=0) for q in polys]) * ss
    x0, y0, x1, y1 = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    keep = y0 != y1
    x0, y0, x1, y1 = x0[keep], y0[keep], x1[keep], y1[keep]
    if x0.size == 0:
        return np.zeros((size, size))
    direction = np.where(y1 > y0, 1, -1)
    ylo, yhi = np.minimum(y0, y1), np.maximum(y0, y1)
    # sample row j has its center at j + 0.5; an edge covers rows with ylo <= center < yhi
    r0 = np.clip(np.ceil(ylo - 0.5), 0, n).astype(np.int64)
    r1 = np.clip(np.ceil(yhi - 0.5), 0, n).astype(np.int64)
    counts = np.maximum(r1 - r0, 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((size, size))
    idx = np.repeat(np.arange(x0.size), counts)
    offsets = np.cumsum(counts) - counts
    rows = r0[idx] + (np.arange(total) - offsets[idx])
    yc = rows + 0.5
    t = (yc - y0[idx]) / (y1[idx] - y0[idx])
    xs = x0[idx] + t * (x1[idx] - x0[idx])
    cols = np.clip(np.ceil(xs - 0.5), 0, n).astype(np.int64)
    acc = np.bincount(rows * (n + 1) + cols, weights=direction[idx], minlength=n * (n + 1))
    winding = np.cumsum(acc.reshape(n, n + 1)[:, :n], axis=1)
    inside = winding != 0
    return inside.reshape(size, ss, size, ss).mean(axis=(1, 3))


def _pixel_mapping(doc: Document, size: int) -> tuple[float, float, float]:
    if doc.viewbox is None:
        return size / doc.canvas, 0.0, 0.0
    vx, vy, w, h = doc.viewbox
    m = max(w, h)
    return size / m, (m - w) / 2.0 - vx, (m - h) / 2.0 - vy


def _lookup(doc: Document, ref: str) -> Element:
    for def_id, el in doc.defs:
        if def_id == ref:
            return el
    for el in doc.iter_elements():
        if el.id == ref:
            return el
    raise UnresolvableReference(ref)


def _paint_leaves(doc: Document, el: Element, mult: float, inherited, depth: int = 0):
    """Yield (leaf, alpha, fill) in paint order, walking groups and uses."""
    if depth > 32:
        raise UnresolvableReference(el.href or "?")
    if el.kind == ElementKind.GROUP:
        m = mult * el.opacity
        for child in el.children:
            yield from _paint_leaves(doc, child, m, inherited, depth)
        return
    if el.kind == ElementKind.USE:
        target = translate_element(_lookup(doc, el.href), el.params[0], el.params[1])
        paint = el.fill if el.fill is not None else inherited
        yield from _paint_leaves(doc, target, mult * el.opacity, paint, depth + 1)
        return
    fill = el.fill if el.fill is not None else (inherited if inherited is not None else BLACK)
    yield el, el.opacity * mult, fill


def rasterize(doc: Document, size: int = 128, tol: float = DEFAULT_TOL_PX) -> RasterGrid:
    """Render ``doc`` to a ``size`` x ``size`` RGB grid over white."""
    if size < 1:
        raise ValueError("size must be >= 1")
    s, ox, oy = _pixel_mapping(doc, size)
    img = np.ones((size, size, 3), dtype=np.float64)
    for top in doc.elements:
        for leaf, alpha, fill in _paint_leaves(doc, top, 1.0, None):
            if alpha == 0:
                continue
            px = transform_element(leaf, s, ox, oy)
            cov = coverage(flatten(px, tol), size)
            a = (alpha * cov)[..., None]
            img = img * (1.0 - a) + np.asarray(fill.as_tuple()) * a
    return RasterGrid(size, size, img)


def raster_diff(a: RasterGrid, b: RasterGrid) -> float:
    """Mean absolute per-channel difference."""
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"{a.pixels.shape} vs {b.pixels.shape}")
    return float(np.mean(np.abs(a.pixels - b.pixels)))


def to_bytes(grid: RasterGrid) -> np.ndarray:
    return np.clip(np.round(grid.pixels * 255.0), 0, 255).astype(np.uint8)


def ppm_bytes(grid: RasterGrid) -> bytes:
    header = f"P6\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + to_bytes(grid).tobytes()


def read_ppm(path: str | Path) -> RasterGrid:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError("expected an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    pix = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return RasterGrid(w, h, pix.astype(np.float64) / 255.0)
