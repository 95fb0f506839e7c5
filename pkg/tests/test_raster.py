from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from vexel.errors import DimensionMismatch, UnresolvableReference
from vexel.raster import (
    RasterGrid,
    arc_to_cubics,
    coverage,
    flatten,
    ppm_bytes,
    raster_diff,
    rasterize,
    read_ppm,
)
from vexel.svg.model import Color, Document, Element, ElementKind, PathCommand
from vexel.svg.parse import parse_path_data, parse_svg


def doc_of(*els, canvas=100, **kw) -> Document:
    return Document(canvas=canvas, elements=tuple(els), **kw)


def ink(grid: RasterGrid) -> float:
    """Covered area in pixels for a black-on-white render."""
    return float(np.sum(1.0 - grid.pixels[..., 0]))


class TestCoverage:
    def test_axis_aligned_square_exact(self):
        sq = np.array([[2.0, 3.0], [6.0, 3.0], [6.0, 8.0], [2.0, 8.0]])
        cov = coverage([sq], 10)
        assert cov.sum() == pytest.approx(20.0)
        assert cov[3:8, 2:6].min() == 1.0

    def test_winding_direction_irrelevant(self):
        sq = np.array([[1.0, 1.0], [5.0, 1.0], [5.0, 5.0], [1.0, 5.0]])
        assert np.array_equal(coverage([sq], 8), coverage([sq[::-1]], 8))

    def test_nonzero_rule_overlap(self):
        a = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])
        assert coverage([a, a + 2.0], 8).sum() == pytest.approx(16 + 16 - 4)

    def test_opposite_winding_cuts_hole(self):
        outer = np.array([[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0]])
        inner = np.array([[2.0, 2.0], [2.0, 6.0], [6.0, 6.0], [6.0, 2.0]])
        assert coverage([outer, inner], 8).sum() == pytest.approx(64 - 16)

    def test_outside_canvas_clipped(self):
        big = np.array([[-5.0, -5.0], [50.0, -5.0], [50.0, 50.0], [-5.0, 50.0]])
        assert coverage([big], 4).sum() == pytest.approx(16.0)


class TestArc:
    def test_semicircle_endpoints_and_radius(self):
        segs = arc_to_cubics(0, 0, 5, 5, 0, 0, 1, 10, 0)
        assert len(segs) == 2
        assert segs[-1][2] == pytest.approx((10.0, 0.0))
        mid = segs[0][2]
        assert math.hypot(mid[0] - 5, mid[1]) == pytest.approx(5.0)

    def test_radius_scaled_up_when_too_small(self):
        segs = arc_to_cubics(0, 0, 1, 1, 0, 0, 1, 10, 0)
        assert segs[-1][2] == pytest.approx((10.0, 0.0))

    def test_degenerate(self):
        assert arc_to_cubics(1, 1, 5, 5, 0, 0, 0, 1, 1) == []
        assert arc_to_cubics(0, 0, 0, 5, 0, 0, 0, 1, 1) is None

    def test_large_arc_flag_picks_longer_sweep(self):
        small = arc_to_cubics(0, 0, 10, 10, 0, 0, 1, 10, 10)
        large = arc_to_cubics(0, 0, 10, 10, 0, 1, 1, 10, 10)
        assert len(large) > len(small)


class TestRasterize:
    def test_empty_is_white(self):
        assert np.all(rasterize(doc_of(), 16).pixels == 1.0)

    def test_full_rect(self):
        g = rasterize(doc_of(Element(ElementKind.RECT, params=(0, 0, 0, 0, 100, 100))), 32)
        assert np.all(g.pixels == 0.0)

    def test_circle_area(self):
        g = rasterize(doc_of(Element(ElementKind.CIRCLE, params=(50, 50, 30))), 128)
        expected = math.pi * (30 * 1.28) ** 2
        assert ink(g) == pytest.approx(expected, rel=5e-3)

    def test_ellipse_area(self):
        g = rasterize(doc_of(Element(ElementKind.ELLIPSE, params=(50, 50, 40, 20))), 128)
        assert ink(g) == pytest.approx(math.pi * 40 * 20 * 1.28 ** 2, rel=5e-3)

    def test_rounded_rect_area(self):
        g = rasterize(doc_of(Element(ElementKind.RECT, params=(10, 10, 10, 10, 60, 40))), 100)
        assert ink(g) == pytest.approx(60 * 40 - (4 - math.pi) * 100, rel=5e-3)

    def test_arc_path_matches_circle(self):
        circle = doc_of(Element(ElementKind.CIRCLE, params=(50, 50, 25)))
        arcs = doc_of(Element(ElementKind.PATH, commands=parse_path_data("M25 50 A25 25 0 1 0 75 50 A25 25 0 1 0 25 50 Z")))
        assert raster_diff(rasterize(circle), rasterize(arcs)) < 2e-3

    def test_quadratic_and_cubic_flatten_close_to_true_area(self):
        # parabola segment y = x^2 style: area under Q from (0,0) ctrl (50,100) to (100,0) is 2/3*100*50
        el = Element(ElementKind.PATH, commands=parse_path_data("M0 100 Q50 0 100 100 Z"))
        g = rasterize(doc_of(el), 100)
        assert ink(g) == pytest.approx(2 / 3 * 100 * 50, rel=5e-3)

    def test_opacity_blend(self):
        el = Element(ElementKind.RECT, params=(0, 0, 0, 0, 100, 100), fill=Color(1, 0, 0), opacity=0.25)
        px = rasterize(doc_of(el), 4).pixels[0, 0]
        assert px == pytest.approx([1.0, 0.75, 0.75])

    def test_paint_order(self):
        red = Element(ElementKind.RECT, params=(0, 0, 0, 0, 100, 100), fill=Color(1, 0, 0))
        blue = Element(ElementKind.RECT, params=(0, 0, 0, 0, 100, 100), fill=Color(0, 0, 1))
        assert list(rasterize(doc_of(red, blue), 2).pixels[0, 0]) == [0, 0, 1]

    def test_group_opacity_multiplies(self):
        text = ('<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 10 10">'
                '<g opacity="0.5"><rect width="10" height="10" opacity="0.5"/></g></svg>')
        assert rasterize(parse_svg(text), 2).pixels[0, 0, 0] == pytest.approx(0.75)

    def test_use_translates_and_inherits_fill(self):
        text = ('<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 10 10">'
                '<defs><rect id="r" width="5" height="5"/></defs><use href="#r" x="5" y="5" fill="#f00"/></svg>')
        px = rasterize(parse_svg(text), 10).pixels
        assert list(px[7, 7]) == [1, 0, 0] and list(px[2, 2]) == [1, 1, 1]

    def test_missing_reference(self):
        doc = doc_of(Element(ElementKind.USE, params=(0, 0), href="nope"))
        with pytest.raises(UnresolvableReference):
            rasterize(doc)

    def test_non_square_viewbox_centered(self):
        text = ('<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 20 10">'
                '<rect width="20" height="10"/></svg>')
        px = rasterize(parse_svg(text), 20).pixels[..., 0]
        assert px[:5].min() == 1.0 and px[15:].min() == 1.0 and px[5:15].max() == 0.0

    def test_degenerate_arc_is_line(self):
        el = Element(ElementKind.PATH, commands=(PathCommand("M", (0, 0)), PathCommand("A", (0, 5, 0, 0, 0, 10, 10)),
                                                 PathCommand("L", (0, 10)), PathCommand("Z")))
        line = el.with_(commands=(el.commands[0], PathCommand("L", (10, 10))) + el.commands[2:])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = rasterize(doc_of(el, canvas=10), 10)
        assert g == rasterize(doc_of(line, canvas=10), 10)

    def test_flatten_tolerance(self):
        el = Element(ElementKind.CIRCLE, params=(0, 0, 100))
        for tol in (1.0, 0.1, 0.01):
            (poly,) = flatten(el, tol)
            r = np.hypot(poly[:, 0], poly[:, 1])
            # the cubic circle approximation itself deviates by about 2.7e-4 r
            assert np.all(np.abs(r - 100) <= tol + 0.03)

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            rasterize(doc_of(), 0)


class TestDiffAndPpm:
    def test_diff_properties(self):
        a = rasterize(doc_of(Element(ElementKind.CIRCLE, params=(50, 50, 20))), 32)
        b = rasterize(doc_of(), 32)
        assert raster_diff(a, a) == 0.0
        assert raster_diff(a, b) == raster_diff(b, a) > 0

    def test_diff_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            raster_diff(rasterize(doc_of(), 8), rasterize(doc_of(), 16))

    def test_ppm_layout_and_roundtrip(self, tmp_path):
        g = rasterize(doc_of(Element(ElementKind.CIRCLE, params=(50, 50, 20), fill=Color(0, 0.5, 1))), 16)
        data = ppm_bytes(g)
        assert data.startswith(b"P6\n16 16\n255\n") and len(data) == len(b"P6\n16 16\n255\n") + 16 * 16 * 3
        path = tmp_path / "g.ppm"
        path.write_bytes(data)
        back = read_ppm(path)
        assert np.max(np.abs(back.pixels - g.pixels)) <= 0.5 / 255 + 1e-12
