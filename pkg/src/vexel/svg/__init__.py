"""SVG domain model, parser and serializer."""
from vexel.svg.model import (
    BLACK,
    Color,
    Document,
    Element,
    ElementKind,
    PathCommand,
)
from vexel.svg.parse import parse_svg
from vexel.svg.serialize import serialize_svg

__all__ = [
    "BLACK",
    "Color",
    "Document",
    "Element",
    "ElementKind",
    "PathCommand",
    "parse_svg",
    "serialize_svg",
]
