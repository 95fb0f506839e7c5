"""Immutable document model for the supported SVG subset."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

ARG_COUNTS = {"M": 2, "L": 2, "C": 6, "Q": 4, "A": 7, "Z": 0, "H": 1, "V": 1, "S": 4, "T": 2}
NORMAL_COMMANDS = frozenset("MLCQAZ")


@dataclass(frozen=True)
class Color:
    r: float
    g: float
    b: float

    def __post_init__(self):
        for c in (self.r, self.g, self.b):
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"color channel {c} outside [0, 1]")

    @classmethod
    def from_bytes(cls, r: int, g: int, b: int) -> Color:
        return cls(r / 255, g / 255, b / 255)

    @classmethod
    def quantized(cls, r: float, g: float, b: float) -> Color:
        """Snap arbitrary channel values to the nearest 8-bit level."""
        def q(v: float) -> int:
            return int(round(min(max(v, 0.0), 1.0) * 255))
        return cls.from_bytes(q(r), q(g), q(b))

    def to_bytes(self) -> tuple[int, int, int]:
        return tuple(int(round(c * 255)) for c in (self.r, self.g, self.b))

    @property
    def hex(self) -> str:
        return "#{:02x}{:02x}{:02x}".format(*self.to_bytes())

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r, self.g, self.b)


BLACK = Color(0.0, 0.0, 0.0)


class ElementKind(str, enum.Enum):
    PATH = "path"
    CIRCLE = "circle"
    ELLIPSE = "ellipse"
    RECT = "rect"
    LINE = "line"
    POLYLINE = "polyline"
    POLYGON = "polygon"
    GROUP = "g"
    USE = "use"


NORMAL_KINDS = frozenset({ElementKind.PATH, ElementKind.CIRCLE, ElementKind.ELLIPSE, ElementKind.RECT})

# Ordered parameter names for the non-path shapes. Polyline/polygon store a
# flat x0 y0 x1 y1 ... list instead.
SHAPE_FIELDS = {
    ElementKind.CIRCLE: ("cx", "cy", "r"),
    ElementKind.ELLIPSE: ("cx", "cy", "rx", "ry"),
    ElementKind.RECT: ("x", "y", "rx", "ry", "width", "height"),
    ElementKind.LINE: ("x1", "y1", "x2", "y2"),
    ElementKind.USE: ("x", "y"),
}


@dataclass(frozen=True)
class PathCommand:
    kind: str
    args: tuple[float, ...] = ()

    def __post_init__(self):
        expected = ARG_COUNTS.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown path command {self.kind!r}")
        if len(self.args) != expected:
            raise ValueError(f"{self.kind} takes {expected} args, got {len(self.args)}")

    @property
    def end(self) -> tuple[float, float] | None:
        if self.kind in ("M", "L", "C", "Q", "A", "S", "T"):
            return (self.args[-2], self.args[-1])
        return None


@dataclass(frozen=True)
class Element:
    """One drawable (or, before normalization, structural) element.

    ``fill`` is ``None`` only for content inside ``<defs>`` that inherits its
    paint from the referencing ``<use>``. ``opacity`` already folds in
    ``fill-opacity`` and ``fill="none"``.
    """

    kind: ElementKind
    commands: tuple[PathCommand, ...] = ()
    params: tuple[float, ...] = ()
    fill: Color | None = BLACK
    opacity: float = 1.0
    children: tuple[Element, ...] = ()
    id: str | None = None
    href: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"opacity {self.opacity} outside [0, 1]")

    def param(self, name: str) -> float:
        return self.params[SHAPE_FIELDS[self.kind].index(name)]

    def with_(self, **changes) -> Element:
        return replace(self, **changes)

    def iter_tree(self):
        yield self
        for child in self.children:
            yield from child.iter_tree()


@dataclass(frozen=True)
class Document:
    """A parsed SVG: square canvas side plus elements in paint order.

    ``viewbox`` is only set for sources whose viewBox is not ``0 0 V V``;
    normalization (``resize_canvas``) removes it.
    """

    canvas: int
    elements: tuple[Element, ...] = ()
    viewbox: tuple[float, float, float, float] | None = None
    defs: tuple[tuple[str, Element], ...] = ()
    extras: tuple[tuple[str, int], ...] = field(default=(), compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)
    source_bytes: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.canvas <= 0:
            raise ValueError("canvas must be positive")

    def with_(self, **changes) -> Document:
        return replace(self, **changes)

    def iter_elements(self):
        for el in self.elements:
            yield from el.iter_tree()

    def is_normalized(self) -> bool:
        if self.viewbox is not None or self.defs:
            return False
        for el in self.elements:
            if el.kind not in NORMAL_KINDS:
                return False
            if any(c.kind not in NORMAL_COMMANDS for c in el.commands):
                return False
        return True
