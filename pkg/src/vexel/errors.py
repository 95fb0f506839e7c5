"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to process
status without a lookup table: 2 for bad input data, 3 for numeric failure.
"""
from __future__ import annotations


class VexelError(Exception):
    exit_code = 2


class DataError(VexelError):
    exit_code = 2


class MalformedXml(DataError):
    pass


class UnsupportedElement(DataError):
    def __init__(self, name: str):
        super().__init__(f"unsupported element <{name}>")
        self.name = name


class BadAttribute(DataError):
    def __init__(self, element: str, attr: str, reason: str):
        super().__init__(f"<{element}> {attr}: {reason}")
        self.element = element
        self.attr = attr
        self.reason = reason


class UnresolvableReference(DataError):
    def __init__(self, ref: str):
        super().__init__(f"reference to unknown id {ref!r}")
        self.ref = ref


class DegenerateArc(UserWarning):
    """Zero-radius arc; drawn as a straight line per SVG rules."""


class DimensionMismatch(DataError):
    pass


class TooManyCommands(DataError):
    def __init__(self, count: int, limit: int):
        super().__init__(f"{count} command rows exceed the limit of {limit}")
        self.count = count
        self.limit = limit


class BadFraming(DataError):
    pass


class UnknownIndex(DataError):
    pass


class NonSquareGrid(DataError):
    pass


class BadMagic(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptyDocument(DataError):
    pass


class ManifestError(DataError):
    pass


class ConfigError(DataError):
    pass


class BadCheckpoint(DataError):
    pass


class IncompatibleCheckpoints(DataError):
    pass


class NonFiniteLoss(VexelError):
    exit_code = 3
