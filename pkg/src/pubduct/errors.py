"""Shared error taxonomy for the wire protocol layer.

Module-specific errors (bus, bridge, duct, scenario) live next to their
modules; everything here can cross the codec boundary.
"""

from __future__ import annotations


class PubductError(Exception):
    """Base class for all pubduct errors."""


class UnencodableValue(PubductError):
    """Value cannot be represented in the requested encoding."""


class MalformedFrame(PubductError):
    """Octets are not a valid frame in the expected encoding."""


class FrameTooLarge(MalformedFrame):
    """Frame exceeds the configured maximum size."""


class UnknownOp(PubductError):
    """Valid top-level map, but the "op" value is not recognized."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"unknown op {op!r}")


class MissingField(PubductError):
    """Recognized op, but a required field is absent."""

    def __init__(self, field: str):
        self.field = field
        super().__init__(f"missing field {field!r}")


class TypeMismatch(PubductError):
    """Field present but carries the wrong kind of value."""

    def __init__(self, field: str, detail: str):
        self.field = field
        super().__init__(f"field {field!r}: {detail}")


class NoCommonEncoding(PubductError):
    """Encoding negotiation found an empty intersection."""
