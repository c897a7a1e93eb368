"""Self-describing payload model shared by both wire encodings.

A value is one of: None, bool, signed 64-bit int, binary64 float, str,
bytes, list of values, or dict with str keys. Plain Python objects are
used directly; these helpers enforce the closed type set and the int
range so that both encoders can rely on it.
"""

from __future__ import annotations

import math
from typing import Union

from .errors import UnencodableValue

Value = Union[None, bool, int, float, str, bytes, list, dict]

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

MAX_VALUE_DEPTH = 64


def validate_value(value: Value, *, _depth: int = 0) -> None:
    """Check that *value* fits the payload model; raise UnencodableValue if not."""
    if _depth > MAX_VALUE_DEPTH:
        raise UnencodableValue(f"nesting deeper than {MAX_VALUE_DEPTH}")
    if value is None or isinstance(value, (bool, float, str, bytes, bytearray)):
        return
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise UnencodableValue(f"integer {value} outside signed 64-bit range")
        return
    if isinstance(value, (list, tuple)):
        for item in value:
            validate_value(item, _depth=_depth + 1)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise UnencodableValue(
                    f"map key must be text, got {type(key).__name__}"
                )
            validate_value(item, _depth=_depth + 1)
        return
    raise UnencodableValue(f"unsupported value type {type(value).__name__}")


def value_eq(a: Value, b: Value) -> bool:
    """Deep equality that distinguishes bool from int and treats NaN == NaN."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, float) or isinstance(b, float):
        if not (isinstance(a, float) and isinstance(b, float)):
            return False
        if math.isnan(a) and math.isnan(b):
            return True
        return a == b
    if isinstance(a, (bytes, bytearray)) or isinstance(b, (bytes, bytearray)):
        if not (isinstance(a, (bytes, bytearray)) and isinstance(b, (bytes, bytearray))):
            return False
        return bytes(a) == bytes(b)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(value_eq(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(value_eq(v, b[k]) for k, v in a.items())
    if type(a) is not type(b):
        return False
    return a == b


def value_size_hint(value: Value) -> int:
    """Rough in-memory payload size, used only for diagnostics."""
    if isinstance(value, (bytes, bytearray, str)):
        return len(value)
    if isinstance(value, (list, tuple)):
        return sum(value_size_hint(v) for v in value) + 1
    if isinstance(value, dict):
        return sum(len(k) + value_size_hint(v) for k, v in value.items()) + 1
    return 8
