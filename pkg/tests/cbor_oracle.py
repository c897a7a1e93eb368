"""Independent reference CBOR encoder used as a test oracle.

Deliberately minimal and written straight from the RFC 8949 major-type
table, with no code shared with the package under test. Map keys are
emitted sorted by key string, matching the wire contract. Used to
generate and pin golden vectors; its own correctness is anchored by the
RFC 8949 Appendix A examples in test_cbor.py.
"""

from __future__ import annotations

import struct


def _head(major: int, arg: int) -> bytes:
    if arg < 24:
        return bytes([(major << 5) | arg])
    if arg <= 0xFF:
        return bytes([(major << 5) | 24, arg])
    if arg <= 0xFFFF:
        return bytes([(major << 5) | 25]) + struct.pack(">H", arg)
    if arg <= 0xFFFFFFFF:
        return bytes([(major << 5) | 26]) + struct.pack(">I", arg)
    return bytes([(major << 5) | 27]) + struct.pack(">Q", arg)


def oracle_encode(value) -> bytes:
    """Encode a plain Python value (None/bool/int/float/str/bytes/list/dict)."""
    if value is None:
        return b"\xf6"
    if value is True:
        return b"\xf5"
    if value is False:
        return b"\xf4"
    if isinstance(value, int):
        if value >= 0:
            return _head(0, value)
        return _head(1, -1 - value)
    if isinstance(value, float):
        return b"\xfb" + struct.pack(">d", value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return _head(3, len(raw)) + raw
    if isinstance(value, (bytes, bytearray)):
        return _head(2, len(value)) + bytes(value)
    if isinstance(value, (list, tuple)):
        return _head(4, len(value)) + b"".join(oracle_encode(v) for v in value)
    if isinstance(value, dict):
        out = _head(5, len(value))
        for key in sorted(value):
            if not isinstance(key, str):
                raise TypeError(f"map key must be str, got {type(key).__name__}")
            out += oracle_encode(key) + oracle_encode(value[key])
        return out
    raise TypeError(f"cannot encode {type(value).__name__}")
