"""CBOR encoder/decoder for the payload value model (RFC 8949 subset).

Encoding is deterministic: minimal-length integer heads, all floats as
binary64, map keys sorted lexicographically by key string. The decoder
is total over arbitrary octets: every failure raises MalformedFrame
rather than propagating a parse crash. Accepted on decode but never
emitted: non-minimal integer heads, half/single-precision floats.
Rejected on decode: tags (including typed arrays), indefinite lengths,
simple values other than false/true/null, non-text map keys, duplicate
map keys, integers outside signed 64-bit.
"""

from __future__ import annotations

import struct

from .errors import MalformedFrame, UnencodableValue
from .values import INT64_MAX, INT64_MIN, MAX_VALUE_DEPTH, Value

_MAJOR_UINT = 0
_MAJOR_NEGINT = 1
_MAJOR_BYTES = 2
_MAJOR_TEXT = 3
_MAJOR_ARRAY = 4
_MAJOR_MAP = 5
_MAJOR_TAG = 6
_MAJOR_SIMPLE = 7


def _encode_head(major: int, arg: int) -> bytes:
    base = major << 5
    if arg < 24:
        return bytes([base | arg])
    if arg <= 0xFF:
        return bytes([base | 24, arg])
    if arg <= 0xFFFF:
        return bytes([base | 25]) + struct.pack(">H", arg)
    if arg <= 0xFFFFFFFF:
        return bytes([base | 26]) + struct.pack(">I", arg)
    return bytes([base | 27]) + struct.pack(">Q", arg)


def _encode_into(out: list, value: Value, depth: int) -> None:
    if depth > MAX_VALUE_DEPTH:
        raise UnencodableValue(f"nesting deeper than {MAX_VALUE_DEPTH}")
    if value is None:
        out.append(b"\xf6")
    elif value is True:
        out.append(b"\xf5")
    elif value is False:
        out.append(b"\xf4")
    elif isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise UnencodableValue(f"integer {value} outside signed 64-bit range")
        if value >= 0:
            out.append(_encode_head(_MAJOR_UINT, value))
        else:
            out.append(_encode_head(_MAJOR_NEGINT, -1 - value))
    elif isinstance(value, float):
        out.append(b"\xfb" + struct.pack(">d", value))
    elif isinstance(value, str):
        try:
            raw = value.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise UnencodableValue(f"text not UTF-8 encodable: {exc}") from exc
        out.append(_encode_head(_MAJOR_TEXT, len(raw)))
        out.append(raw)
    elif isinstance(value, (bytes, bytearray)):
        out.append(_encode_head(_MAJOR_BYTES, len(value)))
        out.append(bytes(value))
    elif isinstance(value, (list, tuple)):
        out.append(_encode_head(_MAJOR_ARRAY, len(value)))
        for item in value:
            _encode_into(out, item, depth + 1)
    elif isinstance(value, dict):
        out.append(_encode_head(_MAJOR_MAP, len(value)))
        for key in sorted(value.keys()):
            if not isinstance(key, str):
                raise UnencodableValue(
                    f"map key must be text, got {type(key).__name__}"
                )
            _encode_into(out, key, depth + 1)
            _encode_into(out, value[key], depth + 1)
    else:
        raise UnencodableValue(f"unsupported value type {type(value).__name__}")


def encode_value(value: Value) -> bytes:
    """Encode one value as a single CBOR data item."""
    out: list = []
    _encode_into(out, value, 0)
    return b"".join(out)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n > len(self.buf) - self.pos:
            raise MalformedFrame("truncated frame")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        if self.pos >= len(self.buf):
            raise MalformedFrame("truncated frame")
        b = self.buf[self.pos]
        self.pos += 1
        return b


def _read_arg(r: _Reader, info: int) -> int:
    if info < 24:
        return info
    if info == 24:
        return r.byte()
    if info == 25:
        return struct.unpack(">H", r.take(2))[0]
    if info == 26:
        return struct.unpack(">I", r.take(4))[0]
    if info == 27:
        return struct.unpack(">Q", r.take(8))[0]
    if info == 31:
        raise MalformedFrame("indefinite lengths not supported")
    raise MalformedFrame(f"reserved additional info {info}")


def _decode_item(r: _Reader, depth: int) -> Value:
    if depth > MAX_VALUE_DEPTH:
        raise MalformedFrame(f"nesting deeper than {MAX_VALUE_DEPTH}")
    initial = r.byte()
    major = initial >> 5
    info = initial & 0x1F

    if major == _MAJOR_UINT:
        arg = _read_arg(r, info)
        if arg > INT64_MAX:
            raise MalformedFrame(f"integer {arg} outside signed 64-bit range")
        return arg
    if major == _MAJOR_NEGINT:
        arg = _read_arg(r, info)
        result = -1 - arg
        if result < INT64_MIN:
            raise MalformedFrame(f"integer {result} outside signed 64-bit range")
        return result
    if major == _MAJOR_BYTES:
        return r.take(_read_arg(r, info))
    if major == _MAJOR_TEXT:
        raw = r.take(_read_arg(r, info))
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedFrame(f"invalid UTF-8 in text string: {exc}") from exc
    if major == _MAJOR_ARRAY:
        count = _read_arg(r, info)
        if count > len(r.buf) - r.pos:
            raise MalformedFrame("array length exceeds frame")
        return [_decode_item(r, depth + 1) for _ in range(count)]
    if major == _MAJOR_MAP:
        count = _read_arg(r, info)
        if count > (len(r.buf) - r.pos) // 2 + 1:
            raise MalformedFrame("map length exceeds frame")
        result: dict = {}
        for _ in range(count):
            key = _decode_item(r, depth + 1)
            if not isinstance(key, str):
                raise MalformedFrame(
                    f"map key must be text, got {type(key).__name__}"
                )
            if key in result:
                raise MalformedFrame(f"duplicate map key {key!r}")
            result[key] = _decode_item(r, depth + 1)
        return result
    if major == _MAJOR_TAG:
        raise MalformedFrame("tags not supported")

    # major 7: simple values and floats
    if info == 20:
        return False
    if info == 21:
        return True
    if info == 22:
        return None
    if info == 25:
        return struct.unpack(">e", r.take(2))[0]
    if info == 26:
        return struct.unpack(">f", r.take(4))[0]
    if info == 27:
        return struct.unpack(">d", r.take(8))[0]
    raise MalformedFrame(f"unsupported simple value (info {info})")


def decode_value(data: bytes) -> Value:
    """Decode exactly one CBOR data item; trailing octets are an error."""
    if not data:
        raise MalformedFrame("empty frame")
    r = _Reader(bytes(data))
    value = _decode_item(r, 0)
    if r.pos != len(r.buf):
        raise MalformedFrame(f"{len(r.buf) - r.pos} trailing octets after data item")
    return value
