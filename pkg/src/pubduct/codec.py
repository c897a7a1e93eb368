"""Envelope protocol: op vocabulary, field tables, and the two frame encodings.

Every envelope is one websocket frame: a binary CBOR frame or a text
JSON frame, both carrying a single top-level map with an "op" key.
Unknown extra keys are ignored on decode for forward compatibility.

JSON cannot carry raw octets, so byte strings travel as a single-key
wrapper map {"$bytes": "<base64>"}. Genuine maps whose keys collide
with the marker ("$bytes", "$$bytes", ...) get one "$" prepended on
encode and stripped on decode, which keeps the round trip lossless for
every value. NaN and infinities are legal in CBOR but rejected for
JSON frames rather than emitting non-standard tokens.
"""

from __future__ import annotations

import base64
import enum
import json
import math
import re
from dataclasses import dataclass, fields as dataclass_fields
from typing import Iterable, Optional, Union

from . import cbor
from .errors import (
    FrameTooLarge,
    MalformedFrame,
    MissingField,
    NoCommonEncoding,
    TypeMismatch,
    UnencodableValue,
    UnknownOp,
)
from .values import INT64_MAX, INT64_MIN, Value, validate_value

PROTOCOL_VERSION = 1

DEFAULT_MAX_FRAME = 16 * 1024 * 1024

STATUS_LEVELS = ("info", "warning", "error")


class Encoding(enum.Enum):
    CBOR = "cbor"
    JSON = "json"

    @property
    def binary_frames(self) -> bool:
        return self is Encoding.CBOR


@dataclass(frozen=True)
class Hello:
    session_id: str
    resume: bool
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class HelloAck:
    session_id: str
    resumed: bool
    encoding: str


@dataclass(frozen=True)
class Advertise:
    topic: str
    type: str


@dataclass(frozen=True)
class Unadvertise:
    topic: str


@dataclass(frozen=True)
class Publish:
    topic: str
    msg: Value
    seq: int


@dataclass(frozen=True)
class Subscribe:
    topic: str
    type: str
    throttle_rate: int = 0
    queue_length: int = 1
    compression: str = "cbor"


@dataclass(frozen=True)
class Unsubscribe:
    topic: str


@dataclass(frozen=True)
class AdvertiseService:
    service: str
    type: str


@dataclass(frozen=True)
class UnadvertiseService:
    service: str


@dataclass(frozen=True)
class CallService:
    service: str
    args: Value
    id: str


@dataclass(frozen=True)
class ServiceResponse:
    id: str
    values: Value
    result: bool


@dataclass(frozen=True)
class Status:
    level: str
    msg: str
    ref_id: Optional[str] = None


@dataclass(frozen=True)
class Ping:
    nonce: int = 0


@dataclass(frozen=True)
class Pong:
    nonce: int = 0


Envelope = Union[
    Hello,
    HelloAck,
    Advertise,
    Unadvertise,
    Publish,
    Subscribe,
    Unsubscribe,
    AdvertiseService,
    UnadvertiseService,
    CallService,
    ServiceResponse,
    Status,
    Ping,
    Pong,
]

# kind -> (predicate, description); "value" accepts any payload value
_KINDS = {
    "text": (lambda v: isinstance(v, str), "text"),
    "bool": (lambda v: isinstance(v, bool), "bool"),
    "int": (lambda v: isinstance(v, int) and not isinstance(v, bool), "int"),
    "value": (lambda v: True, "value"),
}


@dataclass(frozen=True)
class _Field:
    name: str
    kind: str
    required: bool = True
    default: Value = None
    choices: Optional[tuple] = None
    minimum: Optional[int] = None


_OP_TABLE: dict[str, tuple[type, tuple[_Field, ...]]] = {
    "hello": (
        Hello,
        (
            _Field("session_id", "text"),
            _Field("resume", "bool"),
            _Field("version", "int", required=False, default=PROTOCOL_VERSION),
        ),
    ),
    "hello_ack": (
        HelloAck,
        (
            _Field("session_id", "text"),
            _Field("resumed", "bool"),
            _Field("encoding", "text", choices=("cbor", "json")),
        ),
    ),
    "advertise": (Advertise, (_Field("topic", "text"), _Field("type", "text"))),
    "unadvertise": (Unadvertise, (_Field("topic", "text"),)),
    "publish": (
        Publish,
        (_Field("topic", "text"), _Field("msg", "value"), _Field("seq", "int")),
    ),
    "subscribe": (
        Subscribe,
        (
            _Field("topic", "text"),
            _Field("type", "text"),
            _Field("throttle_rate", "int", required=False, default=0, minimum=0),
            _Field("queue_length", "int", required=False, default=1, minimum=1),
            _Field(
                "compression",
                "text",
                required=False,
                default="cbor",
                choices=("cbor", "json"),
            ),
        ),
    ),
    "unsubscribe": (Unsubscribe, (_Field("topic", "text"),)),
    "advertise_service": (
        AdvertiseService,
        (_Field("service", "text"), _Field("type", "text")),
    ),
    "unadvertise_service": (UnadvertiseService, (_Field("service", "text"),)),
    "call_service": (
        CallService,
        (_Field("service", "text"), _Field("args", "value"), _Field("id", "text")),
    ),
    "service_response": (
        ServiceResponse,
        (_Field("id", "text"), _Field("values", "value"), _Field("result", "bool")),
    ),
    "status": (
        Status,
        (
            _Field("level", "text", choices=STATUS_LEVELS),
            _Field("msg", "text"),
            _Field("ref_id", "text", required=False, default=None),
        ),
    ),
    "ping": (Ping, (_Field("nonce", "int", required=False, default=0),)),
    "pong": (Pong, (_Field("nonce", "int", required=False, default=0),)),
}

_CLASS_TO_OP = {cls: op for op, (cls, _) in _OP_TABLE.items()}

OPS = tuple(_OP_TABLE.keys())


def op_name(envelope: Envelope) -> str:
    try:
        return _CLASS_TO_OP[type(envelope)]
    except KeyError:
        raise UnencodableValue(f"not an envelope: {type(envelope).__name__}") from None


def envelope_to_map(envelope: Envelope) -> dict:
    """Render an envelope as its wire-level map, validating the field table."""
    op = op_name(envelope)
    _, field_specs = _OP_TABLE[op]
    result: dict = {"op": op}
    for spec in field_specs:
        value = getattr(envelope, spec.name)
        if value is None and not spec.required:
            continue
        _check_field(spec, value, error=UnencodableValue)
        result[spec.name] = value
    return result


def _check_field(spec: _Field, value, *, error) -> None:
    predicate, description = _KINDS[spec.kind]
    if not predicate(value):
        exc = TypeMismatch(
            spec.name, f"expected {description}, got {type(value).__name__}"
        )
        raise exc if error is TypeMismatch else error(str(exc))
    if spec.choices is not None and value not in spec.choices:
        exc = TypeMismatch(spec.name, f"{value!r} not in {spec.choices}")
        raise exc if error is TypeMismatch else error(str(exc))
    if spec.minimum is not None and value < spec.minimum:
        exc = TypeMismatch(spec.name, f"{value} below minimum {spec.minimum}")
        raise exc if error is TypeMismatch else error(str(exc))
    if spec.kind == "value":
        validate_value(value)


def map_to_envelope(mapping: dict) -> Envelope:
    """Build an envelope from a decoded wire map, ignoring unknown keys."""
    op = mapping.get("op")
    if op is None:
        raise MalformedFrame('top-level map lacks "op"')
    if not isinstance(op, str):
        raise MalformedFrame('"op" must be text')
    try:
        cls, field_specs = _OP_TABLE[op]
    except KeyError:
        raise UnknownOp(op) from None
    kwargs = {}
    for spec in field_specs:
        if spec.name in mapping:
            value = mapping[spec.name]
            _check_field(spec, value, error=TypeMismatch)
            kwargs[spec.name] = value
        elif spec.required:
            raise MissingField(spec.name)
        else:
            kwargs[spec.name] = spec.default
    return cls(**kwargs)


# --- JSON value transform -------------------------------------------------

_BYTES_KEY_RE = re.compile(r"^\$+bytes$")


def _to_jsonable(value: Value, depth: int = 0) -> object:
    if depth > 70:
        raise UnencodableValue("nesting too deep for JSON frame")
    if isinstance(value, float) and not math.isfinite(value):
        raise UnencodableValue("non-finite float not representable in JSON")
    if isinstance(value, (bytes, bytearray)):
        return {"$bytes": base64.b64encode(bytes(value)).decode("ascii")}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v, depth + 1) for v in value]
    if isinstance(value, dict):
        out = {}
        for key, item in value.items():
            if not isinstance(key, str):
                raise UnencodableValue(
                    f"map key must be text, got {type(key).__name__}"
                )
            if _BYTES_KEY_RE.match(key):
                key = "$" + key
            out[key] = _to_jsonable(item, depth + 1)
        return out
    if isinstance(value, int) and not isinstance(value, bool):
        if not INT64_MIN <= value <= INT64_MAX:
            raise UnencodableValue(f"integer {value} outside signed 64-bit range")
    return value


def _from_jsonable(value: object) -> Value:
    if isinstance(value, dict):
        if "$bytes" in value:
            if set(value.keys()) != {"$bytes"}:
                raise MalformedFrame('"$bytes" marker map must have exactly one key')
            encoded = value["$bytes"]
            if not isinstance(encoded, str):
                raise MalformedFrame('"$bytes" marker value must be text')
            try:
                return base64.b64decode(encoded.encode("ascii"), validate=True)
            except Exception as exc:
                raise MalformedFrame(f"invalid base64 in bytes marker: {exc}") from exc
        out = {}
        for key, item in value.items():
            if key.startswith("$$") and _BYTES_KEY_RE.match(key[1:]):
                key = key[1:]
            out[key] = _from_jsonable(item)
        return out
    if isinstance(value, list):
        return [_from_jsonable(v) for v in value]
    if isinstance(value, int) and not isinstance(value, bool):
        if not INT64_MIN <= value <= INT64_MAX:
            raise MalformedFrame(f"integer {value} outside signed 64-bit range")
    if isinstance(value, float) and not math.isfinite(value):
        raise MalformedFrame("non-finite number in JSON frame")
    return value


def _reject_constant(token: str):
    raise MalformedFrame(f"non-standard JSON token {token!r}")


def _reject_duplicates(pairs):
    result = {}
    for key, value in pairs:
        if key in result:
            raise MalformedFrame(f"duplicate map key {key!r}")
        result[key] = value
    return result


# --- public codec surface -------------------------------------------------


def encode_map(mapping: dict, encoding: Encoding) -> bytes:
    """Encode a raw wire map (lower-level entry point used by tests)."""
    if encoding is Encoding.CBOR:
        return cbor.encode_value(mapping)
    try:
        text = json.dumps(
            _to_jsonable(mapping),
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
            allow_nan=False,
        )
        return text.encode("utf-8")
    except UnencodableValue:
        raise
    except (ValueError, TypeError, UnicodeEncodeError, RecursionError) as exc:
        raise UnencodableValue(str(exc)) from exc


def decode_map(data: bytes, encoding: Encoding, *, max_frame: int = DEFAULT_MAX_FRAME) -> dict:
    """Decode one frame into its top-level wire map."""
    if len(data) > max_frame:
        raise FrameTooLarge(f"frame of {len(data)} octets exceeds limit {max_frame}")
    if encoding is Encoding.CBOR:
        value = cbor.decode_value(data)
    else:
        try:
            text = bytes(data).decode("utf-8")
            value = json.loads(
                text,
                parse_constant=_reject_constant,
                object_pairs_hook=_reject_duplicates,
            )
        except MalformedFrame:
            raise
        except (ValueError, UnicodeDecodeError, RecursionError) as exc:
            raise MalformedFrame(f"invalid JSON frame: {exc}") from exc
        value = _from_jsonable(value)
    if not isinstance(value, dict):
        raise MalformedFrame("top-level data item is not a map")
    return value


def encode(envelope: Envelope, encoding: Encoding) -> bytes:
    """Encode an envelope as one frame. Deterministic: same input, same octets."""
    return encode_map(envelope_to_map(envelope), encoding)


def decode(data: bytes, encoding: Encoding, *, max_frame: int = DEFAULT_MAX_FRAME) -> Envelope:
    """Decode one frame into an envelope; total over arbitrary octets."""
    return map_to_envelope(decode_map(data, encoding, max_frame=max_frame))


def negotiate(
    client_supported: Iterable[Encoding], server_supported: Iterable[Encoding]
) -> Encoding:
    """Pick the session encoding: CBOR when both sides support it, else JSON."""
    common = set(client_supported) & set(server_supported)
    if not common:
        raise NoCommonEncoding("no encoding supported by both peers")
    return Encoding.CBOR if Encoding.CBOR in common else Encoding.JSON


def encoding_from_name(name: str) -> Encoding:
    for enc in Encoding:
        if enc.value == name:
            return enc
    raise ValueError(f"unknown encoding {name!r}")


def envelope_repr(envelope: Envelope) -> str:
    """Compact single-line description used in traces and logs."""
    op = op_name(envelope)
    for attr in ("topic", "service", "id", "nonce"):
        if hasattr(envelope, attr):
            return f"{op} {getattr(envelope, attr)}"
    return op
