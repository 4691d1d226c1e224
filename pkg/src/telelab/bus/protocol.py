"""Wire protocol: LF-delimited UTF-8 JSON frames and the built-in message schemas.

One frame is one JSON object with keys exactly ``op, topic, msg_type, seq,
stamp_us, payload`` followed by a single LF. JSON string escaping guarantees
no unescaped LF can appear inside a frame, so LF is an unambiguous frame
delimiter.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

FRAME_KEYS = ("op", "topic", "msg_type", "seq", "stamp_us", "payload")
U64_MAX = 2**64 - 1

_TOPIC_RE = re.compile(r"(/[a-z0-9_]+)+")

SYS_NAMESPACE = "/sys"
ALERTS_TOPIC = "/sys/alerts"


class Op(str, Enum):
    ADV = "ADV"
    PUB = "PUB"
    SUB = "SUB"
    UNSUB = "UNSUB"
    PING = "PING"
    PONG = "PONG"
    ERR = "ERR"


class FrameError(Exception):
    """Base decode error; ``offset`` is the byte position the problem was detected at."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(message)
        self.offset = offset


class MalformedFrame(FrameError):
    pass


class UnknownOp(FrameError):
    pass


class SchemaViolation(FrameError):
    pass


def valid_topic(topic: str) -> bool:
    return isinstance(topic, str) and _TOPIC_RE.fullmatch(topic) is not None


def topic_in_namespace(namespace: str, topic: str) -> bool:
    """True iff topic equals the namespace or sits strictly below it."""
    return topic == namespace or topic.startswith(namespace + "/")


@dataclass(frozen=True)
class Envelope:
    op: Op
    topic: str
    msg_type: str
    seq: int
    stamp_us: int
    payload: dict = field(default_factory=dict)

    def with_topic(self, topic: str) -> "Envelope":
        return Envelope(self.op, topic, self.msg_type, self.seq, self.stamp_us, self.payload)


# --- built-in schemas -------------------------------------------------------
#
# The schema set is closed: these nine message types are the only ones the
# platform itself ever publishes or validates. Units are documentation.

@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str  # float | int | bool | str | enum | float_array | array
    unit: str = ""
    length: int | None = None
    choices: tuple[str, ...] | None = None


@dataclass(frozen=True)
class MessageSchema:
    name: str
    fields: tuple[FieldSpec, ...]


BUILTIN_SCHEMAS: dict[str, MessageSchema] = {
    s.name: s
    for s in [
        MessageSchema("Twist", (
            FieldSpec("vx", "float", "m/s"),
            FieldSpec("wz", "float", "rad/s"),
        )),
        MessageSchema("Pose2D", (
            FieldSpec("x", "float", "m"),
            FieldSpec("y", "float", "m"),
            FieldSpec("theta", "float", "rad"),
        )),
        MessageSchema("LaserScan", (
            FieldSpec("angle_min", "float", "rad"),
            FieldSpec("angle_increment", "float", "rad"),
            FieldSpec("range_max", "float", "m"),
            FieldSpec("ranges", "float_array", "m"),
        )),
        MessageSchema("JointCommand", (
            FieldSpec("mode", "enum", choices=("POSITION", "VELOCITY")),
            FieldSpec("values", "float_array", "rad|rad/s", length=6),
        )),
        MessageSchema("JointState", (
            FieldSpec("positions", "float_array", "rad", length=6),
            FieldSpec("velocities", "float_array", "rad/s", length=6),
        )),
        MessageSchema("GripperCmd", (
            FieldSpec("engage", "bool"),
        )),
        MessageSchema("Frame", (
            FieldSpec("tick", "int"),
            FieldSpec("entities", "array"),
        )),
        MessageSchema("Alert", (
            FieldSpec("severity", "enum", choices=("INFO", "WARN", "CRITICAL")),
            FieldSpec("code", "str"),
            FieldSpec("detail", "str"),
        )),
        MessageSchema("TaskScore", (
            FieldSpec("points", "int"),
            FieldSpec("events", "array"),
        )),
    ]
}


def _field_ok(spec: FieldSpec, value: Any) -> bool:
    if spec.kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if spec.kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if spec.kind == "bool":
        return isinstance(value, bool)
    if spec.kind == "str":
        return isinstance(value, str)
    if spec.kind == "enum":
        return isinstance(value, str) and value in (spec.choices or ())
    if spec.kind == "float_array":
        if not isinstance(value, list):
            return False
        if spec.length is not None and len(value) != spec.length:
            return False
        return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    if spec.kind == "array":
        return isinstance(value, list)
    return False


def validate_payload(msg_type: str, payload: Any) -> str | None:
    """Check payload against a built-in schema. Returns a problem string or None.

    Unknown msg_types pass structurally (payload must still be an object);
    whether they are *permitted* is the gateway's decision, not the codec's.
    """
    if not isinstance(payload, dict):
        return "payload is not an object"
    schema = BUILTIN_SCHEMAS.get(msg_type)
    if schema is None:
        return None
    names = {f.name for f in schema.fields}
    extra = set(payload) - names
    if extra:
        return f"unexpected field(s) {sorted(extra)} for {msg_type}"
    for spec in schema.fields:
        if spec.name not in payload:
            return f"missing field '{spec.name}' for {msg_type}"
        if not _field_ok(spec, payload[spec.name]):
            return f"field '{spec.name}' does not match {msg_type}.{spec.name}:{spec.kind}"
    return None


def validate_envelope(env: Envelope) -> None:
    """Raise ValueError if the envelope breaks a protocol invariant."""
    if not isinstance(env.op, Op):
        raise ValueError(f"op {env.op!r} is not a protocol op")
    if not valid_topic(env.topic):
        raise ValueError(f"invalid topic {env.topic!r}")
    if not isinstance(env.msg_type, str) or not env.msg_type:
        raise ValueError("msg_type must be a non-empty string")
    for name, value in (("seq", env.seq), ("stamp_us", env.stamp_us)):
        if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= U64_MAX:
            raise ValueError(f"{name} must be an unsigned 64-bit integer")
    if not isinstance(env.payload, dict):
        raise ValueError("payload must be an object")
    if env.op is Op.PUB:
        problem = validate_payload(env.msg_type, env.payload)
        if problem:
            raise ValueError(problem)


def encode_frame(env: Envelope) -> bytes:
    """Serialize one envelope to its LF-terminated wire form.

    Validity of the envelope is a precondition; ValueError signals a caller bug.
    """
    validate_envelope(env)
    doc = {
        "op": env.op.value,
        "topic": env.topic,
        "msg_type": env.msg_type,
        "seq": env.seq,
        "stamp_us": env.stamp_us,
        "payload": env.payload,
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8") + b"\n"


def _key_offset(data: bytes, key: str) -> int:
    pos = data.find(f'"{key}"'.encode())
    return pos if pos >= 0 else 0


def decode_frame(data: bytes) -> Envelope:
    """Parse one LF-terminated frame; exact inverse of encode_frame on valid input.

    Raises MalformedFrame / UnknownOp / SchemaViolation, each carrying the byte
    offset where the problem was detected. Never raises anything else on
    arbitrary byte input.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise MalformedFrame("frame must be bytes", 0)
    data = bytes(data)
    if not data.endswith(b"\n"):
        raise MalformedFrame("frame not LF-terminated", len(data))
    body = data[:-1]
    nl = body.find(b"\n")
    if nl >= 0:
        raise MalformedFrame("interior LF: more than one frame", nl)
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedFrame(f"invalid UTF-8: {e.reason}", e.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedFrame(f"bad JSON: {e.msg}", e.pos) from None
    if not isinstance(doc, dict):
        raise MalformedFrame("frame is not a JSON object", 0)
    if set(doc) != set(FRAME_KEYS):
        raise MalformedFrame(
            f"frame keys {sorted(doc)} != {sorted(FRAME_KEYS)}", 0
        )
    op_raw = doc["op"]
    if not isinstance(op_raw, str):
        raise MalformedFrame("op is not a string", _key_offset(data, "op"))
    try:
        op = Op(op_raw)
    except ValueError:
        raise UnknownOp(f"unknown op {op_raw!r}", _key_offset(data, "op")) from None
    topic = doc["topic"]
    if not valid_topic(topic):
        raise MalformedFrame(f"invalid topic {topic!r}", _key_offset(data, "topic"))
    msg_type = doc["msg_type"]
    if not isinstance(msg_type, str) or not msg_type:
        raise MalformedFrame("msg_type is not a non-empty string", _key_offset(data, "msg_type"))
    for key in ("seq", "stamp_us"):
        v = doc[key]
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= U64_MAX:
            raise MalformedFrame(f"{key} is not an unsigned 64-bit integer", _key_offset(data, key))
    payload = doc["payload"]
    if not isinstance(payload, dict):
        raise MalformedFrame("payload is not an object", _key_offset(data, "payload"))
    if op is Op.PUB:
        problem = validate_payload(msg_type, payload)
        if problem:
            raise SchemaViolation(problem, _key_offset(data, "payload"))
    return Envelope(op, topic, msg_type, doc["seq"], doc["stamp_us"], payload)
