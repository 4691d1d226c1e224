import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from telelab.bus.protocol import (
    BUILTIN_SCHEMAS,
    Envelope,
    FrameError,
    MalformedFrame,
    Op,
    SchemaViolation,
    UnknownOp,
    decode_frame,
    encode_frame,
    topic_in_namespace,
    valid_topic,
)

# --- strategies -----------------------------------------------------------------

topic_st = st.lists(
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_", min_size=1, max_size=8),
    min_size=1, max_size=4,
).map(lambda parts: "/" + "/".join(parts))

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
u64 = st.integers(min_value=0, max_value=2**64 - 1)

json_scalar = st.one_of(st.none(), st.booleans(), st.integers(), finite, st.text(max_size=30))
json_value = st.recursive(
    json_scalar,
    lambda children: st.one_of(
        st.lists(children, max_size=4),
        st.dictionaries(st.text(max_size=10), children, max_size=4),
    ),
    max_leaves=10,
)
json_obj = st.dictionaries(st.text(max_size=10), json_value, max_size=4)


def _floats6():
    return st.lists(finite, min_size=6, max_size=6)


payload_by_schema = {
    "Twist": st.fixed_dictionaries({"vx": finite, "wz": finite}),
    "Pose2D": st.fixed_dictionaries({"x": finite, "y": finite, "theta": finite}),
    "LaserScan": st.fixed_dictionaries({
        "angle_min": finite, "angle_increment": finite, "range_max": finite,
        "ranges": st.lists(finite, max_size=16)}),
    "JointCommand": st.fixed_dictionaries({
        "mode": st.sampled_from(["POSITION", "VELOCITY"]), "values": _floats6()}),
    "JointState": st.fixed_dictionaries({"positions": _floats6(), "velocities": _floats6()}),
    "GripperCmd": st.fixed_dictionaries({"engage": st.booleans()}),
    "Frame": st.fixed_dictionaries({"tick": st.integers(min_value=0, max_value=2**40),
                                    "entities": st.lists(json_obj, max_size=3)}),
    "Alert": st.fixed_dictionaries({"severity": st.sampled_from(["INFO", "WARN", "CRITICAL"]),
                                    "code": st.text(max_size=12), "detail": st.text(max_size=30)}),
    "TaskScore": st.fixed_dictionaries({"points": st.integers(min_value=-100, max_value=100),
                                        "events": st.lists(json_value, max_size=3)}),
}


@st.composite
def envelopes(draw) -> Envelope:
    op = draw(st.sampled_from(list(Op)))
    topic = draw(topic_st)
    if op is Op.PUB:
        if draw(st.booleans()):
            msg_type = draw(st.sampled_from(sorted(BUILTIN_SCHEMAS)))
            payload = draw(payload_by_schema[msg_type])
        else:
            msg_type = draw(st.text(alphabet="XYZmy_", min_size=1, max_size=8)
                            .filter(lambda s: s not in BUILTIN_SCHEMAS))
            payload = draw(json_obj)
    else:
        msg_type = "none"
        payload = draw(json_obj)
    return Envelope(op, topic, msg_type, draw(u64), draw(u64), payload)


# --- examples from the contract ---------------------------------------------------

def test_minimal_ping_frame_bytes():
    env = Envelope(Op.PING, "/sys", "none", 0, 0, {})
    assert encode_frame(env) == (
        b'{"op":"PING","topic":"/sys","msg_type":"none","seq":0,"stamp_us":0,"payload":{}}\n'
    )


def test_pub_twist_round_trip():
    env = Envelope(Op.PUB, "/rover/cmd_vel", "Twist", 3, 17, {"vx": 0.0, "wz": 0.0})
    assert decode_frame(encode_frame(env)) == env


def test_decode_is_inverse_of_encode_for_ping():
    env = Envelope(Op.PING, "/sys", "none", 5, 99, {})
    assert decode_frame(encode_frame(env)) == env


def test_unknown_op_rejected():
    raw = encode_frame(Envelope(Op.PING, "/sys", "none", 0, 0, {}))
    bad = raw.replace(b'"PING"', b'"NOPE"')
    with pytest.raises(UnknownOp) as ei:
        decode_frame(bad)
    assert ei.value.offset > 0


def test_truncated_frame_is_malformed():
    raw = encode_frame(Envelope(Op.PUB, "/rover/cmd_vel", "Twist", 0, 0,
                                {"vx": 1.0, "wz": -0.5}))
    with pytest.raises(MalformedFrame):
        decode_frame(raw[:-3])


def test_schema_violation_carries_offset():
    raw = (b'{"op":"PUB","topic":"/a","msg_type":"Twist","seq":0,"stamp_us":0,'
           b'"payload":{"vx":1.0}}\n')
    with pytest.raises(SchemaViolation) as ei:
        decode_frame(raw)
    assert ei.value.offset == raw.find(b'"payload"')


def test_wrong_key_set_is_malformed():
    with pytest.raises(MalformedFrame):
        decode_frame(b'{"op":"PING","topic":"/sys"}\n')


def test_interior_lf_is_malformed():
    with pytest.raises(MalformedFrame) as ei:
        decode_frame(b'{"op":"PING"}\n{"op":"PING"}\n')
    assert ei.value.offset == 13


# --- properties --------------------------------------------------------------------

@given(envelopes())
@settings(max_examples=1000, deadline=None)
def test_round_trip_property(env):
    assert decode_frame(encode_frame(env)) == env


@given(envelopes())
@settings(max_examples=200, deadline=None)
def test_no_interior_unescaped_lf(env):
    raw = encode_frame(env)
    assert raw.endswith(b"\n")
    assert raw[:-1].find(b"\n") == -1


@given(envelopes(), st.data())
@settings(max_examples=300, deadline=None)
def test_truncation_fuzz_always_malformed(env, data):
    raw = encode_frame(env)
    cut = data.draw(st.integers(min_value=0, max_value=len(raw) - 1))
    with pytest.raises(MalformedFrame):
        decode_frame(raw[:cut])


def test_truncation_every_offset_of_one_frame():
    raw = encode_frame(Envelope(Op.PUB, "/rover/scan", "LaserScan", 7, 123,
                                {"angle_min": -math.pi, "angle_increment": 0.1,
                                 "range_max": 10.0, "ranges": [1.0, 2.0]}))
    for cut in range(len(raw)):
        with pytest.raises(FrameError):
            decode_frame(raw[:cut])


@given(st.binary(max_size=200))
@settings(max_examples=500, deadline=None)
def test_garbage_never_panics(data):
    try:
        decode_frame(data)
    except FrameError:
        pass  # the only acceptable failure mode


# --- topics ----------------------------------------------------------------------------

def test_topic_validation():
    assert valid_topic("/rover/cmd_vel")
    assert valid_topic("/s/t01")
    assert not valid_topic("rover")
    assert not valid_topic("/Rover")
    assert not valid_topic("/rover/")
    assert not valid_topic("")
    assert not valid_topic("/ro ver")


def test_topic_in_namespace():
    assert topic_in_namespace("/s/t01", "/s/t01/cmd_vel")
    assert not topic_in_namespace("/s/t01", "/s/t010/cmd_vel")
    assert topic_in_namespace("/s/t01", "/s/t01")


def test_encode_rejects_invalid_envelope():
    with pytest.raises(ValueError):
        encode_frame(Envelope(Op.PUB, "bad topic", "Twist", 0, 0, {"vx": 0.0, "wz": 0.0}))
    with pytest.raises(ValueError):
        encode_frame(Envelope(Op.PUB, "/a", "Twist", -1, 0, {"vx": 0.0, "wz": 0.0}))
    with pytest.raises(ValueError):
        encode_frame(Envelope(Op.PUB, "/a", "Twist", 0, 0, {"vx": "fast", "wz": 0.0}))


def test_json_identity_on_payload_floats():
    payload = {"vx": 0.1 + 0.2, "wz": -1.2345678901234567e-8}
    env = Envelope(Op.PUB, "/rover/cmd_vel", "Twist", 0, 0, payload)
    out = decode_frame(encode_frame(env))
    assert json.dumps(out.payload) == json.dumps(payload)
