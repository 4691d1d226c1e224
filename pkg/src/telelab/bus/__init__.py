from telelab.bus.protocol import (
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
from telelab.bus.broker import Broker, BrokerClient, NotAdvertised

__all__ = [
    "Broker",
    "BrokerClient",
    "Envelope",
    "FrameError",
    "MalformedFrame",
    "NotAdvertised",
    "Op",
    "SchemaViolation",
    "UnknownOp",
    "decode_frame",
    "encode_frame",
    "topic_in_namespace",
    "valid_topic",
]
