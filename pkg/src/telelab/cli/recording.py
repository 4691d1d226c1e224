"""Session recording: length-prefixed frame log with receive timestamps.

File layout: one JSON header line, then binary entries
``<offset_us: u64 LE> <direction: u8> <length: u32 LE> <frame bytes>``.
Direction 0 = frame sent by the client, 1 = frame received.
"""

from __future__ import annotations

import json
import struct
import threading
import time
from pathlib import Path

from telelab.bus.client import BusClient
from telelab.bus.protocol import Envelope, Op, decode_frame, encode_frame

ENTRY = struct.Struct("<QBI")
DIR_SENT = 0
DIR_RECV = 1
MAGIC = "telelab-rec"


class Recorder:
    """Attach to a client's send/recv hooks and log every frame."""

    def __init__(self, client: BusClient, path: str | Path) -> None:
        self._f = open(path, "wb")
        header = {"format": MAGIC, "version": 1, "namespace": client.namespace}
        self._f.write((json.dumps(header, separators=(",", ":")) + "\n").encode())
        self._t0 = time.monotonic()
        self._lock = threading.Lock()
        client.on_send = self._on_send
        client.on_recv = self._on_recv
        self._client = client

    def _write(self, direction: int, data: bytes) -> None:
        offset_us = int((time.monotonic() - self._t0) * 1e6)
        with self._lock:
            if self._f.closed:
                return
            self._f.write(ENTRY.pack(offset_us, direction, len(data)))
            self._f.write(data)

    def _on_send(self, data: bytes) -> None:
        self._write(DIR_SENT, data)

    def _on_recv(self, data: bytes) -> None:
        self._write(DIR_RECV, data)

    def close(self) -> None:
        self._client.on_send = None
        self._client.on_recv = None
        with self._lock:
            self._f.close()


def read_recording(path: str | Path) -> tuple[dict, list[tuple[int, int, bytes]]]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl])
    if header.get("format") != MAGIC:
        raise ValueError(f"{path} is not a recording file")
    entries = []
    pos = nl + 1
    while pos < len(raw):
        offset_us, direction, length = ENTRY.unpack_from(raw, pos)
        pos += ENTRY.size
        entries.append((offset_us, direction, raw[pos:pos + length]))
        pos += length
    return header, entries


def replay(client: BusClient, path: str | Path, log=lambda msg: None) -> int:
    """Re-publish the recorded outbound publishes at their original offsets.

    Recorded topics are re-homed from the recording's namespace to the live
    session's. Returns the number of frames replayed.
    """
    header, entries = read_recording(path)
    old_ns = header["namespace"]
    t0 = time.monotonic()
    n = 0
    for offset_us, direction, data in entries:
        if direction != DIR_SENT:
            continue
        env = decode_frame(data)
        if env.op not in (Op.ADV, Op.PUB):
            continue
        topic = env.topic
        if topic == old_ns or topic.startswith(old_ns + "/"):
            topic = client.namespace + topic[len(old_ns):]
        target = t0 + offset_us / 1e6
        now = time.monotonic()
        if target > now:
            time.sleep(target - now)
        client.send_env(Envelope(env.op, topic, env.msg_type, env.seq, env.stamp_us, env.payload))
        n += 1
        log(f"replayed {env.op.value} {topic}")
    return n


def summarize(path: str | Path) -> dict:
    header, entries = read_recording(path)
    sent = sum(1 for _, d, _ in entries if d == DIR_SENT)
    recv = len(entries) - sent
    duration_us = entries[-1][0] if entries else 0
    return {"namespace": header["namespace"], "sent": sent, "received": recv,
            "duration_s": duration_us / 1e6}


# re-exported for callers that only speak bytes
__all__ = ["Recorder", "read_recording", "replay", "summarize",
           "DIR_SENT", "DIR_RECV", "encode_frame"]
