"""Student-side bus client: token auth, framed stream, wait_for matching."""

from __future__ import annotations

import json
import socket
import threading
import time
from collections import deque
from typing import Callable

from telelab.bus.protocol import Envelope, FrameError, Op, decode_frame, encode_frame


class ClientError(Exception):
    exit_code = 1


class AuthFailed(ClientError):
    exit_code = 2


class Expired(ClientError):
    exit_code = 2


class BrokenConnection(ClientError):
    exit_code = 4


class BusClient:
    """One reader thread fills per-topic buffers; callers publish from their own thread."""

    def __init__(self, host: str, port: int, token: str, timeout: float = 10.0) -> None:
        self.host = host
        self.port = port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise BrokenConnection(f"cannot connect to {host}:{port}: {e}") from None
        self._sock.settimeout(timeout)
        self._file = self._sock.makefile("rb")
        try:
            self._sock.sendall(f"AUTH {token}\n".encode())
            line = self._file.readline()
        except OSError as e:
            raise BrokenConnection(f"handshake failed: {e}") from None
        if not line:
            raise BrokenConnection("server closed connection during handshake")
        try:
            grant = json.loads(line)
        except json.JSONDecodeError:
            raise BrokenConnection("bad grant line from server") from None
        if not grant.get("ok"):
            err = grant.get("error", "AUTH_FAILED")
            raise Expired("session expired") if err == "EXPIRED" else AuthFailed(err)
        self.grant = grant
        self.namespace: str = grant["namespace"]
        self._stamp_base_us = grant.get("now_us", 0)
        self._t0 = time.monotonic()
        self._seq: dict[str, int] = {}
        self._advertised: set[tuple[str, str]] = set()
        self._cv = threading.Condition()
        self._recv: dict[str, deque[Envelope]] = {}
        self._errors: deque[Envelope] = deque(maxlen=64)
        self._closed = False
        self.on_send: Callable[[bytes], None] | None = None
        self.on_recv: Callable[[bytes], None] | None = None
        self._send_lock = threading.Lock()
        self._sock.settimeout(None)
        self._reader = threading.Thread(target=self._read_loop, name="bus-reader", daemon=True)
        self._reader.start()

    # --- receive ---------------------------------------------------------------

    def _read_loop(self) -> None:
        while True:
            try:
                line = self._file.readline()
            except OSError:
                break
            if not line:
                break
            if self.on_recv is not None:
                self.on_recv(line)
            try:
                env = decode_frame(line)
            except FrameError:
                continue
            with self._cv:
                if env.op is Op.ERR:
                    self._errors.append(env)
                else:
                    self._recv.setdefault(env.topic, deque(maxlen=256)).append(env)
                self._cv.notify_all()
        with self._cv:
            self._closed = True
            self._cv.notify_all()

    def wait_for(self, topic: str, predicate: Callable[[dict], bool],
                 timeout_s: float) -> Envelope | None:
        """Block until a frame on topic satisfies the predicate; None on timeout."""
        deadline = time.monotonic() + timeout_s
        seen = 0
        while True:
            with self._cv:
                buf = self._recv.setdefault(topic, deque(maxlen=256))
                while seen < len(buf):
                    env = buf[seen]
                    seen += 1
                    try:
                        if predicate(env.payload):
                            return env
                    except (KeyError, TypeError, IndexError, ValueError):
                        pass
                if self._closed:
                    raise BrokenConnection("connection lost while waiting")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cv.wait(timeout=min(remaining, 0.25))
                # deque may have evicted old frames; re-anchor conservatively
                seen = min(seen, len(buf))

    def last_error(self) -> Envelope | None:
        with self._cv:
            return self._errors[-1] if self._errors else None

    def drain_errors(self) -> list[Envelope]:
        with self._cv:
            out = list(self._errors)
            self._errors.clear()
            return out

    # --- send ---------------------------------------------------------------------

    def _stamp_us(self) -> int:
        return self._stamp_base_us + int((time.monotonic() - self._t0) * 1e6)

    def send_env(self, env: Envelope) -> None:
        data = encode_frame(env)
        with self._send_lock:
            if self._closed:
                raise BrokenConnection("connection closed")
            try:
                self._sock.sendall(data)
            except OSError as e:
                self._closed = True
                raise BrokenConnection(str(e)) from None
        if self.on_send is not None:
            self.on_send(data)

    def topic(self, rel: str) -> str:
        """Absolute session topic for a namespace-relative name."""
        return rel if rel.startswith("/") else f"{self.namespace}/{rel}"

    def advertise(self, rel: str, msg_type: str) -> None:
        t = self.topic(rel)
        self.send_env(Envelope(Op.ADV, t, msg_type, 0, self._stamp_us(), {}))
        self._advertised.add((t, msg_type))

    def publish(self, rel: str, msg_type: str, payload: dict) -> None:
        t = self.topic(rel)
        if (t, msg_type) not in self._advertised:
            self.advertise(rel, msg_type)
        seq = self._seq.get(t, -1) + 1
        self._seq[t] = seq
        self.send_env(Envelope(Op.PUB, t, msg_type, seq, self._stamp_us(), payload))

    def subscribe(self, rel: str) -> None:
        self.send_env(Envelope(Op.SUB, self.topic(rel), "none", 0, self._stamp_us(), {}))

    def unsubscribe(self, rel: str) -> None:
        self.send_env(Envelope(Op.UNSUB, self.topic(rel), "none", 0, self._stamp_us(), {}))

    def ping(self, timeout_s: float = 5.0) -> bool:
        stamp = self._stamp_us()
        self.send_env(Envelope(Op.PING, "/sys", "none", 0, stamp, {}))
        return self.wait_for("/sys", lambda p: True, timeout_s) is not None

    def close(self) -> None:
        with self._send_lock:
            self._closed = True
        try:
            self._sock.close()
        except OSError:
            pass
