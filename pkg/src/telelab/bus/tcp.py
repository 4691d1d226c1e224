"""TCP transport: one long-lived framed stream per student connection.

The first line must be `AUTH <token>`; the server answers with one JSON
grant line and only then accepts envelopes. Outbound frames go through a
bounded per-client queue (cap 1024) so a slow consumer loses oldest frames
instead of stalling the broker.
"""

from __future__ import annotations

import json
import socketserver
import threading
import time
from collections import deque

from telelab.bus.broker import Broker
from telelab.bus.protocol import Envelope, FrameError, Op, encode_frame, decode_frame
from telelab.gateway.sessions import AuthFailed, Expired, Gateway, GatewayError

MAX_LINE = 1 << 20
OUTBOUND_CAP = 1024


class Endpoint:
    """Per-connection outbound queue drained by a writer thread."""

    def __init__(self, sock, broker: Broker, label: str) -> None:
        self._sock = sock
        self._broker = broker
        self._label = label
        self._q: deque[bytes] = deque()
        self._cv = threading.Condition()
        self._closed = False
        self._last_overflow_alert = 0.0
        self._writer = threading.Thread(target=self._drain, name=f"writer-{label}", daemon=True)
        self._writer.start()

    def send(self, env: Envelope) -> bool:
        return self.send_raw(encode_frame(env))

    def send_raw(self, data: bytes) -> bool:
        with self._cv:
            if self._closed:
                return False
            if len(self._q) >= OUTBOUND_CAP:
                self._q.popleft()
                now = time.monotonic()
                if now - self._last_overflow_alert >= 1.0:
                    self._last_overflow_alert = now
                    overflow = True
                else:
                    overflow = False
            else:
                overflow = False
            self._q.append(data)
            self._cv.notify()
        if overflow:
            self._broker.emit_alert("WARN", "QUEUE_OVERFLOW",
                                    f"outbound queue full for {self._label}; dropping oldest")
        return True

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify()

    def _drain(self) -> None:
        while True:
            with self._cv:
                while not self._q and not self._closed:
                    self._cv.wait()
                if self._closed and not self._q:
                    return
                data = self._q.popleft()
            try:
                self._sock.sendall(data)
            except OSError:
                with self._cv:
                    self._closed = True
                    self._q.clear()
                return


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: BusTCPServer = self.server  # type: ignore[assignment]
        gateway = server.gateway
        self.connection.settimeout(10.0)
        try:
            line = self.rfile.readline(MAX_LINE)
        except OSError:
            return
        if not line.startswith(b"AUTH "):
            self._reply_json({"ok": False, "error": "AUTH_REQUIRED"})
            return
        token = line[5:].strip().decode("utf-8", "replace")
        try:
            session = gateway.authenticate(token)
        except AuthFailed:
            self._reply_json({"ok": False, "error": "AUTH_FAILED"})
            return
        except Expired:
            self._reply_json({"ok": False, "error": "EXPIRED"})
            return

        endpoint = Endpoint(self.connection, server.broker, session.id)
        try:
            gateway.bind_endpoint(session, endpoint.send)
        except GatewayError:
            self._reply_json({"ok": False, "error": "ALREADY_CONNECTED"})
            endpoint.close()
            return
        grant = session.grant()
        grant["now_us"] = gateway.clock.now_us()
        endpoint.send_raw((json.dumps(grant, separators=(",", ":")) + "\n").encode())
        self.connection.settimeout(None)
        try:
            self._frame_loop(gateway, session, endpoint)
        finally:
            gateway.unbind_endpoint(session)
            endpoint.close()

    def _frame_loop(self, gateway: Gateway, session, endpoint: Endpoint) -> None:
        while True:
            try:
                line = self.rfile.readline(MAX_LINE)
            except OSError:
                return
            if not line:
                return
            try:
                env = decode_frame(line)
            except FrameError as e:
                self._send_err(endpoint, type(e).__name__, str(e), offset=e.offset)
                continue
            try:
                gateway.handle_inbound(session, env)
            except Expired as e:
                self._send_err(endpoint, e.code, str(e))
                return
            except GatewayError as e:
                self._send_err(endpoint, e.code, str(e))

    def _send_err(self, endpoint: Endpoint, code: str, detail: str, offset: int | None = None) -> None:
        payload = {"code": code, "detail": detail}
        if offset is not None:
            payload["offset"] = offset
        endpoint.send(Envelope(Op.ERR, "/sys", "none", 0, 0, payload))

    def _reply_json(self, doc: dict) -> None:
        try:
            self.wfile.write((json.dumps(doc, separators=(",", ":")) + "\n").encode())
        except OSError:
            pass


class BusTCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, host: str, port: int, gateway: Gateway, broker: Broker) -> None:
        self.gateway = gateway
        self.broker = broker
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]
