"""Topic broker: subscription table, advertisement ledger, FIFO routing.

Routing is linearized under one re-entrant lock, which gives per-topic FIFO
delivery and makes the subscription table safe under concurrent connections.
Delivery callables must be fast and non-blocking; the TCP layer satisfies
this with a bounded per-client outbound queue.
"""

from __future__ import annotations

import threading
from typing import Callable

from telelab.bus.protocol import ALERTS_TOPIC, Envelope, Op, validate_envelope
from telelab.clock import Clock


class BrokerError(Exception):
    code = "BROKER_ERROR"


class NotAdvertised(BrokerError):
    code = "NOT_ADVERTISED"


class SeqRegression(BrokerError):
    code = "SEQ_REGRESSION"


class DuplicateClient(BrokerError):
    code = "DUPLICATE_CLIENT"


class _ClientRec:
    __slots__ = ("send", "subs")

    def __init__(self, send: Callable[[Envelope], bool]) -> None:
        self.send = send
        self.subs: set[str] = set()


class Broker:
    BROKER_ID = "broker"

    def __init__(self, clock: Clock) -> None:
        self._clock = clock
        self._lock = threading.RLock()
        self._clients: dict[str, _ClientRec] = {}
        self._subs: dict[str, set[str]] = {}
        self._advs: dict[tuple[str, str], set[str]] = {(self.BROKER_ID, ALERTS_TOPIC): {"Alert"}}
        self._last_seq: dict[tuple[str, str], int] = {}
        self._own_seq: dict[str, int] = {}
        self._taps: list[Callable[[str, Envelope], None]] = []

    # --- attachment ---------------------------------------------------------

    def attach(self, client_id: str, send: Callable[[Envelope], bool]) -> None:
        """Register a client; ``send`` returns False (or raises) when the client is dead."""
        with self._lock:
            if client_id in self._clients or client_id == self.BROKER_ID:
                raise DuplicateClient(f"client id {client_id!r} already attached")
            self._clients[client_id] = _ClientRec(send)

    def detach(self, client_id: str) -> None:
        with self._lock:
            rec = self._clients.pop(client_id, None)
            if rec is None:
                return
            for topic in rec.subs:
                ids = self._subs.get(topic)
                if ids:
                    ids.discard(client_id)
                    if not ids:
                        self._subs.pop(topic, None)
            for key in [k for k in self._advs if k[0] == client_id]:
                del self._advs[key]
            for key in [k for k in self._last_seq if k[0] == client_id]:
                del self._last_seq[key]

    def attached(self, client_id: str) -> bool:
        with self._lock:
            return client_id in self._clients

    def add_tap(self, fn: Callable[[str, Envelope], None]) -> None:
        """Observe every accepted PUB as (sender, envelope). Called under the routing lock."""
        with self._lock:
            self._taps.append(fn)

    # --- routing ------------------------------------------------------------

    def route(self, sender: str, env: Envelope) -> list[str]:
        """Apply one inbound envelope; returns the client ids a PUB was delivered to."""
        validate_envelope(env)
        with self._lock:
            if sender not in self._clients:
                raise BrokerError(f"unknown sender {sender!r}")
            if env.op is Op.ADV:
                self._advs.setdefault((sender, env.topic), set()).add(env.msg_type)
                return []
            if env.op is Op.SUB:
                self._clients[sender].subs.add(env.topic)
                self._subs.setdefault(env.topic, set()).add(sender)
                return []
            if env.op is Op.UNSUB:
                self._clients[sender].subs.discard(env.topic)
                ids = self._subs.get(env.topic)
                if ids:
                    ids.discard(sender)
                    if not ids:
                        self._subs.pop(env.topic, None)
                return []
            if env.op is Op.PING:
                pong = Envelope(Op.PONG, env.topic, "none", env.seq, env.stamp_us, {})
                self._deliver(sender, pong)
                return []
            if env.op is Op.PUB:
                return self._route_pub(sender, env)
            # PONG / ERR sent by a client have no routing meaning
            return []

    def _route_pub(self, sender: str, env: Envelope) -> list[str]:
        advertised = self._advs.get((sender, env.topic), ())
        if env.msg_type not in advertised:
            raise NotAdvertised(f"{sender} has no ADV for ({env.topic}, {env.msg_type})")
        key = (sender, env.topic)
        last = self._last_seq.get(key)
        if last is not None and env.seq <= last:
            raise SeqRegression(f"seq {env.seq} <= {last} on {env.topic} from {sender}")
        self._last_seq[key] = env.seq
        for tap in self._taps:
            tap(sender, env)
        delivered: list[str] = []
        dead: list[str] = []
        for cid in sorted(self._subs.get(env.topic, ())):
            if self._deliver(cid, env):
                delivered.append(cid)
            else:
                dead.append(cid)
        for cid in dead:
            self.detach(cid)
            self.emit_alert("WARN", "CLIENT_DROPPED", f"delivery to {cid} failed; client detached")
        return delivered

    def _deliver(self, client_id: str, env: Envelope) -> bool:
        rec = self._clients.get(client_id)
        if rec is None:
            return False
        try:
            return rec.send(env) is not False
        except Exception:
            return False

    # --- broker-originated frames --------------------------------------------

    def emit_alert(self, severity: str, code: str, detail: str) -> None:
        self.publish_internal(
            self.BROKER_ID, ALERTS_TOPIC, "Alert",
            {"severity": severity, "code": code, "detail": detail},
        )

    def publish_internal(self, client_id: str, topic: str, msg_type: str, payload: dict) -> list[str]:
        """Publish on behalf of a platform component, managing seq automatically."""
        with self._lock:
            self._advs.setdefault((client_id, topic), set()).add(msg_type)
            seq = self._own_seq.get(client_id, -1) + 1
            self._own_seq[client_id] = seq
            env = Envelope(Op.PUB, topic, msg_type, seq, self._clock.now_us(), payload)
            if client_id != self.BROKER_ID and client_id not in self._clients:
                raise BrokerError(f"unknown sender {client_id!r}")
            return self._route_pub(client_id, env)


class BrokerClient:
    """In-process attachment with automatic ADV and per-topic seq bookkeeping."""

    def __init__(self, broker: Broker, client_id: str,
                 on_env: Callable[[Envelope], None] | None = None) -> None:
        self._broker = broker
        self._clock = broker._clock
        self.client_id = client_id
        self._on_env = on_env
        self._seq: dict[str, int] = {}
        broker.attach(client_id, self._recv)

    def _recv(self, env: Envelope) -> bool:
        if self._on_env is not None:
            self._on_env(env)
        return True

    def advertise(self, topic: str, msg_type: str) -> None:
        self._broker.route(self.client_id, Envelope(Op.ADV, topic, msg_type, 0, self._clock.now_us(), {}))

    def subscribe(self, topic: str) -> None:
        self._broker.route(self.client_id, Envelope(Op.SUB, topic, "none", 0, self._clock.now_us(), {}))

    def unsubscribe(self, topic: str) -> None:
        self._broker.route(self.client_id, Envelope(Op.UNSUB, topic, "none", 0, self._clock.now_us(), {}))

    def publish(self, topic: str, msg_type: str, payload: dict) -> list[str]:
        seq = self._seq.get(topic, -1) + 1
        self._seq[topic] = seq
        env = Envelope(Op.PUB, topic, msg_type, seq, self._clock.now_us(), payload)
        return self._broker.route(self.client_id, env)

    def close(self) -> None:
        self._broker.detach(self.client_id)
