"""Session gateway: authentication, topic remapping, latency injection,
permission profiles, and the safety gate on every inbound command.

A session's student-facing topics live under its namespace `/s/<team_id>`;
the gateway rewrites them to robot topics through a remap table and relays
in both directions through per-topic order-preserving delay lines.
"""

from __future__ import annotations

import random
import secrets
import threading
import time
from dataclasses import dataclass, field

from telelab.bus.broker import Broker, BrokerClient
from telelab.bus.protocol import BUILTIN_SCHEMAS, Envelope, Op, topic_in_namespace
from telelab.clock import Clock, Scheduler
from telelab.gateway.delay import DelayLine
from telelab.safety.monitor import Decision, SafetyMonitor

SESSION_SECONDS = 3600.0

DEFAULT_REMAP = {
    "cmd_vel": "/rover/cmd_vel",
    "scan": "/rover/scan",
    "odom": "/rover/odom",
    "joint_cmd": "/arm/joint_cmd",
    "joint_states": "/arm/joint_states",
    "gripper": "/arm/gripper",
    "frame": "/camera/frame",
    "score": "/task/score",
}

USER_PREFIX = "user"


class GatewayError(Exception):
    code = "GATEWAY_ERROR"


class SlotNotBooked(GatewayError):
    code = "SLOT_NOT_BOOKED"


class OutsideWindow(GatewayError):
    code = "OUTSIDE_WINDOW"


class TestbedBusy(GatewayError):
    code = "TESTBED_BUSY"


class PermissionDenied(GatewayError):
    code = "PERMISSION_DENIED"


class Expired(GatewayError):
    code = "EXPIRED"


class AuthFailed(GatewayError):
    code = "AUTH_FAILED"


@dataclass(frozen=True)
class LatencyProfile:
    data_mean_ms: float
    data_jitter_sigma_ms: float
    camera_delay_ms: float

    def __post_init__(self) -> None:
        for v in (self.data_mean_ms, self.data_jitter_sigma_ms, self.camera_delay_ms):
            if v < 0:
                raise ValueError("latency values must be >= 0")


STUDENT_SIDE_LATENCY = LatencyProfile(300.0, 50.0, 2000.0)
HOST_SIDE_LATENCY = LatencyProfile(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PermissionProfile:
    """Topic permissions as names relative to the session namespace.

    A trailing `/**` matches any depth below the prefix. Because entries are
    namespace-relative, absolute reserved topics (`/sys/...`) are
    unreachable by construction.
    """

    allowed_pub: tuple[str, ...]
    allowed_sub: tuple[str, ...]
    allow_arbitrary_schemas: bool = False

    def __post_init__(self) -> None:
        for entry in self.allowed_pub + self.allowed_sub:
            if entry.startswith("/"):
                raise ValueError(f"profile entries are namespace-relative, got {entry!r}")

    @staticmethod
    def _match(patterns: tuple[str, ...], rel: str) -> bool:
        for p in patterns:
            if p.endswith("/**"):
                if rel == p[:-3] or rel.startswith(p[:-3] + "/"):
                    return True
            elif rel == p:
                return True
        return False

    def may_pub(self, rel: str) -> bool:
        return self._match(self.allowed_pub, rel)

    def may_sub(self, rel: str) -> bool:
        return self._match(self.allowed_sub, rel)


STUDENT_SIDE_PERMISSIONS = PermissionProfile(
    allowed_pub=("cmd_vel", "joint_cmd", "gripper", "user/**"),
    allowed_sub=("scan", "odom", "joint_states", "frame", "safety", "score", "user/**"),
    allow_arbitrary_schemas=True,
)

HOST_SIDE_PERMISSIONS = PermissionProfile(
    allowed_pub=("cmd_vel", "joint_cmd", "gripper"),
    allowed_sub=("scan", "odom", "joint_states", "frame", "safety", "score"),
    allow_arbitrary_schemas=False,
)

MODE_DEFAULTS = {
    "STUDENT_SIDE": (STUDENT_SIDE_LATENCY, STUDENT_SIDE_PERMISSIONS),
    "HOST_SIDE": (HOST_SIDE_LATENCY, HOST_SIDE_PERMISSIONS),
}


@dataclass(frozen=True)
class GatewayConfig:
    remap: dict = field(default_factory=lambda: dict(DEFAULT_REMAP))
    latency: dict = field(default_factory=lambda: {m: MODE_DEFAULTS[m][0] for m in MODE_DEFAULTS})
    permissions: dict = field(default_factory=lambda: {m: MODE_DEFAULTS[m][1] for m in MODE_DEFAULTS})
    rng_seed: int = 0


class Session:
    def __init__(self, session_id: str, team_id: str, token: str, mode: str,
                 latency: LatencyProfile, permissions: PermissionProfile,
                 opened_at_us: int, expires_at_us: int, slot_id: str) -> None:
        self.id = session_id
        self.team_id = team_id
        self.token = token
        self.mode = mode
        self.namespace = f"/s/{team_id}"
        self.latency = latency
        self.permissions = permissions
        self.opened_at_us = opened_at_us
        self.expires_at_us = expires_at_us
        self.slot_id = slot_id
        self.closed = False
        self.close_reason: str | None = None
        self.student_subs: set[str] = set()
        self.msgs_in = 0
        self.msgs_out = 0
        self.verdicts = {d.value: 0 for d in Decision}
        self.safety_seq = 0
        self.client: BrokerClient | None = None
        self.endpoint_send = None
        self.rng: random.Random | None = None
        self.inbound: DelayLine | None = None
        self.outbound: DelayLine | None = None

    def grant(self) -> dict:
        """What a freshly authenticated connection learns about itself."""
        return {
            "ok": True,
            "session_id": self.id,
            "namespace": self.namespace,
            "mode": self.mode,
            "allowed_pub": list(self.permissions.allowed_pub),
            "allowed_sub": list(self.permissions.allowed_sub),
            "allow_arbitrary_schemas": self.permissions.allow_arbitrary_schemas,
            "expires_at_us": self.expires_at_us,
        }


class Gateway:
    def __init__(self, broker: Broker, monitor: SafetyMonitor, clock: Clock,
                 scheduler: Scheduler, slots, config: GatewayConfig | None = None,
                 epoch_now=time.time, get_task_score=None,
                 inject_zero_velocity=None) -> None:
        self.broker = broker
        self.monitor = monitor
        self.clock = clock
        self.scheduler = scheduler
        self.slots = slots
        self.config = config or GatewayConfig()
        self.epoch_now = epoch_now
        self.get_task_score = get_task_score or (lambda: None)
        self.inject_zero_velocity = inject_zero_velocity or (lambda: None)
        self._lock = threading.RLock()
        self._by_token: dict[str, Session] = {}
        self._by_id: dict[str, Session] = {}
        self._active_id: str | None = None
        self._reports: dict[str, dict] = {}
        self._next_id = 0
        self._reverse_remap = {v: k for k, v in self.config.remap.items()}

    # --- lifecycle -------------------------------------------------------------

    def open_session(self, slot_id: str, mode: str) -> Session:
        if mode not in MODE_DEFAULTS:
            raise GatewayError(f"unknown mode {mode!r}")
        with self._lock:
            self._expire_active()
            slot = self.slots.get(slot_id)
            if slot.status != "BOOKED":
                raise SlotNotBooked(f"slot {slot_id} is {slot.status}, not BOOKED")
            now_epoch = self.epoch_now()
            end_epoch = slot.start + slot.duration
            if not slot.start <= now_epoch < end_epoch:
                raise OutsideWindow(f"now is outside slot window of {slot_id}")
            if self._active_id is not None:
                raise TestbedBusy(f"session {self._active_id} is active")
            ttl_s = min(SESSION_SECONDS, end_epoch - now_epoch)
            self._next_id += 1
            sid = f"s{self._next_id:04d}"
            opened = self.clock.now_us()
            session = Session(
                session_id=sid,
                team_id=slot.team_id,
                token=secrets.token_hex(16),
                mode=mode,
                latency=self.config.latency[mode],
                permissions=self.config.permissions[mode],
                opened_at_us=opened,
                expires_at_us=opened + int(ttl_s * 1e6),
                slot_id=slot_id,
            )
            session.rng = random.Random(f"{self.config.rng_seed}:{sid}")
            session.inbound = DelayLine(self.clock, self.scheduler)
            session.outbound = DelayLine(self.clock, self.scheduler)
            session.client = BrokerClient(
                self.broker, f"gw:{sid}",
                on_env=lambda env, s=session: self._robot_frame(s, env))
            self._by_token[session.token] = session
            self._by_id[sid] = session
            self._active_id = sid
            return session

    def authenticate(self, token: str) -> Session:
        with self._lock:
            session = self._by_token.get(token)
            if session is None:
                raise AuthFailed("unknown token")
            if self._expired(session):
                self.close_session(session.id, "EXPIRED")
                raise Expired("session expired")
            return session

    def bind_endpoint(self, session: Session, send) -> None:
        with self._lock:
            if session.endpoint_send is not None:
                raise GatewayError("session already has a live connection")
            session.endpoint_send = send

    def unbind_endpoint(self, session: Session) -> None:
        with self._lock:
            session.endpoint_send = None

    def close_session(self, session_id: str, reason: str) -> dict:
        with self._lock:
            session = self._by_id.get(session_id)
            if session is None:
                raise GatewayError(f"no session {session_id}")
            if session.closed:
                return self._reports[session_id]
            session.closed = True
            session.close_reason = reason
            self._by_token.pop(session.token, None)
            if self._active_id == session_id:
                self._active_id = None
            if session.client is not None:
                session.client.close()
            report = {
                "session_id": session.id,
                "team_id": session.team_id,
                "slot_id": session.slot_id,
                "mode": session.mode,
                "reason": reason,
                "duration_s": (self.clock.now_us() - session.opened_at_us) / 1e6,
                "msgs_in": session.msgs_in,
                "msgs_out": session.msgs_out,
                "verdicts": dict(session.verdicts),
                "task_score": self.get_task_score(),
            }
            self._reports[session_id] = report
        self.inject_zero_velocity()
        try:
            self.slots.complete_slot(session.slot_id)
        except Exception:
            pass  # slot may already be deactivated by the operator
        return report

    def report(self, session_id: str) -> dict | None:
        with self._lock:
            return self._reports.get(session_id)

    def session(self, session_id: str) -> Session | None:
        return self._by_id.get(session_id)

    def active_session(self) -> Session | None:
        with self._lock:
            self._expire_active()
            return self._by_id.get(self._active_id) if self._active_id else None

    def sweep_expired(self) -> None:
        with self._lock:
            self._expire_active()

    def _expired(self, session: Session) -> bool:
        return self.clock.now_us() > session.expires_at_us

    def _expire_active(self) -> None:
        if self._active_id is not None:
            active = self._by_id[self._active_id]
            if self._expired(active):
                self.close_session(active.id, "EXPIRED")

    # --- inbound (student -> robot) ----------------------------------------------

    def handle_inbound(self, session: Session, env: Envelope) -> None:
        """Relay one frame from the student connection. Raises GatewayError subtypes."""
        if session.closed:
            raise Expired(f"session closed ({session.close_reason})")
        if self._expired(session):
            self.close_session(session.id, "EXPIRED")
            raise Expired("session expired")
        session.msgs_in += 1

        if env.op is Op.PING:
            self._to_endpoint(session, Envelope(Op.PONG, env.topic, "none",
                                                env.seq, env.stamp_us, {}))
            return
        if env.op in (Op.PONG, Op.ERR):
            return

        rel = self._relative(session, env.topic)
        if env.op in (Op.SUB, Op.UNSUB):
            if not session.permissions.may_sub(rel):
                raise PermissionDenied(f"subscription to {env.topic} not permitted")
            robot_topic = self._remap(rel)
            if env.op is Op.SUB:
                session.student_subs.add(rel)
                if robot_topic is not None:
                    session.client.subscribe(robot_topic)
            else:
                session.student_subs.discard(rel)
                if robot_topic is not None:
                    session.client.unsubscribe(robot_topic)
            return

        # ADV / PUB
        if not session.permissions.may_pub(rel):
            raise PermissionDenied(f"publishing to {env.topic} not permitted")
        if env.msg_type not in BUILTIN_SCHEMAS and env.msg_type != "none" \
                and not session.permissions.allow_arbitrary_schemas:
            raise PermissionDenied(
                f"schema {env.msg_type!r} not supported in {session.mode} mode")
        robot_topic = self._remap(rel)
        if robot_topic is None:
            raise PermissionDenied(f"{env.topic} has no robot-side mapping")
        routed = env.with_topic(robot_topic)

        if env.op is Op.PUB:
            verdict = self.monitor.gate(robot_topic, env.msg_type, env.payload)
            session.verdicts[verdict.decision.value] += 1
            if verdict.decision is Decision.BLOCK:
                self._echo_verdict(session, verdict)
                return
            if verdict.clamped_payload is not None:
                routed = Envelope(env.op, robot_topic, env.msg_type, env.seq,
                                  env.stamp_us, verdict.clamped_payload)
        self._relay_to_robot(session, robot_topic, routed)

    def _relay_to_robot(self, session: Session, robot_topic: str, env: Envelope) -> None:
        delay_us = self._data_delay_us(session)

        def deliver() -> None:
            if session.closed:
                return
            try:
                self.broker.route(session.client.client_id, env)
            except Exception as e:
                self._echo_error(session, type(e).__name__, str(e))

        session.inbound.send(robot_topic, delay_us, deliver)

    # --- outbound (robot -> student) ------------------------------------------------

    def _robot_frame(self, session: Session, env: Envelope) -> None:
        if env.op is not Op.PUB or session.closed:
            return
        rel = self._reverse_remap.get(env.topic)
        if rel is None and (env.topic == "/" + USER_PREFIX
                            or env.topic.startswith("/" + USER_PREFIX + "/")):
            rel = env.topic[1:]
        if rel is None or rel not in session.student_subs:
            return
        student_env = env.with_topic(f"{session.namespace}/{rel}")
        if env.msg_type == "Frame":
            delay_us = int(session.latency.camera_delay_ms * 1000)
        else:
            delay_us = self._data_delay_us(session)

        def deliver() -> None:
            if session.closed:
                return
            session.msgs_out += 1
            self._to_endpoint(session, student_env)

        session.outbound.send(student_env.topic, delay_us, deliver)

    # --- helpers -----------------------------------------------------------------------

    def _data_delay_us(self, session: Session) -> int:
        lat = session.latency
        if lat.data_mean_ms == 0 and lat.data_jitter_sigma_ms == 0:
            return 0
        ms = session.rng.gauss(lat.data_mean_ms, lat.data_jitter_sigma_ms)
        return max(int(ms * 1000), 0)

    def _relative(self, session: Session, topic: str) -> str:
        if not topic_in_namespace(session.namespace, topic) or topic == session.namespace:
            raise PermissionDenied(f"{topic} is outside namespace {session.namespace}")
        return topic[len(session.namespace) + 1:]

    def _remap(self, rel: str) -> str | None:
        mapped = self.config.remap.get(rel)
        if mapped is not None:
            return mapped
        if rel == USER_PREFIX or rel.startswith(USER_PREFIX + "/"):
            return "/" + rel
        if rel == "safety":
            return None  # gateway-generated, nothing robot-side to subscribe
        return None

    def _echo_verdict(self, session: Session, verdict) -> None:
        session.safety_seq += 1
        env = Envelope(Op.PUB, f"{session.namespace}/safety", "Alert",
                       session.safety_seq, self.clock.now_us(),
                       verdict.as_alert_payload())
        self._to_endpoint(session, env)

    def _echo_error(self, session: Session, code: str, detail: str) -> None:
        env = Envelope(Op.ERR, f"{session.namespace}/safety", "none",
                       0, self.clock.now_us(), {"code": code, "detail": detail})
        self._to_endpoint(session, env)

    def _to_endpoint(self, session: Session, env: Envelope) -> None:
        send = session.endpoint_send
        if send is not None:
            try:
                send(env)
            except Exception:
                pass
