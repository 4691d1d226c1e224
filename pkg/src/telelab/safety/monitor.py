"""Safety verdict pipeline: every inbound robot command passes through here.

Four interlocks plus the operator e-stop:
  1. LIDAR forward-cone clearance gates forward rover motion.
  2. Topic-frequency watchdog over a sliding window; sustained starvation
     escalates to CRITICAL and latches the e-stop.
  3. Joint position / velocity / workspace-box limits on arm commands.
  4. Speed clamping on rover commands.

The checks themselves are pure functions of (command, sensor snapshot,
config); the monitor owns the serialized mutable state (e-stop latch,
watchdog histories, latest scan).
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from telelab.sim.arm import ArmConfig, fk


class Decision(str, Enum):
    ALLOW = "ALLOW"
    CLAMP = "CLAMP"
    BLOCK = "BLOCK"


@dataclass(frozen=True)
class SafetyVerdict:
    decision: Decision
    reason_code: str = "OK"
    reason_text: str = ""
    clamped_payload: dict | None = None

    def as_alert_payload(self) -> dict:
        sev = "CRITICAL" if self.reason_code == "ESTOP" else (
            "WARN" if self.decision is Decision.BLOCK else "INFO")
        return {"severity": sev, "code": self.reason_code, "detail": self.reason_text}


ALLOW = SafetyVerdict(Decision.ALLOW)


@dataclass(frozen=True)
class AlertEvent:
    severity: str
    code: str
    detail: str
    stamp_us: int


@dataclass
class EStopState:
    engaged: bool = False
    engaged_by: str | None = None   # OPERATOR | WATCHDOG | COLLISION_GUARD
    since_us: int = 0


class ReleaseRefused(Exception):
    pass


@dataclass(frozen=True)
class SafetyConfig:
    min_clearance: float = 0.35            # m
    forward_cone: float = math.radians(30)  # half-angle, rad
    joint_pos_limits: tuple[tuple[float, float], ...] = tuple(
        (-2 * math.pi, 2 * math.pi) for _ in range(6))
    joint_vel_limit: float = math.pi        # rad/s
    workspace_box: tuple[tuple[float, float], ...] = ((-1.0, 1.0), (-1.0, 1.0), (-0.5, 1.2))
    body_radius: float = 0.25               # chassis keep-out around the arm base, m
    body_height: float = 0.15               # m
    watchdog_min_hz: float = 5.0
    watchdog_window_s: float = 1.0
    v_max: float = 1.0                      # m/s
    w_max: float = 2.0                      # rad/s

    def __post_init__(self) -> None:
        if self.min_clearance <= 0:
            raise ValueError("min_clearance must be > 0")
        for lo, hi in self.joint_pos_limits:
            if not lo < hi:
                raise ValueError("joint limits must have lo < hi")
        for v in (self.forward_cone, self.joint_vel_limit, self.watchdog_min_hz,
                  self.watchdog_window_s, self.v_max, self.w_max):
            if not math.isfinite(v):
                raise ValueError("safety limits must be finite")


def forward_cone_min(scan: dict, cone: float) -> float:
    """Minimum range over beams within +/- cone of the rover heading."""
    lo = float(scan["angle_min"])
    inc = float(scan["angle_increment"])
    best = math.inf
    for k, r in enumerate(scan["ranges"]):
        ang = lo + k * inc
        if abs(math.remainder(ang, 2.0 * math.pi)) <= cone:
            best = min(best, float(r))
    return best


def check_cmd_vel(scan: dict | None, cmd: dict, cfg: SafetyConfig,
                  scan_age_s: float = 0.0) -> SafetyVerdict:
    """Gate one rover velocity command against the latest scan."""
    if scan is None or scan_age_s > cfg.watchdog_window_s:
        return SafetyVerdict(Decision.BLOCK, "STALE_SENSOR",
                             f"scan age {scan_age_s:.3f}s exceeds {cfg.watchdog_window_s}s window")
    vx = float(cmd["vx"])
    wz = float(cmd["wz"])
    if vx > 0.0 and forward_cone_min(scan, cfg.forward_cone) < cfg.min_clearance:
        return SafetyVerdict(Decision.BLOCK, "COLLISION_AHEAD",
                             f"forward clearance below {cfg.min_clearance} m")
    cvx = min(max(vx, -cfg.v_max), cfg.v_max)
    cwz = min(max(wz, -cfg.w_max), cfg.w_max)
    if cvx != vx or cwz != wz:
        return SafetyVerdict(Decision.CLAMP, "SPEED_LIMIT",
                             f"clamped to |vx|<={cfg.v_max}, |wz|<={cfg.w_max}",
                             {"vx": cvx, "wz": cwz})
    return ALLOW


def check_joint_cmd(arm_config: ArmConfig, cmd: dict, cfg: SafetyConfig) -> SafetyVerdict:
    """Gate one arm command: position limits, workspace box, velocity clamp."""
    values = [float(v) for v in cmd["values"]]
    if cmd["mode"] == "POSITION":
        for i, (q, (lo, hi)) in enumerate(zip(values, cfg.joint_pos_limits)):
            if not lo <= q <= hi:
                return SafetyVerdict(Decision.BLOCK, "JOINT_LIMIT",
                                     f"joint {i} target {q:.3f} outside [{lo:.3f}, {hi:.3f}]")
        T = fk(values, arm_config.rows)
        p = T[:3, 3]
        for axis, (lo, hi) in enumerate(cfg.workspace_box):
            if not lo <= p[axis] <= hi:
                return SafetyVerdict(Decision.BLOCK, "WORKSPACE",
                                     f"tool {'xyz'[axis]}={p[axis]:.3f} outside [{lo}, {hi}]")
        if math.hypot(p[0], p[1]) < cfg.body_radius and p[2] < cfg.body_height:
            return SafetyVerdict(Decision.BLOCK, "BODY_PROXIMITY",
                                 "tool point inside the chassis keep-out volume")
        return ALLOW
    # VELOCITY: clamp each entry
    lim = cfg.joint_vel_limit
    clamped = [min(max(v, -lim), lim) for v in values]
    if clamped != values:
        return SafetyVerdict(Decision.CLAMP, "JOINT_VELOCITY",
                             f"velocities clamped to +/-{lim:.3f} rad/s",
                             {"mode": "VELOCITY", "values": clamped})
    return ALLOW


class Watchdog:
    """Sliding-window frequency monitor over registered topics.

    One poll below the floor yields WARN; two consecutive low polls on the
    same topic escalate to CRITICAL. Alerts are returned, not published;
    the monitor wires them out.
    """

    def __init__(self, cfg: SafetyConfig) -> None:
        self.cfg = cfg
        self._stamps: dict[str, deque[int]] = {}
        self._warned: dict[str, int] = {}

    def register(self, topic: str) -> None:
        self._stamps.setdefault(topic, deque())
        self._warned.setdefault(topic, 0)

    @property
    def topics(self) -> list[str]:
        return sorted(self._stamps)

    def observe(self, topic: str, stamp_us: int) -> None:
        q = self._stamps.get(topic)
        if q is not None:
            q.append(stamp_us)

    def frequency(self, topic: str, now_us: int) -> float:
        window_us = int(self.cfg.watchdog_window_s * 1e6)
        q = self._stamps[topic]
        while q and q[0] < now_us - window_us:
            q.popleft()
        return len(q) / self.cfg.watchdog_window_s

    def poll(self, now_us: int) -> list[AlertEvent]:
        alerts: list[AlertEvent] = []
        for topic in self.topics:
            hz = self.frequency(topic, now_us)
            if hz < self.cfg.watchdog_min_hz:
                self._warned[topic] += 1
                if self._warned[topic] >= 2:
                    alerts.append(AlertEvent(
                        "CRITICAL", "WATCHDOG_STARVED",
                        f"{topic} at {hz:.2f} Hz < {self.cfg.watchdog_min_hz} Hz (sustained)",
                        now_us))
                else:
                    alerts.append(AlertEvent(
                        "WARN", "WATCHDOG_LOW_RATE",
                        f"{topic} at {hz:.2f} Hz < {self.cfg.watchdog_min_hz} Hz",
                        now_us))
            else:
                self._warned[topic] = 0
        return alerts

    def starved_topics(self) -> list[str]:
        return sorted(t for t, n in self._warned.items() if n >= 2)


class SafetyMonitor:
    """Owns e-stop, watchdog and the latest scan; all transitions serialized."""

    CMD_VEL_TOPIC = "/rover/cmd_vel"
    JOINT_CMD_TOPIC = "/arm/joint_cmd"

    def __init__(self, cfg: SafetyConfig, arm_config: ArmConfig, clock,
                 emit_alert: Callable[[str, str, str], None] | None = None,
                 inject_zero_velocity: Callable[[], None] | None = None) -> None:
        self.cfg = cfg
        self.arm_config = arm_config
        self.clock = clock
        self.watchdog = Watchdog(cfg)
        self.estop = EStopState()
        self._lock = threading.RLock()
        self._scan: dict | None = None
        self._scan_stamp_us = 0
        self._emit_alert = emit_alert or (lambda sev, code, detail: None)
        self._inject_zero_velocity = inject_zero_velocity or (lambda: None)

    # --- sensor feed -----------------------------------------------------------

    def observe_scan(self, scan: dict, stamp_us: int) -> None:
        with self._lock:
            self._scan = scan
            self._scan_stamp_us = stamp_us

    def observe_topic(self, topic: str, stamp_us: int) -> None:
        with self._lock:
            self.watchdog.observe(topic, stamp_us)

    # --- command gate ----------------------------------------------------------

    def gate(self, robot_topic: str, msg_type: str, payload: dict) -> SafetyVerdict:
        """Verdict for one inbound command; BLOCK(ESTOP) for anything while latched."""
        with self._lock:
            if self.estop.engaged:
                return SafetyVerdict(Decision.BLOCK, "ESTOP",
                                     f"e-stop engaged by {self.estop.engaged_by}")
            if robot_topic == self.CMD_VEL_TOPIC and msg_type == "Twist":
                age_s = (self.clock.now_us() - self._scan_stamp_us) / 1e6
                return check_cmd_vel(self._scan, payload, self.cfg, scan_age_s=age_s)
            if robot_topic == self.JOINT_CMD_TOPIC and msg_type == "JointCommand":
                return check_joint_cmd(self.arm_config, payload, self.cfg)
            return ALLOW

    # --- e-stop ------------------------------------------------------------------

    def engage_estop(self, source: str) -> EStopState:
        """Latch the e-stop. The CRITICAL alert is published before the latch
        takes effect so observers see the cause before commands start blocking."""
        with self._lock:
            if self.estop.engaged:
                return self.estop
            self._emit_alert("CRITICAL", "ESTOP_ENGAGED", f"e-stop engaged by {source}")
            self.estop = EStopState(True, source, self.clock.now_us())
            self._inject_zero_velocity()
            return self.estop

    def release_estop(self, authority: str) -> EStopState:
        with self._lock:
            if authority != "OPERATOR":
                raise ReleaseRefused(f"release requires operator authority, got {authority!r}")
            starved = self.watchdog.starved_topics()
            if starved:
                raise ReleaseRefused(f"critical condition active on {starved}")
            if self.estop.engaged:
                self.estop = EStopState(False, None, self.clock.now_us())
                self._emit_alert("INFO", "ESTOP_RELEASED", "e-stop released by operator")
            return self.estop

    # --- watchdog driver -----------------------------------------------------------

    def poll_watchdog(self, now_us: int | None = None) -> list[AlertEvent]:
        with self._lock:
            now = self.clock.now_us() if now_us is None else now_us
            alerts = self.watchdog.poll(now)
            for a in alerts:
                self._emit_alert(a.severity, a.code, a.detail)
            if any(a.severity == "CRITICAL" for a in alerts):
                self.engage_estop("WATCHDOG")
            return alerts
