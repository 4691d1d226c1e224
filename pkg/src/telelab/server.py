"""Platform assembly: broker + sim + safety + gateway + slots + transports.

One Platform is one testbed. Tests construct it with a virtual clock and
drive time by hand; `scripts/run_platform.py` runs it against the wall
clock with the TCP and HTTP listeners up.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

from telelab.bus.broker import Broker, BrokerClient
from telelab.bus.protocol import ALERTS_TOPIC, Envelope, Op
from telelab.clock import Clock, Scheduler, ThreadScheduler, VirtualClock, WallClock
from telelab.gateway.sessions import Gateway, GatewayConfig
from telelab.safety.monitor import SafetyConfig, SafetyMonitor
from telelab.sim.lidar import LidarParams
from telelab.sim.runner import SimRunner
from telelab.sim.world import World, bundled_world_path, load_world_file

MONITORED_TOPICS = ("/rover/scan", "/arm/joint_states")


@dataclass(frozen=True)
class PlatformConfig:
    world: str = "greenhouse"            # bundled name or path to a .world file
    bus_host: str = "127.0.0.1"
    bus_port: int = 7447
    http_host: str = "127.0.0.1"
    http_port: int = 8080
    operator_key: str = "let-me-operate"
    dt: float = 0.01
    noise_sigma: float = 0.0
    seed: int = 0
    watchdog_poll_period_s: float = 0.5
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    lidar: LidarParams = field(default_factory=LidarParams)
    slots_log: str | None = None
    console_dir: str | None = None       # built operator console assets, if any

    @staticmethod
    def from_file(path: str | Path) -> "PlatformConfig":
        doc = json.loads(Path(path).read_text())
        cfg = PlatformConfig()
        safety = replace(cfg.safety, **{
            k: tuple(tuple(x) for x in v) if isinstance(v, list) and v and isinstance(v[0], list) else v
            for k, v in doc.get("safety", {}).items()})
        lidar = replace(cfg.lidar, **doc.get("lidar", {}))
        top = {k: v for k, v in doc.items() if k not in ("safety", "lidar", "gateway")}
        return replace(cfg, safety=safety, lidar=lidar, **top)

    def world_path(self) -> Path:
        p = Path(self.world)
        if p.exists():
            return p
        return bundled_world_path(self.world)


class FrequencyTable:
    """Per-topic message rate over a short sliding window, for the console."""

    def __init__(self, clock: Clock, window_s: float = 2.0) -> None:
        self._clock = clock
        self._window_us = int(window_s * 1e6)
        self._stamps: dict[str, deque[int]] = {}
        self._lock = threading.Lock()
        self._window_s = window_s

    def observe(self, topic: str) -> None:
        now = self._clock.now_us()
        with self._lock:
            self._stamps.setdefault(topic, deque(maxlen=4096)).append(now)

    def snapshot(self) -> dict[str, float]:
        now = self._clock.now_us()
        out = {}
        with self._lock:
            for topic, q in self._stamps.items():
                while q and q[0] < now - self._window_us:
                    q.popleft()
                out[topic] = round(len(q) / self._window_s, 2)
        return out


class ConsoleHub:
    """Fan-out of selected bus traffic to websocket consumers."""

    TOPICS = ("/camera/frame", ALERTS_TOPIC, "/task/score")

    def __init__(self, broker: Broker) -> None:
        self._queues: list[deque] = []
        self._lock = threading.Lock()
        self.client = BrokerClient(broker, "consolebridge", on_env=self._on_env)
        for t in self.TOPICS:
            self.client.subscribe(t)

    def _on_env(self, env: Envelope) -> None:
        if env.op is not Op.PUB:
            return
        doc = {"type": "env", "topic": env.topic, "msg_type": env.msg_type,
               "seq": env.seq, "stamp_us": env.stamp_us, "payload": env.payload}
        data = json.dumps(doc, separators=(",", ":"))
        with self._lock:
            for q in self._queues:
                if len(q) < 512:
                    q.append(data)

    def register(self) -> deque:
        q: deque = deque()
        with self._lock:
            self._queues.append(q)
        return q

    def unregister(self, q: deque) -> None:
        with self._lock:
            if q in self._queues:
                self._queues.remove(q)


class Platform:
    def __init__(self, config: PlatformConfig | None = None,
                 clock: Clock | None = None, scheduler: Scheduler | None = None,
                 epoch_now=time.time) -> None:
        self.config = config or PlatformConfig()
        if clock is None:
            clock = WallClock()
        self.clock = clock
        if scheduler is None:
            if isinstance(clock, VirtualClock):
                scheduler = clock
            else:
                scheduler = ThreadScheduler(clock)  # type: ignore[arg-type]
        self.scheduler = scheduler
        self.epoch_now = epoch_now

        self.broker = Broker(clock)
        world = load_world_file(self.config.world_path(),
                                noise_sigma=self.config.noise_sigma,
                                seed=self.config.seed)
        self.sim = SimRunner(self.broker, clock, world, dt=self.config.dt,
                             lidar=self.config.lidar)
        self.monitor = SafetyMonitor(
            self.config.safety, self.sim.arm_config, clock,
            emit_alert=self._emit_alert,
            inject_zero_velocity=self.inject_zero_velocity)
        for t in MONITORED_TOPICS:
            self.monitor.watchdog.register(t)
        self.frequencies = FrequencyTable(clock)
        self.broker.add_tap(self._tap)

        from telelab.slots.service import SlotService
        self.slots = SlotService(self.config.slots_log, now=epoch_now)
        self.gateway = Gateway(
            self.broker, self.monitor, clock, scheduler, self.slots,
            config=self.config.gateway, epoch_now=epoch_now,
            get_task_score=self.sim.score_now,
            inject_zero_velocity=self.inject_zero_velocity)
        self._safetyctl = BrokerClient(self.broker, "safetyctl")
        self._safetyctl.advertise("/rover/cmd_vel", "Twist")
        self._safetyctl.advertise("/arm/joint_cmd", "JointCommand")
        self.console_hub = ConsoleHub(self.broker)

        self.tcp_server = None
        self._tcp_thread: threading.Thread | None = None
        self._http_server = None
        self._http_thread: threading.Thread | None = None
        self._watchdog_thread: threading.Thread | None = None
        self._stop = threading.Event()

    # --- wiring callbacks ---------------------------------------------------------

    def _tap(self, sender: str, env: Envelope) -> None:
        self.frequencies.observe(env.topic)
        if env.topic in MONITORED_TOPICS:
            self.monitor.observe_topic(env.topic, env.stamp_us)
        if env.topic == "/rover/scan":
            self.monitor.observe_scan(env.payload, env.stamp_us)

    def _emit_alert(self, severity: str, code: str, detail: str) -> None:
        self.broker.emit_alert(severity, code, detail)

    def inject_zero_velocity(self) -> None:
        self._safetyctl.publish("/rover/cmd_vel", "Twist", {"vx": 0.0, "wz": 0.0})
        self._safetyctl.publish("/arm/joint_cmd", "JointCommand",
                                {"mode": "VELOCITY", "values": [0.0] * 6})

    # --- lifecycle -------------------------------------------------------------------

    def start(self, tcp: bool = True, http: bool = False, sim: bool = True,
              watchdog: bool = True) -> None:
        if sim:
            self.sim.start()
        if tcp:
            from telelab.bus.tcp import BusTCPServer
            self.tcp_server = BusTCPServer(self.config.bus_host, self.config.bus_port,
                                           self.gateway, self.broker)
            self._tcp_thread = threading.Thread(
                target=self.tcp_server.serve_forever, name="bus-tcp", daemon=True)
            self._tcp_thread.start()
        if watchdog and not isinstance(self.clock, VirtualClock):
            self._watchdog_thread = threading.Thread(
                target=self._watchdog_loop, name="watchdog-poll", daemon=True)
            self._watchdog_thread.start()
        if http:
            self.start_http()

    def start_http(self) -> None:
        import uvicorn

        from telelab.gateway.api import create_app
        app = create_app(self)
        config = uvicorn.Config(app, host=self.config.http_host,
                                port=self.config.http_port, log_level="warning")
        self._http_server = uvicorn.Server(config)
        self._http_thread = threading.Thread(
            target=self._http_server.run, name="http", daemon=True)
        self._http_thread.start()

    def _watchdog_loop(self) -> None:
        period = self.config.watchdog_poll_period_s
        while not self._stop.wait(period):
            self.monitor.poll_watchdog()
            self.gateway.sweep_expired()

    def stop(self) -> None:
        self._stop.set()
        self.sim.stop()
        if self.tcp_server is not None:
            self.tcp_server.shutdown()
            self.tcp_server.server_close()
        if self._http_server is not None:
            self._http_server.should_exit = True
        if isinstance(self.scheduler, ThreadScheduler):
            self.scheduler.close()

    # --- console state ------------------------------------------------------------------

    def state_summary(self) -> dict:
        active = self.gateway.active_session()
        estop = self.monitor.estop
        return {
            "estop": {"engaged": estop.engaged, "engaged_by": estop.engaged_by,
                      "since_us": estop.since_us},
            "session": None if active is None else {
                "id": active.id, "team_id": active.team_id, "mode": active.mode,
                "namespace": active.namespace, "opened_at_us": active.opened_at_us,
                "expires_at_us": active.expires_at_us, "msgs_in": active.msgs_in,
                "msgs_out": active.msgs_out, "verdicts": dict(active.verdicts),
            },
            "slots": [s.as_dict() for s in self.slots.list_slots()],
            "frequencies": self.frequencies.snapshot(),
            "score": self.sim.score_now(),
            "world": self.sim.world.spec.name,
            "now_us": self.clock.now_us(),
        }
