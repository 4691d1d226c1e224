"""Tick loop: owns the world, consumes queued commands, publishes telemetry.

The world is only ever mutated here (single-writer); bus callbacks enqueue
commands and the loop applies them at tick boundaries. With the thread off,
tests drive `tick_once()` directly for fully deterministic stepping.
"""

from __future__ import annotations

import threading
import time
from collections import deque

from telelab.bus.broker import Broker, BrokerClient
from telelab.bus.protocol import Envelope, Op
from telelab.clock import Clock
from telelab.sim.lidar import LidarParams, scan_lidar
from telelab.sim.world import (
    World,
    apply_cmd_vel,
    apply_gripper,
    apply_joint_cmd,
    evaluate_task,
    render_snapshot,
    step,
)

CMD_TOPICS = {
    "/rover/cmd_vel": apply_cmd_vel,
    "/arm/joint_cmd": apply_joint_cmd,
    "/arm/gripper": apply_gripper,
}

TELEMETRY = {
    "/rover/scan": "LaserScan",
    "/rover/odom": "Pose2D",
    "/arm/joint_states": "JointState",
    "/camera/frame": "Frame",
    "/task/score": "TaskScore",
}


class SimRunner:
    def __init__(self, broker: Broker, clock: Clock, world: World,
                 dt: float = 0.01, lidar: LidarParams | None = None,
                 scan_every: int = 10, odom_every: int = 5,
                 joints_every: int = 5, frame_every: int = 10,
                 score_every: int = 100) -> None:
        self.broker = broker
        self.clock = clock
        self.dt = dt
        self.lidar = lidar or LidarParams()
        self._every = {
            "/rover/scan": scan_every,
            "/rover/odom": odom_every,
            "/arm/joint_states": joints_every,
            "/camera/frame": frame_every,
            "/task/score": score_every,
        }
        self._lock = threading.RLock()
        self.world = world
        self._pending_world: World | None = None
        self._cmds: deque[tuple[str, dict]] = deque()
        self._events_seen = 0
        self._last_collision_alert = -1.0
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self.client = BrokerClient(broker, "sim", on_env=self._on_env)
        for topic, msg_type in TELEMETRY.items():
            self.client.advertise(topic, msg_type)
        for topic in CMD_TOPICS:
            self.client.subscribe(topic)

    # --- bus side ---------------------------------------------------------------

    def _on_env(self, env: Envelope) -> None:
        if env.op is Op.PUB and env.topic in CMD_TOPICS:
            with self._lock:
                self._cmds.append((env.topic, env.payload))

    # --- stepping ----------------------------------------------------------------

    def tick_once(self) -> None:
        with self._lock:
            if self._pending_world is not None:
                self.world = self._pending_world
                self._pending_world = None
                self._events_seen = 0
            while self._cmds:
                topic, payload = self._cmds.popleft()
                try:
                    CMD_TOPICS[topic](self.world, payload)
                except (KeyError, TypeError, ValueError):
                    pass  # schema-invalid payloads were filtered upstream
            step(self.world, self.dt)
            self._publish_due()

    def _publish_due(self) -> None:
        w = self.world
        tick = w.tick
        score_due = tick % self._every["/task/score"] == 0
        new_events = w.events[self._events_seen:]
        if new_events:
            self._events_seen = len(w.events)
            if any(e["event"] in ("attach", "detach", "drop", "nothing_in_reach")
                   for e in new_events):
                score_due = True
            if any(e["event"] == "collision" for e in new_events):
                if w.clock - self._last_collision_alert >= 1.0:
                    self._last_collision_alert = w.clock
                    self.broker.emit_alert("WARN", "COLLISION",
                                           f"rover motion cancelled at tick {tick}")
        if tick % self._every["/rover/scan"] == 0:
            rng = w.rng if w.noise_sigma > 0 else None
            self.client.publish("/rover/scan", "LaserScan",
                                scan_lidar(w, self.lidar, rng=rng))
        if tick % self._every["/rover/odom"] == 0:
            x, y, theta = w.rover_pose()
            if w.noise_sigma > 0:
                x += w.rng.gauss(0.0, w.noise_sigma)
                y += w.rng.gauss(0.0, w.noise_sigma)
                theta += w.rng.gauss(0.0, w.noise_sigma)
            self.client.publish("/rover/odom", "Pose2D", {"x": x, "y": y, "theta": theta})
        if tick % self._every["/arm/joint_states"] == 0:
            self.client.publish("/arm/joint_states", "JointState", {
                "positions": [float(q) for q in w.joints],
                "velocities": [float(v) for v in w.joint_vel],
            })
        if tick % self._every["/camera/frame"] == 0:
            self.client.publish("/camera/frame", "Frame", render_snapshot(w))
        if score_due:
            self.client.publish("/task/score", "TaskScore", evaluate_task(w))

    # --- control -------------------------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="sim-tick", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def _run(self) -> None:
        period = self.dt
        next_t = time.monotonic() + period
        while not self._stop.is_set():
            self.tick_once()
            now = time.monotonic()
            if next_t > now:
                time.sleep(next_t - now)
                next_t += period
            else:
                # behind schedule: resynchronize instead of bursting to catch up
                next_t = now + period

    def reset_world(self, world: World) -> None:
        """Swap in a fresh world at the next tick boundary (operator reset)."""
        with self._lock:
            self._pending_world = world
            self._cmds.clear()

    # --- snapshots -----------------------------------------------------------------

    def score_now(self) -> dict:
        with self._lock:
            return evaluate_task(self.world)

    def frame_now(self) -> dict:
        with self._lock:
            return render_snapshot(self.world)

    @property
    def arm_config(self):
        return self.world.arm_config
