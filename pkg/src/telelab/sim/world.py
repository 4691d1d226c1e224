"""Simulated testbed state and its fixed-tick integrator.

The world is single-writer: only the tick owner calls the mutating
operations here. Snapshots (frames) are plain dicts and safe to share.
With zero noise the evolution is bit-deterministic for a given command/tick
sequence, which record/replay and the scripted fixtures rely on.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from telelab.sim.arm import ArmConfig, fk, load_arm_config

FREE = "."
OCCUPIED = "#"

KINDS = ("FRUIT", "BOX", "RACK", "DEPOSIT_BIN")
TASKS = ("FRUIT_PLUCK", "WAREHOUSE_SORT")

DEFAULT_GRASP_RADIUS = 0.05


class SchemaError(Exception):
    pass


class UnreachableStart(SchemaError):
    pass


class OccupancyGrid:
    """Row-major cell grid; row i covers y in [i*res, (i+1)*res). Out of bounds counts occupied."""

    def __init__(self, rows: list[str], resolution: float) -> None:
        self.resolution = resolution
        self.ny = len(rows)
        self.nx = len(rows[0]) if rows else 0
        self.cells = np.array(
            [[c == OCCUPIED for c in row] for row in rows], dtype=bool
        )

    def occupied_cell(self, cx: int, cy: int) -> bool:
        if cx < 0 or cy < 0 or cx >= self.nx or cy >= self.ny:
            return True
        return bool(self.cells[cy, cx])

    def occupied(self, x: float, y: float) -> bool:
        return self.occupied_cell(int(math.floor(x / self.resolution)),
                                  int(math.floor(y / self.resolution)))

    @property
    def width(self) -> float:
        return self.nx * self.resolution

    @property
    def height(self) -> float:
        return self.ny * self.resolution


@dataclass
class TaskObject:
    id: str
    kind: str
    x: float
    y: float
    theta: float = 0.0
    height: float = 0.0
    attached_to: str | None = None   # None | "GRIPPER" | rack/plant object id
    size: float = 0.5                # footprint side length for bins/racks, m
    target: str | None = None        # designated DEPOSIT_BIN id (WAREHOUSE_SORT)


@dataclass
class WorldSpec:
    name: str
    size: tuple[float, float]
    resolution: float
    occupancy: list[str]
    rover_start: tuple[float, float, float]
    arm_mount: str                       # ON_ROVER | FIXED
    arm_offset: tuple[float, float, float]
    arm_height: float
    objects: list[TaskObject]
    task: str
    grasp_radius: float = DEFAULT_GRASP_RADIUS


class World:
    def __init__(self, spec: WorldSpec, arm_config: ArmConfig | None = None,
                 noise_sigma: float = 0.0, seed: int = 0) -> None:
        self.spec = spec
        self.grid = OccupancyGrid(spec.occupancy, spec.resolution)
        self.arm_config = arm_config or load_arm_config()
        self.x, self.y, self.theta = spec.rover_start
        self.cmd_vx = 0.0
        self.cmd_wz = 0.0
        self.joints = np.zeros(6)
        self.joint_vel = np.zeros(6)
        self.joint_cmd_mode: str | None = None
        self.joint_cmd_values = np.zeros(6)
        self.gripper_engaged = False
        self.objects: dict[str, TaskObject] = {o.id: TaskObject(**vars(o)) for o in spec.objects}
        self.object_order = [o.id for o in spec.objects]
        self.clock = 0.0
        self.tick = 0
        self.events: list[dict] = []
        self.noise_sigma = noise_sigma
        self.rng = random.Random(seed)

    # --- queries -------------------------------------------------------------

    def rover_pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def arm_base_pose(self) -> tuple[float, float, float, float]:
        """(x, y, z, heading) of the arm base in world coordinates."""
        ox, oy, oth = self.spec.arm_offset
        if self.spec.arm_mount == "ON_ROVER":
            c, s = math.cos(self.theta), math.sin(self.theta)
            return (self.x + c * ox - s * oy,
                    self.y + s * ox + c * oy,
                    self.spec.arm_height,
                    self.theta + oth)
        return (ox, oy, self.spec.arm_height, oth)

    def tool_point(self) -> tuple[float, float, float]:
        """Tool position in world coordinates."""
        T = fk(self.joints, self.arm_config.rows)
        tx, ty, tz = T[0, 3], T[1, 3], T[2, 3]
        bx, by, bz, bth = self.arm_base_pose()
        c, s = math.cos(bth), math.sin(bth)
        return (bx + c * tx - s * ty, by + s * tx + c * ty, bz + tz)

    def _event(self, name: str, **kw) -> None:
        self.events.append({"t": round(self.clock, 9), "event": name, **kw})


def _norm_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


# --- world file --------------------------------------------------------------

def _require(doc: dict, key: str, typ) -> object:
    if key not in doc:
        raise SchemaError(f"world file missing field '{key}'")
    v = doc[key]
    if typ is float:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SchemaError(f"field '{key}' must be a number")
        return float(v)
    if not isinstance(v, typ):
        raise SchemaError(f"field '{key}' must be {typ.__name__}")
    return v


def _pose(doc: dict, key: str) -> tuple[float, float, float]:
    p = _require(doc, key, dict)
    try:
        return (float(p["x"]), float(p["y"]), float(p.get("theta", 0.0)))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"bad pose in '{key}': {e}") from None


def load_world(doc: dict, arm_config: ArmConfig | None = None,
               noise_sigma: float = 0.0, seed: int = 0) -> World:
    """Build a World from a parsed world-file document; clock starts at 0."""
    if not isinstance(doc, dict):
        raise SchemaError("world file must be a JSON object")
    name = _require(doc, "name", str)
    size = _require(doc, "size", list)
    if len(size) != 2:
        raise SchemaError("size must be [width, height]")
    width, height = float(size[0]), float(size[1])
    resolution = _require(doc, "resolution", float)
    if resolution <= 0:
        raise SchemaError("resolution must be > 0")
    occupancy = _require(doc, "occupancy", list)
    ny = round(height / resolution)
    nx = round(width / resolution)
    if len(occupancy) != ny:
        raise SchemaError(f"occupancy must have {ny} rows, got {len(occupancy)}")
    for i, row in enumerate(occupancy):
        if not isinstance(row, str) or len(row) != nx:
            raise SchemaError(f"occupancy row {i} must be a string of length {nx}")
        bad = set(row) - {FREE, OCCUPIED}
        if bad:
            raise SchemaError(f"occupancy row {i} has invalid cells {sorted(bad)}")
    rover_start = _pose(doc, "rover_start")
    mount = doc.get("arm_mount", {})
    mount_kind = mount.get("kind", "ON_ROVER")
    if mount_kind not in ("ON_ROVER", "FIXED"):
        raise SchemaError(f"arm_mount.kind {mount_kind!r} invalid")
    arm_offset = (float(mount.get("offset", {}).get("x", 0.0)),
                  float(mount.get("offset", {}).get("y", 0.0)),
                  float(mount.get("offset", {}).get("theta", 0.0)))
    arm_height = float(mount.get("height", 0.4))
    task = _require(doc, "task", str)
    if task not in TASKS:
        raise SchemaError(f"task {task!r} not one of {TASKS}")

    objects: list[TaskObject] = []
    seen: set[str] = set()
    for od in doc.get("objects", []):
        oid = od.get("id")
        kind = od.get("kind")
        if not isinstance(oid, str) or oid in seen:
            raise SchemaError(f"object id {oid!r} missing or duplicate")
        seen.add(oid)
        if kind not in KINDS:
            raise SchemaError(f"object {oid}: kind {kind!r} not one of {KINDS}")
        x, y = float(od["x"]), float(od["y"])
        if not (0.0 <= x <= width and 0.0 <= y <= height):
            raise SchemaError(f"object {oid} at ({x}, {y}) outside world bounds")
        objects.append(TaskObject(
            id=oid, kind=kind, x=x, y=y,
            theta=float(od.get("theta", 0.0)),
            height=float(od.get("height", 0.0)),
            attached_to=od.get("attached_to"),
            size=float(od.get("size", 0.5)),
            target=od.get("target"),
        ))
    for o in objects:
        if o.attached_to is not None and o.attached_to != "GRIPPER" and o.attached_to not in seen:
            raise SchemaError(f"object {o.id} attached to unknown parent {o.attached_to!r}")

    spec = WorldSpec(
        name=name, size=(width, height), resolution=resolution, occupancy=occupancy,
        rover_start=rover_start, arm_mount=mount_kind, arm_offset=arm_offset,
        arm_height=arm_height, objects=objects, task=task,
        grasp_radius=float(doc.get("grasp_radius", DEFAULT_GRASP_RADIUS)),
    )
    world = World(spec, arm_config=arm_config, noise_sigma=noise_sigma, seed=seed)
    if world.grid.occupied(rover_start[0], rover_start[1]):
        raise UnreachableStart(f"rover_start {rover_start[:2]} is occupied")
    return world


def load_world_file(path: str | Path, **kw) -> World:
    return load_world(json.loads(Path(path).read_text()), **kw)


def bundled_world_path(name: str) -> Path:
    return Path(str(resources.files("telelab").joinpath(f"data/{name}.world")))


# --- command application (tick-owner only) ------------------------------------

def apply_cmd_vel(world: World, payload: dict) -> None:
    world.cmd_vx = float(payload["vx"])
    world.cmd_wz = float(payload["wz"])


def apply_joint_cmd(world: World, payload: dict) -> None:
    world.joint_cmd_mode = payload["mode"]
    world.joint_cmd_values = np.asarray([float(v) for v in payload["values"]])


def apply_gripper(world: World, payload: dict) -> None:
    """Engage = attach nearest graspable within reach; disengage = release in place."""
    engage = bool(payload["engage"])
    if engage and not world.gripper_engaged:
        tx, ty, tz = world.tool_point()
        best = None
        best_d = world.spec.grasp_radius
        for oid in world.object_order:
            o = world.objects[oid]
            if o.kind not in ("FRUIT", "BOX") or o.attached_to == "GRIPPER":
                continue
            d = math.dist((o.x, o.y, o.height), (tx, ty, tz))
            if d <= best_d:
                best, best_d = o, d
        if best is None:
            world._event("nothing_in_reach")
        else:
            prev = best.attached_to
            best.attached_to = "GRIPPER"
            best.x, best.y, best.height = tx, ty, tz
            world._event("attach", object=best.id, detached_from=prev)
            world.gripper_engaged = True
    elif not engage and world.gripper_engaged:
        tx, ty, tz = world.tool_point()
        for oid in world.object_order:
            o = world.objects[oid]
            if o.attached_to == "GRIPPER":
                o.attached_to = None
                o.x, o.y, o.height = tx, ty, tz
                world._event("detach", object=o.id)
                bin_id = _containing_bin(world, o)
                if bin_id is not None:
                    world._event("drop", object=o.id, bin=bin_id)
        world.gripper_engaged = False
    else:
        world.gripper_engaged = engage


def step(world: World, dt: float) -> World:
    """Advance one fixed tick: rover, arm, attachments, clock."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    # rover: planar unicycle, explicit Euler, heading updated after translation
    nx = world.x + world.cmd_vx * math.cos(world.theta) * dt
    ny = world.y + world.cmd_vx * math.sin(world.theta) * dt
    ntheta = _norm_angle(world.theta + world.cmd_wz * dt)
    if world.grid.occupied(nx, ny):
        world._event("collision", x=round(nx, 6), y=round(ny, 6))
    else:
        world.x, world.y, world.theta = nx, ny, ntheta

    # arm: rate-limited approach (POSITION) or clamped integration (VELOCITY)
    vmax = world.arm_config.joint_vel_limit
    if world.joint_cmd_mode == "POSITION":
        delta = world.joint_cmd_values - world.joints
        applied = np.clip(delta, -vmax * dt, vmax * dt)
        world.joints = world.joints + applied
        world.joint_vel = applied / dt
    elif world.joint_cmd_mode == "VELOCITY":
        vel = np.clip(world.joint_cmd_values, -vmax, vmax)
        world.joints = world.joints + vel * dt
        world.joint_vel = vel.copy()
    else:
        world.joint_vel = np.zeros(6)
    lims = world.arm_config.joint_limits
    world.joints = np.clip(world.joints, [lo for lo, _ in lims], [hi for _, hi in lims])

    # attachments ride their parent
    if world.gripper_engaged:
        tx, ty, tz = world.tool_point()
        for o in world.objects.values():
            if o.attached_to == "GRIPPER":
                o.x, o.y, o.height = tx, ty, tz

    world.clock += dt
    world.tick += 1
    return world


# --- scoring and snapshots -----------------------------------------------------

def _in_footprint(o: TaskObject, bin_obj: TaskObject) -> bool:
    half = bin_obj.size / 2.0
    return abs(o.x - bin_obj.x) <= half and abs(o.y - bin_obj.y) <= half


def _containing_bin(world: World, o: TaskObject) -> str | None:
    for oid in world.object_order:
        b = world.objects[oid]
        if b.kind == "DEPOSIT_BIN" and _in_footprint(o, b):
            return b.id
    return None


def evaluate_task(world: World) -> dict:
    """TaskScore payload: points per the world's task rubric plus the event log."""
    points = 0
    if world.spec.task == "FRUIT_PLUCK":
        for o in world.objects.values():
            if o.kind == "FRUIT" and o.attached_to is None and _containing_bin(world, o):
                points += 1
    else:  # WAREHOUSE_SORT
        for o in world.objects.values():
            if o.kind != "BOX" or o.attached_to == "GRIPPER" or o.target is None:
                continue
            b = world.objects.get(o.target)
            if b is not None and b.kind == "DEPOSIT_BIN" and _in_footprint(o, b):
                points += 1
    return {"points": points, "events": list(world.events)}


def render_snapshot(world: World) -> dict:
    """Frame payload: everything a 2D renderer needs, deterministically ordered."""
    tx, ty, tz = world.tool_point()
    entities: list[dict] = [
        {"id": "rover", "kind": "ROVER",
         "pose": [world.x, world.y, world.theta]},
        {"id": "arm", "kind": "ARM",
         "joints": [float(q) for q in world.joints],
         "tool": [tx, ty, tz],
         "gripper_engaged": world.gripper_engaged},
    ]
    for oid in world.object_order:
        o = world.objects[oid]
        entities.append({
            "id": o.id, "kind": o.kind,
            "pose": [o.x, o.y, o.theta], "height": o.height,
            "size": o.size, "attached_to": o.attached_to,
        })
    return {"tick": world.tick, "entities": entities}
