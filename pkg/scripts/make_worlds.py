#!/usr/bin/env python3
"""Regenerate the bundled world files and the greenhouse solution script.

Geometry is derived, not hand-tuned: grab/drop arm poses are found by
seeded rejection sampling against the real FK, and the fruits are placed
exactly at those tool points, so the scripted solution is correct by
construction. Output is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

from telelab.sim.arm import fk, load_arm_config

DATA = Path(__file__).resolve().parent.parent / "src" / "telelab" / "data"

RES = 0.1
ARM_HEIGHT = 0.4

PARK = (3.5, 1.2, math.pi / 2)   # rover pose the script drives to


def empty_grid(width_m: float, height_m: float) -> list[list[str]]:
    nx, ny = round(width_m / RES), round(height_m / RES)
    rows = [["." for _ in range(nx)] for _ in range(ny)]
    for x in range(nx):
        rows[0][x] = "#"
        rows[ny - 1][x] = "#"
    for y in range(ny):
        rows[y][0] = "#"
        rows[y][nx - 1] = "#"
    return rows


def occupy(rows: list[list[str]], x: float, y: float) -> None:
    rows[int(y // RES)][int(x // RES)] = "#"


def to_world(local_xyz, park=PARK):
    """Arm-local tool point -> world coordinates at the park pose."""
    bx, by, bth = park
    tx, ty, tz = local_xyz
    c, s = math.cos(bth), math.sin(bth)
    return (bx + c * tx - s * ty, by + s * tx + c * ty, ARM_HEIGHT + tz)


def find_pose(rng: random.Random, rows, x_range, y_range, z_range) -> tuple[list[float], tuple]:
    """Seeded rejection sampling: any joint vector whose tool lands in the box."""
    for _ in range(200000):
        q = [rng.uniform(-math.pi, math.pi),
             rng.uniform(-math.pi, -0.2),
             rng.uniform(-2.5, 2.5),
             rng.uniform(-math.pi, math.pi),
             rng.uniform(-math.pi, math.pi),
             0.0]
        p = fk(q, rows)[:3, 3]
        if (x_range[0] <= p[0] <= x_range[1]
                and y_range[0] <= p[1] <= y_range[1]
                and z_range[0] <= p[2] <= z_range[1]):
            return [round(v, 4) for v in q], tuple(p)
    raise RuntimeError("no pose found; widen the box")


def make_greenhouse() -> dict:
    arm = load_arm_config()
    rng = random.Random(42)
    rows_grid = empty_grid(10.0, 6.0)

    grabs = []
    lateral_bands = [(0.20, 0.33), (-0.07, 0.07), (-0.33, -0.20)]
    for band in lateral_bands:
        q, p = find_pose(rng, arm.rows, (0.45, 0.68), band, (0.25, 0.50))
        grabs.append((q, p))
    drop_q, drop_p = find_pose(rng, arm.rows, (0.28, 0.40), (-0.06, 0.06), (0.18, 0.30))

    objects = []
    for i, (q, p) in enumerate(grabs, start=1):
        fx, fy, fz = to_world(p)
        plant_x, plant_y = fx, fy + 0.15
        occupy(rows_grid, plant_x, plant_y)
        objects.append({"id": f"plant_{i}", "kind": "RACK",
                        "x": round(plant_x, 6), "y": round(plant_y, 6),
                        "height": 1.2, "size": 0.1})
        objects.append({"id": f"fruit_{i}", "kind": "FRUIT",
                        "x": round(fx, 6), "y": round(fy, 6),
                        "height": round(fz, 6), "size": 0.06,
                        "attached_to": f"plant_{i}"})
    bx, by, _ = to_world(drop_p)
    objects.append({"id": "bin", "kind": "DEPOSIT_BIN",
                    "x": round(bx, 6), "y": round(by, 6),
                    "height": 0.0, "size": 0.5})

    # scattered greenhouse clutter, away from the drive corridor (y <= 1.3)
    for cx, cy in [(6.5, 4.0), (7.0, 4.0), (2.0, 4.5), (2.1, 4.5), (8.5, 2.5)]:
        occupy(rows_grid, cx, cy)

    world = {
        "name": "greenhouse",
        "size": [10.0, 6.0],
        "resolution": RES,
        "occupancy": ["".join(r) for r in rows_grid],
        "rover_start": {"x": 1.0, "y": 1.0, "theta": 0.0},
        "arm_mount": {"kind": "ON_ROVER", "offset": {"x": 0.0, "y": 0.0, "theta": 0.0},
                      "height": ARM_HEIGHT},
        "task": "FRUIT_PLUCK",
        "objects": objects,
    }
    solution = make_solution([q for q, _ in grabs], drop_q)
    return {"world": world, "solution": solution}


def make_solution(grab_qs: list[list[float]], drop_q: list[float]) -> dict:
    steps = []
    t = [0]

    def pub(topic, msg_type, payload):
        steps.append({"at_ms": t[0], "publish":
                      {"topic": topic, "msg_type": msg_type, "payload": payload}})
        t[0] += 50

    def wait(topic, where, timeout_ms=30000):
        steps.append({"at_ms": t[0], "wait_for":
                      {"topic": topic, "where": where, "timeout_ms": timeout_ms}})
        t[0] += 50

    def drive(vx, wz):
        pub("cmd_vel", "Twist", {"vx": vx, "wz": wz})

    # leg 1: east along y=1.0 to x ~ 3.5
    drive(0.8, 0.0)
    wait("odom", {"path": "x", "op": ">=", "value": 3.30})
    drive(0.1, 0.0)
    wait("odom", {"path": "x", "op": ">=", "value": 3.49})
    drive(0.0, 0.0)
    # leg 2: face +y
    drive(0.0, 0.5)
    wait("odom", {"path": "theta", "op": ">=", "value": 1.45})
    drive(0.0, 0.1)
    wait("odom", {"path": "theta", "op": ">=", "value": 1.5658})
    drive(0.0, 0.0)
    # leg 3: creep to the plant row
    drive(0.1, 0.0)
    wait("odom", {"path": "y", "op": ">=", "value": 1.195})
    drive(0.0, 0.0)

    for i, q in enumerate(grab_qs, start=1):
        pub("joint_cmd", "JointCommand", {"mode": "POSITION", "values": q})
        wait("joint_states", {"path": "positions", "op": "near", "value": q, "tol": 0.005})
        pub("gripper", "GripperCmd", {"engage": True})
        pub("joint_cmd", "JointCommand", {"mode": "POSITION", "values": drop_q})
        wait("joint_states", {"path": "positions", "op": "near", "value": drop_q, "tol": 0.005})
        pub("gripper", "GripperCmd", {"engage": False})
        wait("score", {"path": "points", "op": ">=", "value": i})

    return {"name": "greenhouse pluck solution", "steps": steps}


def make_warehouse() -> dict:
    rows_grid = empty_grid(8.0, 6.0)
    # two storage racks as short occupied walls
    for x in (2.0, 2.1, 2.2):
        occupy(rows_grid, x, 4.0)
    for x in (5.0, 5.1, 5.2):
        occupy(rows_grid, x, 4.0)
    objects = [
        {"id": "rack_a", "kind": "RACK", "x": 2.1, "y": 4.0, "height": 1.5, "size": 0.4},
        {"id": "rack_b", "kind": "RACK", "x": 5.1, "y": 4.0, "height": 1.5, "size": 0.4},
        {"id": "box_1", "kind": "BOX", "x": 2.1, "y": 3.85, "height": 0.6,
         "size": 0.15, "attached_to": "rack_a", "target": "zone_1"},
        {"id": "box_2", "kind": "BOX", "x": 5.1, "y": 3.85, "height": 0.6,
         "size": 0.15, "attached_to": "rack_b", "target": "zone_2"},
        {"id": "zone_1", "kind": "DEPOSIT_BIN", "x": 3.0, "y": 1.5, "height": 0.0, "size": 0.6},
        {"id": "zone_2", "kind": "DEPOSIT_BIN", "x": 5.0, "y": 1.5, "height": 0.0, "size": 0.6},
    ]
    return {
        "name": "warehouse",
        "size": [8.0, 6.0],
        "resolution": RES,
        "occupancy": ["".join(r) for r in rows_grid],
        "rover_start": {"x": 1.0, "y": 1.0, "theta": 0.0},
        "arm_mount": {"kind": "ON_ROVER", "offset": {"x": 0.0, "y": 0.0, "theta": 0.0},
                      "height": ARM_HEIGHT},
        "task": "WAREHOUSE_SORT",
        "objects": objects,
    }


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    gh = make_greenhouse()
    (DATA / "greenhouse.world").write_text(json.dumps(gh["world"], indent=1) + "\n")
    (DATA / "greenhouse_solution.json").write_text(json.dumps(gh["solution"], indent=1) + "\n")
    (DATA / "warehouse.world").write_text(json.dumps(make_warehouse(), indent=1) + "\n")
    print("wrote", sorted(p.name for p in DATA.iterdir()))


if __name__ == "__main__":
    main()
