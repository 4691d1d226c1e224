"""Six-axis arm kinematics over a Denavit-Hartenberg table loaded from config.

The DH numbers are data, not code: the bundled config carries publicly
documented UR5 values, and the kinematics here stay generic over any
six-row table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class DHRow:
    a: float          # link length, m
    alpha: float      # link twist, rad
    d: float          # link offset, m
    theta_offset: float = 0.0


@dataclass(frozen=True)
class ArmConfig:
    name: str
    rows: tuple[DHRow, ...]
    reach: float                          # nominal working radius, m
    joint_limits: tuple[tuple[float, float], ...]
    joint_vel_limit: float                # rad/s, used by the integrator

    @property
    def wrist_offset_allowance(self) -> float:
        """Sum of the |d| offsets: chain extension not counted in the nominal reach."""
        return sum(abs(r.d) for r in self.rows[:5])


def load_arm_config(path: str | Path | None = None) -> ArmConfig:
    if path is None:
        text = resources.files("telelab").joinpath("data/ur5_dh.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    rows = tuple(DHRow(*row) for row in doc["dh_rows"])
    if len(rows) != 6:
        raise ValueError("arm config must define exactly six DH rows")
    limits = tuple((float(lo), float(hi)) for lo, hi in doc["joint_limits"])
    return ArmConfig(
        name=doc.get("name", "arm"),
        rows=rows,
        reach=float(doc["reach_m"]),
        joint_limits=limits,
        joint_vel_limit=float(doc.get("joint_vel_limit", math.pi)),
    )


def dh_transform(theta: float, row: DHRow) -> np.ndarray:
    """Classic DH transform for one joint, closed form."""
    t = theta + row.theta_offset
    ct, st = math.cos(t), math.sin(t)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    return np.array([
        [ct, -st * ca, st * sa, row.a * ct],
        [st, ct * ca, -ct * sa, row.a * st],
        [0.0, sa, ca, row.d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_frames(joints, rows: tuple[DHRow, ...]) -> list[np.ndarray]:
    """Cumulative transforms T0_1 .. T0_6 for the six joints."""
    frames = []
    T = np.eye(4)
    for q, row in zip(joints, rows):
        T = T @ dh_transform(float(q), row)
        frames.append(T)
    return frames


def fk(joints, rows: tuple[DHRow, ...]) -> np.ndarray:
    """Tool transform (4x4) in the arm base frame."""
    return fk_frames(joints, rows)[-1]


def wrist_center(joints, rows: tuple[DHRow, ...]) -> np.ndarray:
    """Tool point pulled back along the approach axis by the flange offset d6."""
    T = fk(joints, rows)
    return T[:3, 3] - rows[5].d * T[:3, 2]


def quat_from_matrix(R: np.ndarray) -> tuple[float, float, float, float]:
    """Unit quaternion (w, x, y, z) from a rotation matrix."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        return (0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s)
    if R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        return ((R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s)
    if R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        return ((R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s)
    s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
    return ((R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s)
