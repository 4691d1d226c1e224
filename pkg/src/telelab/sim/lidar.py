"""Planar LIDAR over the occupancy grid using DDA cell traversal."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class LidarParams:
    n_beams: int = 360
    angle_min: float = -math.pi
    angle_max: float = math.pi
    range_max: float = 10.0
    noise_sigma: float = 0.0


def ray_range(grid, x0: float, y0: float, angle: float, range_max: float) -> float:
    """Distance along the ray to the first occupied cell boundary, capped at range_max.

    Amanatides-Woo traversal: exact cell crossings, no sampling.
    """
    res = grid.resolution
    cx = int(math.floor(x0 / res))
    cy = int(math.floor(y0 / res))
    if grid.occupied_cell(cx, cy):
        return 0.0
    dx = math.cos(angle)
    dy = math.sin(angle)

    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    # t at which the ray crosses the next vertical / horizontal cell boundary
    if dx != 0.0:
        nx = (cx + (1 if dx > 0 else 0)) * res
        t_max_x = (nx - x0) / dx
        t_delta_x = res / abs(dx)
    else:
        t_max_x = math.inf
        t_delta_x = math.inf
    if dy != 0.0:
        ny = (cy + (1 if dy > 0 else 0)) * res
        t_max_y = (ny - y0) / dy
        t_delta_y = res / abs(dy)
    else:
        t_max_y = math.inf
        t_delta_y = math.inf

    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            t_max_x += t_delta_x
            cx += step_x
        else:
            t = t_max_y
            t_max_y += t_delta_y
            cy += step_y
        if t > range_max:
            return range_max
        if grid.occupied_cell(cx, cy):
            return min(t, range_max)


def scan_lidar(world, params: LidarParams | None = None,
               rng: random.Random | None = None) -> dict:
    """LaserScan payload for the rover's current pose.

    Beam k points at rover heading + angle_min + k * increment. Optional
    additive Gaussian noise, re-capped to [0, range_max].
    """
    p = params or LidarParams()
    if p.n_beams < 1:
        raise ValueError("n_beams must be >= 1")
    if p.n_beams == 1:
        increment = 0.0
    else:
        increment = (p.angle_max - p.angle_min) / p.n_beams
    x, y, theta = world.rover_pose()
    ranges = []
    for k in range(p.n_beams):
        ang = theta + p.angle_min + k * increment
        r = ray_range(world.grid, x, y, ang, p.range_max)
        if p.noise_sigma > 0.0 and rng is not None:
            r = min(max(r + rng.gauss(0.0, p.noise_sigma), 0.0), p.range_max)
        ranges.append(r)
    return {
        "angle_min": p.angle_min,
        "angle_increment": increment,
        "range_max": p.range_max,
        "ranges": ranges,
    }
