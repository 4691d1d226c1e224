from __future__ import annotations

import math

import numpy as np
import pytest

from telelab.clock import VirtualClock
from telelab.server import Platform, PlatformConfig

EPOCH0 = 1_700_000_000.0


class FakeEpoch:
    """Wall-calendar time for slot windows, advanced by hand in tests."""

    def __init__(self, start: float = EPOCH0) -> None:
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def epoch() -> FakeEpoch:
    return FakeEpoch()


@pytest.fixture
def vclock() -> VirtualClock:
    return VirtualClock()


@pytest.fixture
def platform(vclock, epoch):
    """Full platform on a virtual clock; sim stepped manually, no sockets."""
    p = Platform(PlatformConfig(), clock=vclock, epoch_now=epoch)
    yield p
    p.stop()


def booked_slot(p: Platform, epoch: FakeEpoch, team: str = "t01"):
    slot = p.slots.create_slot(start=epoch.now, duration=3600.0)
    p.slots.activate_slot(slot.id)
    p.slots.book_slot(slot.id, team)
    return slot


def open_session(p: Platform, epoch: FakeEpoch, mode: str = "HOST_SIDE", team: str = "t01"):
    slot = booked_slot(p, epoch, team)
    return p.gateway.open_session(slot.id, mode)


def free_world(width: float = 20.0, height: float = 20.0, res: float = 0.1,
               start=(10.0, 10.0, 0.0), task: str = "FRUIT_PLUCK") -> dict:
    nx, ny = round(width / res), round(height / res)
    return {
        "name": "free",
        "size": [width, height],
        "resolution": res,
        "occupancy": ["." * nx for _ in range(ny)],
        "rover_start": {"x": start[0], "y": start[1], "theta": start[2]},
        "arm_mount": {"kind": "ON_ROVER", "offset": {"x": 0.0, "y": 0.0, "theta": 0.0},
                      "height": 0.4},
        "task": task,
        "objects": [],
    }


def dense_raycast_oracle(cells: np.ndarray, res: float, x0: float, y0: float,
                         angle: float, range_max: float, step: float) -> float:
    """Brute-force ray check: sample the ray every `step` metres."""
    ny, nx = cells.shape
    n = int(range_max / step)
    ts = np.arange(1, n + 1) * step
    xs = x0 + math.cos(angle) * ts
    ys = y0 + math.sin(angle) * ts
    cols = np.floor(xs / res).astype(int)
    rows = np.floor(ys / res).astype(int)
    oob = (cols < 0) | (rows < 0) | (cols >= nx) | (rows >= ny)
    occ = oob.copy()
    inb = ~oob
    occ[inb] = cells[rows[inb], cols[inb]]
    idx = int(np.argmax(occ)) if occ.any() else -1
    return float(ts[idx]) if idx >= 0 else range_max


def partition_world_cells(rng: np.random.Generator) -> tuple[np.ndarray, float, float, float]:
    """Random perimeter + full-span partition world; returns (cells, res, x0, y0)."""
    res = float(rng.choice([0.05, 0.1, 0.2]))
    nx = int(rng.integers(30, 70))
    ny = int(rng.integers(30, 70))
    cells = np.zeros((ny, nx), bool)
    cells[0, :] = True
    cells[-1, :] = True
    cells[:, 0] = True
    cells[:, -1] = True
    for _ in range(int(rng.integers(1, 5))):
        if rng.random() < 0.5:
            cells[int(rng.integers(2, ny - 2)), :] = True
        else:
            cells[:, int(rng.integers(2, nx - 2))] = True
    free = np.argwhere(~cells)
    r, c = free[rng.integers(0, len(free))]
    x0 = (c + rng.uniform(0.05, 0.95)) * res
    y0 = (r + rng.uniform(0.05, 0.95)) * res
    return cells, res, float(x0), float(y0)


class GridView:
    """Adapts a bool cell array to the grid interface scan_lidar expects."""

    def __init__(self, cells: np.ndarray, res: float) -> None:
        self.cells = cells
        self.resolution = res
        self.ny, self.nx = cells.shape

    def occupied_cell(self, cx: int, cy: int) -> bool:
        if cx < 0 or cy < 0 or cx >= self.nx or cy >= self.ny:
            return True
        return bool(self.cells[cy, cx])
