"""UAV motion and per-round link randomness.

Random-waypoint flight inside a cylindrical cell, per-round Rician-factor
resampling, and communication-interruption draws. All randomness comes from
generators passed in by the caller; nothing here owns a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import Position

__all__ = [
    "CellGeometry",
    "UavState",
    "random_cylinder_position",
    "step_position",
    "resample_k",
    "sample_interruption",
    "draw_interruption_epoch",
]


@dataclass
class CellGeometry:
    """Cylindrical flight volume over a ground base station on the axis."""

    cell_radius_m: float = 500.0
    bs_height_m: float = 20.0
    alt_min_m: float = 20.0
    alt_max_m: float = 80.0

    def __post_init__(self):
        if self.cell_radius_m <= 0.0:
            raise ValueError("cell radius must be positive")
        if self.alt_min_m > self.alt_max_m:
            raise ValueError("alt_min_m must not exceed alt_max_m")
        if self.bs_height_m < 0.0:
            raise ValueError("base-station height must be non-negative")

    def bs_position(self) -> Position:
        return Position(0.0, 0.0, self.bs_height_m)

    def contains(self, p: Position, slack: float = 1e-9) -> bool:
        return (
            math.hypot(p.x, p.y) <= self.cell_radius_m + slack
            and self.alt_min_m - slack <= p.z <= self.alt_max_m + slack
        )


@dataclass
class UavState:
    """Mutable per-UAV state carried across rounds."""

    uav_id: int
    position: Position
    waypoint: Position
    speed_mps: float = 10.0
    k_db: float = 1.8
    interrupted: bool = False
    sl_required: bool = False
    compute_s_per_sample: float = 1e-4
    partition_id: int = field(default=-1)


def random_cylinder_position(geometry: CellGeometry, rng: np.random.Generator) -> Position:
    """Uniform point in the cylinder (area-uniform in the disc)."""
    radius = geometry.cell_radius_m * math.sqrt(rng.random())
    angle = 2.0 * math.pi * rng.random()
    z = rng.uniform(geometry.alt_min_m, geometry.alt_max_m)
    return Position(radius * math.cos(angle), radius * math.sin(angle), z)


def step_position(
    uav: UavState,
    geometry: CellGeometry,
    dt: float,
    rng: np.random.Generator,
) -> UavState:
    """Advance one random-waypoint step of duration dt.

    Moves at most speed*dt straight toward the current waypoint; on arrival
    a fresh uniform waypoint is drawn. The cylinder is convex, so the path
    never leaves it. Mutates and returns the same state object.
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    p, w = uav.position, uav.waypoint
    reach = uav.speed_mps * dt
    gap = math.dist((p.x, p.y, p.z), (w.x, w.y, w.z))
    if gap > reach:
        frac = reach / gap
        uav.position = Position(
            p.x + frac * (w.x - p.x),
            p.y + frac * (w.y - p.y),
            p.z + frac * (w.z - p.z),
        )
    else:
        uav.position = Position(w.x, w.y, w.z)
        uav.waypoint = random_cylinder_position(geometry, rng)
    return uav


def resample_k(rng: np.random.Generator, k_min_db: float, k_max_db: float) -> float:
    """Fresh Rician factor in dB, uniform over [k_min_db, k_max_db]."""
    if k_min_db > k_max_db:
        raise ValueError("k_min_db must not exceed k_max_db")
    if k_min_db == k_max_db:
        return float(k_min_db)
    return float(rng.uniform(k_min_db, k_max_db))


def sample_interruption(rng: np.random.Generator, probability: float) -> bool:
    """Bernoulli draw: does this UAV lose its final upload this round?"""
    if not 0.0 <= probability <= 1.0:
        raise ValueError("interruption probability must lie in [0, 1]")
    return bool(rng.random() < probability)


def draw_interruption_epoch(rng: np.random.Generator, local_epochs: int) -> int:
    """Epoch index at which an interrupted UAV's channel dies, uniform in 1..e.

    Scheduled transmissions strictly before this epoch still succeed; the
    final upload (at or after epoch e) always fails.
    """
    if local_epochs < 1:
        raise ValueError("local_epochs must be at least 1")
    return int(rng.integers(1, local_epochs + 1))
