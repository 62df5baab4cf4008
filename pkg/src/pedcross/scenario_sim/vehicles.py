"""Automated-vehicle longitudinal behavior for the three driving profiles."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..hybrid_core import GeometryConfig

CAR_LENGTH = 4.5
MIN_SPACING = 2.0


class ProfileName(str, Enum):
    DEFENSIVE = "Defensive"
    NORMAL = "Normal"
    AGGRESSIVE = "Aggressive"


@dataclass(frozen=True)
class DrivingProfile:
    name: ProfileName
    reaction_distance: float
    stopped_distance: float
    max_accel: float
    slow_speed: Optional[float]
    full_speed: float

    def __post_init__(self):
        values = [self.reaction_distance, self.stopped_distance, self.max_accel, self.full_speed]
        if self.slow_speed is not None:
            values.append(self.slow_speed)
        if any(v <= 0 for v in values):
            raise ValueError(f"profile values must be positive: {self}")

    @property
    def wait_area_speed(self) -> float:
        return self.full_speed if self.slow_speed is None else self.slow_speed


PROFILES = {
    ProfileName.DEFENSIVE: DrivingProfile(ProfileName.DEFENSIVE, 50.0, 3.0, 3.0, 4.0, 15.6),
    ProfileName.NORMAL: DrivingProfile(ProfileName.NORMAL, 30.0, 2.0, 5.0, 7.0, 15.6),
    ProfileName.AGGRESSIVE: DrivingProfile(ProfileName.AGGRESSIVE, 10.0, 1.0, 8.0, None, 15.6),
}


def get_profile(name) -> DrivingProfile:
    return PROFILES[ProfileName(name)]


@dataclass(frozen=True)
class VehicleState:
    id: int
    lane: int
    x: float
    speed: float
    accel: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"negative speed: {self}")


def _ped_blocks_lane(ped_y: float, lane: int, geom: GeometryConfig) -> bool:
    """Pedestrian on the road with this lane still ahead of them."""
    ped_lane = geom.lane_of(ped_y)
    return ped_lane is not None and ped_lane <= lane


def _stop_decel(speed: float, remaining: float, max_accel: float) -> float:
    if speed <= 0:
        return 0.0
    if remaining <= 1e-9:
        return -max_accel
    return -min(speed * speed / (2.0 * remaining), max_accel)


def _integrate(veh: VehicleState, accel: float, dt: float) -> VehicleState:
    v = veh.speed
    if accel < 0 and v + accel * dt < 0:
        # comes to rest inside the step
        return VehicleState(veh.id, veh.lane, veh.x + v * v / (-2.0 * accel), 0.0, accel)
    return VehicleState(veh.id, veh.lane, veh.x + v * dt + 0.5 * accel * dt * dt,
                        max(v + accel * dt, 0.0), accel)


def av_step(veh: VehicleState, ped, profile: DrivingProfile, geom: GeometryConfig,
            dt: float, leader: Optional[VehicleState] = None) -> VehicleState:
    """Advance one vehicle by ``dt``.

    ``ped`` is the ground-truth pedestrian position (anything with ``x`` and
    ``y``) or None. Within the reaction distance the vehicle stops
    ``stopped_distance`` short of the crosswalk for a pedestrian in its
    path, slows down for a pedestrian in the wait area, and otherwise drives
    at full speed. ``leader`` is the vehicle ahead in the same lane, kept at
    a safe distance once the ego vehicle is faster.
    """
    v = veh.speed
    amax = profile.max_accel
    target = profile.full_speed
    stop_at = None
    if ped is not None:
        ahead = ped.x - veh.x
        if 0.0 < ahead <= profile.reaction_distance:
            if _ped_blocks_lane(ped.y, veh.lane, geom):
                stop_at = -profile.stopped_distance
            elif geom.in_wait_area(ped.x, ped.y):
                target = profile.wait_area_speed
    if stop_at is not None:
        accel = _stop_decel(v, stop_at - veh.x, amax)
    else:
        accel = (target - v) / dt
    if leader is not None and leader.x > veh.x and v > leader.speed:
        room = leader.x - CAR_LENGTH - MIN_SPACING - veh.x
        follow = -(v * v - leader.speed ** 2) / (2.0 * max(room, 1e-3))
        accel = min(accel, follow)
    accel = float(np.clip(accel, -amax, amax))
    new = _integrate(veh, accel, dt)
    if new.speed > profile.full_speed:
        new = VehicleState(new.id, new.lane, new.x, profile.full_speed, new.accel)
    return new


@dataclass
class Spawner:
    """Single spawn stream with inter-spawn gaps drawn from ``gap_choices``."""

    rng: np.random.Generator
    spawn_x: float = -150.0
    full_speed: float = 15.6
    n_lanes: int = 2
    gap_choices: tuple = (3.0, 5.0)
    last_spawn: Optional[float] = None
    pending_gap: float = 0.0
    next_id: int = 0

    def step(self, t: float) -> Optional[VehicleState]:
        if self.last_spawn is not None and t - self.last_spawn < self.pending_gap - 1e-9:
            return None
        veh = VehicleState(self.next_id, int(self.rng.integers(self.n_lanes)), self.spawn_x,
                           self.full_speed, 0.0)
        self.next_id += 1
        self.last_spawn = t
        self.pending_gap = float(self.rng.choice(self.gap_choices))
        return veh


def spawn_step(t: float, spawner: Spawner) -> Optional[VehicleState]:
    """Emit the next vehicle once the pending gap since the last spawn elapsed."""
    return spawner.step(t)
