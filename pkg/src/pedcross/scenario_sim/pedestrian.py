"""Parametric ground-truth pedestrian used to generate labeled interactions.

The pedestrian walks to the crosswalk, waits at the curb, accepts the first
traffic gap longer than a personal critical gap that shrinks with waiting
time, crosses after a short start delay and walks away on the far side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..hybrid_core import ActionState, GeometryConfig, Kinematics

SIDEWALK_OFFSET = 0.5


@dataclass(frozen=True)
class PedOracleConfig:
    critical_gap_mean: float = 4.5
    critical_gap_std: float = 0.5
    wait_decay: float = 0.1
    min_gap: float = 1.5
    sidewalk_speed_mean: float = 1.52
    sidewalk_speed_std: float = 0.15
    crossing_speed_mean: float = 1.68
    crossing_speed_std: float = 0.15
    start_delay_rate: float = 2.5
    gaze_p_wait: float = 0.8
    gaze_p_walk: float = 0.3
    approach_start_min: float = 6.0
    approach_start_max: float = 12.0
    walkaway_duration: float = 7.0

    def __post_init__(self):
        means = (self.critical_gap_mean, self.sidewalk_speed_mean, self.crossing_speed_mean,
                 self.start_delay_rate)
        if any(m <= 0 for m in means) or self.min_gap <= 0:
            raise ValueError("oracle means, rates and min_gap must be positive")
        for p in (self.gaze_p_wait, self.gaze_p_walk):
            if not 0.0 <= p <= 1.0:
                raise ValueError("gaze probabilities must lie in [0, 1]")
        if min(self.critical_gap_std, self.sidewalk_speed_std, self.crossing_speed_std) < 0:
            raise ValueError("standard deviations must be >= 0")

    def threshold(self, critical_gap: float, wait_time: float) -> float:
        return max(self.min_gap, critical_gap - self.wait_decay * wait_time)


def _positive_normal(rng: np.random.Generator, mean: float, std: float, floor: float) -> float:
    v = rng.normal(mean, std) if std > 0 else mean
    return max(float(v), floor)


@dataclass
class Pedestrian:
    """Mutable ground-truth pedestrian. ``vx, vy`` apply over the next tick."""

    x: float
    y: float
    vx: float
    vy: float
    phase: ActionState
    critical_gap: float
    sidewalk_speed: float
    crossing_speed: float
    wait_entry: Optional[float] = None
    cross_at: Optional[float] = None
    walkaway_dir: float = 1.0
    walkaway_since: Optional[float] = None
    crossing_only: bool = True

    @property
    def kin(self) -> Kinematics:
        return Kinematics(self.x, self.y, self.vx, self.vy)

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def wait_time(self, t: float) -> float:
        return t - self.wait_entry if self.wait_entry is not None else 0.0

    def done(self, t: float, oracle: PedOracleConfig) -> bool:
        return (self.phase == ActionState.WALKAWAY and self.walkaway_since is not None
                and t - self.walkaway_since >= oracle.walkaway_duration - 1e-9)


def spawn_pedestrian(rng: np.random.Generator, oracle: PedOracleConfig,
                     geom: GeometryConfig, walkaway_only: bool = False) -> Pedestrian:
    side = 1.0 if rng.random() < 0.5 else -1.0
    critical = _positive_normal(rng, oracle.critical_gap_mean, oracle.critical_gap_std,
                                oracle.min_gap)
    walk = _positive_normal(rng, oracle.sidewalk_speed_mean, oracle.sidewalk_speed_std, 0.5)
    cross = _positive_normal(rng, oracle.crossing_speed_mean, oracle.crossing_speed_std, 0.5)
    y = geom.curb_y - SIDEWALK_OFFSET
    if walkaway_only:
        x0 = side * rng.uniform(geom.decision_halfwidth + 0.5, geom.decision_halfwidth + 3.0)
        return Pedestrian(x0, y, side * walk, 0.0, ActionState.WALKAWAY, critical, walk, cross,
                          walkaway_dir=side, walkaway_since=0.0, crossing_only=False)
    x0 = side * rng.uniform(oracle.approach_start_min, oracle.approach_start_max)
    return Pedestrian(x0, y, -side * walk, 0.0, ActionState.APPROACH, critical, walk, cross)


def decide(ped: Pedestrian, t: float, traffic_gap: Optional[float],
           oracle: PedOracleConfig, rng: np.random.Generator) -> Optional[bool]:
    """Update the discrete state at time ``t``.

    ``traffic_gap`` is given when a gap starts at ``t``; the return value is
    then the accept/reject decision, otherwise None.
    """
    decision = None
    if traffic_gap is not None and ped.phase in (ActionState.APPROACH, ActionState.WAIT):
        decision = traffic_gap > oracle.threshold(ped.critical_gap, ped.wait_time(t))
        if decision:
            ped.cross_at = t + float(rng.exponential(1.0 / oracle.start_delay_rate))
        else:
            ped.cross_at = None
    # one tick of waiting at least before a crossing starts
    if (ped.phase == ActionState.WAIT and ped.cross_at is not None
            and t >= ped.cross_at - 1e-9 and t > ped.wait_entry + 1e-9):
        ped.phase = ActionState.CROSS
        ped.vx, ped.vy = 0.0, ped.crossing_speed
        ped.wait_entry = None
        ped.cross_at = None
    return decision


def advance(ped: Pedestrian, t: float, dt: float, geom: GeometryConfig,
            rng: np.random.Generator) -> None:
    """Integrate from ``t`` to ``t + dt`` and apply position-triggered switches."""
    t_next = t + dt
    if ped.phase == ActionState.APPROACH:
        step = ped.vx * dt
        if abs(ped.x) <= abs(step) or ped.x * (ped.x + step) <= 0:
            ped.x, ped.vx = 0.0, 0.0
            ped.phase = ActionState.WAIT
            ped.wait_entry = t_next
        else:
            ped.x += step
    elif ped.phase == ActionState.CROSS:
        far = geom.far_curb_y + SIDEWALK_OFFSET
        ped.y += ped.vy * dt
        if ped.y >= far:
            ped.y = far
            ped.walkaway_dir = 1.0 if rng.random() < 0.5 else -1.0
            ped.vx, ped.vy = ped.walkaway_dir * ped.sidewalk_speed, 0.0
            ped.phase = ActionState.WALKAWAY
            ped.walkaway_since = t_next
    elif ped.phase == ActionState.WALKAWAY:
        ped.x += ped.vx * dt


def ped_oracle_step(ped: Pedestrian, traffic_gap: Optional[float], oracle: PedOracleConfig,
                    geom: GeometryConfig, rng: np.random.Generator, t: float,
                    dt: float) -> Pedestrian:
    """Decide at ``t`` and move to ``t + dt``. Mutates and returns ``ped``."""
    decide(ped, t, traffic_gap, oracle, rng)
    advance(ped, t, dt, geom, rng)
    return ped


def gaze_step(phase: ActionState, rng: np.random.Generator, oracle: PedOracleConfig) -> bool:
    p = oracle.gaze_p_wait if phase == ActionState.WAIT else oracle.gaze_p_walk
    return bool(rng.random() < p)
