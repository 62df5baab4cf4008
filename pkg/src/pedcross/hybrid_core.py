"""Pedestrian hybrid automaton: continuous state, discrete actions, guards,
the discrete transition function and the velocity reset map.

Frame conventions: ``x`` runs along the road with the crosswalk centerline at
``x = 0``; ``y`` runs across the road with the near curb at ``y = curb_y`` and
positive values pointing into the roadway. Crossings always go towards +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional

import numpy as np

V_PED_MAX = 3.0


class ActionState(IntEnum):
    """Discrete pedestrian action. Integer values are the file encoding."""

    APPROACH = 1
    WAIT = 2
    CROSS = 3
    WALKAWAY = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, name: str) -> "ActionState":
        return cls[name.strip().upper()]


@dataclass(frozen=True)
class Kinematics:
    x: float
    y: float
    vx: float
    vy: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.vx, self.vy)):
            raise ValueError(f"non-finite kinematics: {self}")

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Kinematics":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class AcceptedGap:
    """A crossing decision taken at the start of a traffic gap."""

    acceptance_time: float
    t_cross_delay: float
    v_start: float
    p_cross: float = 1.0


@dataclass(frozen=True)
class GeometryConfig:
    curb_y: float = 0.0
    lane_width: float = 3.7
    n_lanes: int = 2
    decision_halfwidth: float = 3.0
    wait_x_halfwidth: float = 3.0
    wait_y_depth: float = 1.0
    epsilon_v: float = 0.05
    epsilon_x: float = 0.1

    def __post_init__(self):
        lengths = (self.lane_width, self.decision_halfwidth, self.wait_x_halfwidth,
                   self.wait_y_depth, self.epsilon_v, self.epsilon_x)
        if any(v <= 0 for v in lengths):
            raise ValueError("geometry lengths must be positive")
        if self.n_lanes < 1:
            raise ValueError("n_lanes must be >= 1")

    @property
    def road_width(self) -> float:
        return self.lane_width * self.n_lanes

    @property
    def far_curb_y(self) -> float:
        return self.curb_y + self.road_width

    def in_decision_zone(self, x: float) -> bool:
        return abs(x) < self.decision_halfwidth

    def in_wait_area(self, x: float, y: float) -> bool:
        return (abs(x) < self.wait_x_halfwidth
                and self.curb_y - self.wait_y_depth <= y <= self.curb_y)

    def lane_of(self, y: float) -> Optional[int]:
        """Lane index under lateral position ``y``, or None off the road."""
        offset = y - self.curb_y
        if offset < 0 or offset >= self.road_width:
            return None
        return int(offset // self.lane_width)


@dataclass(frozen=True)
class HybridState:
    """Continuous estimate, covariance, discrete action and decision bookkeeping."""

    kin: Kinematics
    cov: np.ndarray = field(default_factory=lambda: np.eye(4), compare=False)
    action: ActionState = ActionState.APPROACH
    wait_entry_time: Optional[float] = None
    accepted_gap: Optional[AcceptedGap] = None
    t: float = 0.0

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (4, 4):
            raise ValueError("covariance must be 4x4")
        object.__setattr__(self, "cov", cov)
        if (self.wait_entry_time is not None) != (self.action == ActionState.WAIT):
            raise ValueError("wait_entry_time must be set exactly while waiting")
        if self.accepted_gap is not None and self.action not in (ActionState.WAIT,
                                                                 ActionState.CROSS):
            raise ValueError("accepted_gap only allowed while waiting or crossing")

    def evolve(self, **changes) -> "HybridState":
        return replace(self, **changes)


def _zeroed(v: float, eps: float) -> float:
    return 0.0 if abs(v) < eps else v


def classify_guards(kin: Kinematics, prev: ActionState, geom: GeometryConfig) -> ActionState:
    """Return the action whose guard ``kin`` satisfies.

    Priority is wait (both velocities zero), then cross (lateral velocity),
    then the sign test separating approach from walk-away. Velocities below
    ``epsilon_v`` count as zero. Near the centerline the sign test is
    meaningless and ``prev`` is kept.
    """
    vx = _zeroed(kin.vx, geom.epsilon_v)
    vy = _zeroed(kin.vy, geom.epsilon_v)
    if vx == 0.0 and vy == 0.0:
        return ActionState.WAIT
    if vy != 0.0:
        return ActionState.CROSS
    if abs(kin.x) < geom.epsilon_x:
        return prev
    s = math.copysign(1.0, kin.x) * vx
    return ActionState.APPROACH if s < 0 else ActionState.WALKAWAY


def _decision_due(state: HybridState, p_cross: float, now: float) -> bool:
    gap = state.accepted_gap
    if gap is None or p_cross <= 0.5:
        return False
    # tolerance absorbs accumulated float error in tick times
    return now - gap.acceptance_time >= gap.t_cross_delay - 1e-9


def transition(prev: ActionState, kin_next: Kinematics, p_cross: float, now: float,
               state: HybridState, geom: GeometryConfig) -> ActionState:
    """Discrete transition function.

    A change reported by the guards always wins. Otherwise a waiting
    pedestrian with an accepted gap switches to crossing once the start
    delay has elapsed. Crossing can only be entered from waiting, so a
    guard-level jump to crossing from approach or walk-away yields an
    instantaneous wait first.
    """
    if not 0.0 <= p_cross <= 1.0:
        raise ValueError(f"p_cross out of range: {p_cross}")
    guard = classify_guards(kin_next, prev, geom)
    if guard != prev:
        if guard == ActionState.CROSS and prev not in (ActionState.WAIT, ActionState.CROSS):
            return ActionState.WAIT
        return guard
    if prev == ActionState.WAIT and _decision_due(state, p_cross, now):
        return ActionState.CROSS
    return prev


def reset_velocities(kin: Kinematics, prev: ActionState, next: ActionState,
                     v_start: float, v_walk: float) -> Kinematics:
    """Velocity reset applied on a discrete transition. Positions are kept."""
    if prev == next:
        raise ValueError("reset requires a discrete transition (prev == next)")
    if v_start <= 0 or v_walk <= 0:
        raise ValueError("reset speeds must be positive")
    if next == ActionState.WAIT:
        return Kinematics(kin.x, kin.y, 0.0, 0.0)
    if next == ActionState.CROSS:
        return Kinematics(kin.x, kin.y, 0.0, v_start)
    # sign(0) taken as +1 so the reset is always well defined
    side = -1.0 if kin.x < 0 else 1.0
    if next == ActionState.APPROACH:
        return Kinematics(kin.x, kin.y, -side * v_walk, 0.0)
    return Kinematics(kin.x, kin.y, side * v_walk, 0.0)
