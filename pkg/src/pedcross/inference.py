"""Real-time hybrid prediction loop.

Each tick the tracker issues an N-step rollout of the hybrid model from its
current estimate and then fuses the next position measurement. Inside a
rollout vehicles move at constant velocity, gap starts are detected on the
predicted traffic, and a waiting pedestrian inside the decision zone asks the
gap model for a crossing probability. An accepted gap switches the predicted
action to crossing once the start delay has elapsed.

The constant-velocity baseline runs the same filter with the discrete layer
switched off: no held dynamics while waiting and no gap model.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Deque, List, Optional, Sequence, Tuple, Union

import numpy as np

from .gap_acceptance.features import SENSING_RANGE, WINDOW_S, FeatureVector
from .gap_acceptance.models import GapModel, predict_probability
from .hybrid_core import (AcceptedGap, ActionState, GeometryConfig, HybridState, Kinematics,
                          classify_guards, reset_velocities, transition)
from .motion_tracker import (Measurement, NoiseConfig, cv_predict, init_from_measurements,
                             kalman_update)

V_START_FLOOR = 0.3
TIME_TOL = 1e-9

ProbabilityFn = Callable[[FeatureVector], float]


class PredictionMode(str, Enum):
    DETERMINISTIC_MEAN = "DeterministicMean"
    SAMPLED = "Sampled"


@dataclass(frozen=True)
class PredictionConfig:
    horizon_steps: int = 60
    dt: float = 0.1
    t_cross_rate: float = 2.5
    v_start_mean: float = 1.6
    v_start_std: float = 0.15
    mode: PredictionMode = PredictionMode.DETERMINISTIC_MEAN
    seed: int = 0
    v_walk: float = 1.5  # reset speed when no speed estimate is available
    # filter updates after (re)initialization before the discrete layer engages
    warmup_steps: int = 10

    def __post_init__(self):
        object.__setattr__(self, "mode", PredictionMode(self.mode))
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_cross_rate <= 0:
            raise ValueError("t_cross_rate must be positive")
        if self.v_start_mean <= 0 or self.v_walk <= 0:
            raise ValueError("v_start_mean and v_walk must be positive")
        if self.v_start_std < 0:
            raise ValueError("v_start_std must be >= 0")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")


@dataclass
class PredictedRollout:
    """N predicted steps. ``p_cross`` is NaN except at gap-evaluation steps."""

    t: np.ndarray
    states: np.ndarray  # (N, 4) x, y, vx, vy
    actions: np.ndarray  # (N,) ActionState values
    p_cross: np.ndarray
    gap_evaluations: List[Tuple[int, float, bool]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    def action_at(self, k: int) -> ActionState:
        return ActionState(int(self.actions[k]))

    def crossing_start(self) -> Optional[float]:
        """Time of the first predicted crossing step, if any."""
        idx = np.flatnonzero(self.actions == int(ActionState.CROSS))
        return float(self.t[idx[0]]) if idx.size else None


def sample_t_cross(rng: np.random.Generator, rate: float) -> float:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return float(rng.exponential(1.0 / rate))


def sample_v_start(rng: np.random.Generator, mean: float, std: float) -> float:
    """Gaussian start speed, redrawn until it reaches ``V_START_FLOOR``."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    if std == 0:
        return float(mean)
    while True:
        v = float(rng.normal(mean, std))
        if v >= V_START_FLOOR:
            return v


def probability_fn(model: Union[GapModel, ProbabilityFn, None]) -> Optional[ProbabilityFn]:
    if model is None or callable(model):
        return model
    return lambda fv: predict_probability(model, fv)


def _crossing_parameters(cfg: PredictionConfig, rng: Optional[np.random.Generator]):
    if cfg.mode == PredictionMode.SAMPLED:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        return (sample_t_cross(rng, cfg.t_cross_rate),
                sample_v_start(rng, cfg.v_start_mean, cfg.v_start_std))
    return 1.0 / cfg.t_cross_rate, cfg.v_start_mean


def _traffic_arrays(traffic: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    x = np.array([v.x for v in traffic], dtype=float)
    s = np.array([v.speed for v in traffic], dtype=float)
    return x, s


def _predicted_features(ped: Kinematics, veh_x: np.ndarray, veh_speed: np.ndarray,
                        speeds: Sequence[float], gaze_last: float, wait_time: float,
                        geom: GeometryConfig) -> FeatureVector:
    ahead = veh_x < ped.x
    if ahead.any():
        i = np.flatnonzero(ahead)[np.argmax(veh_x[ahead])]
        av_distance, av_speed = min(ped.x - veh_x[i], SENSING_RANGE), veh_speed[i]
    else:
        av_distance, av_speed = SENSING_RANGE, 0.0
    return FeatureVector(
        av_distance=float(av_distance), av_speed=float(av_speed),
        wait_time=max(float(wait_time), 0.0), gaze_ratio=float(gaze_last),
        curb_distance=abs(ped.y - geom.curb_y), cw_distance=abs(ped.x),
        ped_speed=float(np.mean(speeds)) if len(speeds) else 0.0)


def _propagate(kin: Kinematics, dt: float, action: Optional[ActionState]) -> Kinematics:
    """Mean of :func:`cv_predict` without the covariance."""
    if action == ActionState.WAIT:
        return Kinematics(kin.x, kin.y, 0.0, 0.0)
    return Kinematics(kin.x + kin.vx * dt, kin.y + kin.vy * dt, kin.vx, kin.vy)


def predict_horizon(state: HybridState, traffic: Sequence, gaze_last: float,
                    model: Union[GapModel, ProbabilityFn, None], cfg: PredictionConfig,
                    geom: GeometryConfig = GeometryConfig(),
                    speed_history: Sequence[float] = (),
                    rng: Optional[np.random.Generator] = None,
                    hybrid: bool = True) -> PredictedRollout:
    """Roll the hybrid model ``cfg.horizon_steps`` ticks ahead of ``state``.

    Step ``k`` happens at ``state.t + k*dt``: vehicles move, a gap start is
    detected against the pedestrian's current position, the gap model is
    queried when the pedestrian waits inside the decision zone, the discrete
    transition is applied (with a velocity reset on change) and finally the
    pedestrian is propagated. ``speed_history`` holds recent speed samples
    for the ped_speed feature. With ``hybrid=False`` the rollout is the
    plain constant-velocity prediction.
    """
    n, dt = cfg.horizon_steps, cfg.dt
    p_of = probability_fn(model)
    t0 = state.t
    times = t0 + dt * np.arange(1, n + 1)
    out = np.empty((n, 4))
    actions = np.empty(n, dtype=int)
    p_out = np.full(n, np.nan)
    evaluations: List[Tuple[int, float, bool]] = []

    kin = state.kin
    action = state.action
    if not hybrid:
        for k in range(n):
            kin = _propagate(kin, dt, None)
            out[k] = kin.as_array()
            actions[k] = int(action)
        return PredictedRollout(times, out, actions, p_out, evaluations)

    veh_x0, veh_speed = _traffic_arrays(traffic)
    empty_traffic = len(veh_x0) == 0
    window = int(round(WINDOW_S / dt)) + 1
    speeds: Deque[float] = deque(speed_history, maxlen=window)
    wait_entry = state.wait_entry_time
    accepted = state.accepted_gap
    prev_veh = veh_x0
    prev_ped_x = kin.x

    for k in range(n):
        now = float(times[k])
        veh_x = veh_x0 + veh_speed * (now - t0)
        gap_start = False
        if action == ActionState.WAIT and geom.in_decision_zone(kin.x):
            if empty_traffic:
                gap_start = k == 0 and accepted is None
            else:
                gap_start = bool(np.any((prev_veh < prev_ped_x) & (veh_x >= kin.x)))
        if gap_start and p_of is not None:
            wait_time = now - wait_entry if wait_entry is not None else 0.0
            fv = _predicted_features(kin, veh_x, veh_speed, speeds, gaze_last, wait_time, geom)
            p = float(p_of(fv))
            p_out[k] = p
            ok = p > 0.5
            evaluations.append((k, p, ok))
            if ok:
                delay, v_start = _crossing_parameters(cfg, rng)
                accepted = AcceptedGap(now, delay, v_start, p)
            else:
                accepted = None

        p_current = accepted.p_cross if accepted is not None else 0.0
        nxt = transition(action, kin, p_current, now, _Bookkeeping(accepted), geom)
        if nxt != action:
            v_start = accepted.v_start if accepted is not None else cfg.v_start_mean
            v_walk = kin.speed if kin.speed >= geom.epsilon_v else cfg.v_walk
            kin = reset_velocities(kin, action, nxt, v_start, v_walk)
            if nxt == ActionState.WAIT:
                wait_entry = now
            elif action == ActionState.WAIT:
                wait_entry = None
            if nxt not in (ActionState.WAIT, ActionState.CROSS):
                accepted = None
            action = nxt
        prev_veh = veh_x
        prev_ped_x = kin.x
        kin = _propagate(kin, dt, action)
        speeds.append(kin.speed)
        out[k] = kin.as_array()
        actions[k] = int(action)
    return PredictedRollout(times, out, actions, p_out, evaluations)


@dataclass(frozen=True)
class _Bookkeeping:
    """Minimal stand-in for the state argument of :func:`transition`."""

    accepted_gap: Optional[AcceptedGap]


def _refresh_action(state: HybridState, kin: Kinematics, cov: np.ndarray, t: float,
                    geom: GeometryConfig) -> HybridState:
    action = classify_guards(kin, state.action, geom)
    if action == ActionState.WAIT:
        wait_entry = state.wait_entry_time if state.action == ActionState.WAIT else t
    else:
        wait_entry = None
    accepted = state.accepted_gap if action in (ActionState.WAIT, ActionState.CROSS) else None
    return HybridState(kin, cov, action, wait_entry, accepted, t)


def update_step(state: HybridState, z: Measurement, noise: NoiseConfig,
                geom: GeometryConfig = GeometryConfig(), hybrid: bool = True) -> HybridState:
    """Propagate to ``z.t``, fuse ``z`` and refresh the discrete state.

    The propagation holds a waiting pedestrian in place unless ``hybrid``
    is False (the constant-velocity baseline).
    """
    if z.t < state.t - TIME_TOL:
        raise ValueError(f"measurement at {z.t} precedes state time {state.t}")
    kin, cov = state.kin, state.cov
    dt = z.t - state.t
    if dt > TIME_TOL:
        kin, cov = cv_predict(kin, cov, dt, noise, state.action if hybrid else None)
    kin, cov = kalman_update(kin, cov, z, noise)
    return _refresh_action(state, kin, cov, z.t, geom)


def initial_state(z0: Measurement, z1: Measurement, noise: NoiseConfig,
                  geom: GeometryConfig = GeometryConfig()) -> HybridState:
    kin, cov = init_from_measurements(z0, z1, noise)
    seed = HybridState(kin, cov, ActionState.APPROACH, None, None, z1.t)
    return _refresh_action(seed, kin, cov, z1.t, geom)


@dataclass
class TrackerStep:
    tick: int
    state: HybridState
    rollout: PredictedRollout
    reinitialized: bool = False


def _gap_starts(traffic: Sequence, prev_traffic: Sequence, x: float, prev_x: float) -> bool:
    before = {v.id: v.x for v in prev_traffic}
    return any(v.id in before and before[v.id] < prev_x and v.x >= x for v in traffic)


@dataclass
class _GapMemory:
    """Decision about the observed gap that is currently running."""

    evaluated: bool = False
    decision: Optional[AcceptedGap] = None


def _observe_gap(memory: _GapMemory, state: HybridState, prev_state: HybridState,
                 traffic: Sequence, prev_traffic: Sequence, gaze_last: float,
                 speeds: Sequence[float], p_of: ProbabilityFn, cfg: PredictionConfig,
                 geom: GeometryConfig, rng: Optional[np.random.Generator]) -> HybridState:
    """Gap-model query on observed traffic, mirroring how gap events are built.

    A vehicle passing the pedestrian opens a new gap. The first tick of a
    gap at which the tracked pedestrian approaches or waits inside the
    decision zone evaluates it; with no traffic at all that is the first
    such tick. The decision is attached to the state while it waits or
    crosses.
    """
    if _gap_starts(traffic, prev_traffic, state.kin.x, prev_state.kin.x):
        memory.evaluated, memory.decision = False, None
    eligible = (state.action in (ActionState.APPROACH, ActionState.WAIT)
                and geom.in_decision_zone(state.kin.x))
    if eligible and not memory.evaluated:
        veh_x, veh_speed = _traffic_arrays(traffic)
        wait_time = state.t - state.wait_entry_time if state.action == ActionState.WAIT else 0.0
        fv = _predicted_features(state.kin, veh_x, veh_speed, speeds, gaze_last, wait_time, geom)
        p = float(p_of(fv))
        memory.evaluated = True
        memory.decision = None
        if p > 0.5:
            delay, v_start = _crossing_parameters(cfg, rng)
            memory.decision = AcceptedGap(state.t, delay, v_start, p)
    if state.action == ActionState.WALKAWAY:
        memory.decision = None
    attach = memory.decision if state.action in (ActionState.WAIT, ActionState.CROSS) else None
    return state.evolve(accepted_gap=attach)


def _tick_rng(cfg: PredictionConfig, tick: int) -> Optional[np.random.Generator]:
    if cfg.mode != PredictionMode.SAMPLED:
        return None
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, tick]))


def run_tracker(measurements: Sequence[Measurement], traffic: Sequence[Sequence],
                gaze: Sequence[bool], model: Union[GapModel, ProbabilityFn, None],
                cfg: PredictionConfig, noise: NoiseConfig = NoiseConfig(),
                geom: GeometryConfig = GeometryConfig(), hybrid: bool = True,
                ticks: Optional[Sequence[int]] = None) -> List[TrackerStep]:
    """Track one pedestrian and issue a rollout at every tick after start-up.

    ``traffic`` and ``gaze`` are aligned with ``measurements``. The filter
    starts from the first two measurements and restarts the same way after
    a stream gap longer than three ticks. ``ticks`` limits which ticks emit
    a rollout (the filter still runs on all of them). ``hybrid=False`` gives
    the constant-velocity baseline through the same code path.

    The finite-difference start leaves velocity errors of a metre per second
    or more, enough to read a walker as standing. For the first
    ``cfg.warmup_steps`` updates after a start the discrete layer is held
    off: the filter and the rollouts follow the baseline and no gap is
    evaluated.
    """
    if not (len(measurements) == len(traffic) == len(gaze)):
        raise ValueError("measurement, traffic and gaze streams must be aligned")
    p_of = probability_fn(model) if hybrid else None
    wanted = None if ticks is None else set(int(k) for k in ticks)
    window = int(round(WINDOW_S / cfg.dt)) + 1
    gaze_hist: Deque[bool] = deque(maxlen=window)
    speeds: Deque[float] = deque(maxlen=window)
    out: List[TrackerStep] = []
    state: Optional[HybridState] = None
    pending: Optional[int] = None
    restarted = False
    memory = _GapMemory()
    updates = 0

    for i, z in enumerate(measurements):
        gaze_hist.append(bool(gaze[i]))
        if state is not None and z.t - state.t > 3 * cfg.dt + TIME_TOL:
            state, pending, restarted = None, None, True
        if state is None:
            if pending is None or z.t - measurements[pending].t > 3 * cfg.dt + TIME_TOL:
                pending = i
                continue
            state = initial_state(measurements[pending], z, noise, geom)
            speeds.clear()
            memory = _GapMemory()
            updates = 0
        else:
            prev_state = state
            state = update_step(state, z, noise, geom, hybrid and updates >= cfg.warmup_steps)
            updates += 1
            if p_of is not None and updates >= cfg.warmup_steps:
                state = _observe_gap(memory, state, prev_state, traffic[i], traffic[i - 1],
                                     float(np.mean(gaze_hist)), speeds, p_of, cfg, geom,
                                     _tick_rng(cfg, i))
        speeds.append(state.kin.speed)
        if wanted is not None and i not in wanted:
            restarted = False
            continue
        engaged = hybrid and updates >= cfg.warmup_steps
        rollout = predict_horizon(state, traffic[i], float(np.mean(gaze_hist)),
                                  p_of if engaged else None, cfg, geom, speed_history=speeds,
                                  rng=_tick_rng(cfg, i), hybrid=engaged)
        out.append(TrackerStep(i, state, rollout, restarted))
        restarted = False
    return out


def cv_baseline(measurements: Sequence[Measurement], cfg: PredictionConfig,
                noise: NoiseConfig = NoiseConfig(), geom: GeometryConfig = GeometryConfig(),
                ticks: Optional[Sequence[int]] = None) -> List[TrackerStep]:
    empty = [()] * len(measurements)
    return run_tracker(measurements, empty, [False] * len(measurements), None, cfg, noise,
                       geom, hybrid=False, ticks=ticks)


ROLLOUT_HEADER = ("tick", "k", "t", "x", "y", "vx", "vy", "action", "p_cross")


def write_rollouts(path: Path, steps: Sequence[TrackerStep], comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROLLOUT_HEADER)
        for step in steps:
            r = step.rollout
            for k in range(len(r)):
                p = r.p_cross[k]
                w.writerow([step.tick, k + 1, f"{r.t[k]:.2f}",
                            *(f"{v:.6f}" for v in r.states[k]), r.action_at(k).label,
                            "" if math.isnan(p) else f"{p:.6f}"])


def tune_noise(tracks: Sequence[Tuple[np.ndarray, np.ndarray]], dt: float,
               q_pos_grid: Sequence[float] = (1e-4, 1e-3, 1e-2),
               q_vel_grid: Sequence[float] = (1e-5, 1e-4, 1e-3, 1e-2),
               r_pos: float = 1e-2, lookahead: int = 10
               ) -> Tuple[NoiseConfig, List[Tuple[NoiseConfig, float]]]:
    """Grid search over process noise for constant-velocity prediction.

    ``tracks`` are ``(measured_xy, true_xy)`` pairs sampled at ``dt``. Each
    candidate is scored by the mean error of the ``lookahead``-step CV
    prediction against the true positions. Returns the best config and all
    scores.
    """
    scores = []
    for q_pos in q_pos_grid:
        for q_vel in q_vel_grid:
            noise = NoiseConfig(q_pos, q_vel, r_pos)
            errs = []
            for meas, truth in tracks:
                if len(meas) < lookahead + 3:
                    continue
                kin, cov = init_from_measurements(Measurement(0.0, *meas[0]),
                                                  Measurement(dt, *meas[1]), noise)
                for i in range(2, len(meas)):
                    kin, cov = cv_predict(kin, cov, dt, noise)
                    kin, cov = kalman_update(kin, cov, Measurement(i * dt, *meas[i]), noise)
                    if i + lookahead < len(truth):
                        pred = np.array([kin.x, kin.y]) + lookahead * dt * np.array([kin.vx, kin.vy])
                        errs.append(float(np.hypot(*(pred - truth[i + lookahead]))))
            scores.append((noise, float(np.mean(errs)) if errs else math.inf))
    best = min(scores, key=lambda s: s[1])[0]
    return best, scores
