"""Traffic-gap events and the seven-feature input vector of the gap model."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from ..hybrid_core import ActionState, GeometryConfig, HybridState

FEATURE_NAMES = ("av_distance", "av_speed", "wait_time", "gaze_ratio",
                 "curb_distance", "cw_distance", "ped_speed")
GAP_CSV_HEADER = ("gap_id", "start_time", "traffic_gap") + FEATURE_NAMES + ("label",)

WINDOW_S = 1.0
SPEED_EPS = 0.1
# Stand-in for an empty road: the sensing range of the vehicle stream.
SENSING_RANGE = 150.0


class Label(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class FeatureVector:
    av_distance: float
    av_speed: float
    wait_time: float
    gaze_ratio: float
    curb_distance: float
    cw_distance: float
    ped_speed: float

    def __post_init__(self):
        values = astuple(self)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ValueError(f"features must be finite and non-negative: {self}")
        if self.gaze_ratio > 1:
            raise ValueError("gaze_ratio must be <= 1")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, a) -> "FeatureVector":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class GapEvent:
    start_time: float
    traffic_gap: float
    features: Optional[FeatureVector] = None
    label: Label = Label.UNDETERMINED
    gap_id: str = ""

    def __post_init__(self):
        if not self.traffic_gap > 0:
            raise ValueError("traffic_gap must be positive")


def nearest_approaching(traffic: Sequence, ped_x: float):
    """Closest vehicle whose front has not yet reached ``ped_x``."""
    best = None
    for veh in traffic:
        if veh.x < ped_x and (best is None or veh.x > best.x):
            best = veh
    return best


def traffic_gap_for(traffic: Sequence, ped_x: float) -> float:
    veh = nearest_approaching(traffic, ped_x)
    if veh is None:
        return math.inf
    return (ped_x - veh.x) / max(veh.speed, SPEED_EPS)


def vehicle_passed(traffic: Sequence, prev_traffic: Sequence, ped_x: float,
                   prev_ped_x: Optional[float] = None) -> bool:
    """True when some vehicle front reached the pedestrian during the last tick.

    The comparison is relative: behind the pedestrian at the previous tick,
    level with or past them now.
    """
    if prev_ped_x is None:
        prev_ped_x = ped_x
    before = {veh.id: veh.x for veh in prev_traffic}
    for veh in traffic:
        x0 = before.get(veh.id)
        if x0 is not None and x0 < prev_ped_x and veh.x >= ped_x:
            return True
    return False


def detect_gap_start(traffic: Sequence, ped: HybridState, prev_traffic: Sequence,
                     geom: GeometryConfig, prev_ped_x: Optional[float] = None) -> Optional[GapEvent]:
    """Gap-start event for this tick, without features.

    A gap starts when a vehicle front passes the pedestrian, or when the
    pedestrian walks into the decision zone while a gap is already running.
    Only approaching or waiting pedestrians inside the zone are considered.
    """
    if ped.action not in (ActionState.APPROACH, ActionState.WAIT):
        return None
    x = ped.kin.x
    if not geom.in_decision_zone(x):
        return None
    entered = prev_ped_x is not None and not geom.in_decision_zone(prev_ped_x)
    if not (entered or vehicle_passed(traffic, prev_traffic, x, prev_ped_x)):
        return None
    return GapEvent(start_time=ped.t, traffic_gap=traffic_gap_for(traffic, x))


def feature_vector(ped_x: float, ped_y: float, speeds: Sequence[float],
                   gaze: Sequence[bool], wait_time: float, traffic: Sequence,
                   geom: GeometryConfig) -> FeatureVector:
    veh = nearest_approaching(traffic, ped_x)
    if veh is None:
        av_distance, av_speed = SENSING_RANGE, 0.0
    else:
        av_distance, av_speed = min(ped_x - veh.x, SENSING_RANGE), veh.speed
    return FeatureVector(
        av_distance=float(av_distance),
        av_speed=float(av_speed),
        wait_time=max(float(wait_time), 0.0),
        gaze_ratio=float(np.mean(gaze)) if len(gaze) else 0.0,
        curb_distance=abs(ped_y - geom.curb_y),
        cw_distance=abs(ped_x),
        ped_speed=float(np.mean(speeds)) if len(speeds) else 0.0,
    )


@dataclass(frozen=True)
class ExtractedFeatures:
    features: FeatureVector
    partial: bool


def extract_features(history: Sequence[HybridState], traffic: Sequence, gaze: Sequence[bool],
                     geom: GeometryConfig, t: float) -> ExtractedFeatures:
    """Features at time ``t`` from the last second of pedestrian history.

    ``gaze`` holds one boolean per history entry. A history spanning less
    than the one-second window is used as is and flagged ``partial``.
    """
    if len(history) != len(gaze):
        raise ValueError("gaze samples must align with history")
    if not history:
        raise ValueError("empty history")
    times = np.array([s.t for s in history])
    mask = (times >= t - WINDOW_S - 1e-9) & (times <= t + 1e-9)
    if not mask.any():
        raise ValueError(f"history has no samples in [{t - WINDOW_S}, {t}]")
    partial = bool(times[0] > t - WINDOW_S + 1e-9)
    idx = np.flatnonzero(mask)
    current = history[idx[-1]]
    speeds = [history[i].kin.speed for i in idx]
    window_gaze = [bool(gaze[i]) for i in idx]
    if current.action == ActionState.WAIT and current.wait_entry_time is not None:
        wait_time = t - current.wait_entry_time
    else:
        wait_time = 0.0
    fv = feature_vector(current.kin.x, current.kin.y, speeds, window_gaze, wait_time,
                        traffic, geom)
    return ExtractedFeatures(fv, partial)


def crossing_start_time(t: Sequence[float], y: Sequence[float], curb_y: float,
                        after: float = -math.inf) -> Optional[float]:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = np.flatnonzero((t >= after - 1e-9) & (y > curb_y))
    return float(t[idx[0]]) if idx.size else None


def label_gap(event: GapEvent, t: Sequence[float], y: Sequence[float],
              geom: GeometryConfig = GeometryConfig(),
              horizon: Optional[float] = None,
              gap_end: Optional[float] = None) -> GapEvent:
    """Label an event from the pedestrian's lateral trajectory ``(t, y)``.

    Accepted when the pedestrian steps onto the road before the gap closes,
    rejected when the gap closes first, undetermined when the trajectory
    ends before either can be decided. ``gap_end`` (the start of the next
    gap) closes the window early so consecutive events stay disjoint.
    """
    window = event.traffic_gap if horizon is None else min(event.traffic_gap, horizon)
    end = event.start_time + window
    if gap_end is not None:
        end = min(end, gap_end)
    start = crossing_start_time(t, y, geom.curb_y, after=event.start_time)
    if start is not None and start < end:
        label = Label.ACCEPTED
    elif len(t) and float(np.max(t)) >= end:
        label = Label.REJECTED
    else:
        label = Label.UNDETERMINED
    return replace(event, label=label)


def events_to_arrays(events: Iterable[GapEvent]):
    """Feature matrix and 0/1 labels of the decided events."""
    rows, labels = [], []
    for ev in events:
        if ev.label == Label.UNDETERMINED or ev.features is None:
            continue
        rows.append(ev.features.as_array())
        labels.append(1 if ev.label == Label.ACCEPTED else 0)
    X = np.array(rows, dtype=float).reshape(-1, len(FEATURE_NAMES))
    return X, np.array(labels, dtype=int)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_gap_events(path: Path, events: Iterable[GapEvent], comment: Optional[str] = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAP_CSV_HEADER)
        for ev in events:
            f = ev.features
            w.writerow([ev.gap_id, _fmt(ev.start_time), _fmt(ev.traffic_gap),
                        *(_fmt(getattr(f, n)) for n in FEATURE_NAMES), ev.label.value])


def read_gap_events(path: Path) -> List[GapEvent]:
    path = Path(path)
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    missing = set(GAP_CSV_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    events = []
    for row in reader:
        fv = FeatureVector(*(float(row[n]) for n in FEATURE_NAMES))
        events.append(GapEvent(start_time=float(row["start_time"]),
                               traffic_gap=float(row["traffic_gap"]),
                               features=fv, label=Label(row["label"]),
                               gap_id=row["gap_id"]))
    return events


__all__ = ["FEATURE_NAMES", "GAP_CSV_HEADER", "Label", "FeatureVector", "GapEvent",
           "ExtractedFeatures", "detect_gap_start", "extract_features", "feature_vector",
           "label_gap", "crossing_start_time", "nearest_approaching", "traffic_gap_for",
           "vehicle_passed", "events_to_arrays", "write_gap_events", "read_gap_events"]
