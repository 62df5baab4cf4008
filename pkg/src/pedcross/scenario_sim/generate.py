"""Episode simulation and on-disk datasets.

Each episode owns its random streams, derived from ``(seed, episode_id)``,
so episodes can be produced in any order or in parallel with identical
results.
"""

from __future__ import annotations

import hashlib
import io
import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..gap_acceptance.features import (GapEvent, Label, feature_vector, label_gap,
                                       traffic_gap_for, vehicle_passed, write_gap_events)
from ..hybrid_core import ActionState, GeometryConfig
from .pedestrian import (PedOracleConfig, Pedestrian, advance, decide, gaze_step,
                         spawn_pedestrian)
from .vehicles import PROFILES, ProfileName, Spawner, VehicleState, av_step

TRAJ_HEADER = ("t", "ped_x", "ped_y", "ped_vx", "ped_vy", "action", "meas_x", "meas_y", "gaze")
VEH_HEADER = ("t", "veh_id", "lane", "x", "speed", "accel")
DESPAWN_X = 80.0
MAX_EPISODE_S = 240.0


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    n_crossings: int = 200
    spawn_gap_choices: Tuple[float, ...] = (3.0, 5.0)
    spawn_x: float = -150.0
    profiles: Tuple[str, ...] = ("Defensive", "Normal", "Aggressive")
    seed: int = 42
    geom: GeometryConfig = field(default_factory=GeometryConfig)
    meas_sigma: float = 0.1
    warmup_min: float = 10.0
    warmup_max: float = 20.0
    n_walkaway: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_crossings < 1:
            raise ValueError("n_crossings must be >= 1")
        for name in self.profiles:
            ProfileName(name)

    def profile_for(self, episode: int) -> str:
        return self.profiles[episode % len(self.profiles)]


@dataclass
class Episode:
    episode_id: int
    kind: str
    profile: str
    trajectory: np.ndarray  # columns of TRAJ_HEADER
    vehicles: np.ndarray  # columns of VEH_HEADER
    events: List[GapEvent]

    @property
    def t(self) -> np.ndarray:
        return self.trajectory[:, 0]


def _streams(seed: int, episode: int) -> Dict[str, np.random.Generator]:
    names = ("traffic", "ped", "noise", "gaze", "warmup")
    return {n: np.random.default_rng(np.random.SeedSequence([seed, episode, k]))
            for k, n in enumerate(names)}


def _leaders(traffic: Sequence[VehicleState]) -> Dict[int, Optional[VehicleState]]:
    out = {}
    for lane in {v.lane for v in traffic}:
        lane_vehicles = sorted((v for v in traffic if v.lane == lane), key=lambda v: v.x)
        for k, veh in enumerate(lane_vehicles):
            out[veh.id] = lane_vehicles[k + 1] if k + 1 < len(lane_vehicles) else None
    return out


def _step_traffic(traffic, ped, cfg: SimConfig, spawner: Spawner, t_next: float, profile):
    leaders = _leaders(traffic)
    moved = [av_step(v, ped, profile, cfg.geom, cfg.dt, leaders[v.id]) for v in traffic]
    moved = [v for v in moved if v.x < DESPAWN_X]
    new = spawner.step(t_next)
    if new is not None:
        moved.append(new)
    moved.sort(key=lambda v: v.x)
    return moved


def simulate_episode(cfg: SimConfig, oracle: PedOracleConfig, episode: int,
                     walkaway_only: bool = False) -> Episode:
    rng = _streams(cfg.seed, episode)
    geom = cfg.geom
    dt = cfg.dt
    profile_name = cfg.profile_for(episode)
    profile = PROFILES[ProfileName(profile_name)]
    spawner = Spawner(rng["traffic"], spawn_x=cfg.spawn_x, full_speed=profile.full_speed,
                      n_lanes=geom.n_lanes, gap_choices=tuple(cfg.spawn_gap_choices))

    warm_ticks = int(round(rng["warmup"].uniform(cfg.warmup_min, cfg.warmup_max) / dt))
    traffic: List[VehicleState] = []
    first = spawner.step(-warm_ticks * dt)
    if first is not None:
        traffic.append(first)
    for k in range(-warm_ticks, 0):
        traffic = _step_traffic(traffic, None, cfg, spawner, round((k + 1) * dt, 10), profile)

    ped = spawn_pedestrian(rng["ped"], oracle, geom, walkaway_only=walkaway_only)
    window = int(round(1.0 / dt)) + 1
    speeds: deque = deque(maxlen=window)
    gazes: deque = deque(maxlen=window)
    traj_rows, veh_rows, events = [], [], []
    prev_traffic = list(traffic)
    prev_x: Optional[float] = None
    max_ticks = int(round(MAX_EPISODE_S / dt))
    for k in range(max_ticks):
        t = round(k * dt, 10)
        gap = None
        if (ped.phase in (ActionState.APPROACH, ActionState.WAIT)
                and geom.in_decision_zone(ped.x)):
            entered = prev_x is not None and not geom.in_decision_zone(prev_x)
            if entered or vehicle_passed(traffic, prev_traffic, ped.x, prev_x):
                gap = traffic_gap_for(traffic, ped.x)
        gaze = gaze_step(ped.phase, rng["gaze"], oracle)
        if gap is not None:
            fv = feature_vector(ped.x, ped.y, list(speeds) + [ped.speed],
                                list(gazes) + [gaze], ped.wait_time(t), traffic, geom)
            events.append(GapEvent(start_time=t, traffic_gap=gap, features=fv,
                                   gap_id=f"{episode:04d}-{len(events):02d}"))
        decide(ped, t, gap, oracle, rng["ped"])
        speeds.append(ped.speed)
        gazes.append(gaze)
        noise = rng["noise"].normal(0.0, cfg.meas_sigma, size=2)
        traj_rows.append((t, ped.x, ped.y, ped.vx, ped.vy, int(ped.phase),
                          ped.x + noise[0], ped.y + noise[1], int(gaze)))
        for v in traffic:
            veh_rows.append((t, v.id, v.lane, v.x, v.speed, v.accel))
        if ped.done(t, oracle):
            break
        prev_x = ped.x
        prev_traffic = traffic
        traffic = _step_traffic(traffic, ped, cfg, spawner, round((k + 1) * dt, 10), profile)
        advance(ped, t, dt, geom, rng["ped"])

    trajectory = np.array(traj_rows, dtype=float)
    ends = [ev.start_time for ev in events[1:]] + [None]
    labeled = [label_gap(ev, trajectory[:, 0], trajectory[:, 2], geom, gap_end=end)
               for ev, end in zip(events, ends)]
    return Episode(episode, "walkaway" if walkaway_only else "crossing", profile_name,
                   trajectory, np.array(veh_rows, dtype=float).reshape(-1, len(VEH_HEADER)),
                   labeled)


def _simulate_job(args):
    cfg, oracle, episode, walkaway_only = args
    return simulate_episode(cfg, oracle, episode, walkaway_only)


def simulate_all(cfg: SimConfig, oracle: PedOracleConfig, workers: int = 1) -> List[Episode]:
    """All crossing episodes followed by the walk-away-only episodes, in id order."""
    jobs = [(cfg, oracle, e, False) for e in range(cfg.n_crossings)]
    jobs += [(cfg, oracle, cfg.n_crossings + e, True) for e in range(cfg.n_walkaway)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_simulate_job, jobs, chunksize=4))
    return [_simulate_job(j) for j in jobs]


# -- files -------------------------------------------------------------------------

def _csv_text(header, rows, formats, comment: Optional[str]) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(f.format(v) for f, v in zip(formats, row)) + "\n")
    return buf.getvalue()


TRAJ_FORMATS = ("{:.2f}", "{:.6f}", "{:.6f}", "{:.6f}", "{:.6f}", "{:.0f}",
                "{:.6f}", "{:.6f}", "{:.0f}")
VEH_FORMATS = ("{:.2f}", "{:.0f}", "{:.0f}", "{:.6f}", "{:.6f}", "{:.6f}")


def config_dict(obj) -> Dict:
    d = asdict(obj)
    return json.loads(json.dumps(d, default=str))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class DatasetSummary:
    n_episodes: int
    n_events: int
    accepted: int
    rejected: int
    undetermined: int

    @property
    def ratio(self) -> float:
        return self.accepted / self.rejected if self.rejected else float("inf")


def summarize(episodes: Sequence[Episode]) -> DatasetSummary:
    labels = [ev.label for ep in episodes for ev in ep.events]
    return DatasetSummary(len(episodes), len(labels), labels.count(Label.ACCEPTED),
                          labels.count(Label.REJECTED), labels.count(Label.UNDETERMINED))


def write_dataset(out: Path, episodes: Sequence[Episode], manifest: Dict) -> Dict:
    """Write trajectory, vehicle and gap-event files plus the manifest.

    Every data file starts with a comment line carrying the manifest hash.
    Returns the manifest as written.
    """
    out = Path(out)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    (out / "vehicles").mkdir(parents=True, exist_ok=True)
    manifest = dict(manifest)
    manifest["episodes"] = [{"episode_id": ep.episode_id, "kind": ep.kind,
                             "profile": ep.profile,
                             "trajectory": f"trajectories/ep{ep.episode_id:04d}.csv",
                             "vehicles": f"vehicles/ep{ep.episode_id:04d}.csv"}
                            for ep in episodes]
    s = summarize(episodes)
    manifest["summary"] = {"episodes": s.n_episodes, "events": s.n_events,
                           "accepted": s.accepted, "rejected": s.rejected,
                           "undetermined": s.undetermined}
    manifest_text = json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    tag = f"manifest_sha256={sha256_text(manifest_text)}"
    for ep, entry in zip(episodes, manifest["episodes"]):
        (out / entry["trajectory"]).write_text(
            _csv_text(TRAJ_HEADER, ep.trajectory, TRAJ_FORMATS, tag))
        (out / entry["vehicles"]).write_text(
            _csv_text(VEH_HEADER, ep.vehicles, VEH_FORMATS, tag))
    write_gap_events(out / "gap_events.csv", [ev for ep in episodes for ev in ep.events], tag)
    (out / "manifest.json").write_text(manifest_text)
    return manifest


def generate_dataset(cfg: SimConfig, oracle: PedOracleConfig, out: Optional[Path] = None,
                     workers: int = 1, extra_manifest: Optional[Dict] = None):
    """Simulate every episode and optionally write the dataset to ``out``.

    Returns ``(episodes, labeled gap events)``.
    """
    episodes = simulate_all(cfg, oracle, workers)
    if out is not None:
        manifest = {"format": "pedcross.dataset", "version": 1, "seed": cfg.seed,
                    "sim": config_dict(cfg), "oracle": config_dict(oracle),
                    "profile_mix": list(cfg.profiles)}
        if extra_manifest:
            manifest.update(extra_manifest)
        try:
            write_dataset(out, episodes, manifest)
        except OSError as exc:
            raise OSError(f"writing dataset to {out}: {exc}") from exc
    return episodes, [ev for ep in episodes for ev in ep.events]


def _read_csv(path: Path) -> np.ndarray:
    with Path(path).open() as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    return np.loadtxt(rows[1:], delimiter=",", ndmin=2)


def load_dataset(path: Path) -> Tuple[Dict, List[Episode]]:
    """Read a dataset directory back into episodes (events from gap_events.csv)."""
    from ..gap_acceptance.features import read_gap_events

    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    events = read_gap_events(path / "gap_events.csv")
    by_episode: Dict[int, List[GapEvent]] = {}
    for ev in events:
        by_episode.setdefault(int(ev.gap_id.split("-")[0]), []).append(ev)
    episodes = []
    for entry in manifest["episodes"]:
        eid = int(entry["episode_id"])
        traj = _read_csv(path / entry["trajectory"])
        veh = _read_csv(path / entry["vehicles"]).reshape(-1, len(VEH_HEADER))
        episodes.append(Episode(eid, entry["kind"], entry["profile"], traj, veh,
                                by_episode.get(eid, [])))
    return manifest, episodes


def vehicles_at(episode: Episode) -> List[List[VehicleState]]:
    """Per-tick vehicle lists aligned with the trajectory rows."""
    t = episode.t
    veh = episode.vehicles
    out: List[List[VehicleState]] = [[] for _ in range(len(t))]
    if len(veh) == 0:
        return out
    idx = np.searchsorted(t, veh[:, 0] - 1e-6)
    for row, k in zip(veh, idx):
        if k < len(t):
            out[k].append(VehicleState(int(row[1]), int(row[2]), float(row[3]),
                                       max(float(row[4]), 0.0), float(row[5])))
    return out


def accepted_gap_samples(episodes: Sequence[Episode], geom: GeometryConfig = GeometryConfig()
                         ) -> np.ndarray:
    """Accepted gaps measured as crossing start minus the last vehicle passage.

    The crossing start is the first tick with the pedestrian on the road;
    the passage is the last tick at which a vehicle front reached the
    pedestrian's longitudinal position before that.
    """
    out = []
    for ep in episodes:
        if ep.kind != "crossing":
            continue
        traj = ep.trajectory
        on_road = np.flatnonzero(traj[:, 2] > geom.curb_y)
        if not on_road.size:
            continue
        k_cross = on_road[0]
        per_tick = vehicles_at(ep)
        last_pass = None
        for k in range(1, k_cross + 1):
            if vehicle_passed(per_tick[k], per_tick[k - 1], traj[k, 1], traj[k - 1, 1]):
                last_pass = traj[k, 0]
        if last_pass is not None:
            out.append(traj[k_cross, 0] - last_pass)
    return np.array(out, dtype=float)


__all__ = ["SimConfig", "Episode", "simulate_episode", "simulate_all", "generate_dataset",
           "write_dataset", "load_dataset", "summarize", "DatasetSummary", "vehicles_at",
           "accepted_gap_samples", "TRAJ_HEADER", "VEH_HEADER"]
