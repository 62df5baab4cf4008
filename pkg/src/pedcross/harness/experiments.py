"""Experiment runners behind the command-line interface.

Each runner reads its inputs, writes its outputs under ``out`` and returns a
JSON-able summary. Every output file carries a provenance hash of the
command, the configuration and the hashes of the input files, so a result
can be traced back to exactly what produced it.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..gap_acceptance import (GapModel, Label, evaluate, load_model, rank_features, save_model,
                              train)
from ..hybrid_core import ActionState
from ..inference import cv_baseline, run_tracker, tune_noise, write_rollouts
from ..metrics import (TrajectoryPair, ade, cumulative_gap_curve, fde, kl_divergence, rmse,
                       walking_speed_stats)
from ..motion_tracker import Measurement
from ..scenario_sim import (Episode, accepted_gap_samples, generate_dataset, load_dataset,
                            summarize, vehicles_at)
from .config import ExperimentConfig

log = logging.getLogger("pedcross")

MODEL_KINDS = ("SVMPoly3", "Logistic", "CondProb")
METRICS = ("ade", "fde", "rmse")

# Published values, echoed in reports for comparison only.
REFERENCE_CLASSIFIER = {"model": "SVMPoly3", "accuracy": 0.88, "precision": 0.75,
                        "recall": 0.73, "f1": 0.74}
REFERENCE_RANKING = {"gaze_ratio": 0.75, "av_distance": 0.63}
REFERENCE_KL = 0.17
REFERENCE_SPEEDS = {"simulated": {"crossing_mean": 1.68, "sidewalk_mean": 1.52},
                    "real_world": {"crossing_mean": 1.58, "sidewalk_mean": 1.48}}


class DataError(RuntimeError):
    """Missing, unreadable or degenerate input data."""


# -- provenance and file writing -----------------------------------------------

def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def provenance(command: str, cfg: ExperimentConfig, inputs: Dict[str, str]) -> str:
    payload = {"command": command, "config": cfg.content_dict(), "inputs": inputs}
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], prov: str,
              footer: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    buf.write(f"# provenance={prov}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    for line in footer:
        buf.write(f"# {line}\n")
    Path(path).write_text(buf.getvalue())


def write_json(path: Path, obj: Dict, prov: str) -> None:
    body = dict(obj)
    body["provenance"] = prov
    Path(path).write_text(json.dumps(body, indent=1, sort_keys=True, default=_fmt) + "\n")


def _open_dataset(path: Path) -> Tuple[Dict, List[Episode], str]:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"no dataset at {path} (manifest.json missing)")
    try:
        manifest, episodes = load_dataset(path)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    return manifest, episodes, file_sha256(manifest_path)


def _events(episodes: Sequence[Episode]):
    events = [ev for ep in episodes for ev in ep.events]
    labels = {ev.label for ev in events}
    if not {Label.ACCEPTED, Label.REJECTED} <= labels:
        raise DataError("gap events need both accepted and rejected labels")
    return events


# -- simulate ---------------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig, out: Path) -> Dict:
    out = Path(out)
    prov = provenance("simulate", cfg, {})
    episodes, _ = generate_dataset(cfg.sim, cfg.oracle, out=out, workers=cfg.workers,
                                   extra_manifest={"provenance": prov,
                                                   "config_sha256": cfg.digest()})
    s = summarize(episodes)
    return {"episodes": s.n_episodes, "events": s.n_events, "accepted": s.accepted,
            "rejected": s.rejected, "undetermined": s.undetermined,
            "ratio": s.ratio, "seed": cfg.sim.seed, "out": str(out)}


# -- gap models ---------------------------------------------------------------------

def run_train_gap(cfg: ExperimentConfig, dataset: Path, kind: str, out: Path) -> Dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _, episodes, manifest_sha = _open_dataset(dataset)
    events = _events(episodes)
    kinds = MODEL_KINDS if kind == "all" else (kind,)
    prov = provenance("train-gap", cfg, {"dataset": manifest_sha, "kind": kind})
    rows = []
    for k in kinds:
        try:
            model, test = train(k, events, cfg.seed, _hyper(cfg, k))
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        report = evaluate(model, test)
        save_model(model, out / f"model_{k}.json", extra={"provenance": prov})
        rows.append({"model": k, **report})
    rows.sort(key=lambda r: (-r["f1"], MODEL_KINDS.index(r["model"])))
    header = ("model", "accuracy", "precision", "recall", "f1", "n")
    ref = REFERENCE_CLASSIFIER
    footer = [f"published reference (external, not reproduced): {ref['model']} "
              f"accuracy {ref['accuracy']} precision {ref['precision']} "
              f"recall {ref['recall']} f1 {ref['f1']}"]
    write_csv(out / "gap_report.csv", header, [[r[h] for h in header] for r in rows], prov,
              footer)
    summary = {"rows": rows, "split_seed": cfg.seed, "published_reference": ref}
    write_json(out / "gap_report.json", summary, prov)
    return summary


def _hyper(cfg: ExperimentConfig, kind: str) -> Dict:
    return cfg.model.for_kind(kind)


def run_rank_features(cfg: ExperimentConfig, dataset: Path, out: Path) -> Dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _, episodes, manifest_sha = _open_dataset(dataset)
    events = _events(episodes)
    prov = provenance("rank-features", cfg, {"dataset": manifest_sha})
    try:
        model, test = train("SVMPoly3", events, cfg.seed, _hyper(cfg, "SVMPoly3"))
        full = evaluate(model, test)["f1"]
        rows = rank_features(events, cfg.seed, cfg.model.for_kind("SVMPoly3"))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    for r in rows:
        r["f1_drop"] = full - r["f1"]
    header = ("rank", "feature_removed", "accuracy", "precision", "recall", "f1", "f1_drop")
    table = [[i + 1] + [r[h] for h in header[1:]] for i, r in enumerate(rows)]
    footer = ["published reference (external, not reproduced): f1 after removing "
              + ", ".join(f"{k} {v}" for k, v in REFERENCE_RANKING.items())]
    write_csv(out / "feature_ranking.csv", header, table, prov, footer)
    summary = {"full_f1": full, "rows": rows, "published_reference": REFERENCE_RANKING}
    write_json(out / "feature_ranking.json", summary, prov)
    return summary


# -- trajectory prediction ---------------------------------------------------------

@dataclass
class EpisodeErrors:
    """Per-rollout errors of one episode.

    ``errors[model][h]`` is an (n_rollouts, 3) array of ADE, FDE and RMSE;
    ``pre[h]`` flags rollouts issued before the crossing started.
    """

    episode_id: int
    kind: str
    errors: Dict[str, Dict[float, np.ndarray]]
    pre: Dict[float, np.ndarray]
    max_position_gap: float
    crossing_hits: List[bool]


def _streams(ep: Episode):
    traj = ep.trajectory
    meas = [Measurement(float(r[0]), float(r[6]), float(r[7])) for r in traj]
    return meas, vehicles_at(ep), traj[:, 8] > 0


def _rollout_errors(steps, truth: np.ndarray, t: np.ndarray, n: int) -> Tuple[np.ndarray, List[int]]:
    rows, ticks = [], []
    last = len(truth) - 1
    for s in steps:
        if s.tick + n > last:
            continue
        act = np.column_stack([t[s.tick + 1:s.tick + n + 1], truth[s.tick + 1:s.tick + n + 1]])
        pred = np.column_stack([s.rollout.t[:n], s.rollout.positions[:n]])
        pair = TrajectoryPair(pred, act)
        rows.append((ade(pair), fde(pair), rmse(pair)))
        ticks.append(s.tick)
    return np.array(rows, dtype=float).reshape(-1, 3), ticks


def evaluate_episode(ep: Episode, model: Optional[GapModel], cfg: ExperimentConfig,
                     rollout_dir: Optional[Path] = None) -> EpisodeErrors:
    meas, traffic, gaze = _streams(ep)
    traj = ep.trajectory
    t, truth, actions = traj[:, 0], traj[:, 1:3], traj[:, 5].astype(int)
    hybrid = run_tracker(meas, traffic, gaze, model, cfg.prediction, cfg.noise, cfg.geometry)
    cv = cv_baseline(meas, cfg.prediction, cfg.noise, cfg.geometry)
    if rollout_dir is not None:
        write_rollouts(Path(rollout_dir) / f"rollouts_ep{ep.episode_id:04d}.csv", hybrid)
    crossing = np.flatnonzero(actions == int(ActionState.CROSS))
    k_cross = int(crossing[0]) if crossing.size else len(t)

    errors: Dict[str, Dict[float, np.ndarray]] = {"hybrid": {}, "cv": {}}
    pre: Dict[float, np.ndarray] = {}
    for h in cfg.horizons:
        n = int(round(h / cfg.prediction.dt))
        errors["hybrid"][h], ticks = _rollout_errors(hybrid, truth, t, n)
        errors["cv"][h], _ = _rollout_errors(cv, truth, t, n)
        pre[h] = np.array([k < k_cross for k in ticks], dtype=bool)

    gap = max((float(np.max(np.abs(a.rollout.states - b.rollout.states)))
               for a, b in zip(hybrid, cv)), default=0.0)
    hits = []
    if crossing.size:
        t_cross = t[k_cross]
        for s in hybrid:
            if (s.tick < k_cross and actions[s.tick] == int(ActionState.WAIT)
                    and t_cross - t[s.tick] <= 3.0 + 1e-9):
                predicted = s.rollout.crossing_start()
                hits.append(predicted is not None and abs(predicted - t_cross) <= 1.0)
    return EpisodeErrors(ep.episode_id, ep.kind, errors, pre, gap, hits)


def _evaluate_job(args):
    return evaluate_episode(*args)


def evaluate_episodes(episodes: Sequence[Episode], model: Optional[GapModel],
                      cfg: ExperimentConfig, rollout_dir: Optional[Path] = None
                      ) -> List[EpisodeErrors]:
    jobs = [(ep, model, cfg, rollout_dir) for ep in episodes]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_evaluate_job, jobs, chunksize=2))
    return [_evaluate_job(j) for j in jobs]


def aggregate(results: Sequence[EpisodeErrors], horizons: Sequence[float],
              kind: str, subset: str = "all") -> Dict[str, Dict[str, Dict[float, float]]]:
    """Mean error per (metric, model, horizon) over all rollouts of ``kind`` episodes.

    ``subset`` restricts to rollouts issued before (``pre``) or after
    (``post``) the crossing started. Horizons without any rollout are left out.
    """
    out: Dict[str, Dict[str, Dict[float, float]]] = {m: {"hybrid": {}, "cv": {}} for m in METRICS}
    for h in horizons:
        for model in ("hybrid", "cv"):
            chunks = []
            for r in results:
                if r.kind != kind:
                    continue
                e = r.errors[model][h]
                if subset == "pre":
                    e = e[r.pre[h]]
                elif subset == "post":
                    e = e[~r.pre[h]]
                chunks.append(e)
            e = np.concatenate(chunks) if chunks else np.empty((0, 3))
            if len(e) == 0:
                continue
            for j, m in enumerate(METRICS):
                out[m][model][h] = float(e[:, j].mean())
    return out


def _speed_rows(episodes: Sequence[Episode]) -> Dict[str, Dict[str, Optional[float]]]:
    """Walking speed from ground-truth and from measured positions."""
    out = {}
    for source, cols in (("ground_truth", [1, 2]), ("measured", [6, 7])):
        cross, side = [], []
        for ep in episodes:
            traj = ep.trajectory
            if len(traj) <= 5:
                continue
            stats = walking_speed_stats(traj[:, 0], traj[:, cols],
                                        [ActionState(int(a)) for a in traj[:, 5]])
            n_cross = int(np.sum(traj[:, 5] == int(ActionState.CROSS)))
            n_side = int(np.sum(np.isin(traj[:, 5], [int(ActionState.APPROACH),
                                                     int(ActionState.WALKAWAY)])))
            if stats["crossing_mean"] is not None:
                cross.append((stats["crossing_mean"], n_cross))
            if stats["sidewalk_mean"] is not None:
                side.append((stats["sidewalk_mean"], n_side))
        out[source] = {"crossing_mean": _weighted(cross), "sidewalk_mean": _weighted(side)}
    return out


def _weighted(pairs) -> Optional[float]:
    if not pairs:
        return None
    v, w = np.array(pairs, dtype=float).T
    return float(np.sum(v * w) / np.sum(w))


def run_evaluate(cfg: ExperimentConfig, dataset: Path, model_path: Path, out: Path,
                 tune: bool = False, dump_rollouts: bool = False) -> Dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _, episodes, manifest_sha = _open_dataset(dataset)
    if not Path(model_path).is_file():
        raise DataError(f"model file not found: {model_path}")
    try:
        model = load_model(model_path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {model_path}: {exc}") from exc
    if tune:
        tracks = [(ep.trajectory[:, 6:8], ep.trajectory[:, 1:3]) for ep in episodes]
        noise, _ = tune_noise(tracks, cfg.sim.dt)
        cfg = replace(cfg, noise=noise)
    prov = provenance("evaluate", cfg, {"dataset": manifest_sha,
                                        "model": file_sha256(model_path)})

    longest = max((len(ep.trajectory) for ep in episodes), default=0)
    usable = []
    for h in cfg.horizons:
        if int(round(h / cfg.prediction.dt)) >= longest:
            log.warning("horizon %.2f s exceeds every episode; skipped", h)
        else:
            usable.append(h)
    cfg = replace(cfg, horizons=tuple(usable))

    rollout_dir = None
    if dump_rollouts:
        rollout_dir = out / "rollouts"
        rollout_dir.mkdir(exist_ok=True)
    results = evaluate_episodes(episodes, model, cfg, rollout_dir)

    summary: Dict = {"horizons": list(cfg.horizons), "noise": asdict(cfg.noise),
                     "epsilon_v": cfg.geometry.epsilon_v}
    rows = []
    for kind in ("crossing", "walkaway"):
        if not any(r.kind == kind for r in results):
            continue
        agg = aggregate(results, cfg.horizons, kind)
        summary[kind] = {"all": agg, "pre": aggregate(results, cfg.horizons, kind, "pre"),
                         "post": aggregate(results, cfg.horizons, kind, "post"),
                         "episodes": sum(r.kind == kind for r in results)}
        for m in METRICS:
            for model_name in ("hybrid", "cv"):
                curve = sorted(agg[m][model_name].items())
                if kind == "crossing":
                    write_csv(out / f"curve_{m}_{model_name}.csv", ("horizon_s", "value"),
                              curve, prov)
                    rows += [(m, h, model_name, v) for h, v in curve]
                else:
                    write_csv(out / f"curve_{m}_{model_name}_walkaway.csv",
                              ("horizon_s", "value"), curve, prov)
    summary["walkaway_max_position_gap"] = max(
        (r.max_position_gap for r in results if r.kind == "walkaway"), default=None)
    hits = [h for r in results for h in r.crossing_hits]
    summary["crossing_time_within_1s"] = float(np.mean(hits)) if hits else None
    summary["crossing_time_rollouts"] = len(hits)
    write_csv(out / "metrics.csv", ("metric", "horizon_s", "model", "value"), rows, prov)

    gaps = accepted_gap_samples(episodes, cfg.geometry)
    if len(gaps):
        write_csv(out / "gap_curve.csv", ("gap_s", "cumulative_fraction"),
                  cumulative_gap_curve(gaps).tolist(), prov)
    speeds = _speed_rows(episodes)
    write_csv(out / "walking_speed.csv", ("source", "crossing_mean", "sidewalk_mean"),
              [(k, v["crossing_mean"], v["sidewalk_mean"]) for k, v in speeds.items()], prov,
              [f"published reference (external): {k} crossing {v['crossing_mean']} "
               f"sidewalk {v['sidewalk_mean']}" for k, v in REFERENCE_SPEEDS.items()])
    summary["walking_speed"] = speeds
    summary["accepted_gaps"] = int(len(gaps))
    write_json(out / "metrics.json", summary, prov)
    return summary


# -- behavior comparison -----------------------------------------------------------

def behavior_stats(episodes: Sequence[Episode], cfg: ExperimentConfig) -> Dict:
    gaps = accepted_gap_samples(episodes, cfg.geometry)
    speeds = _speed_rows(episodes)["measured"]
    return {"gaps": gaps, "speeds": speeds}


def run_compare_behavior(cfg: ExperimentConfig, dataset_a: Path, dataset_b: Path,
                         out: Path) -> Dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _, eps_a, sha_a = _open_dataset(dataset_a)
    _, eps_b, sha_b = _open_dataset(dataset_b)
    prov = provenance("compare-behavior", cfg, {"dataset_a": sha_a, "dataset_b": sha_b})
    a, b = behavior_stats(eps_a, cfg), behavior_stats(eps_b, cfg)
    for name, s in (("a", a), ("b", b)):
        if len(s["gaps"]) == 0:
            raise DataError(f"dataset {name} has no accepted gaps")
        write_csv(out / f"gap_curve_{name}.csv", ("gap_s", "cumulative_fraction"),
                  cumulative_gap_curve(s["gaps"]).tolist(), prov)
    kl = kl_divergence(a["gaps"], b["gaps"])
    summary = {
        "kl_divergence": kl,
        "accepted_gaps": {"a": int(len(a["gaps"])), "b": int(len(b["gaps"]))},
        "walking_speed": {"a": a["speeds"], "b": b["speeds"]},
        "published_reference": {"kl_divergence": REFERENCE_KL, "walking_speed": REFERENCE_SPEEDS,
                                "note": "external values, not reproduced"},
    }
    write_json(out / "behavior.json", summary, prov)
    return summary


__all__ = ["DataError", "run_simulate", "run_train_gap", "run_rank_features", "run_evaluate",
           "run_compare_behavior", "evaluate_episode", "evaluate_episodes", "aggregate",
           "behavior_stats", "provenance"]
