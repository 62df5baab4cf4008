"""Trajectory, classification and distribution metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .hybrid_core import ActionState


@dataclass(frozen=True)
class TrajectoryPair:
    """Predicted and actual (t, x, y) rows sampled at the same instants."""

    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.predicted, dtype=float))
        a = np.atleast_2d(np.asarray(self.actual, dtype=float))
        if p.size == 0 or a.size == 0:
            raise ValueError("empty trajectory pair")
        if p.shape != a.shape or p.shape[1] != 3:
            raise ValueError(f"shape mismatch: {p.shape} vs {a.shape}")
        if len(p) > 1:
            dt = np.min(np.diff(a[:, 0]))
            tol = dt / 10
        else:
            tol = 1e-6
        if np.max(np.abs(p[:, 0] - a[:, 0])) > tol:
            raise ValueError("timestamps of predicted and actual do not match")
        object.__setattr__(self, "predicted", p)
        object.__setattr__(self, "actual", a)

    @classmethod
    def from_xy(cls, t, predicted_xy, actual_xy) -> "TrajectoryPair":
        t = np.asarray(t, dtype=float).reshape(-1, 1)
        return cls(np.hstack([t, np.asarray(predicted_xy, float).reshape(-1, 2)]),
                   np.hstack([t, np.asarray(actual_xy, float).reshape(-1, 2)]))

    def distances(self) -> np.ndarray:
        d = self.predicted[:, 1:] - self.actual[:, 1:]
        return np.hypot(d[:, 0], d[:, 1])


def ade(pair: TrajectoryPair) -> float:
    return float(np.mean(pair.distances()))


def fde(pair: TrajectoryPair) -> float:
    return float(pair.distances()[-1])


def rmse(pair: TrajectoryPair) -> float:
    return float(np.sqrt(np.mean(pair.distances() ** 2)))


def kl_divergence(p_samples: Sequence[float], q_samples: Sequence[float],
                  bins: int = 20, eps: float = 1e-6) -> float:
    """Discrete KL(P || Q) in nats between two samples.

    Both samples are histogrammed over their pooled range, smoothed by ``eps``
    and renormalized.
    """
    p_samples = np.asarray(p_samples, dtype=float)
    q_samples = np.asarray(q_samples, dtype=float)
    if p_samples.size == 0 or q_samples.size == 0:
        raise ValueError("both sample sets must be nonempty")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo = min(p_samples.min(), q_samples.min())
    hi = max(p_samples.max(), q_samples.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    p = np.histogram(p_samples, edges)[0] / p_samples.size + eps
    q = np.histogram(q_samples, edges)[0] / q_samples.size + eps
    p /= p.sum()
    q /= q.sum()
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def cumulative_gap_curve(accepted_gaps: Sequence[float]) -> np.ndarray:
    """Empirical CDF of accepted gaps as an (n_unique, 2) array."""
    g = np.sort(np.asarray(accepted_gaps, dtype=float))
    if g.size == 0:
        raise ValueError("no accepted gaps")
    values, counts = np.unique(g, return_counts=True)
    cdf = np.cumsum(counts) / g.size
    cdf[-1] = 1.0
    return np.column_stack([values, cdf])


def finite_difference_velocity(t, xy, window: int = 5) -> np.ndarray:
    """Central-difference velocity smoothed by a centered moving average."""
    t = np.asarray(t, dtype=float)
    xy = np.asarray(xy, dtype=float)
    v = np.gradient(xy, t, axis=0)
    if window > 1:
        v = uniform_filter1d(v, size=window, axis=0, mode="nearest")
    return v


def walking_speed_stats(t, xy, actions: Sequence[ActionState],
                        window: int = 5) -> Dict[str, Optional[float]]:
    """Mean walking speed while crossing and while on the sidewalk.

    Velocity components are smoothed before taking the norm; smoothing the
    norm instead leaves a noise-driven upward bias.
    """
    xy = np.asarray(xy, dtype=float)
    if len(xy) <= window:
        raise ValueError("trajectory must be longer than the smoothing window")
    v = finite_difference_velocity(t, xy, window)
    speed = np.hypot(v[:, 0], v[:, 1])
    acts = np.asarray([int(a) for a in actions])
    crossing = acts == ActionState.CROSS
    sidewalk = (acts == ActionState.APPROACH) | (acts == ActionState.WALKAWAY)
    return {
        "crossing_mean": float(speed[crossing].mean()) if crossing.any() else None,
        "sidewalk_mean": float(speed[sidewalk].mean()) if sidewalk.any() else None,
    }


def classification_metrics(labels: Sequence[int], predictions: Sequence[float],
                           threshold: float = 0.5) -> Dict[str, float]:
    """Accuracy, precision, recall and F1 with accepted (1) as positive class.

    ``predictions`` may be probabilities or hard 0/1 decisions; values above
    ``threshold`` count as positive.
    """
    y = np.asarray(labels).astype(bool)
    p = np.asarray(predictions, dtype=float)
    if y.size == 0 or y.shape != p.shape:
        raise ValueError("labels and predictions must be nonempty and equal length")
    yhat = p > threshold
    tp = int(np.sum(y & yhat))
    fp = int(np.sum(~y & yhat))
    fn = int(np.sum(y & ~yhat))
    tn = int(np.sum(~y & ~yhat))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / y.size,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }
