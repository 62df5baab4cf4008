"""Constant-velocity Kalman filter over (x, y, vx, vy) with position-only
measurements."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .hybrid_core import ActionState, Kinematics

H = np.array([[1.0, 0.0, 0.0, 0.0],
              [0.0, 1.0, 0.0, 0.0]])


class IllConditionedError(np.linalg.LinAlgError):
    """Innovation covariance too close to singular to invert."""


@dataclass(frozen=True)
class NoiseConfig:
    q_pos: float = 1e-3
    q_vel: float = 1e-2
    r_pos: float = 1e-2

    def __post_init__(self):
        if self.q_pos < 0 or self.q_vel < 0:
            raise ValueError("process noise variances must be >= 0")
        if self.r_pos <= 0:
            raise ValueError("r_pos must be > 0")

    @property
    def W(self) -> np.ndarray:
        return np.diag([self.q_pos, self.q_pos, self.q_vel, self.q_vel])

    @property
    def R(self) -> np.ndarray:
        return np.eye(2) * self.r_pos


@dataclass(frozen=True)
class Measurement:
    t: float
    zx: float
    zy: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.t, self.zx, self.zy])):
            raise ValueError(f"non-finite measurement: {self}")


def cv_matrix(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    return F


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def cv_predict(kin: Kinematics, cov: np.ndarray, dt: float, noise: NoiseConfig,
               action: Optional[ActionState] = None) -> Tuple[Kinematics, np.ndarray]:
    """One prediction step of the constant-velocity model.

    While waiting the mean is stationary: position is held and the velocity
    estimate is reset to zero. The covariance still uses the full CV
    transition so that a pedestrian starting to move shows up as velocity in
    the next update.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F = cv_matrix(dt)
    if action == ActionState.WAIT:
        mean = np.array([kin.x, kin.y, 0.0, 0.0])
    else:
        mean = F @ kin.as_array()
    P = F @ np.asarray(cov, dtype=float) @ F.T + noise.W
    return Kinematics.from_array(mean), _symmetrize(P)


def kalman_update(kin: Kinematics, cov: np.ndarray, z: Measurement,
                  noise: NoiseConfig) -> Tuple[Kinematics, np.ndarray]:
    """Fuse a position measurement. Joseph form keeps the posterior PSD."""
    P = np.asarray(cov, dtype=float)
    x = kin.as_array()
    innovation = np.array([z.zx, z.zy]) - H @ x
    S = H @ P @ H.T + noise.R
    if np.linalg.cond(S) > 1e12:
        raise IllConditionedError(f"innovation covariance ill-conditioned: cond={np.linalg.cond(S):.3g}")
    K = np.linalg.solve(S, H @ P).T
    x_post = x + K @ innovation
    I_KH = np.eye(4) - K @ H
    P_post = I_KH @ P @ I_KH.T + K @ noise.R @ K.T
    return Kinematics.from_array(x_post), _symmetrize(P_post)


def initial_covariance(noise: NoiseConfig, dt: float) -> np.ndarray:
    """Covariance matching a two-point finite-difference initialization."""
    r = noise.r_pos
    P = np.diag([r, r, 2 * r / dt**2, 2 * r / dt**2])
    P[0, 2] = P[2, 0] = P[1, 3] = P[3, 1] = r / dt
    return P


def init_from_measurements(z0: Measurement, z1: Measurement,
                           noise: NoiseConfig) -> Tuple[Kinematics, np.ndarray]:
    dt = z1.t - z0.t
    if dt <= 0:
        raise ValueError("measurements must be strictly increasing in time")
    kin = Kinematics(z1.zx, z1.zy, (z1.zx - z0.zx) / dt, (z1.zy - z0.zy) / dt)
    return kin, initial_covariance(noise, dt)
