"""Synthetic pedestrian-AV interaction data."""

from .generate import (TRAJ_HEADER, VEH_HEADER, DatasetSummary, Episode, SimConfig,
                       accepted_gap_samples, generate_dataset, load_dataset, simulate_all,
                       simulate_episode, summarize, vehicles_at, write_dataset)
from .pedestrian import (PedOracleConfig, Pedestrian, advance, decide, gaze_step,
                         ped_oracle_step, spawn_pedestrian)
from .vehicles import (PROFILES, DrivingProfile, ProfileName, Spawner, VehicleState, av_step,
                       get_profile, spawn_step)
