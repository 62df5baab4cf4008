"""
One pedestrian, one crossing
============================

Simulate a single wait-then-cross episode, track it with the hybrid
filter and look at what the predictor expects while the pedestrian waits.
"""

# %%
import numpy as np

from pedcross.gap_acceptance import Label
from pedcross.harness import build_config
from pedcross.hybrid_core import ActionState
from pedcross.inference import run_tracker
from pedcross.motion_tracker import Measurement
from pedcross.scenario_sim import simulate_all, vehicles_at

cfg = build_config({"seed": 3, "sim.n_crossings": 1, "sim.n_walkaway": 0})
ep = simulate_all(cfg.sim, cfg.oracle)[0]
traj = ep.trajectory
print(f"profile {ep.profile}, {len(traj)} ticks of {cfg.sim.dt} s")

# %%
# ground-truth action word: each phase and how long it lasted
acts = traj[:, 5].astype(int)
cuts = np.flatnonzero(np.diff(acts)) + 1
for seg in np.split(np.arange(len(acts)), cuts):
    print(f"{ActionState(acts[seg[0]]).name:<9} {traj[seg[0], 0]:6.1f} s  for {len(seg) * cfg.sim.dt:4.1f} s")

# %%
# gap events seen by the simulator's pedestrian
for ev in ep.events:
    print(f"gap at {ev.start_time:5.1f} s  traffic gap {ev.traffic_gap:5.2f} s  -> {Label(ev.label).name}")

# %%
# no classifier yet: a constant 0.9 stands in for the gap-acceptance model
meas = [Measurement(float(r[0]), float(r[6]), float(r[7])) for r in traj]
steps = run_tracker(meas, vehicles_at(ep), traj[:, 8] > 0, lambda f: 0.9,
                    cfg.prediction, cfg.noise, cfg.geometry)
k_cross = int(np.argmax(acts == ActionState.CROSS))
for s in steps:
    if k_cross - 30 <= s.tick <= k_cross and s.tick % 5 == 0:
        start = s.rollout.crossing_start()
        txt = f"{start:5.1f} s" if start is not None else "  none"
        print(f"t={traj[s.tick, 0]:5.1f}  tracked {s.state.action.name:<8} predicted crossing start {txt}")
print(f"actual crossing start {traj[k_cross, 0]:.1f} s")
