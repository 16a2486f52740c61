"""Transport distances: exact W1, optimal plans, and distances between
levels through the eyes of one policy.

Run:  python demos/03_wasserstein_level_distance.py
"""

import numpy as np

from uedlab.agent import GaeConfig, PolicyParams, collect_trajectories, occupancy_samples
from uedlab.env import EnvConfig
from uedlab.levelgen import parse_level
from uedlab.ot import OtConfig, SampleSet, emd, level_distance, sinkhorn

# ---------------------------------------------------------------------------
# Exact earth mover's distance on a toy pair: {0, 1} vs {1, 2}. Each atom
# shifts by one, so W1 = 1 and the plan is the obvious matching.
# ---------------------------------------------------------------------------
p = SampleSet.uniform(np.array([[0.0], [1.0]]))
q = SampleSet.uniform(np.array([[1.0], [2.0]]))
distance, plan = emd(p, q)
print(f"W1({{0,1}}, {{1,2}}) = {distance}")
print("optimal plan (rows: sources, cols: targets):")
print(plan.plan)

# ---------------------------------------------------------------------------
# The entropic solver approaches the exact value from above as the
# regularization shrinks. It is only used when clouds exceed the exact cap.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(0)
a = SampleSet.uniform(rng.normal(size=(12, 4)))
b = SampleSet.uniform(rng.normal(size=(12, 4)))
exact, _ = emd(a, b)
print(f"\nexact W1 on random clouds: {exact:.6f}")
for eps in (1.0, 0.1, 0.01, 0.001):
    approx, _ = sinkhorn(a, b, eps_reg=eps)
    print(f"  sinkhorn eps={eps:<6} -> {approx:.6f}")

# ---------------------------------------------------------------------------
# Level distance: roll the same policy on two levels, collect state-action
# occupancy samples, and transport one cloud onto the other. A wall the
# policy actually encounters moves the distance away from zero.
# ---------------------------------------------------------------------------
open_room = parse_level("dir: east\nS........\n.........\n.........\n.........\n"
                        ".........\n.........\n.........\n.........\n........G\n")
walled = parse_level("dir: east\nS...#....\n....#....\n....#....\n....#....\n"
                     ".........\n.........\n.........\n.........\n........G\n")

cfg = EnvConfig(max_steps=60)
policy = PolicyParams.init(cfg.feature_dim, np.random.default_rng(1))
ot_cfg = OtConfig(max_samples=64)

clouds = {}
for name, level in (("open", open_room), ("walled", walled)):
    batch = collect_trajectories(
        policy, level, cfg, GaeConfig(), np.random.default_rng(2), n_episodes=4
    )
    clouds[name] = occupancy_samples(batch)
    print(f"\n{name}: {batch.n_steps} state-action samples from 4 episodes")

d_self = level_distance(clouds["open"], clouds["open"], ot_cfg)
d_pair = level_distance(clouds["open"], clouds["walled"], ot_cfg)
print(f"\nD(open, open)   = {d_self}")
print(f"D(open, walled) = {d_pair:.4f}   <- the wall shows up in the occupancy")
