"""The five teachers side by side on a tiny budget, then zero-shot scores.

This is a toy-scale sketch (~2 minutes); the real comparison is the
directional study (see README and uedlab.study) with 2000 updates and five
seeds per strategy.

Run:  python demos/06_curriculum_teachers.py
"""

import numpy as np

from uedlab.agent import GaeConfig, PpoConfig
from uedlab.curriculum import TeacherConfig, run_training
from uedlab.env import EnvConfig
from uedlab.evaluation import builtin_suite, evaluate_policy, iqm
from uedlab.levelgen import GeneratorConfig
from uedlab.ot import OtConfig
from uedlab.seeding import seed_streams

UPDATES = 150
env_cfg = EnvConfig(max_steps=60, view_size=5, width=9, height=9)
gen_cfg = GeneratorConfig(block_budget=15, width=9, height=9)
ppo_cfg = PpoConfig(rollout_steps=192)
gae_cfg = GaeConfig()
ot_cfg = OtConfig(max_samples=48)
suite = builtin_suite()

print(f"{UPDATES} updates per strategy on 9x9 mazes, then the 8-maze zero-shot suite\n")
print(f"{'strategy':14s} {'replayed':>8s} {'generated':>9s} {'suite IQM':>10s}  per-level solved")
for strategy in ("dr", "minimax", "plr", "diplr_minus", "diplr"):
    teacher = TeacherConfig(
        strategy=strategy, buffer_size=12, scoring_episodes=3, refresh_every=10
    )
    policy, records = run_training(
        teacher, env_cfg, gen_cfg, ppo_cfg, gae_cfg, ot_cfg,
        total_updates=UPDATES, streams=seed_streams(1),
    )
    record = evaluate_policy(policy, suite, n_episodes=1, env_cfg=env_cfg, seed=0)
    rates = list(record.solved_rates.values())
    replayed = sum(r["branch"] == "replay" for r in records)
    generated = UPDATES - replayed
    solved = "".join("X" if r > 0.5 else "." for r in rates)
    print(f"{strategy:14s} {replayed:8d} {generated:9d} {iqm(rates):10.3f}  {solved}")

print("\nlevels:", ", ".join(suite))
print("\nAt this budget the ordering is noisy; the study in uedlab.study runs")
print("the full desk-scale comparison (2000 updates x 5 seeds x 4 strategies).")
