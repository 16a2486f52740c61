"""How the teacher picks levels: rank prioritization, staleness, and the
diversity/regret mixture.

Run:  python demos/04_replay_prioritization.py
"""

import numpy as np

from uedlab.curriculum import (
    BufferEntry,
    LevelBuffer,
    TeacherConfig,
    distances_to_entries,
    rank_prioritization,
    replay_distribution,
    staleness_weights,
    try_insert,
)
from uedlab.levelgen import GeneratorConfig, level_id, random_level
from uedlab.ot import OtConfig, SampleSet

# ---------------------------------------------------------------------------
# Rank prioritization: scores become ranks, ranks become sampling mass
# rank^-beta. Only the ordering matters, and beta tunes the sharpness.
# ---------------------------------------------------------------------------
scores = [0.9, 0.3, 0.5, 0.1]
for beta in (0.5, 1.0, 3.0):
    print(f"beta={beta}: {np.round(rank_prioritization(scores, beta), 3)}")
print("(scores", scores, "- highest score always gets the most mass)")

# ---------------------------------------------------------------------------
# Build a small buffer of synthetic entries to watch the mixture at work.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(3)
gen = GeneratorConfig(block_budget=6, width=7, height=7)
ot_cfg = OtConfig(max_samples=16)
buffer = LevelBuffer(capacity=5)
for age, (regret, cloud_center) in enumerate([(0.8, 0.0), (0.6, 0.1), (0.4, 2.0), (0.2, 4.0), (0.1, 4.1)]):
    level = random_level(gen, rng)
    entry = BufferEntry(
        level=level,
        level_id=level_id(level),
        regret_score=regret,
        distance_score=0.0,
        samples=SampleSet.uniform(rng.normal(size=(8, 3)) + cloud_center),
        last_scored_at=age,
    )
    buffer.append(entry, distances_to_entries(entry.samples, buffer, ot_cfg))

print("\nper-entry scores (regret falls, diversity varies):")
for e in buffer.entries:
    print(f"  {e.level_id}  regret={e.regret_score:.2f}  distance={e.distance_score:.3f}")

now = 8
print("\nstaleness weights (age since last scoring):", np.round(staleness_weights(buffer, now), 3))

for rho, label in ((0.0, "regret only (plr)"), (1.0, "diversity only (diplr_minus)"), (0.5, "mixed (diplr)")):
    cfg = TeacherConfig(strategy="diplr", rho=rho, staleness_coef=0.1)
    probs = replay_distribution(buffer, cfg, now)
    print(f"rho={rho}  {label:28s} -> {np.round(probs, 3)}")

# ---------------------------------------------------------------------------
# Insertion: a candidate enters a full buffer only by out-ranking its
# weakest member, which gets evicted.
# ---------------------------------------------------------------------------
strong = random_level(gen, rng)
candidate = BufferEntry(
    level=strong,
    level_id=level_id(strong),
    regret_score=0.95,
    distance_score=0.0,
    samples=SampleSet.uniform(rng.normal(size=(8, 3)) - 5.0),  # far from everyone
    last_scored_at=now,
)
dvec = distances_to_entries(candidate.samples, buffer, ot_cfg)
candidate.distance_score = float(dvec.min())
cfg = TeacherConfig(strategy="diplr", rho=0.5, staleness_coef=0.1)
inserted, evicted = try_insert(buffer, candidate, cfg, now, dvec=dvec)
print(f"\nhigh-regret, high-diversity candidate inserted: {inserted}; "
      f"evicted {evicted.level_id if evicted else None}")
