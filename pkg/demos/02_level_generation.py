"""Level generators: uniform random draws and single-edit mutations.

Run:  python demos/02_level_generation.py
"""

import numpy as np

from uedlab.env import is_solvable
from uedlab.levelgen import GeneratorConfig, mutate_level, random_level, serialize_level

rng = np.random.default_rng(7)
cfg = GeneratorConfig(block_budget=15, width=9, height=9)

# ---------------------------------------------------------------------------
# The uniform generator: wall count drawn uniform in [0, budget], then wall
# cells, start, goal and heading placed uniformly. Unsolvable levels are
# perfectly legal training inputs.
# ---------------------------------------------------------------------------
print("three uniform draws (budget 15 on 9x9):\n")
for _ in range(3):
    level = random_level(cfg, rng)
    print(serialize_level(level))
    print(f"walls: {len(level.walls)}  solvable: {is_solvable(level)}\n")

levels = [random_level(cfg, rng) for _ in range(2000)]
counts = np.array([len(l.walls) for l in levels])
solvable = np.mean([is_solvable(l) for l in levels])
print(f"over 2000 draws: mean wall count {counts.mean():.2f} (uniform on 0..15 -> 7.5), "
      f"{100 * solvable:.0f}% solvable")

# ---------------------------------------------------------------------------
# Mutation applies exactly one edit: toggle a wall, move the start, or move
# the goal. It is the search primitive behind the minimax teacher.
# ---------------------------------------------------------------------------
base = random_level(GeneratorConfig(block_budget=6, width=9, height=9), rng)
print("\nbase level:")
print(serialize_level(base))
current = base
for i in range(4):
    current = mutate_level(current, rng)
print("after four single-edit mutations:")
print(serialize_level(current))
