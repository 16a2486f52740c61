"""A walking tour of the gridworld: levels, stepping, what the agent sees.

Run:  python demos/01_gridworld_tour.py
"""

import numpy as np

from uedlab.env import (
    EAST,
    FORWARD,
    TURN_RIGHT,
    EnvConfig,
    encode_observation,
    is_solvable,
    reset,
    step,
)
from uedlab.levelgen import parse_level, serialize_level

# ---------------------------------------------------------------------------
# A level is just ASCII. Border walls are implicit; the header fixes the
# starting heading.
# ---------------------------------------------------------------------------
level = parse_level(
    """\
dir: east
S..#....G
...#.....
...#.###.
.........
.####....
.........
"""
)
print("The level, round-tripped through its canonical serialization:")
print(serialize_level(level))
print("solvable?", is_solvable(level))

# ---------------------------------------------------------------------------
# Episodes are pure function calls: state in, state out.
# ---------------------------------------------------------------------------
cfg = EnvConfig(max_steps=50, view_size=5)
state, obs = reset(level, cfg)
print(f"\nreset -> pos {state.agent_pos}, heading {state.agent_dir} (east)")

plan = [FORWARD, FORWARD, FORWARD, TURN_RIGHT, FORWARD]  # third forward hits the wall
for action in plan:
    state, obs, reward, done = step(state, action, level, cfg)
    print(f"action {action} -> pos {state.agent_pos} dir {state.agent_dir} reward {reward}")

# ---------------------------------------------------------------------------
# The observation is an egocentric window: the agent sits at the bottom
# center looking "up" the rows. 0 empty, 1 wall, 2 goal; everything beyond
# the grid reads as wall.
# ---------------------------------------------------------------------------
print("\negocentric 5x5 view (agent at bottom-center, facing up):")
print(obs.view)

features = encode_observation(obs)
print(f"\nencoded feature vector: length {len(features)} "
      f"(= 5*5 cells x 3 one-hot + 4 heading), all entries in {{0,1}}")
print("nonzero entries:", int(features.sum()))

# ---------------------------------------------------------------------------
# Reward: zero everywhere except on reaching the goal, where fewer steps
# pay more: 1 - 0.9 * steps/max_steps.
# ---------------------------------------------------------------------------
fast = 1 - 0.9 * 10 / cfg.max_steps
slow = 1 - 0.9 * 49 / cfg.max_steps
print(f"\nreaching the goal at step 10 pays {fast:.3f}; at step 49 pays {slow:.3f}")
