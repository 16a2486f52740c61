"""Zero-shot evaluation: fixed out-of-distribution mazes and aggregates.

The builtin suite holds eight hand-designed 9x9 mazes covering the classic
transfer challenges: open space, rooms, corridors, spirals, dead ends and a
perfect maze. A trained policy is run greedily (argmax actions) on each,
with no further training, and runs are summarized by the interquartile
mean of normalized solved rates plus the optimality gap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import env as genv
from .agent import PolicyParams, act, act_greedy
from .env import EnvConfig, GridLevel
from .levelgen import parse_level

# Action source: trained parameters or any features -> action callable
# (hand-coded oracle policies plug straight in).
PolicyLike = PolicyParams | Callable[[np.ndarray], int]

_FOUR_ROOMS = """\
dir: east
S...#....
....#....
.........
....#....
##.###.##
....#....
.........
....#....
....#...G
"""

_LABYRINTH = """\
dir: east
S........
.###.###.
.#.....#.
.#.###.#.
.#.#G#.#.
.#.#.#.#.
.#.....#.
.#######.
.........
"""

_SPIRAL = """\
dir: east
S........
########.
.......#.
.#####.#.
.#..G#.#.
.#.###.#.
.#.....#.
.#######.
.........
"""

_LONG_CORRIDOR = """\
dir: east
S........
########.
.........
.########
........G
#########
#########
#########
#########
"""

_NINE_ROOMS = """\
dir: east
S.#..#...
.........
#.##.##.#
..#..#...
.........
#.##.##.#
..#..#...
.........
..#..#..G
"""

_DEAD_ENDS = """\
dir: east
#########
#.#.#.#G#
#.#.#.#.#
#.#.#.#.#
S........
#.#.#.#.#
#.#.#.#.#
#.#.#.#.#
#########
"""

_OPEN_FIELD = """\
dir: east
S........
.........
.........
.........
.........
.........
.........
.........
........G
"""


def _perfect_maze(seed: int = 20240) -> GridLevel:
    """Depth-first spanning tree over a 5x5 cell lattice: a loop-free maze
    with a unique path between any two open cells. Lattice cell (cx, cy)
    occupies grid cell (2cx, 2cy); carving a passage opens the midpoint."""
    rng = np.random.default_rng(seed)
    lattice = 5
    carved = {(0, 0)}
    visited = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        cx, cy = stack[-1]
        neighbors = [
            (cx + dx, cy + dy)
            for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0))
            if 0 <= cx + dx < lattice and 0 <= cy + dy < lattice and (cx + dx, cy + dy) not in visited
        ]
        if not neighbors:
            stack.pop()
            continue
        nx, ny = neighbors[int(rng.integers(0, len(neighbors)))]
        carved.add((2 * nx, 2 * ny))
        carved.add((cx + nx, cy + ny))  # grid midpoint between the two cells
        visited.add((nx, ny))
        stack.append((nx, ny))
    carved.add((0, 0))
    carved = {(2 * cx, 2 * cy) for cx, cy in visited} | {c for c in carved if (c[0] + c[1]) % 2 == 1}
    walls = frozenset((x, y) for x in range(9) for y in range(9) if (x, y) not in carved)
    return GridLevel(9, 9, walls, (0, 0), genv.EAST, (8, 8))


def builtin_suite() -> dict[str, GridLevel]:
    """The eight named test mazes; every level is verified solvable."""
    suite = {
        "open_field": parse_level(_OPEN_FIELD),
        "four_rooms": parse_level(_FOUR_ROOMS),
        "nine_rooms": parse_level(_NINE_ROOMS),
        "long_corridor": parse_level(_LONG_CORRIDOR),
        "dead_ends": parse_level(_DEAD_ENDS),
        "labyrinth": parse_level(_LABYRINTH),
        "spiral": parse_level(_SPIRAL),
        "perfect_maze": _perfect_maze(),
    }
    for name, level in suite.items():
        if not genv.is_solvable(level):
            raise AssertionError(f"suite level {name!r} is not solvable")
    return suite


@dataclass
class RunRecord:
    seed: int
    solved_rates: dict[str, float]
    mean_returns: dict[str, float]


@dataclass
class AggregateReport:
    strategy: str
    n_runs: int
    iqm: float
    optimality_gap: float
    per_level_median: dict[str, float]
    per_level_iqr: dict[str, tuple[float, float]]
    normalization: tuple[float, float]


def _select_action(policy: PolicyLike, features, greedy: bool, rng) -> int:
    if isinstance(policy, PolicyParams):
        if greedy:
            return act_greedy(policy, features)
        return act(policy, features, rng)[0]
    return policy(features)


def run_episode(
    policy: PolicyLike,
    level: GridLevel,
    env_cfg: EnvConfig,
    greedy: bool = True,
    rng: np.random.Generator | None = None,
) -> tuple[bool, float]:
    """One evaluation episode; returns (reached goal, undiscounted return)."""
    state, obs = genv.reset(level, env_cfg)
    total = 0.0
    while not state.done:
        features = genv.encode_observation(obs)
        action = _select_action(policy, features, greedy, rng)
        state, obs, reward, _ = genv.step(state, action, level, env_cfg)
        total += reward
    return state.agent_pos == level.goal, total


def solved_rate(
    policy: PolicyLike,
    level: GridLevel,
    n_episodes: int,
    env_cfg: EnvConfig,
    greedy: bool = True,
    rng: np.random.Generator | None = None,
) -> float:
    """Fraction of evaluation episodes that reach the goal."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    solved = sum(run_episode(policy, level, env_cfg, greedy, rng)[0] for _ in range(n_episodes))
    return solved / n_episodes


def min_max_normalize(scores, lo: float, hi: float) -> np.ndarray:
    """(s - lo) / (hi - lo), clipped into [0, 1]."""
    if hi <= lo:
        raise ValueError("hi must exceed lo")
    scores = np.asarray(scores, dtype=np.float64)
    return np.clip((scores - lo) / (hi - lo), 0.0, 1.0)


def iqm(scores) -> float:
    """Interquartile mean: drop floor(n/4) scores from each end of the
    sorted list, average the rest."""
    scores = np.sort(np.asarray(scores, dtype=np.float64))
    n = len(scores)
    if n < 4:
        raise ValueError("iqm needs at least 4 scores")
    k = n // 4
    return float(scores[k : n - k].mean())


def optimality_gap(normalized_scores, target: float = 1.0) -> float:
    """Mean shortfall below the target score (never negative)."""
    scores = np.asarray(normalized_scores, dtype=np.float64)
    return float(np.maximum(target - scores, 0.0).mean())


def evaluate_policy(
    policy: PolicyLike,
    suite: dict[str, GridLevel],
    n_episodes: int,
    env_cfg: EnvConfig,
    seed: int = 0,
    greedy: bool = True,
) -> RunRecord:
    """Zero-shot pass over a suite: solved rate and mean return per level.

    Deterministic given the seed; never mutates the policy.
    """
    rates: dict[str, float] = {}
    returns: dict[str, float] = {}
    for name, level in suite.items():
        rng = np.random.default_rng(np.random.SeedSequence([seed, len(rates)]))
        outcomes = [run_episode(policy, level, env_cfg, greedy, rng) for _ in range(n_episodes)]
        rates[name] = sum(o[0] for o in outcomes) / n_episodes
        returns[name] = float(np.mean([o[1] for o in outcomes]))
    return RunRecord(seed=seed, solved_rates=rates, mean_returns=returns)


def aggregate_runs(
    strategy: str,
    records: list[RunRecord],
    lo: float = 0.0,
    hi: float = 1.0,
) -> AggregateReport:
    """Pool normalized per-level solved rates across runs into IQM and
    optimality gap, plus per-level medians and interquartile ranges."""
    if not records:
        raise ValueError("no run records")
    levels = list(records[0].solved_rates)
    pooled = min_max_normalize(
        [r.solved_rates[name] for r in records for name in levels], lo, hi
    )
    med: dict[str, float] = {}
    iqr: dict[str, tuple[float, float]] = {}
    for name in levels:
        vals = min_max_normalize([r.solved_rates[name] for r in records], lo, hi)
        med[name] = float(np.median(vals))
        iqr[name] = (float(np.percentile(vals, 25)), float(np.percentile(vals, 75)))
    return AggregateReport(
        strategy=strategy,
        n_runs=len(records),
        iqm=iqm(pooled),
        optimality_gap=optimality_gap(pooled),
        per_level_median=med,
        per_level_iqr=iqr,
        normalization=(lo, hi),
    )
