"""Deterministic partially observable gridworld.

A level is a rectangular grid of cells. Everything outside the coordinate
range acts as a wall, so no explicit border is stored. The agent occupies a
cell, faces one of four headings, and sees an egocentric V x V window with
itself at the bottom-center facing "up" the window. Reaching the goal pays
``1 - 0.9 * steps / max_steps``; every other transition pays zero.

All operations are pure: state goes in, new state comes out. This makes it
safe to run many rollouts in parallel against the same level object.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Headings, clockwise. Grid coordinates: x grows east, y grows south.
NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
DIR_NAMES = ("north", "east", "south", "west")
DIR_VECTORS = ((0, -1), (1, 0), (0, 1), (-1, 0))

# Actions.
TURN_LEFT, TURN_RIGHT, FORWARD = 0, 1, 2
N_ACTIONS = 3

# Cell contents in the observation window.
CELL_EMPTY, CELL_WALL, CELL_GOAL = 0, 1, 2


class InvalidLevelError(ValueError):
    """Raised when a level violates its structural invariants."""


@dataclass(frozen=True)
class GridLevel:
    """One environment parameterization: layout, start pose, goal cell.

    Coordinates are (x, y) with 0 <= x < width, 0 <= y < height. Cells
    outside this range are implicit walls. A level may be unsolvable; that
    is legal (generators are unconstrained).
    """

    width: int
    height: int
    walls: frozenset[tuple[int, int]]
    start: tuple[int, int]
    start_dir: int
    goal: tuple[int, int]

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_wall(self, cell: tuple[int, int]) -> bool:
        return not self.in_bounds(cell) or cell in self.walls


@dataclass(frozen=True)
class EnvState:
    agent_pos: tuple[int, int]
    agent_dir: int
    steps_taken: int
    done: bool


@dataclass
class Observation:
    """Egocentric view plus heading.

    ``view`` is a (V, V) int array of cell contents; row V-1 is the agent's
    own row, column V//2 its own column, and row 0 is farthest ahead.
    """

    view: np.ndarray
    agent_dir: int

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return self.agent_dir == other.agent_dir and np.array_equal(self.view, other.view)


@dataclass(frozen=True)
class EnvConfig:
    """Episode horizon, view size, canonical grid scale, discount."""

    max_steps: int = 100
    view_size: int = 5
    width: int = 9
    height: int = 9
    discount: float = 0.995

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.view_size < 3 or self.view_size % 2 == 0:
            raise ValueError("view_size must be odd and >= 3")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")

    @property
    def feature_dim(self) -> int:
        return self.view_size * self.view_size * 3 + 4


def validate_level(level: GridLevel) -> None:
    """Check GridLevel invariants; raise InvalidLevelError with a diagnostic."""
    if level.width < 2 or level.height < 2:
        raise InvalidLevelError(f"grid {level.width}x{level.height} too small")
    for name, cell in (("start", level.start), ("goal", level.goal)):
        if not level.in_bounds(cell):
            raise InvalidLevelError(f"{name} {cell} out of bounds for {level.width}x{level.height} grid")
    if level.start == level.goal:
        raise InvalidLevelError(f"start and goal coincide at {level.start}")
    if level.start in level.walls:
        raise InvalidLevelError(f"start {level.start} sits on a wall")
    if level.goal in level.walls:
        raise InvalidLevelError(f"goal {level.goal} sits on a wall")
    for cell in level.walls:
        if not level.in_bounds(cell):
            raise InvalidLevelError(f"wall {cell} out of bounds for {level.width}x{level.height} grid")
    if level.start_dir not in (NORTH, EAST, SOUTH, WEST):
        raise InvalidLevelError(f"bad heading {level.start_dir!r}")


@lru_cache(maxsize=256)
def _padded_grid(level: GridLevel, pad: int) -> np.ndarray:
    """Cell-content grid, indexed [y, x], padded with walls on all sides."""
    grid = np.full((level.height + 2 * pad, level.width + 2 * pad), CELL_WALL, dtype=np.int8)
    grid[pad : pad + level.height, pad : pad + level.width] = CELL_EMPTY
    for x, y in level.walls:
        grid[y + pad, x + pad] = CELL_WALL
    gx, gy = level.goal
    grid[gy + pad, gx + pad] = CELL_GOAL
    return grid


def _render_view(level: GridLevel, pos: tuple[int, int], direction: int, v: int) -> np.ndarray:
    """Egocentric V x V window; out-of-bounds cells read as walls."""
    grid = _padded_grid(level, v)
    x, y = pos[0] + v, pos[1] + v
    half = v // 2
    # Axis-aligned window around the agent, then rotate so "forward" is up.
    if direction == NORTH:
        window = grid[y - v + 1 : y + 1, x - half : x + half + 1]
    elif direction == SOUTH:
        window = grid[y : y + v, x - half : x + half + 1][::-1, ::-1]
    elif direction == EAST:
        window = grid[y - half : y + half + 1, x : x + v]
        window = np.rot90(window, k=1)
    else:  # WEST
        window = grid[y - half : y + half + 1, x - v + 1 : x + 1]
        window = np.rot90(window, k=-1)
    return np.ascontiguousarray(window)


def _observe(level: GridLevel, state: EnvState, config: EnvConfig) -> Observation:
    view = _render_view(level, state.agent_pos, state.agent_dir, config.view_size)
    return Observation(view=view, agent_dir=state.agent_dir)


def reset(level: GridLevel, config: EnvConfig) -> tuple[EnvState, Observation]:
    """Place the agent at the level's start pose."""
    validate_level(level)
    state = EnvState(agent_pos=level.start, agent_dir=level.start_dir, steps_taken=0, done=False)
    return state, _observe(level, state, config)


def step(
    state: EnvState, action: int, level: GridLevel, config: EnvConfig
) -> tuple[EnvState, Observation, float, bool]:
    """Advance one step. Walls block forward moves; turns rotate in place."""
    if state.done:
        raise RuntimeError("step() called on a finished episode")
    if action not in (TURN_LEFT, TURN_RIGHT, FORWARD):
        raise ValueError(f"unknown action {action!r}")

    pos, direction = state.agent_pos, state.agent_dir
    if action == TURN_LEFT:
        direction = (direction - 1) % 4
    elif action == TURN_RIGHT:
        direction = (direction + 1) % 4
    else:
        dx, dy = DIR_VECTORS[direction]
        target = (pos[0] + dx, pos[1] + dy)
        if not level.is_wall(target):
            pos = target

    steps = state.steps_taken + 1
    reached = pos == level.goal
    done = reached or steps >= config.max_steps
    reward = 1.0 - 0.9 * (steps / config.max_steps) if reached else 0.0

    new_state = EnvState(agent_pos=pos, agent_dir=direction, steps_taken=steps, done=done)
    return new_state, _observe(level, new_state, config), reward, done


def encode_observation(obs: Observation) -> np.ndarray:
    """Flatten to a one-hot feature vector of length V*V*3 + 4.

    One-hot per window cell over {empty, wall, goal} plus one-hot heading;
    injective on distinct observations and bounded in [0, 1], which gives
    the Euclidean ground metric downstream a meaningful scale.
    """
    cells = np.eye(3, dtype=np.float64)[obs.view.ravel()]
    heading = np.zeros(4, dtype=np.float64)
    heading[obs.agent_dir] = 1.0
    return np.concatenate([cells.ravel(), heading])


def is_solvable(level: GridLevel) -> bool:
    """Breadth-first reachability of the goal through 4-connected free cells.

    Used for test-suite construction only; training levels are never
    filtered on solvability.
    """
    validate_level(level)
    frontier = [level.start]
    seen = {level.start}
    while frontier:
        nxt = []
        for x, y in frontier:
            for dx, dy in DIR_VECTORS:
                cell = (x + dx, y + dy)
                if cell == level.goal:
                    return True
                if cell not in seen and not level.is_wall(cell):
                    seen.add(cell)
                    nxt.append(cell)
        frontier = nxt
    return False
