"""Level generators and the ASCII level format.

``random_level`` is the uniform generator behind domain randomization and
every replay teacher's candidate stream; ``mutate_level`` is the local search
primitive used by the adversarial (minimax) teacher. Both are pure functions
of an explicit numpy Generator, so parallel workers just take independent
streams.

ASCII format, one row per line after a heading header::

    dir: east
    #...#
    .S.G.
    .....

'#' wall, '.' empty, 'S' start, 'G' goal. The border is implicit and not
written. Round-tripping through serialize/parse is lossless.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .env import DIR_NAMES, GridLevel, validate_level


class LevelParseError(ValueError):
    """Malformed ASCII level, with a line/column diagnostic."""


@dataclass(frozen=True)
class GeneratorConfig:
    """Wall budget and grid scale for the uniform generator."""

    block_budget: int = 15
    width: int = 9
    height: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2")
        if not 0 <= self.block_budget <= self.width * self.height - 2:
            raise ValueError(
                f"block_budget must lie in [0, {self.width * self.height - 2}] "
                f"for a {self.width}x{self.height} grid"
            )


def random_level(config: GeneratorConfig, rng: np.random.Generator) -> GridLevel:
    """Draw a level uniformly: wall count uniform in [0, budget], then walls,
    start, goal and heading placed uniformly without replacement.

    Randomizing the wall count (rather than always spending the budget)
    keeps sparse and dense mazes both in support.
    """
    n_cells = config.width * config.height
    if n_cells < 2:
        raise ValueError("grid too small to place start and goal")
    b = int(rng.integers(0, config.block_budget + 1))
    picks = rng.choice(n_cells, size=b + 2, replace=False)
    cells = [(int(i % config.width), int(i // config.width)) for i in picks]
    walls, start, goal = frozenset(cells[:b]), cells[b], cells[b + 1]
    level = GridLevel(
        width=config.width,
        height=config.height,
        walls=walls,
        start=start,
        start_dir=int(rng.integers(0, 4)),
        goal=goal,
    )
    validate_level(level)
    return level


def mutate_level(level: GridLevel, rng: np.random.Generator) -> GridLevel:
    """Apply exactly one edit: toggle a wall cell, relocate the start, or
    relocate the goal. The result always satisfies level invariants; if the
    drawn edit has no legal target the choice is redrawn.
    """
    for _ in range(32):
        kind = int(rng.integers(0, 3))
        if kind == 0:
            # Any cell but the start/goal can flip between wall and empty.
            candidates = [
                (x, y)
                for y in range(level.height)
                for x in range(level.width)
                if (x, y) != level.start and (x, y) != level.goal
            ]
        else:
            # Relocation targets: free cells other than the current pair.
            candidates = [
                (x, y)
                for y in range(level.height)
                for x in range(level.width)
                if (x, y) not in level.walls and (x, y) not in (level.start, level.goal)
            ]
        if not candidates:
            continue
        cell = candidates[int(rng.integers(0, len(candidates)))]
        if kind == 0:
            walls = set(level.walls)
            walls.symmetric_difference_update([cell])
            mutated = GridLevel(level.width, level.height, frozenset(walls), level.start, level.start_dir, level.goal)
        elif kind == 1:
            mutated = GridLevel(level.width, level.height, level.walls, cell, level.start_dir, level.goal)
        else:
            mutated = GridLevel(level.width, level.height, level.walls, level.start, level.start_dir, cell)
        validate_level(mutated)
        return mutated
    raise RuntimeError("no legal mutation found")


def serialize_level(level: GridLevel) -> str:
    """Canonical ASCII form (also the identity used for deduplication)."""
    rows = []
    for y in range(level.height):
        row = []
        for x in range(level.width):
            cell = (x, y)
            if cell == level.start:
                row.append("S")
            elif cell == level.goal:
                row.append("G")
            elif cell in level.walls:
                row.append("#")
            else:
                row.append(".")
        rows.append("".join(row))
    return f"dir: {DIR_NAMES[level.start_dir]}\n" + "\n".join(rows) + "\n"


def parse_level(text: str) -> GridLevel:
    """Parse the ASCII format; malformed input raises LevelParseError."""
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise LevelParseError("empty level text")
    header = lines[0].strip()
    if not header.startswith("dir:"):
        raise LevelParseError("line 1: expected 'dir: <heading>' header")
    heading = header[len("dir:") :].strip()
    if heading not in DIR_NAMES:
        raise LevelParseError(f"line 1: unknown heading {heading!r}")
    rows = lines[1:]
    if not rows:
        raise LevelParseError("no grid rows after the header")

    width = len(rows[0])
    walls: set[tuple[int, int]] = set()
    start = goal = None
    for y, row in enumerate(rows):
        if len(row) != width:
            raise LevelParseError(f"line {y + 2}: ragged row ({len(row)} chars, expected {width})")
        for x, glyph in enumerate(row):
            if glyph == "#":
                walls.add((x, y))
            elif glyph == "S":
                if start is not None:
                    raise LevelParseError(f"line {y + 2}, col {x + 1}: duplicate 'S'")
                start = (x, y)
            elif glyph == "G":
                if goal is not None:
                    raise LevelParseError(f"line {y + 2}, col {x + 1}: duplicate 'G'")
                goal = (x, y)
            elif glyph != ".":
                raise LevelParseError(f"line {y + 2}, col {x + 1}: unknown glyph {glyph!r}")
    if start is None:
        raise LevelParseError("no 'S' start cell")
    if goal is None:
        raise LevelParseError("no 'G' goal cell")

    level = GridLevel(
        width=width,
        height=len(rows),
        walls=frozenset(walls),
        start=start,
        start_dir=DIR_NAMES.index(heading),
        goal=goal,
    )
    try:
        validate_level(level)
    except ValueError as exc:
        raise LevelParseError(str(exc)) from exc
    return level


def level_id(level: GridLevel) -> str:
    """Short stable identifier derived from the canonical serialization."""
    return hashlib.sha1(serialize_level(level).encode()).hexdigest()[:12]
