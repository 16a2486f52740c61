"""The teacher layer: level buffer, replay prioritization, training loop.

Five strategies share one loop:

* ``dr``        -- train on a fresh uniform level every update, no buffer.
* ``minimax``   -- generate-and-mutate search for the lowest-return level,
                   train on the winner, no buffer.
* ``plr``       -- buffer replay prioritized by regret rank (+ staleness).
* ``diplr_minus`` -- replay prioritized purely by diversity rank: each
                   buffered level's minimum transport distance to the rest.
* ``diplr``     -- convex mix of the two rankings, weight ``rho``.

Buffered strategies apply policy gradients only on replayed levels; freshly
generated candidates are rolled out with a scoring-only (stop-gradient)
batch, scored, and inserted when they beat the weakest buffer member.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Callable

import numpy as np
from scipy.stats import rankdata

from .agent import (
    GaeConfig,
    PolicyParams,
    PpoConfig,
    TrajectoryBatch,
    collect_trajectories,
    occupancy_samples,
    positive_value_loss,
    ppo_update,
)
from .env import EnvConfig, GridLevel
from .levelgen import GeneratorConfig, level_id, mutate_level, random_level
from .ot import OtConfig, SampleSet, level_distance

STRATEGIES = ("dr", "minimax", "plr", "diplr_minus", "diplr")
BUFFERED_STRATEGIES = ("plr", "diplr_minus", "diplr")


@dataclass
class TeacherConfig:
    strategy: str = "diplr"
    rho: float = 0.5
    beta: float = 1.0
    staleness_coef: float = 0.1
    replay_threshold: float = 0.5
    buffer_size: int = 32
    minimax_search_budget: int = 4
    scoring_episodes: int = 4
    refresh_every: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 <= self.staleness_coef < 1.0:
            raise ValueError("staleness_coef must lie in [0, 1)")
        if not 0.0 <= self.replay_threshold <= 1.0:
            raise ValueError("replay_threshold must lie in [0, 1]")
        if self.buffer_size < 2:
            raise ValueError("buffer_size must be >= 2")
        if self.minimax_search_budget < 1:
            raise ValueError("minimax_search_budget must be >= 1")
        if self.scoring_episodes < 1:
            raise ValueError("scoring_episodes must be >= 1")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")


def effective_rho(cfg: TeacherConfig) -> float:
    """plr is the rho=0 endpoint, diplr_minus the rho=1 endpoint."""
    if cfg.strategy == "plr":
        return 0.0
    if cfg.strategy == "diplr_minus":
        return 1.0
    return cfg.rho


@dataclass
class BufferEntry:
    level: GridLevel
    level_id: str
    regret_score: float
    distance_score: float
    samples: SampleSet
    last_scored_at: int = 0
    episode_count: int = 0


class LevelBuffer:
    """Capacity-bounded store of scored levels plus their pairwise distances.

    The (n, n) distance matrix is kept in lockstep with the entry list so
    leave-one-out distance scores are always a row minimum away.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[BufferEntry] = []
        self.distances = np.zeros((0, 0))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, lid: str) -> bool:
        return any(e.level_id == lid for e in self.entries)

    def append(self, entry: BufferEntry, dvec: np.ndarray) -> None:
        n = len(self.entries)
        if len(dvec) != n:
            raise ValueError("dvec must hold one distance per existing entry")
        grown = np.zeros((n + 1, n + 1))
        grown[:n, :n] = self.distances
        grown[n, :n] = dvec
        grown[:n, n] = dvec
        self.distances = grown
        self.entries.append(entry)
        self.refresh_distance_scores()

    def remove(self, index: int) -> BufferEntry:
        entry = self.entries.pop(index)
        self.distances = np.delete(np.delete(self.distances, index, 0), index, 1)
        return entry

    def refresh_distance_scores(self) -> None:
        n = len(self.entries)
        for i, entry in enumerate(self.entries):
            if n < 2:
                entry.distance_score = 0.0
            else:
                row = np.delete(self.distances[i], i)
                entry.distance_score = float(row.min())

    def update_row(self, index: int, ot_cfg: OtConfig) -> None:
        """Recompute distances between one entry and the rest of the buffer."""
        samples = self.entries[index].samples
        for j, other in enumerate(self.entries):
            if j == index:
                continue
            d = level_distance(samples, other.samples, ot_cfg)
            self.distances[index, j] = d
            self.distances[j, index] = d
        self.refresh_distance_scores()

    def recompute_all_distances(self, ot_cfg: OtConfig) -> None:
        n = len(self.entries)
        for i in range(n):
            for j in range(i + 1, n):
                d = level_distance(self.entries[i].samples, self.entries[j].samples, ot_cfg)
                self.distances[i, j] = d
                self.distances[j, i] = d
        self.refresh_distance_scores()

    def mean_pairwise_distance(self) -> float:
        n = len(self.entries)
        if n < 2:
            return 0.0
        mask = ~np.eye(n, dtype=bool)
        return float(self.distances[mask].mean())


def rank_prioritization(scores, beta: float) -> np.ndarray:
    """Rank-power sampling weights: rank 1 is the largest score and gets the
    most mass, P_i proportional to rank_i ** -beta. Ties share the average
    of their tied ranks, so equal scores always get equal probability.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("scores must be non-empty")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if beta <= 0:
        raise ValueError("beta must be positive")
    ranks = rankdata(-scores, method="average")
    weights = ranks ** (-beta)
    return weights / weights.sum()


def staleness_weights(buffer: LevelBuffer, now: int) -> np.ndarray:
    """Normalized age since each entry was last scored; uniform when fresh."""
    ages = np.array([max(now - e.last_scored_at, 0) for e in buffer.entries], dtype=np.float64)
    if len(ages) == 0:
        raise ValueError("buffer is empty")
    total = ages.sum()
    if total == 0.0:
        return np.full(len(ages), 1.0 / len(ages))
    return ages / total


def replay_distribution(
    buffer: LevelBuffer,
    cfg: TeacherConfig,
    now: int,
    extra: BufferEntry | None = None,
) -> np.ndarray:
    """Sampling distribution over buffer entries (optionally plus a
    candidate appended at the end): rho-weighted mix of diversity-rank and
    regret-rank vectors, blended with staleness weights.
    """
    entries = buffer.entries + ([extra] if extra is not None else [])
    if not entries:
        raise ValueError("buffer is empty")
    regrets = [e.regret_score for e in entries]
    distances = [e.distance_score for e in entries]
    rho = effective_rho(cfg)
    p_score = rho * rank_prioritization(distances, cfg.beta) + (1.0 - rho) * rank_prioritization(
        regrets, cfg.beta
    )
    if cfg.staleness_coef == 0.0:
        return p_score
    ages = np.array([max(now - e.last_scored_at, 0) for e in entries], dtype=np.float64)
    stale = ages / ages.sum() if ages.sum() > 0 else np.full(len(ages), 1.0 / len(ages))
    return (1.0 - cfg.staleness_coef) * p_score + cfg.staleness_coef * stale


def distances_to_entries(
    candidate: SampleSet,
    buffer: LevelBuffer,
    ot_cfg: OtConfig,
    exclude: int | None = None,
) -> np.ndarray:
    out = []
    for i, entry in enumerate(buffer.entries):
        if i == exclude:
            continue
        out.append(level_distance(candidate, entry.samples, ot_cfg))
    return np.array(out)


def distance_to_buffer(
    candidate: SampleSet,
    buffer: LevelBuffer,
    ot_cfg: OtConfig,
    exclude: int | None = None,
) -> float:
    """Minimum transport distance from a candidate's occupancy samples to
    any (remaining) buffer entry."""
    dvec = distances_to_entries(candidate, buffer, ot_cfg, exclude)
    if len(dvec) == 0:
        raise ValueError("no buffer entries to compare against")
    return float(dvec.min())


def try_insert(
    buffer: LevelBuffer,
    entry: BufferEntry,
    cfg: TeacherConfig,
    now: int,
    dvec: np.ndarray | None = None,
    ot_cfg: OtConfig | None = None,
) -> tuple[bool, BufferEntry | None]:
    """Insert when below capacity; otherwise admit the candidate only if its
    replay probability beats the weakest in-buffer entry, which is evicted.
    Duplicate levels (by canonical serialization) are rejected outright.
    """
    if entry.level_id in buffer:
        return False, None
    if dvec is None:
        dvec = distances_to_entries(entry.samples, buffer, ot_cfg or OtConfig())
    if len(buffer) < buffer.capacity:
        buffer.append(entry, dvec)
        return True, None

    probs = replay_distribution(buffer, cfg, now, extra=entry)
    weakest = int(np.argmin(probs[:-1]))
    if probs[-1] <= probs[:-1].min():
        return False, None
    evicted = buffer.remove(weakest)
    buffer.append(entry, np.delete(dvec, weakest))
    return True, evicted


def refresh_trajectory_buffer(
    buffer: LevelBuffer,
    policy: PolicyParams,
    env_cfg: EnvConfig,
    gae_cfg: GaeConfig,
    ot_cfg: OtConfig,
    n_episodes: int,
    rng: np.random.Generator,
    now: int,
) -> LevelBuffer:
    """Regenerate every entry's occupancy samples under the current policy
    (stop-gradient rollouts) and recompute all pairwise distances."""
    for entry in buffer.entries:
        batch = collect_trajectories(
            policy, entry.level, env_cfg, gae_cfg, rng, n_episodes=n_episodes, update_policy=False
        )
        entry.samples = occupancy_samples(batch)
        entry.episode_count += batch.n_episodes
        entry.last_scored_at = now
    buffer.recompute_all_distances(ot_cfg)
    return buffer


def minimax_search(
    policy: PolicyParams,
    teacher: TeacherConfig,
    gen_cfg: GeneratorConfig,
    env_cfg: EnvConfig,
    gae_cfg: GaeConfig,
    gen_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
) -> tuple[GridLevel, list[float]]:
    """Generate-and-mutate search for the level minimizing the student's
    mean return. Returns the winner and every candidate's mean return."""
    best = random_level(gen_cfg, gen_rng)
    if teacher.minimax_search_budget == 1:
        return best, []

    best_return = np.inf
    returns: list[float] = []
    candidate = best
    for k in range(teacher.minimax_search_budget):
        if k > 0:
            candidate = (
                mutate_level(best, gen_rng)
                if gen_rng.random() < 0.5
                else random_level(gen_cfg, gen_rng)
            )
        batch = collect_trajectories(
            policy, candidate, env_cfg, gae_cfg, rollout_rng,
            n_episodes=teacher.scoring_episodes, update_policy=False,
        )
        mean_return = float(batch.episode_returns().mean())
        returns.append(mean_return)
        if mean_return < best_return:
            best, best_return = candidate, mean_return
    return best, returns


def propose_level(
    strategy: str,
    policy: PolicyParams,
    buffer: LevelBuffer | None,
    teacher: TeacherConfig,
    gen_cfg: GeneratorConfig,
    env_cfg: EnvConfig,
    gae_cfg: GaeConfig,
    gen_rng: np.random.Generator,
    rollout_rng: np.random.Generator,
) -> GridLevel:
    """A new candidate level according to the teacher strategy."""
    if strategy == "minimax":
        level, _ = minimax_search(policy, teacher, gen_cfg, env_cfg, gae_cfg, gen_rng, rollout_rng)
        return level
    return random_level(gen_cfg, gen_rng)


def _to_builtin(value):
    if isinstance(value, dict):
        return {k: _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _buffer_stats(buffer: LevelBuffer) -> dict:
    regrets = np.array([e.regret_score for e in buffer.entries])
    distances = np.array([e.distance_score for e in buffer.entries])
    return {
        "size": len(buffer),
        "mean_regret": float(regrets.mean()),
        "max_regret": float(regrets.max()),
        "mean_distance": float(distances.mean()),
        "max_distance": float(distances.max()),
        "mean_pairwise_distance": buffer.mean_pairwise_distance(),
    }


@dataclass
class RngStreams:
    """Named generator handles; see seeding.seed_streams."""

    levelgen: np.random.Generator
    rollout: np.random.Generator
    ppo: np.random.Generator
    teacher: np.random.Generator


def run_training(
    teacher: TeacherConfig,
    env_cfg: EnvConfig,
    gen_cfg: GeneratorConfig,
    ppo_cfg: PpoConfig,
    gae_cfg: GaeConfig,
    ot_cfg: OtConfig,
    total_updates: int,
    streams: RngStreams,
    policy_hidden: tuple[int, ...] = (64, 64),
    log_file: IO[str] | None = None,
    on_update: Callable[[int, PolicyParams, dict, LevelBuffer | None], None] | None = None,
    initial_policy: PolicyParams | None = None,
) -> tuple[PolicyParams, list[dict]]:
    """Run the full teacher-student loop; one JSONL record per update.

    Buffered strategies follow: seed the buffer with generated levels and
    score them; each update either generates and scores a fresh candidate
    (no gradients) or replays a buffered level and updates the policy;
    occupancy samples and distances are refreshed every ``refresh_every``
    updates; candidates enter the buffer when they out-rank its weakest
    member. Gradients never flow from freshly generated levels.
    """
    if total_updates < 1:
        raise ValueError("total_updates must be >= 1")
    policy = initial_policy or PolicyParams.init(
        env_cfg.feature_dim, streams.ppo, hidden=policy_hidden
    )

    buffer: LevelBuffer | None = None
    if teacher.strategy in BUFFERED_STRATEGIES:
        buffer = LevelBuffer(teacher.buffer_size)
        while len(buffer) < teacher.buffer_size:
            level = random_level(gen_cfg, streams.levelgen)
            lid = level_id(level)
            if lid in buffer:
                continue
            batch = collect_trajectories(
                policy, level, env_cfg, gae_cfg, streams.rollout,
                n_episodes=teacher.scoring_episodes, update_policy=False,
            )
            entry = BufferEntry(
                level=level,
                level_id=lid,
                regret_score=positive_value_loss(batch, gae_cfg),
                distance_score=0.0,
                samples=occupancy_samples(batch),
                last_scored_at=0,
                episode_count=batch.n_episodes,
            )
            buffer.append(entry, distances_to_entries(entry.samples, buffer, ot_cfg))

    records: list[dict] = []
    for update in range(1, total_updates + 1):
        if teacher.strategy == "dr":
            record = _plain_update(
                random_level(gen_cfg, streams.levelgen),
                policy, env_cfg, ppo_cfg, gae_cfg, streams,
            )
            policy = record.pop("_policy")
        elif teacher.strategy == "minimax":
            level, _ = minimax_search(
                policy, teacher, gen_cfg, env_cfg, gae_cfg, streams.levelgen, streams.rollout
            )
            record = _plain_update(level, policy, env_cfg, ppo_cfg, gae_cfg, streams)
            policy = record.pop("_policy")
        else:
            policy, record = _buffered_update(
                update, policy, buffer, teacher, env_cfg, gen_cfg, ppo_cfg, gae_cfg, ot_cfg, streams
            )

        record["update"] = update
        record = _to_builtin(record)
        records.append(record)
        if log_file is not None:
            log_file.write(json.dumps(record, sort_keys=True) + "\n")
            log_file.flush()
        if on_update is not None:
            on_update(update, policy, record, buffer)

    return policy, records


def _plain_update(level, policy, env_cfg, ppo_cfg, gae_cfg, streams):
    """Unbuffered teachers (dr, minimax): train directly on the new level."""
    batch = collect_trajectories(
        policy, level, env_cfg, gae_cfg, streams.rollout,
        min_steps=ppo_cfg.rollout_steps, update_policy=True,
    )
    policy, loss = ppo_update(policy, batch, ppo_cfg, gae_cfg, streams.ppo)
    return {
        "_policy": policy,
        "branch": "generate",
        "trained": True,
        "level_id": level_id(level),
        "regret": positive_value_loss(batch, gae_cfg),
        "distance": None,
        "episode_return_mean": float(batch.episode_returns().mean()),
        "episodes": batch.n_episodes,
        "steps": batch.n_steps,
        "loss": loss,
        "buffer": None,
    }


def _buffered_update(
    update, policy, buffer, teacher, env_cfg, gen_cfg, ppo_cfg, gae_cfg, ot_cfg, streams
):
    eps = float(streams.teacher.random())
    candidate = None
    if eps >= teacher.replay_threshold:
        # Explore: generate and score with stop-gradient rollouts.
        level = random_level(gen_cfg, streams.levelgen)
        batch = collect_trajectories(
            policy, level, env_cfg, gae_cfg, streams.rollout,
            n_episodes=teacher.scoring_episodes, update_policy=False,
        )
        candidate = BufferEntry(
            level=level,
            level_id=level_id(level),
            regret_score=positive_value_loss(batch, gae_cfg),
            distance_score=0.0,
            samples=occupancy_samples(batch),
            last_scored_at=update,
            episode_count=batch.n_episodes,
        )
        branch, trained, loss = "generate", False, None
        chosen_id = candidate.level_id
        chosen_index = None
    else:
        # Replay: sample by priority, train, re-score the entry.
        probs = replay_distribution(buffer, teacher, update)
        chosen_index = int(streams.teacher.choice(len(buffer), p=probs))
        entry = buffer.entries[chosen_index]
        batch = collect_trajectories(
            policy, entry.level, env_cfg, gae_cfg, streams.rollout,
            min_steps=ppo_cfg.rollout_steps, update_policy=True,
        )
        policy, loss = ppo_update(policy, batch, ppo_cfg, gae_cfg, streams.ppo)
        entry.regret_score = positive_value_loss(batch, gae_cfg)
        entry.samples = occupancy_samples(batch)
        entry.last_scored_at = update
        entry.episode_count += batch.n_episodes
        branch, trained = "replay", True
        chosen_id = entry.level_id

    refreshed = update % teacher.refresh_every == 0
    if refreshed:
        refresh_trajectory_buffer(
            buffer, policy, env_cfg, gae_cfg, ot_cfg,
            teacher.scoring_episodes, streams.rollout, update,
        )
    elif chosen_index is not None:
        buffer.update_row(chosen_index, ot_cfg)

    inserted = evicted_id = None
    if candidate is not None:
        dvec = distances_to_entries(candidate.samples, buffer, ot_cfg)
        candidate.distance_score = float(dvec.min()) if len(dvec) else 0.0
        inserted, evicted = try_insert(buffer, candidate, teacher, update, dvec=dvec)
        evicted_id = evicted.level_id if evicted else None

    record = {
        "branch": branch,
        "trained": trained,
        "level_id": chosen_id,
        "regret": candidate.regret_score if candidate else buffer.entries[chosen_index].regret_score,
        "distance": candidate.distance_score if candidate else buffer.entries[chosen_index].distance_score,
        "episode_return_mean": float(batch.episode_returns().mean()),
        "episodes": batch.n_episodes,
        "steps": batch.n_steps,
        "loss": loss,
        "inserted": inserted,
        "evicted": evicted_id,
        "refreshed": refreshed,
        "buffer": _buffer_stats(buffer),
    }
    return policy, record
