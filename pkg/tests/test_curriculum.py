"""Teacher layer: prioritization math, buffer dynamics, training loop."""

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uedlab.agent import GaeConfig, PolicyParams, PpoConfig
from uedlab.curriculum import (
    BufferEntry,
    LevelBuffer,
    TeacherConfig,
    distance_to_buffer,
    distances_to_entries,
    minimax_search,
    propose_level,
    rank_prioritization,
    refresh_trajectory_buffer,
    replay_distribution,
    run_training,
    staleness_weights,
    try_insert,
)
from uedlab.env import EnvConfig
from uedlab.levelgen import GeneratorConfig, level_id, random_level
from uedlab.ot import OtConfig, SampleSet, level_distance
from uedlab.seeding import seed_streams

ENV = EnvConfig(max_steps=20, view_size=3, width=5, height=5)
GEN = GeneratorConfig(block_budget=4, width=5, height=5)
GAE = GaeConfig(gamma=0.99, lam=0.95)
PPO = PpoConfig(rollout_steps=40, minibatch_size=32, epochs=2)
OT = OtConfig(max_samples=16)


def make_entry(rng, regret=None, distance=None, n_points=6, dim=3, scored_at=0):
    """Synthetic entry; the level is a random one, samples a small cloud."""
    level = random_level(GEN, rng)
    return BufferEntry(
        level=level,
        level_id=level_id(level),
        regret_score=float(rng.random()) if regret is None else regret,
        distance_score=float(rng.random()) if distance is None else distance,
        samples=SampleSet.uniform(rng.random((n_points, dim))),
        last_scored_at=scored_at,
    )


def filled_buffer(rng, n, capacity=None, **kwargs):
    buffer = LevelBuffer(capacity or n)
    while len(buffer) < n:
        entry = make_entry(rng, **kwargs)
        if entry.level_id in buffer:
            continue
        buffer.append(entry, distances_to_entries(entry.samples, buffer, OT))
    return buffer


class TestRankPrioritization:
    def test_worked_example(self):
        # ranks (1, 2, 3) -> weights (1, 1/2, 1/3) -> [6/11, 3/11, 2/11]
        probs = rank_prioritization([3.0, 2.0, 1.0], beta=1.0)
        assert np.abs(probs - np.array([6 / 11, 3 / 11, 2 / 11])).max() < 1e-12

    def test_full_tie_is_uniform(self):
        probs = rank_prioritization([4.0, 4.0, 4.0, 4.0], beta=2.0)
        assert np.allclose(probs, 0.25, atol=1e-15)

    def test_large_beta_concentrates_on_argmax(self):
        probs = rank_prioritization([0.1, 5.0, 3.0], beta=60.0)
        assert probs.argmax() == 1
        assert probs[1] > 0.999

    def test_partial_ties_share_rank(self):
        probs = rank_prioritization([2.0, 2.0, 1.0], beta=1.0)
        assert probs[0] == pytest.approx(probs[1])
        assert probs.sum() == pytest.approx(1.0)

    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=12),
        st.sampled_from([0.5, 1.0, 3.0]),
    )
    @settings(max_examples=100, deadline=None)
    def test_invariant_under_monotone_transforms(self, scores, beta):
        base = rank_prioritization(scores, beta)
        for transform in (lambda s: 3 * s + 7, np.exp, lambda s: np.sinh(s / 50)):
            mapped_scores = transform(np.asarray(scores))
            if len(np.unique(mapped_scores)) != len(np.unique(scores)):
                continue  # float rounding collapsed a strict ordering
            mapped = rank_prioritization(mapped_scores, beta)
            assert np.allclose(base, mapped, atol=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            rank_prioritization([], 1.0)
        with pytest.raises(ValueError):
            rank_prioritization([1.0, np.nan], 1.0)
        with pytest.raises(ValueError):
            rank_prioritization([1.0], 0.0)


class TestStaleness:
    def test_all_fresh_is_uniform(self):
        buffer = filled_buffer(np.random.default_rng(0), 4, scored_at=5)
        assert np.allclose(staleness_weights(buffer, now=5), 0.25)

    def test_age_proportional(self):
        rng = np.random.default_rng(1)
        buffer = LevelBuffer(2)
        for age in (3, 1):
            entry = make_entry(rng, scored_at=10 - age)
            buffer.append(entry, distances_to_entries(entry.samples, buffer, OT))
        assert np.allclose(staleness_weights(buffer, now=10), [0.75, 0.25])

    def test_sums_to_one(self):
        buffer = filled_buffer(np.random.default_rng(2), 7)
        for entry, age in zip(buffer.entries, range(7)):
            entry.last_scored_at = age
        assert abs(staleness_weights(buffer, now=9).sum() - 1.0) < 1e-12


class TestReplayDistribution:
    def test_diversity_endpoint(self):
        buffer = filled_buffer(np.random.default_rng(3), 6)
        cfg = TeacherConfig(strategy="diplr", rho=1.0, staleness_coef=0.0)
        want = rank_prioritization([e.distance_score for e in buffer.entries], cfg.beta)
        got = replay_distribution(buffer, cfg, now=3)
        assert np.array_equal(got, want)

    def test_regret_endpoint(self):
        buffer = filled_buffer(np.random.default_rng(4), 6)
        cfg = TeacherConfig(strategy="diplr", rho=0.0, staleness_coef=0.0)
        want = rank_prioritization([e.regret_score for e in buffer.entries], cfg.beta)
        got = replay_distribution(buffer, cfg, now=3)
        assert np.array_equal(got, want)

    def test_strategy_plr_forces_regret_ranking(self):
        buffer = filled_buffer(np.random.default_rng(5), 5)
        plr = TeacherConfig(strategy="plr", rho=0.7, staleness_coef=0.0)
        regret_only = TeacherConfig(strategy="diplr", rho=0.0, staleness_coef=0.0)
        assert np.array_equal(
            replay_distribution(buffer, plr, 1), replay_distribution(buffer, regret_only, 1)
        )

    def test_strategy_diplr_minus_forces_diversity_ranking(self):
        buffer = filled_buffer(np.random.default_rng(6), 5)
        dm = TeacherConfig(strategy="diplr_minus", rho=0.2, staleness_coef=0.0)
        div_only = TeacherConfig(strategy="diplr", rho=1.0, staleness_coef=0.0)
        assert np.array_equal(
            replay_distribution(buffer, dm, 1), replay_distribution(buffer, div_only, 1)
        )

    def test_valid_distribution_with_staleness(self):
        buffer = filled_buffer(np.random.default_rng(7), 9)
        for i, entry in enumerate(buffer.entries):
            entry.last_scored_at = i
        cfg = TeacherConfig(rho=0.4, staleness_coef=0.3)
        probs = replay_distribution(buffer, cfg, now=12)
        assert np.all(probs >= 0)
        assert abs(probs.sum() - 1.0) < 1e-12


class TestDistanceToBuffer:
    def test_minimum_of_pairwise(self):
        rng = np.random.default_rng(8)
        buffer = filled_buffer(rng, 3)
        candidate = SampleSet.uniform(rng.random((5, 3)))
        expected = min(level_distance(candidate, e.samples, OT) for e in buffer.entries)
        assert distance_to_buffer(candidate, buffer, OT) == pytest.approx(expected)

    def test_candidate_equal_to_entry_gives_zero(self):
        rng = np.random.default_rng(9)
        buffer = filled_buffer(rng, 3)
        assert distance_to_buffer(buffer.entries[1].samples, buffer, OT) == 0.0

    def test_excluding_sole_entry_errors(self):
        rng = np.random.default_rng(10)
        buffer = filled_buffer(rng, 1, capacity=2)
        with pytest.raises(ValueError, match="no buffer entries"):
            distance_to_buffer(buffer.entries[0].samples, buffer, OT, exclude=0)

    def test_leave_one_out_scores_match_matrix(self):
        rng = np.random.default_rng(11)
        buffer = filled_buffer(rng, 5)
        for i, entry in enumerate(buffer.entries):
            loo = distance_to_buffer(entry.samples, buffer, OT, exclude=i)
            assert entry.distance_score == pytest.approx(loo, abs=1e-12)


class TestTryInsert:
    CFG = TeacherConfig(rho=0.5, staleness_coef=0.1)

    def test_fill_phase_always_inserts(self):
        rng = np.random.default_rng(12)
        buffer = LevelBuffer(4)
        for i in range(4):
            entry = make_entry(rng)
            inserted, evicted = try_insert(buffer, entry, self.CFG, now=i, ot_cfg=OT)
            assert inserted and evicted is None
        assert len(buffer) == 4

    def test_duplicate_rejected(self):
        rng = np.random.default_rng(13)
        buffer = filled_buffer(rng, 3, capacity=8)
        dup = BufferEntry(
            level=buffer.entries[0].level,
            level_id=buffer.entries[0].level_id,
            regret_score=9.9,
            distance_score=9.9,
            samples=buffer.entries[0].samples,
        )
        inserted, _ = try_insert(buffer, dup, self.CFG, now=1, ot_cfg=OT)
        assert not inserted
        assert len(buffer) == 3

    def test_strictly_worst_candidate_not_inserted(self):
        rng = np.random.default_rng(14)
        buffer = filled_buffer(rng, 4, regret=None, distance=None)
        for entry in buffer.entries:
            entry.regret_score += 10.0  # candidate is below everyone on regret
        cand = make_entry(rng, regret=0.0)
        cand.samples = buffer.entries[0].samples  # distance to buffer = 0
        cfg = TeacherConfig(rho=0.5, staleness_coef=0.0)
        dvec = distances_to_entries(cand.samples, buffer, OT)
        cand.distance_score = dvec.min()
        inserted, _ = try_insert(buffer, cand, cfg, now=1, dvec=dvec)
        assert not inserted

    def test_eviction_removes_minimum_probability_entry(self):
        rng = np.random.default_rng(15)
        cfg = TeacherConfig(rho=0.5, staleness_coef=0.0)
        buffer = filled_buffer(rng, 5)
        cand = make_entry(rng, regret=50.0)
        dvec = distances_to_entries(cand.samples, buffer, OT)
        cand.distance_score = float(dvec.min())
        probs = replay_distribution(buffer, cfg, now=2, extra=cand)
        expected_victim = buffer.entries[int(np.argmin(probs[:-1]))].level_id
        inserted, evicted = try_insert(buffer, cand, cfg, now=2, dvec=dvec)
        assert inserted
        assert evicted.level_id == expected_victim

    def test_fuzz_capacity_duplicates_and_eviction_rule(self):
        rng = np.random.default_rng(16)
        cfg = TeacherConfig(rho=0.5, staleness_coef=0.1)
        capacity = 8
        buffer = LevelBuffer(capacity)
        seen_sets = []
        for step in range(10_000):
            entry = make_entry(rng, n_points=3, dim=2)
            dvec = distances_to_entries(entry.samples, buffer, OT)
            entry.distance_score = float(dvec.min()) if len(dvec) else 0.0
            entry.last_scored_at = step
            pre_ids = [e.level_id for e in buffer.entries]
            was_full = len(buffer) == capacity
            if was_full:
                probs = replay_distribution(buffer, cfg, now=step, extra=entry)
            inserted, evicted = try_insert(buffer, entry, cfg, now=step, dvec=dvec)
            assert len(buffer) <= capacity
            ids = [e.level_id for e in buffer.entries]
            assert len(set(ids)) == len(ids)
            if evicted is not None:
                assert was_full
                victim_idx = pre_ids.index(evicted.level_id)
                assert probs[victim_idx] == pytest.approx(probs[:-1].min())
            seen_sets.append(tuple(ids))
        # the buffer actually churned
        assert len(set(seen_sets)) > 50


class TestRefresh:
    def _training_buffer(self, seed=17, n=4):
        rng = np.random.default_rng(seed)
        streams = seed_streams(seed)
        policy = PolicyParams.init(ENV.feature_dim, streams.ppo, hidden=(8,))
        buffer = LevelBuffer(n)
        from uedlab.agent import collect_trajectories, occupancy_samples, positive_value_loss

        while len(buffer) < n:
            level = random_level(GEN, rng)
            lid = level_id(level)
            if lid in buffer:
                continue
            batch = collect_trajectories(policy, level, ENV, GAE, streams.rollout, n_episodes=2)
            entry = BufferEntry(
                level=level,
                level_id=lid,
                regret_score=positive_value_loss(batch, GAE),
                distance_score=0.0,
                samples=occupancy_samples(batch),
            )
            buffer.append(entry, distances_to_entries(entry.samples, buffer, OT))
        return policy, buffer

    def test_scores_match_from_scratch_recomputation(self):
        policy, buffer = self._training_buffer()
        refresh_trajectory_buffer(buffer, policy, ENV, GAE, OT, 2, np.random.default_rng(0), now=7)
        for i, entry in enumerate(buffer.entries):
            others = [e.samples for j, e in enumerate(buffer.entries) if j != i]
            expected = min(level_distance(entry.samples, s, OT) for s in others)
            assert entry.distance_score == pytest.approx(expected, abs=1e-12)
            assert entry.last_scored_at == 7

    def test_deterministic_under_fixed_seeds(self):
        policy, b1 = self._training_buffer()
        _, b2 = self._training_buffer()
        refresh_trajectory_buffer(b1, policy, ENV, GAE, OT, 2, np.random.default_rng(5), now=3)
        refresh_trajectory_buffer(b2, policy, ENV, GAE, OT, 2, np.random.default_rng(5), now=3)
        for e1, e2 in zip(b1.entries, b2.entries):
            assert e1.distance_score == e2.distance_score
            assert np.array_equal(e1.samples.points, e2.samples.points)


class TestProposeLevel:
    def test_dr_delegates_to_random_level(self):
        cfg = TeacherConfig(strategy="dr")
        policy = PolicyParams.init(ENV.feature_dim, np.random.default_rng(0), hidden=(4,))
        for seed in range(10):
            direct = random_level(GEN, np.random.default_rng(seed))
            via = propose_level(
                "dr", policy, None, cfg, GEN, ENV, GAE,
                np.random.default_rng(seed), np.random.default_rng(1),
            )
            assert via == direct

    def test_minimax_budget_one_is_one_random_level(self):
        cfg = TeacherConfig(strategy="minimax", minimax_search_budget=1)
        policy = PolicyParams.init(ENV.feature_dim, np.random.default_rng(0), hidden=(4,))
        level, returns = minimax_search(
            policy, cfg, GEN, ENV, GAE, np.random.default_rng(3), np.random.default_rng(4)
        )
        assert returns == []
        assert level == random_level(GEN, np.random.default_rng(3))

    def test_minimax_choice_not_above_candidate_mean(self):
        cfg = TeacherConfig(strategy="minimax", minimax_search_budget=20, scoring_episodes=2)
        streams = seed_streams(21)
        policy = PolicyParams.init(ENV.feature_dim, streams.ppo, hidden=(8,))
        level, returns = minimax_search(
            policy, cfg, GEN, ENV, GAE, streams.levelgen, streams.rollout
        )
        assert len(returns) == 20
        chosen = min(returns)
        assert chosen <= np.mean(returns)


SMALL_TEACHER = dict(buffer_size=4, scoring_episodes=2, refresh_every=2)


def quick_run(strategy, seed=0, updates=6, log_file=None, **teacher_kwargs):
    kwargs = {**SMALL_TEACHER, **teacher_kwargs}
    teacher = TeacherConfig(strategy=strategy, **kwargs)
    streams = seed_streams(seed)
    return run_training(
        teacher, ENV, GEN, PPO, GAE, OT,
        total_updates=updates, streams=streams, policy_hidden=(8,), log_file=log_file,
    )


class TestRunTraining:
    def test_one_record_per_update(self):
        _, records = quick_run("diplr", updates=10)
        assert len(records) == 10
        assert [r["update"] for r in records] == list(range(1, 11))

    def test_dr_bypasses_buffer(self):
        _, records = quick_run("dr", updates=6)
        for r in records:
            assert r["buffer"] is None
            assert r["branch"] == "generate"
            assert r["trained"] is True
        assert len({r["level_id"] for r in records}) == 6

    def test_gradients_only_from_replayed_levels(self):
        _, records = quick_run("plr", seed=3, updates=30)
        for r in records:
            if r["branch"] == "generate":
                assert r["trained"] is False and r["loss"] is None
            else:
                assert r["trained"] is True and r["loss"] is not None
        assert any(r["branch"] == "replay" for r in records)
        assert any(r["branch"] == "generate" for r in records)

    def test_update_counter_tracks_replays(self):
        policy, records = quick_run("diplr", seed=4, updates=20)
        assert policy.updates == sum(r["trained"] for r in records)

    def test_log_lines_are_valid_json(self):
        sink = io.StringIO()
        _, records = quick_run("diplr_minus", seed=5, updates=8, log_file=sink)
        lines = sink.getvalue().strip().split("\n")
        assert len(lines) == 8
        for line, record in zip(lines, records):
            assert json.loads(line) == record

    @pytest.mark.parametrize("strategy", ["dr", "minimax", "plr", "diplr_minus", "diplr"])
    def test_bit_identical_logs_for_fixed_seed(self, strategy):
        sinks = [io.StringIO(), io.StringIO()]
        for sink in sinks:
            quick_run(strategy, seed=11, updates=8, log_file=sink)
        assert sinks[0].getvalue() == sinks[1].getvalue()

    def test_replay_distribution_valid_throughout(self):
        teacher = TeacherConfig(strategy="diplr", **SMALL_TEACHER)
        streams = seed_streams(6)
        probe = []

        def on_update(update, policy, record, buffer):
            probs = replay_distribution(buffer, teacher, update)
            probe.append((probs.min(), probs.sum()))

        run_training(
            teacher, ENV, GEN, PPO, GAE, OT,
            total_updates=12, streams=streams, policy_hidden=(8,), on_update=on_update,
        )
        for mn, total in probe:
            assert mn >= 0
            assert abs(total - 1.0) < 1e-12

    def test_buffer_never_exceeds_capacity(self):
        sizes = []

        def on_update(update, policy, record, buffer):
            sizes.append(len(buffer))
            ids = [e.level_id for e in buffer.entries]
            assert len(set(ids)) == len(ids)

        teacher = TeacherConfig(strategy="diplr", **SMALL_TEACHER)
        run_training(
            teacher, ENV, GEN, PPO, GAE, OT,
            total_updates=15, streams=seed_streams(7), policy_hidden=(8,), on_update=on_update,
        )
        assert max(sizes) <= SMALL_TEACHER["buffer_size"]

    def test_callback_errors_propagate(self):
        def boom(update, policy, record, buffer):
            if update == 3:
                raise RuntimeError("collapse")

        with pytest.raises(RuntimeError, match="collapse"):
            run_training(
                TeacherConfig(strategy="dr"), ENV, GEN, PPO, GAE, OT,
                total_updates=5, streams=seed_streams(8), policy_hidden=(8,), on_update=boom,
            )
