"""Deterministic derivation of independent random streams from one seed.

Stream names are hashed with crc32 (stable across processes, unlike
Python's salted hash) and folded into a SeedSequence spawn key, so each
subsystem draws from its own generator and consuming one stream can never
perturb another.
"""

from __future__ import annotations

import zlib

import numpy as np

from .curriculum import RngStreams

STREAM_NAMES = ("levelgen", "rollout", "ppo", "teacher")


def derive_seed(master_seed: int, name: str) -> int:
    """Stable 64-bit sub-seed for a named stream."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(master_seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(zlib.crc32(name.encode()),))
    return np.random.default_rng(ss)


def seed_streams(master_seed: int) -> RngStreams:
    """Independent generators for level generation, rollouts, PPO (init +
    minibatch shuffles) and teacher decisions (replay coin, level choice)."""
    return RngStreams(
        levelgen=stream(master_seed, "levelgen"),
        rollout=stream(master_seed, "rollout"),
        ppo=stream(master_seed, "ppo"),
        teacher=stream(master_seed, "teacher"),
    )


def subsample_seed(master_seed: int) -> int:
    """Base seed for the transport-distance subsampler (see ot.OtConfig)."""
    return derive_seed(master_seed, "subsample") % (2**31)
