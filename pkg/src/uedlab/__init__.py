"""Desk-scale unsupervised environment design lab.

A gridworld student trained with PPO under five curriculum teachers
(domain randomization, minimax search, regret-prioritized replay, and
diversity-prioritized replay with or without regret), where diversity is
the exact Wasserstein distance between levels' occupancy samples.
"""

from .agent import GaeConfig, PolicyParams, PpoConfig, TrajectoryBatch
from .curriculum import LevelBuffer, RngStreams, TeacherConfig, run_training
from .env import EnvConfig, GridLevel
from .evaluation import builtin_suite, evaluate_policy, iqm, optimality_gap
from .harness import ExperimentConfig, load_checkpoint, resolve_config, save_checkpoint
from .levelgen import GeneratorConfig, parse_level, serialize_level
from .ot import OtConfig, SampleSet, emd, level_distance, sinkhorn
from .seeding import seed_streams

__version__ = "0.1.0"

__all__ = [
    "EnvConfig",
    "ExperimentConfig",
    "GaeConfig",
    "GeneratorConfig",
    "GridLevel",
    "LevelBuffer",
    "OtConfig",
    "PolicyParams",
    "PpoConfig",
    "RngStreams",
    "SampleSet",
    "TeacherConfig",
    "TrajectoryBatch",
    "builtin_suite",
    "emd",
    "evaluate_policy",
    "iqm",
    "level_distance",
    "load_checkpoint",
    "optimality_gap",
    "parse_level",
    "resolve_config",
    "run_training",
    "save_checkpoint",
    "seed_streams",
    "serialize_level",
    "sinkhorn",
    "__version__",
]
