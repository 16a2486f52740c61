"""Configuration, checkpoints, manifests and run-directory plumbing.

Experiments are described by a flat INI file with one section per
sub-config; every field has a default except total_updates (and output_dir
for training). CLI overrides address fields by bare name, which works
because names are unique across sections. The fully resolved config is
echoed into the run manifest so a finished run directory is sufficient to
reproduce itself.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import GaeConfig, PolicyParams, PpoConfig
from .curriculum import LevelBuffer, TeacherConfig
from .env import EnvConfig
from .levelgen import GeneratorConfig, serialize_level
from .ot import OtConfig
from .seeding import subsample_seed

ARTIFACT_VERSION = "0.1.0"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid or missing configuration, naming the offending field."""


@dataclass
class EvalConfig:
    suite: str = "builtin"
    eval_episodes: int = 10
    normalize_lo: float = 0.0
    normalize_hi: float = 1.0
    greedy: bool = True

    def __post_init__(self):
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        if self.normalize_hi <= self.normalize_lo:
            raise ValueError("normalize_hi must exceed normalize_lo")


@dataclass
class ExperimentConfig:
    total_updates: int
    output_dir: str | None = None
    seed: int = 0
    eval_every: int = 0
    policy_hidden: tuple[int, ...] = (64, 64)
    block_budget: int = 15
    env: EnvConfig = field(default_factory=EnvConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    gae: GaeConfig = field(default_factory=GaeConfig)
    ot: OtConfig = field(default_factory=OtConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.total_updates < 1:
            raise ConfigError("experiment.total_updates must be >= 1")
        if self.eval_every < 0:
            raise ConfigError("experiment.eval_every must be >= 0")
        if not self.policy_hidden:
            raise ConfigError("experiment.policy_hidden must name at least one layer")

    @property
    def generator(self) -> GeneratorConfig:
        """Level generator at the experiment's grid scale."""
        return GeneratorConfig(
            block_budget=self.block_budget,
            width=self.env.width,
            height=self.env.height,
            seed=self.seed,
        )

    def resolved_ot(self) -> OtConfig:
        """OtConfig with the subsample seed derived from the master seed."""
        return OtConfig(
            max_samples=self.ot.max_samples,
            size_cap=self.ot.size_cap,
            subsample_seed=subsample_seed(self.seed),
        )


# section name -> (dataclass type or None for experiment-level scalars)
_SECTIONS = {
    "experiment": None,
    "env": EnvConfig,
    "generator": None,
    "teacher": TeacherConfig,
    "ppo": PpoConfig,
    "gae": GaeConfig,
    "ot": OtConfig,
    "eval": EvalConfig,
}
_EXPERIMENT_FIELDS = ("total_updates", "output_dir", "seed", "eval_every", "policy_hidden")
_GENERATOR_FIELDS = ("block_budget",)


def _field_types() -> dict[str, tuple[str, type]]:
    """field name -> (section, declared type); names are globally unique."""
    table: dict[str, tuple[str, type]] = {}

    def add(name, section, ftype):
        if name in table:
            raise AssertionError(f"duplicate config field {name}")
        table[name] = (section, ftype)

    for name in _EXPERIMENT_FIELDS:
        ftype = {"total_updates": int, "output_dir": str, "seed": int, "eval_every": int}.get(
            name, tuple
        )
        add(name, "experiment", ftype)
    add("block_budget", "generator", int)
    for section, cls in _SECTIONS.items():
        if cls is None:
            continue
        for f in dataclasses.fields(cls):
            if section == "ot" and f.name == "subsample_seed":
                continue  # derived from the master seed
            add(f.name, section, f.type if isinstance(f.type, type) else type(f.default))
    return table


FIELD_TABLE = _field_types()


def _coerce(name: str, raw: str, ftype: type):
    raw = raw.strip()
    try:
        if ftype is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is tuple:
            return tuple(int(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {ftype.__name__}") from exc


def resolve_config(
    config_path: str | Path | None = None,
    overrides: dict[str, str] | None = None,
) -> ExperimentConfig:
    """Defaults -> config file -> CLI overrides, with field-level errors."""
    values: dict[str, object] = {}

    if config_path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(config_path)
        if not read:
            raise ConfigError(f"config file not found: {config_path}")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in FIELD_TABLE:
                    raise ConfigError(f"unknown field {key!r} in section [{section}]")
                expected_section, ftype = FIELD_TABLE[key]
                if expected_section != section:
                    raise ConfigError(f"field {key!r} belongs in section [{expected_section}]")
                values[key] = _coerce(key, raw, ftype)

    for key, raw in (overrides or {}).items():
        if key not in FIELD_TABLE:
            raise ConfigError(f"unknown config field {key!r}")
        values[key] = _coerce(key, str(raw), FIELD_TABLE[key][1])

    if "total_updates" not in values:
        raise ConfigError("missing required field: total_updates")

    def section_kwargs(section):
        return {k: v for k, v in values.items() if FIELD_TABLE[k][0] == section}

    try:
        return ExperimentConfig(
            total_updates=values["total_updates"],
            output_dir=values.get("output_dir"),
            seed=values.get("seed", 0),
            eval_every=values.get("eval_every", 0),
            policy_hidden=values.get("policy_hidden", (64, 64)),
            block_budget=values.get("block_budget", 15),
            env=EnvConfig(**section_kwargs("env")),
            teacher=TeacherConfig(**section_kwargs("teacher")),
            ppo=PpoConfig(**section_kwargs("ppo")),
            gae=GaeConfig(**section_kwargs("gae")),
            ot=OtConfig(**section_kwargs("ot")),
            eval=EvalConfig(**section_kwargs("eval")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_as_sections(cfg: ExperimentConfig) -> dict[str, dict]:
    """Fully resolved nested view, defaults included."""
    out = {
        "experiment": {
            "total_updates": cfg.total_updates,
            "output_dir": cfg.output_dir,
            "seed": cfg.seed,
            "eval_every": cfg.eval_every,
            "policy_hidden": list(cfg.policy_hidden),
        },
        "generator": {"block_budget": cfg.block_budget},
    }
    for section, sub in (
        ("env", cfg.env),
        ("teacher", cfg.teacher),
        ("ppo", cfg.ppo),
        ("gae", cfg.gae),
        ("ot", cfg.ot),
        ("eval", cfg.eval),
    ):
        out[section] = dataclasses.asdict(sub)
    del out["ot"]["subsample_seed"]  # derived, not configurable
    return out


def write_resolved_ini(cfg: ExperimentConfig, path: Path) -> None:
    parser = configparser.ConfigParser()
    for section, fields in config_as_sections(cfg).items():
        parser[section] = {}
        for key, value in fields.items():
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            parser[section][key] = str(value).lower() if isinstance(value, bool) else str(value)
    with open(path, "w") as fh:
        parser.write(fh)


def save_checkpoint(path: str | Path, policy: PolicyParams, env_cfg: EnvConfig) -> Path:
    """Named weight arrays plus a JSON meta header (shapes are implicit in
    the npz container, which is versioned and endian-fixed)."""
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "hidden": list(policy.hidden),
        "updates": policy.updates,
        "obs_dim": policy.obs_dim,
        "env": dataclasses.asdict(env_cfg),
    }
    np.savez(path, __meta__=np.asarray(json.dumps(meta)), **policy.arrays)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def load_checkpoint(path: str | Path) -> tuple[PolicyParams, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(str(data["__meta__"].item()))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    policy = PolicyParams(arrays, tuple(meta["hidden"]), updates=meta["updates"])
    return policy, meta


def checkpoint_env_config(meta: dict) -> EnvConfig:
    return EnvConfig(**meta["env"])


def snapshot_buffer(buffer: LevelBuffer, directory: Path) -> None:
    """ASCII level files plus a scores manifest for one buffer state."""
    directory.mkdir(parents=True, exist_ok=True)
    scores = []
    for i, entry in enumerate(buffer.entries):
        name = f"level_{i:03d}.lvl"
        (directory / name).write_text(serialize_level(entry.level))
        scores.append(
            {
                "file": name,
                "level_id": entry.level_id,
                "regret": entry.regret_score,
                "distance": entry.distance_score,
                "last_scored_at": entry.last_scored_at,
                "episode_count": entry.episode_count,
            }
        )
    (directory / "scores.json").write_text(json.dumps(scores, indent=2, sort_keys=True))


def write_manifest(
    run_dir: Path,
    cfg: ExperimentConfig,
    overrides: dict[str, str],
    status: str,
    checkpoints: list[str],
    started_at: float,
    ended_at: float | None = None,
) -> None:
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "config": config_as_sections(cfg),
        "overrides": overrides,
        "status": status,
        "checkpoints": checkpoints,
        "started_at": started_at,
        "ended_at": ended_at,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_manifest(run_dir: str | Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest in {run_dir}")
    return json.loads(path.read_text())


def manifest_env_config(manifest: dict) -> EnvConfig:
    return EnvConfig(**manifest["config"]["env"])


def now() -> float:
    return time.time()
