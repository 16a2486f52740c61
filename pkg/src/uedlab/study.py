"""Directional curriculum study: do the replay teachers beat DR at desk scale?

Trains dr / plr / diplr_minus / diplr across several seeds (separate
processes, separate run directories), evaluates each final checkpoint on
the builtin zero-shot suite, and reports three directional checks:

  (a) diplr matches or beats dr on per-seed IQM in most seed pairings;
  (b) diplr matches or beats plr in a majority of pairings;
  (c) the diversity-only teacher keeps a strictly more spread-out buffer
      (mean pairwise transport distance) than the regret-only teacher.

Runs are cached: a run directory with a complete manifest is not redone,
so an interrupted study resumes where it stopped.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import builtin_suite, evaluate_policy, iqm, min_max_normalize
from .harness import load_checkpoint, manifest_env_config, read_manifest

STUDY_STRATEGIES = ("dr", "plr", "diplr_minus", "diplr")


@dataclass
class StudyConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    total_updates: int = 2000
    buffer_size: int = 32
    block_budget: int = 15
    width: int = 9
    height: int = 9
    max_steps: int = 100
    refresh_every: int = 10  # amortized sample refresh; 1 is the faithful loop
    rho: float = 0.5
    eval_episodes: int = 10
    workers: int = 2


def _run_dir(root: Path, strategy: str, seed: int) -> Path:
    return root / f"{strategy}_seed{seed}"


def _train_command(cfg: StudyConfig, strategy: str, seed: int, out_dir: Path) -> list[str]:
    return [
        sys.executable, "-m", "uedlab.cli", "train",
        "--strategy", strategy,
        "--seed", str(seed),
        "--total-updates", str(cfg.total_updates),
        "--output-dir", str(out_dir),
        "--rho", str(cfg.rho),
        "--set", "buffer_size", str(cfg.buffer_size),
        "--set", "block_budget", str(cfg.block_budget),
        "--set", "width", str(cfg.width),
        "--set", "height", str(cfg.height),
        "--set", "max_steps", str(cfg.max_steps),
        "--set", "refresh_every", str(cfg.refresh_every),
    ]


def _is_complete(run_dir: Path) -> bool:
    try:
        return read_manifest(run_dir)["status"] == "complete"
    except (FileNotFoundError, KeyError, json.JSONDecodeError):
        return False


def run_training_grid(root: Path, cfg: StudyConfig, verbose: bool = True) -> None:
    """Train every (strategy, seed) pair, `cfg.workers` processes at a time."""
    root.mkdir(parents=True, exist_ok=True)
    pending = []
    for strategy in STUDY_STRATEGIES:
        for seed in cfg.seeds:
            out_dir = _run_dir(root, strategy, seed)
            if _is_complete(out_dir):
                if verbose:
                    print(f"[study] cached: {out_dir.name}")
                continue
            if out_dir.exists():
                for path in sorted(out_dir.rglob("*"), reverse=True):
                    path.unlink() if path.is_file() else path.rmdir()
                out_dir.rmdir()
            pending.append((strategy, seed, out_dir))

    active: list[tuple[subprocess.Popen, Path]] = []
    while pending or active:
        while pending and len(active) < cfg.workers:
            strategy, seed, out_dir = pending.pop(0)
            if verbose:
                print(f"[study] launching {out_dir.name}")
            proc = subprocess.Popen(
                _train_command(cfg, strategy, seed, out_dir),
                stdout=subprocess.DEVNULL,
                stderr=subprocess.PIPE,
            )
            active.append((proc, out_dir))
        proc, out_dir = active.pop(0)
        _, err = proc.communicate()
        if proc.returncode != 0:
            raise RuntimeError(
                f"study run {out_dir.name} failed ({proc.returncode}):\n{err.decode()[-2000:]}"
            )
        if verbose:
            print(f"[study] finished {out_dir.name}")


def _mean_buffer_diversity(run_dir: Path) -> float | None:
    """Time-average of the buffer's mean pairwise transport distance."""
    values = []
    with open(run_dir / "log.jsonl") as fh:
        for line in fh:
            record = json.loads(line)
            if record.get("buffer"):
                values.append(record["buffer"]["mean_pairwise_distance"])
    return float(np.mean(values)) if values else None


def collect_results(root: Path, cfg: StudyConfig) -> dict:
    """Evaluate final checkpoints and assemble the three directional checks."""
    suite = builtin_suite()
    per_run: dict[str, dict[str, dict]] = {}
    for strategy in STUDY_STRATEGIES:
        per_run[strategy] = {}
        for seed in cfg.seeds:
            run_dir = _run_dir(root, strategy, seed)
            manifest = read_manifest(run_dir)
            env_cfg = manifest_env_config(manifest)
            policy, _ = load_checkpoint(run_dir / "checkpoints" / "ckpt_final.npz")
            record = evaluate_policy(policy, suite, cfg.eval_episodes, env_cfg, seed=seed)
            rates = min_max_normalize(list(record.solved_rates.values()), 0.0, 1.0)
            per_run[strategy][str(seed)] = {
                "iqm": iqm(rates),
                "rates": record.solved_rates,
                "mean_buffer_pairwise": _mean_buffer_diversity(run_dir),
            }

    def iqms(strategy):
        return [per_run[strategy][str(s)]["iqm"] for s in cfg.seeds]

    a_wins = sum(d >= r for d, r in zip(iqms("diplr"), iqms("dr")))
    b_wins = sum(d >= p for d, p in zip(iqms("diplr"), iqms("plr")))
    c_dm = float(
        np.mean([per_run["diplr_minus"][str(s)]["mean_buffer_pairwise"] for s in cfg.seeds])
    )
    c_plr = float(np.mean([per_run["plr"][str(s)]["mean_buffer_pairwise"] for s in cfg.seeds]))

    n = len(cfg.seeds)
    checks = {
        "a_wins": a_wins,
        "a_needed": int(np.ceil(0.8 * n)),
        "a_pass": a_wins >= int(np.ceil(0.8 * n)),
        "b_wins": b_wins,
        "b_needed": int(np.ceil(0.6 * n)),
        "b_pass": b_wins >= int(np.ceil(0.6 * n)),
        "c_diplr_minus": c_dm,
        "c_plr": c_plr,
        "c_pass": c_dm > c_plr,
    }
    return {"config": cfg.__dict__ | {"seeds": list(cfg.seeds)}, "per_run": per_run, "checks": checks}


def run_study(root: str | Path, cfg: StudyConfig | None = None, verbose: bool = True) -> dict:
    """Train (or reuse) the full grid, evaluate, and cache results.json."""
    root = Path(root)
    cfg = cfg or StudyConfig()
    run_training_grid(root, cfg, verbose=verbose)
    results = collect_results(root, cfg)
    (root / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    if verbose:
        print(json.dumps(results["checks"], indent=2, sort_keys=True))
    return results
