"""Command-line front end: train, evaluate, compare, distance, gen-levels."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .agent import collect_trajectories, occupancy_samples
from .curriculum import run_training
from .env import EnvConfig
from .evaluation import aggregate_runs, builtin_suite, evaluate_policy
from .harness import (
    ConfigError,
    EvalConfig,
    checkpoint_env_config,
    load_checkpoint,
    manifest_env_config,
    now,
    read_manifest,
    resolve_config,
    save_checkpoint,
    snapshot_buffer,
    write_manifest,
    write_resolved_ini,
)
from .levelgen import GeneratorConfig, parse_level, random_level, serialize_level
from .ot import OtConfig, level_distance
from .seeding import seed_streams, stream, subsample_seed


def _load_suite(spec: str) -> dict:
    """'builtin' or a directory of .lvl files."""
    if spec == "builtin":
        return builtin_suite()
    directory = Path(spec)
    if not directory.is_dir():
        raise FileNotFoundError(f"suite directory not found: {directory}")
    suite = {}
    for path in sorted(directory.glob("*.lvl")):
        suite[path.stem] = parse_level(path.read_text())
    if not suite:
        raise FileNotFoundError(f"no .lvl files in {directory}")
    return suite


def cmd_train(args) -> int:
    overrides = dict(args.set or [])
    for flag in ("strategy", "seed", "rho", "total_updates", "output_dir", "eval_every"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = str(value)
    cfg = resolve_config(args.config, overrides)
    if not cfg.output_dir:
        raise ConfigError("missing required field: output_dir")

    run_dir = Path(cfg.output_dir)
    if run_dir.exists() and any(run_dir.iterdir()):
        raise ConfigError(f"output directory {run_dir} exists and is not empty")
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    started = now()
    checkpoints: list[str] = []
    write_manifest(run_dir, cfg, overrides, "running", checkpoints, started)
    write_resolved_ini(cfg, run_dir / "config.resolved.ini")

    streams = seed_streams(cfg.seed)
    ot_cfg = cfg.resolved_ot()
    suite = _load_suite(cfg.eval.suite) if cfg.eval_every > 0 and cfg.eval.suite != "none" else None
    eval_log = open(run_dir / "evals.jsonl", "w") if suite else None
    latest = {"policy": None}

    def on_update(update, policy, record, buffer):
        latest["policy"] = policy
        if cfg.eval_every > 0 and update % cfg.eval_every == 0:
            path = save_checkpoint(run_dir / "checkpoints" / f"ckpt_{update:06d}", policy, cfg.env)
            checkpoints.append(str(path.relative_to(run_dir)))
            if buffer is not None:
                snapshot_buffer(buffer, run_dir / "buffers" / f"update_{update:06d}")
            if suite is not None:
                rec = evaluate_policy(
                    policy, suite, cfg.eval.eval_episodes, cfg.env,
                    seed=cfg.seed, greedy=cfg.eval.greedy,
                )
                eval_log.write(
                    json.dumps(
                        {"update": update, "solved_rates": rec.solved_rates,
                         "mean_returns": rec.mean_returns},
                        sort_keys=True,
                    )
                    + "\n"
                )
                eval_log.flush()

    try:
        with open(run_dir / "log.jsonl", "w") as log_file:
            policy, _ = run_training(
                cfg.teacher, cfg.env, cfg.generator, cfg.ppo, cfg.gae, ot_cfg,
                total_updates=cfg.total_updates,
                streams=streams,
                policy_hidden=cfg.policy_hidden,
                log_file=log_file,
                on_update=on_update,
            )
    except BaseException:
        if latest["policy"] is not None:
            path = save_checkpoint(run_dir / "checkpoints" / "ckpt_crash", latest["policy"], cfg.env)
            checkpoints.append(str(path.relative_to(run_dir)))
        write_manifest(run_dir, cfg, overrides, "failed", checkpoints, started, now())
        raise
    finally:
        if eval_log is not None:
            eval_log.close()

    path = save_checkpoint(run_dir / "checkpoints" / "ckpt_final", policy, cfg.env)
    checkpoints.append(str(path.relative_to(run_dir)))
    write_manifest(run_dir, cfg, overrides, "complete", checkpoints, started, now())
    print(f"run complete: {run_dir}")
    return 0


def cmd_evaluate(args) -> int:
    policy, meta = load_checkpoint(args.checkpoint)
    env_cfg = checkpoint_env_config(meta)
    if env_cfg.feature_dim != policy.obs_dim:
        raise ValueError(
            f"checkpoint expects {policy.obs_dim} features but its env config "
            f"yields {env_cfg.feature_dim}"
        )
    suite = _load_suite(args.suite)
    record = evaluate_policy(
        policy, suite, args.episodes, env_cfg, seed=args.seed, greedy=not args.stochastic
    )
    rows = [
        {"level": name, "seed": args.seed, "solved_rate": record.solved_rates[name],
         "mean_return": record.mean_returns[name]}
        for name in suite
    ]
    _write_csv(args.out, ["level", "seed", "solved_rate", "mean_return"], rows)
    return 0


def cmd_compare(args) -> int:
    by_strategy: dict[str, list] = {}
    run_rows = []
    for run_dir in args.run_dirs:
        manifest = read_manifest(run_dir)
        strategy = manifest["config"]["teacher"]["strategy"]
        seed = manifest["config"]["experiment"]["seed"]
        eval_cfg = EvalConfig(**manifest["config"]["eval"])
        env_cfg = manifest_env_config(manifest)
        ckpt = Path(run_dir) / "checkpoints" / "ckpt_final.npz"
        policy, _ = load_checkpoint(ckpt)
        suite = _load_suite(eval_cfg.suite if eval_cfg.suite != "none" else "builtin")
        record = evaluate_policy(
            policy, suite, eval_cfg.eval_episodes, env_cfg, seed=seed, greedy=eval_cfg.greedy
        )
        report = aggregate_runs(strategy, [record], eval_cfg.normalize_lo, eval_cfg.normalize_hi)
        run_rows.append(
            {"scope": "run", "name": str(run_dir), "strategy": strategy, "seed": seed,
             "n_runs": 1, "iqm": report.iqm, "optimality_gap": report.optimality_gap}
        )
        by_strategy.setdefault(strategy, []).append((record, eval_cfg))

    strategy_rows = []
    for strategy, pairs in sorted(by_strategy.items()):
        records = [r for r, _ in pairs]
        eval_cfg = pairs[0][1]
        report = aggregate_runs(strategy, records, eval_cfg.normalize_lo, eval_cfg.normalize_hi)
        strategy_rows.append(
            {"scope": "strategy", "name": strategy, "strategy": strategy, "seed": "",
             "n_runs": report.n_runs, "iqm": report.iqm, "optimality_gap": report.optimality_gap}
        )
    _write_csv(
        args.out,
        ["scope", "name", "strategy", "seed", "n_runs", "iqm", "optimality_gap"],
        run_rows + strategy_rows,
    )
    return 0


def _occupancy_for_level(policy, level, env_cfg, episodes, seed):
    from .agent import GaeConfig

    batch = collect_trajectories(
        policy, level, env_cfg, GaeConfig(), stream(seed, "distance-cli"),
        n_episodes=episodes, update_policy=False,
    )
    return occupancy_samples(batch)


def cmd_distance(args) -> int:
    policy, meta = load_checkpoint(args.checkpoint)
    env_cfg = checkpoint_env_config(meta)
    ot_cfg = OtConfig(max_samples=args.max_samples, subsample_seed=subsample_seed(args.seed))

    if args.matrix:
        directory = Path(args.matrix)
        paths = sorted(directory.glob("*.lvl"))
        if not paths:
            raise FileNotFoundError(f"no .lvl files in {directory}")
        names = [p.stem for p in paths]
        clouds = [
            _occupancy_for_level(policy, parse_level(p.read_text()), env_cfg, args.episodes, args.seed)
            for p in paths
        ]
        n = len(clouds)
        matrix = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                matrix[i, j] = matrix[j, i] = level_distance(clouds[i], clouds[j], ot_cfg)
        out = args.out or "-"
        fh = sys.stdout if out == "-" else open(out, "w", newline="")
        try:
            writer = csv.writer(fh)
            writer.writerow(["level"] + names)
            for name, row in zip(names, matrix):
                writer.writerow([name] + [f"{v:.9g}" for v in row])
        finally:
            if fh is not sys.stdout:
                fh.close()
        return 0

    if len(args.levels) != 2:
        raise ValueError("give two level files, or --matrix DIR")
    clouds = []
    for path in args.levels:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"level file not found: {path}")
        clouds.append(
            _occupancy_for_level(policy, parse_level(path.read_text()), env_cfg, args.episodes, args.seed)
        )
    print(f"{level_distance(clouds[0], clouds[1], ot_cfg):.9g}")
    return 0


def cmd_gen_levels(args) -> int:
    gen_cfg = GeneratorConfig(
        block_budget=args.block_budget, width=args.width, height=args.height, seed=args.seed
    )
    rng = stream(args.seed, "gen-levels")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        (out_dir / f"level_{i:03d}.lvl").write_text(serialize_level(random_level(gen_cfg, rng)))
    print(f"wrote {args.count} levels to {out_dir}")
    return 0


def _write_csv(out: str | None, header: list[str], rows: list[dict]) -> None:
    fh = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uedlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a teacher-student training experiment")
    train.add_argument("--config", help="INI config file")
    train.add_argument("--strategy", choices=("dr", "minimax", "plr", "diplr_minus", "diplr"))
    train.add_argument("--seed", type=int)
    train.add_argument("--rho", type=float)
    train.add_argument("--total-updates", dest="total_updates", type=int)
    train.add_argument("--eval-every", dest="eval_every", type=int)
    train.add_argument("--output-dir", dest="output_dir")
    train.add_argument(
        "--set", nargs=2, action="append", metavar=("FIELD", "VALUE"),
        help="override any config field by name",
    )
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="zero-shot evaluation of a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--suite", default="builtin", help="'builtin' or a directory of .lvl files")
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--stochastic", action="store_true", help="sample actions instead of argmax")
    ev.add_argument("--out", help="CSV path (default stdout)")
    ev.set_defaults(func=cmd_evaluate)

    cp = sub.add_parser("compare", help="aggregate IQM/optimality-gap across run directories")
    cp.add_argument("run_dirs", nargs="+")
    cp.add_argument("--out", help="CSV path (default stdout)")
    cp.set_defaults(func=cmd_compare)

    dist = sub.add_parser("distance", help="transport distance between levels under a policy")
    dist.add_argument("levels", nargs="*", help="two level files")
    dist.add_argument("--checkpoint", required=True)
    dist.add_argument("--matrix", help="directory of .lvl files: emit the pairwise CSV")
    dist.add_argument("--episodes", type=int, default=4)
    dist.add_argument("--seed", type=int, default=0)
    dist.add_argument("--max-samples", dest="max_samples", type=int, default=64)
    dist.add_argument("--out", help="CSV path for --matrix (default stdout)")
    dist.set_defaults(func=cmd_distance)

    gen = sub.add_parser("gen-levels", help="emit numbered random level files")
    gen.add_argument("--count", type=int, default=10)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-dir", dest="out_dir", required=True)
    gen.add_argument("--block-budget", dest="block_budget", type=int, default=15)
    gen.add_argument("--width", type=int, default=9)
    gen.add_argument("--height", type=int, default=9)
    gen.set_defaults(func=cmd_gen_levels)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
