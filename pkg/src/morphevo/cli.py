"""Command-line entry point.

Progress goes to stderr; machine-readable results go to files, keeping
stdout clean for piping.  Exit codes: 0 success, 2 config error,
3 missing artifact, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import engine, envs, evalstats, schedules
from .morphospace import build_training_grid
from .config import (
    ConfigError,
    MissingArtifactError,
    apply_overrides,
    build_run_config,
    load_config_file,
    schema_help,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_RUNTIME = 4


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _ensure_output(path: Path, force: bool) -> None:
    """Refuse to overwrite existing output unless --force is given."""
    if path.exists() and (path.is_file() or any(path.iterdir())):
        if not force:
            raise ConfigError(f"output {path} already exists; pass --force to overwrite")


def _progress_printer(row: engine.GenerationRow) -> None:
    f_best = "-" if row.f_best is None else f"{row.f_best:.6g}"
    _say(
        f"gen {row.generation}: m=({row.morph_x:g}, {row.morph_y:g}) "
        f"best={row.train_best_cost:.6g} f_best={f_best}"
    )


def _load_batch_or_die(path: str) -> list[engine.RunRecord]:
    src = Path(path)
    if not src.exists():
        raise MissingArtifactError(f"batch directory {src} does not exist")
    try:
        return engine.load_batch(src)
    except FileNotFoundError as exc:
        raise MissingArtifactError(str(exc)) from exc


def _batch_env(records: list[engine.RunRecord]):
    names = {r.config.env_name for r in records}
    if len(names) != 1:
        raise ConfigError(f"batch mixes environments: {sorted(names)}")
    steps = {r.config.episode_steps for r in records}
    return envs.get_env(names.pop(), episode_steps=steps.pop())


def cmd_train(args) -> int:
    flat = apply_overrides(load_config_file(args.config), args.override)
    out = Path(args.output)
    _ensure_output(out, args.force)
    cfg = build_run_config(flat, output_dir=out)
    record = engine.train(cfg, progress=_progress_printer if not args.quiet else None)
    _say(f"run finished: {len(record.rows)} generations, best f_best "
         f"{record.final_entry.f_best:.6g}, record in {out}")
    return EXIT_OK


def cmd_batch(args) -> int:
    flat = apply_overrides(load_config_file(args.config), args.override)
    out = Path(args.output)
    _ensure_output(out, args.force)
    cfg = build_run_config(flat)
    records = engine.run_batch(cfg, args.runs, out, parallelism=args.parallelism)
    _say(f"batch finished: {len(records)}/{args.runs} runs in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records = _load_batch_or_die(args.batch)
    env = _batch_env(records)
    out = Path(args.batch) / f"evaluation_{args.set}.csv"
    _ensure_output(out, args.force)
    metric = f"{args.set}_mean"
    scores = evalstats.batch_scores(records, env, metric)
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run_index", "set", "mean_cost"])
        for record, score in zip(records, scores):
            w.writerow([record.config.run_index, args.set, repr(score)])
    _say(f"wrote {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    records_a = _load_batch_or_die(args.batch_a)
    records_b = _load_batch_or_die(args.batch_b)
    env_a = _batch_env(records_a)
    env_b = _batch_env(records_b)
    if env_a.name != env_b.name:
        raise ConfigError(
            f"cannot compare batches from different environments "
            f"({env_a.name} vs {env_b.name})"
        )
    out = Path(args.output)
    _ensure_output(out, args.force)
    label_a = Path(args.batch_a).name
    label_b = Path(args.batch_b).name
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["schedule_a", "schedule_b", "metric", "median_a", "median_b",
             "u_statistic", "p_value", "stars"]
        )
        for metric in [args.metric] if args.metric != "all" else list(evalstats.METRICS):
            _, row = evalstats.compare_schedules(
                records_a, records_b, env_a, metric, label_a, label_b
            )
            w.writerow(
                [row["schedule_a"], row["schedule_b"], row["metric"],
                 repr(row["median_a"]), repr(row["median_b"]),
                 repr(row["u_statistic"]), repr(row["p_value"]), row["stars"]]
            )
            _say(
                f"{metric}: median {row['median_a']:.6g} vs {row['median_b']:.6g} "
                f"p={row['p_value']:.4g} {row['stars'] or 'n.s.'}"
            )
    _say(f"wrote {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.csv"
    _ensure_output(summary_path, args.force)
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["batch", "schedule", "runs", "train_median", "test_median", "all_median"])
        for batch_dir in args.batch:
            records = _load_batch_or_die(batch_dir)
            env = _batch_env(records)
            name = Path(batch_dir).name
            kind = records[0].schedule_kind

            if kind in ("discrete_random", "discrete_incremental", "bandit"):
                grid = build_training_grid(env.space)
                evalstats.frequency_heatmap(
                    records,
                    grid,
                    svg_path=out / f"heatmap_frequency_{name}.svg",
                    csv_path=out / f"heatmap_frequency_{name}.csv",
                    title=f"selection frequency: {name}",
                )
                _say(f"{name}: frequency heatmap written")
            else:
                _say(f"{name}: continuous schedule ({kind}); frequency heatmap skipped")

            evalstats.performance_heatmap(
                env,
                records[0].controller,
                [r.final_entry.genome for r in records],
                svg_path=out / f"heatmap_performance_{name}.svg",
                csv_path=out / f"heatmap_performance_{name}.csv",
                title=f"mean cost: {name}",
            )
            _say(f"{name}: performance heatmap written")

            medians = {
                metric: float(np.median(evalstats.batch_scores(records, env, metric)))
                for metric in evalstats.METRICS
            }
            w.writerow(
                [name, kind, len(records), repr(medians["train_mean"]),
                 repr(medians["test_mean"]), repr(medians["all_mean"])]
            )
    _say(f"wrote {summary_path}")
    return EXIT_OK


def cmd_list_envs(_args) -> int:
    for contract in envs.builtin_environments():
        space = contract.morph_space
        print(
            f"{contract.name}: obs={contract.obs_dim} act={contract.act_dim} "
            f"steps={contract.episode_steps} dt={contract.dt} "
            f"{space.x_name}=[{space.x_train.lo:g}, {space.x_train.hi:g}] "
            f"{space.y_name}=[{space.y_train.lo:g}, {space.y_train.hi:g}]"
        )
    return EXIT_OK


def cmd_list_schedules(_args) -> int:
    notes = {
        "discrete_random": "uniform pick from the training grid",
        "discrete_incremental": "x-major cycle over the training grid",
        "uniform": "uniform over the continuous training box",
        "gaussian": "box-centered gaussian (schedule.sigma_frac)",
        "cauchy": "box-centered fat-tailed (schedule.scale_frac)",
        "beta": "edge-heavy beta sampling (schedule.beta_a, schedule.beta_b)",
        "bandit": "Thompson sampling over grid arms (schedule.gamma, .window)",
    }
    for kind in schedules.SCHEDULE_KINDS:
        print(f"{kind}: {notes[kind]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphevo",
        description="Evolve generalist controllers over 2-D morphology spaces.",
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML config file")
            p.add_argument(
                "--override",
                action="append",
                metavar="KEY=VALUE",
                help="override a config key (section.key=value); repeatable",
            )
        p.add_argument("--force", action="store_true", help="overwrite existing output")

    p_train = sub.add_parser(
        "train",
        help="run one training run",
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_common(p_train)
    p_train.add_argument("--output", required=True, help="run record directory")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p_train.set_defaults(func=cmd_train)

    p_batch = sub.add_parser(
        "batch",
        help="run a batch of independent runs",
        epilog=schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_common(p_batch)
    p_batch.add_argument("--output", required=True, help="batch directory")
    p_batch.add_argument("--runs", type=int, required=True, help="number of runs")
    p_batch.add_argument("--parallelism", type=int, default=1, help="worker processes")
    p_batch.set_defaults(func=cmd_batch)

    p_eval = sub.add_parser("evaluate", help="evaluate final generalists on a grid")
    add_common(p_eval, needs_config=False)
    p_eval.add_argument("--batch", required=True, help="batch directory")
    p_eval.add_argument("--set", choices=["train", "test", "all"], required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="Mann-Whitney comparison of two batches")
    add_common(p_cmp, needs_config=False)
    p_cmp.add_argument("--batch-a", required=True)
    p_cmp.add_argument("--batch-b", required=True)
    p_cmp.add_argument(
        "--metric", choices=list(evalstats.METRICS) + ["all"], default="all"
    )
    p_cmp.add_argument("--output", default="report.csv")
    p_cmp.set_defaults(func=cmd_compare)

    p_rep = sub.add_parser("report", help="heatmaps + summary for batches")
    add_common(p_rep, needs_config=False)
    p_rep.add_argument("--batch", action="append", required=True, help="repeatable")
    p_rep.add_argument("--output", required=True, help="report directory")
    p_rep.set_defaults(func=cmd_report)

    p_le = sub.add_parser("list-envs", help="list built-in environments")
    p_le.set_defaults(func=cmd_list_envs)
    p_ls = sub.add_parser("list-schedules", help="list training schedules")
    p_ls.set_defaults(func=cmd_list_schedules)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _say(f"config error: {exc}")
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        _say(f"missing artifact: {exc}")
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _say(f"error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
