"""Run configuration: TOML files, key=value overrides, schema help.

Config files use TOML tables [run], [schedule], [xnes]; every key can be
overridden on the command line with --override section.key=value, so
scripted sweeps never need to rewrite files.
"""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import schedules
from .engine import RunConfig


class ConfigError(Exception):
    """Invalid configuration; CLI exit code 2."""


class MissingArtifactError(Exception):
    """A referenced run/batch artifact does not exist; CLI exit code 3."""


_REQUIRED = object()

# key -> (default, type, help); _REQUIRED marks keys a config must provide.
SCHEMA: dict[str, tuple[object, type, str]] = {
    "run.env": (_REQUIRED, str, "environment name (see list-envs)"),
    "run.max_generations": (100, int, "generations per run"),
    "run.master_seed": (0, int, "seed shared by a batch; runs derive from (seed, run_index)"),
    "run.run_index": (0, int, "index of this run within its batch"),
    "run.validation_cadence": (1, int, "validate every N generations (bandit requires 1)"),
    "run.episode_steps": (0, int, "episode length override; 0 = environment default"),
    "run.posterior_log_every": (1, int, "thinning for bandit posterior snapshots"),
    "schedule.kind": (
        "uniform",
        str,
        "one of: " + ", ".join(schedules.SCHEDULE_KINDS),
    ),
    "schedule.sigma_frac": (
        schedules.DEFAULT_SIGMA_FRAC,
        float,
        "gaussian sigma as a fraction of the axis half-range",
    ),
    "schedule.scale_frac": (
        schedules.DEFAULT_SCALE_FRAC,
        float,
        "cauchy scale as a fraction of the axis half-range",
    ),
    "schedule.beta_a": (schedules.DEFAULT_BETA_A, float, "beta schedule alpha"),
    "schedule.beta_b": (schedules.DEFAULT_BETA_B, float, "beta schedule beta"),
    "schedule.gamma": (0.1, float, "bandit posterior decay toward the prior, in [0, 1]"),
    "schedule.alpha0": (1.0, float, "bandit prior alpha"),
    "schedule.beta0": (1.0, float, "bandit prior beta"),
    "schedule.window": (10, int, "bandit reward moving-average window"),
    "xnes.population": (0, int, "population size; 0 = 4 + floor(3 ln d)"),
    "xnes.eta_mu": (1.0, float, "mean learning rate"),
    "xnes.eta_sigma": (0.0, float, "step-size learning rate; 0 = standard default"),
    "xnes.eta_b": (0.0, float, "shape learning rate; 0 = standard default"),
    "xnes.sigma0": (1.0, float, "initial step size"),
}


def schema_help() -> str:
    lines = ["config keys (section.key = default):"]
    for key, (default, _, help_text) in SCHEMA.items():
        shown = "required" if default is _REQUIRED else repr(default)
        lines.append(f"  {key} = {shown}  # {help_text}")
    return "\n".join(lines)


def _coerce(key: str, raw, target: type):
    try:
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {target.__name__}") from exc


def load_config_file(path) -> dict:
    """Read a TOML config into a flat dotted-key dict."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        with open(p, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {p}: {exc}") from exc
    flat = {}
    for section, table in data.items():
        if not isinstance(table, dict):
            raise ConfigError(f"config key {section!r} must live in a [section]")
        for key, value in table.items():
            dotted = f"{section}.{key}"
            if dotted not in SCHEMA:
                raise ConfigError(f"unknown config key {dotted!r}")
            flat[dotted] = _coerce(dotted, value, SCHEMA[dotted][1])
    return flat


def apply_overrides(flat: dict, overrides) -> dict:
    """Apply --override section.key=value pairs on top of a config."""
    out = dict(flat)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value.strip(), SCHEMA[key][1])
    return out


def build_run_config(flat: dict, output_dir=None) -> RunConfig:
    """Turn a flat config dict into an engine RunConfig."""
    values = {}
    for key, (default, _, _help) in SCHEMA.items():
        if key in flat:
            values[key] = flat[key]
        elif default is _REQUIRED:
            raise ConfigError(f"config key {key!r} is required")
        else:
            values[key] = default

    def zero_none(v):
        return None if v == 0 else v

    try:
        return RunConfig(
            env_name=values["run.env"],
            schedule_kind=values["schedule.kind"],
            max_generations=values["run.max_generations"],
            master_seed=values["run.master_seed"],
            run_index=values["run.run_index"],
            validation_cadence=values["run.validation_cadence"],
            episode_steps=zero_none(values["run.episode_steps"]),
            output_dir=str(output_dir) if output_dir is not None else None,
            sigma_frac=values["schedule.sigma_frac"],
            scale_frac=values["schedule.scale_frac"],
            beta_a=values["schedule.beta_a"],
            beta_b=values["schedule.beta_b"],
            gamma=values["schedule.gamma"],
            alpha0=values["schedule.alpha0"],
            beta0=values["schedule.beta0"],
            window=values["schedule.window"],
            posterior_log_every=values["run.posterior_log_every"],
            population=zero_none(values["xnes.population"]),
            eta_mu=values["xnes.eta_mu"],
            eta_sigma=zero_none(values["xnes.eta_sigma"]),
            eta_b=zero_none(values["xnes.eta_b"]),
            sigma0=values["xnes.sigma0"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
