"""INI-style experiment configuration files.

Example::

    [experiment]
    n_users = 50
    n_arms = 10
    horizon = 500
    popularity = 0.5
    beta = 5.0
    seed = 0
    n_seeds = 10
    sweep_param = beta
    sweep_values = 1, 2, 5, 10, 20

    [policy cab-ucb]
    c1 = 2.0

    [policy max-match]

Without any ``[policy ...]`` section all six learning policies run.
"""
from __future__ import annotations

import configparser
from dataclasses import fields, replace
from pathlib import Path

from .env import SyntheticSpec
from .errors import ConfigError
from .harness import POLICY_KEYS, ExperimentConfig
from .policies import LEARNING_POLICIES

ENV_KEYS = {f.name: f.type for f in fields(SyntheticSpec)}
ENV_ALIASES = {"lambda": "popularity", "K": "n_arms", "N": "n_users", "T": "horizon", "d": "dim"}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_values(text: str) -> list:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(int(part) if part.lstrip("-").isdigit() else float(part))
        except ValueError:
            raise ConfigError(f"not a number: {part!r}") from None
    if not out:
        raise ConfigError("empty value list")
    return out


def _convert(key: str, kind, text: str):
    try:
        if kind in (bool, "bool"):
            return parse_bool(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
        if kind == "float | None":
            return None if str(text).strip().lower() in ("", "none") else float(text)
        return str(text).strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def apply_overrides(config: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    """Apply flat ``key=value`` settings (env, experiment, or ``policy.key`` for all policies)."""
    env_updates = {}
    for raw_key, text in pairs.items():
        key = ENV_ALIASES.get(raw_key, raw_key)
        if key in ENV_KEYS:
            env_updates[key] = _convert(key, ENV_KEYS[key], text)
        elif key == "n_seeds":
            config = replace(config, n_seeds=_convert(key, int, text))
        elif key == "jobs":
            config = replace(config, jobs=_convert(key, int, text))
        elif key == "output_dir":
            config = replace(config, output_dir=Path(text))
        elif key == "emit_per_round":
            config = replace(config, emit_per_round=parse_bool(text))
        elif key == "sweep_param":
            values = config.sweep[1] if config.sweep else []
            config = replace(config, sweep=(str(text).strip(), values))
        elif key == "sweep_values":
            param = config.sweep[0] if config.sweep else ""
            config = replace(config, sweep=(param, parse_values(text)))
        elif key.startswith("policy.") and key[7:] in POLICY_KEYS:
            sub = key[7:]
            value = _convert(sub, POLICY_KEYS[sub], text)
            config = replace(config, policies={n: {**o, sub: value} for n, o in config.policies.items()})
        else:
            raise ConfigError(f"unknown configuration key {raw_key!r}")
    if env_updates:
        config = replace(config, env=replace(config.env, **env_updates))
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    policies = {}
    for section in parser.sections():
        if section.startswith("policy"):
            name = section[len("policy"):].strip()
            overrides = {}
            for key, text in parser[section].items():
                if key not in POLICY_KEYS:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                overrides[key] = _convert(key, POLICY_KEYS[key], text)
            policies[name] = overrides
        elif section != "experiment":
            raise ConfigError(f"unknown section [{section}]")
    config = ExperimentConfig(policies=policies or {n: {} for n in LEARNING_POLICIES})
    if parser.has_section("experiment"):
        config = apply_overrides(config, dict(parser["experiment"]))
    if config.sweep is not None and (not config.sweep[0] or not config.sweep[1]):
        raise ConfigError("sweep_param and sweep_values must be given together")
    return config.validate()
