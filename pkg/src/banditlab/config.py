"""JSON experiment configs: parsing, overrides and validation.

Example::

    {
      "version": 1,
      "env": {"type": "hard", "C": 4, "K": 50, "target": [1, 7]},
      "learner": "lbftrl",
      "params": {"nu": 0.0625},
      "s": 1.0, "T": 200000, "repeats": 20, "seed": 0,
      "record_full_trace": false
    }

Environment types: ``stochastic`` (explicit distributions plus a
``policies`` table), ``hard``, ``random`` (generated instance) and
``script`` (explicit contexts and loss rows plus ``policies``).  Unknown keys
are rejected so that a typo cannot silently change an experiment.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

from .core import BanditLabError, ConfigError, PolicyTable
from .environments import AdversarialScript, HardInstanceSpec, StochasticMulticlassSpec
from .harness import LEARNERS, ExperimentConfig, RandomInstanceSpec
from .learners import HyperParams

CONFIG_VERSION = 1

_TOP_KEYS = {"version", "env", "learner", "params", "s", "T", "repeats", "seed", "record_full_trace", "grid"}
_PARAM_KEYS = {"eta", "nu", "epsilon"}
_ENV_KEYS = {
    "stochastic": {"type", "context_probs", "label_probs", "policies"},
    "hard": {"type", "C", "K", "target"},
    "random": {"type", "N", "C", "K", "seed"},
    "script": {"type", "contexts", "losses", "sparsity", "policies"},
}
GRID_AXES = ("T", "N", "C", "K", "learner")


def _unknown(keys, allowed, where: str) -> None:
    extra = sorted(set(keys) - allowed)
    if extra:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(extra)}")


def _require(d: dict, key: str, where: str) -> Any:
    if key not in d:
        raise ConfigError(f"missing field {where}.{key}" if where else f"missing field {key}")
    return d[key]


def load_raw(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return out


def _parse_table(d: Any, where: str) -> PolicyTable:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object with N, C, K, table")
    _unknown(d, {"N", "C", "K", "table"}, where)
    try:
        return PolicyTable.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def parse_env(d: Any) -> tuple[object, PolicyTable | None]:
    if not isinstance(d, dict):
        raise ConfigError("env must be an object")
    kind = _require(d, "type", "env")
    if kind not in _ENV_KEYS:
        raise ConfigError(f"env.type must be one of {sorted(_ENV_KEYS)}, got {kind!r}")
    _unknown(d, _ENV_KEYS[kind], f"env ({kind})")
    try:
        if kind == "hard":
            t = d.get("target")
            return HardInstanceSpec(int(_require(d, "C", "env")), int(_require(d, "K", "env")),
                                    None if t is None else (int(t[0]), int(t[1]))), None
        if kind == "random":
            return RandomInstanceSpec(int(_require(d, "N", "env")), int(_require(d, "C", "env")),
                                      int(_require(d, "K", "env")), int(d.get("seed", 0))), None
        table = _parse_table(_require(d, "policies", "env"), "env.policies")
        if kind == "stochastic":
            spec = StochasticMulticlassSpec(_require(d, "context_probs", "env"), _require(d, "label_probs", "env"))
        else:
            spec = AdversarialScript(_require(d, "contexts", "env"), _require(d, "losses", "env"),
                                     float(d.get("sparsity", 1.0)))
        return spec, table
    except ConfigError:
        raise
    except (BanditLabError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid env: {exc}") from exc


def parse_config(raw: dict) -> ExperimentConfig:
    """Build and fully validate an :class:`ExperimentConfig` (no experiment is run)."""
    _unknown(raw, _TOP_KEYS, "config")
    version = _require(raw, "version", "")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}; expected {CONFIG_VERSION}")
    env, table = parse_env(_require(raw, "env", ""))
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    _unknown(params, _PARAM_KEYS, "params")
    learner = raw.get("learner", "lbftrl")
    if learner not in LEARNERS:
        raise ConfigError(f"learner must be one of {LEARNERS}, got {learner!r}")
    try:
        cfg = ExperimentConfig(
            env=env,
            learner=learner,
            hyper=HyperParams(**{k: (None if v is None else float(v)) for k, v in params.items()}),
            T=int(raw.get("T", 1000)),
            repeats=int(raw.get("repeats", 1)),
            base_seed=int(raw.get("seed", 0)),
            record_full_trace=bool(raw.get("record_full_trace", False)),
            s=float(raw.get("s", 1.0)),
            table=table,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from exc
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Construct environment and learner once so every parameter error surfaces now."""
    try:
        env = cfg.build_environment()
    except ConfigError:
        raise
    except (BanditLabError, ValueError) as exc:
        raise ConfigError(f"invalid env: {exc}") from exc
    n = env.policy_table.num_policies
    if cfg.learner == "lbftrl":
        eps = cfg.hyper.epsilon
        if eps is not None and eps * n >= 1:
            raise ConfigError(f"params.epsilon: epsilon * N = {eps * n:g} must be < 1 (N={n})")
    try:
        cfg.build_learner(env)
    except ConfigError as exc:
        raise ConfigError(f"params: {exc}") from exc


def grid_cells(raw: dict) -> list[dict]:
    """Expand ``raw["grid"]`` into one raw config per cell, in lexicographic order.

    Axes are visited in the order T, N, C, K, learner and the values on each
    axis are sorted, so cells come out in lexicographic order of that tuple.
    """
    grid = raw.get("grid") or {}
    if not isinstance(grid, dict):
        raise ConfigError("grid must be an object of axis -> list of values")
    _unknown(grid, set(GRID_AXES), "grid")
    axes = [(k, sorted(grid[k])) for k in GRID_AXES if k in grid]
    for k, vals in axes:
        if not vals:
            raise ConfigError(f"grid.{k} must not be empty")
    base = {k: v for k, v in raw.items() if k != "grid"}
    cells = [base]
    for key, vals in axes:
        nxt = []
        for cell in cells:
            for v in vals:
                c = copy.deepcopy(cell)
                if key in ("T", "learner"):
                    c[key] = v
                else:
                    env = c.get("env", {})
                    if key not in _ENV_KEYS.get(env.get("type"), ()):
                        raise ConfigError(f"grid.{key} does not apply to env type {env.get('type')!r}")
                    env[key] = v
                nxt.append(c)
        cells = nxt
    return cells
