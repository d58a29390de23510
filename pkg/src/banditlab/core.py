"""Shared domain types and the multiclass -> sparse-loss reduction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class BanditLabError(Exception):
    """Base class for all package errors."""


class InputError(BanditLabError, ValueError):
    """An argument is out of range or malformed."""


class ConfigError(BanditLabError, ValueError):
    """A hyperparameter or experiment configuration is invalid."""


class ProtocolError(BanditLabError, RuntimeError):
    """act/update were called out of order."""


class EnvError(BanditLabError, RuntimeError):
    """An environment produced data violating its contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Finite policy class: ``table[i, x]`` is the action of policy ``i`` at context ``x``.

    Attributes:
        table: integer array of shape (N, C) with entries in ``[0, K)``.
        num_actions: number of actions K.
    """

    table: np.ndarray
    num_actions: int

    def __post_init__(self) -> None:
        t = np.array(self.table, dtype=np.int64, copy=True)
        if t.ndim != 2 or t.shape[0] < 1 or t.shape[1] < 1:
            raise InputError(f"policy table must be a non-empty 2-D array, got shape {t.shape}")
        k = int(self.num_actions)
        if k < 1:
            raise InputError("num_actions must be >= 1")
        if t.min() < 0 or t.max() >= k:
            raise InputError(f"policy table entries must lie in [0, {k})")
        object.__setattr__(self, "table", _readonly(t))
        object.__setattr__(self, "num_actions", k)

    @property
    def num_policies(self) -> int:
        return self.table.shape[0]

    @property
    def num_contexts(self) -> int:
        return self.table.shape[1]

    def action(self, policy: int, context: int) -> int:
        return int(self.table[policy, context])

    def check_context(self, context: int) -> None:
        if not 0 <= context < self.num_contexts:
            raise InputError(f"context {context} out of range [0, {self.num_contexts})")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return self.num_actions == other.num_actions and np.array_equal(self.table, other.table)

    def to_dict(self) -> dict:
        return {
            "N": self.num_policies,
            "C": self.num_contexts,
            "K": self.num_actions,
            "table": self.table.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyTable":
        table = np.asarray(d["table"], dtype=np.int64)
        if table.shape != (int(d["N"]), int(d["C"])):
            raise InputError(f"table shape {table.shape} does not match N={d['N']}, C={d['C']}")
        return cls(table, int(d["K"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PolicyTable":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """A probability vector over N policies."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 1 or w.size < 1:
            raise InputError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)) or w.min() < 0.0:
            raise InputError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InputError(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", _readonly(w))

    def __len__(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)

    @classmethod
    def uniform(cls, n: int) -> "SimplexPoint":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class LossVector:
    """Per-action losses for one round together with the declared sparsity budget s."""

    losses: np.ndarray
    declared_sparsity: float = 1.0

    def __post_init__(self) -> None:
        v = np.array(self.losses, dtype=np.float64, copy=True)
        if v.ndim != 1 or v.size < 1:
            raise InputError("losses must be a non-empty vector")
        if not np.all(np.isfinite(v)) or np.abs(v).max() > 1.0:
            raise InputError("every loss must lie in [-1, 1]")
        s = float(self.declared_sparsity)
        if not s > 0:
            raise InputError("declared_sparsity must be > 0")
        object.__setattr__(self, "losses", _readonly(v))
        object.__setattr__(self, "declared_sparsity", s)

    @property
    def squared_norm(self) -> float:
        return float(self.losses @ self.losses)

    def __len__(self) -> int:
        return self.losses.size


@dataclass(frozen=True, eq=False)
class RoundRecord:
    round: int
    context: int
    policy_chosen: int
    action: int
    observed_loss: float
    estimator: np.ndarray
    action_prob: float
    stability_ratio: float

    def __eq__(self, other):
        if not isinstance(other, RoundRecord):
            return NotImplemented
        return (
            (self.round, self.context, self.policy_chosen, self.action, self.observed_loss, self.action_prob)
            == (other.round, other.context, other.policy_chosen, other.action, other.observed_loss, other.action_prob)
            and np.array_equal(self.stability_ratio, other.stability_ratio, equal_nan=True)
            and np.array_equal(self.estimator, other.estimator)
        )


@dataclass
class RunResult:
    """Outcome of one episode.

    ``regret_trace`` holds realized regret at the rounds listed in
    ``trace_rounds`` (every round with a full trace, log-spaced checkpoints
    otherwise); its last entry always equals ``realized_regret``.
    """

    cumulative_policy_losses: np.ndarray
    learner_loss: float
    realized_regret: float
    pseudo_regret: Optional[float]
    seed: int
    params: dict
    trace_rounds: np.ndarray
    regret_trace: np.ndarray
    max_stability_ratio: float
    min_action_prob: float
    second_order_sum: float
    per_round: list[RoundRecord] = field(default_factory=list)
    pair_counts: Optional[np.ndarray] = None


def shift_multiclass_loss(true_label: int, num_actions: int) -> LossVector:
    """Shifted zero-one loss: -1 on the true label, 0 elsewhere (1-sparse)."""
    if num_actions < 1 or not 0 <= true_label < num_actions:
        raise InputError(f"label {true_label} out of range [0, {num_actions})")
    v = np.zeros(num_actions)
    v[true_label] = -1.0
    return LossVector(v, 1.0)


def policy_cost_vector(table: PolicyTable, context: int, loss: LossVector) -> np.ndarray:
    """Cost of every policy at ``context``: ``c[i] = loss[table(i, context)]``."""
    table.check_context(context)
    if len(loss) != table.num_actions:
        raise InputError(f"loss has {len(loss)} entries, table has K={table.num_actions}")
    return loss.losses[table.table[:, context]]
