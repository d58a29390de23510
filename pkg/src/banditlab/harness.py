"""Episode driver, regret accounting, seed batches and theoretical bounds."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import BanditLabError, ConfigError, PolicyTable, RoundRecord, RunResult
from .environments import (
    AdversarialScript,
    HardEnvironment,
    HardInstanceSpec,
    LabelEnvironment,
    ScriptEnvironment,
    StochasticMulticlassSpec,
    random_multiclass_instance,
)
from .learners import HyperParams, Learner, exp4_new, lbftrl_new

LEARNERS = ("lbftrl", "exp4")


class EpisodeError(BanditLabError, RuntimeError):
    """A module error raised inside an episode, tagged with the failing round."""

    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")
        self.round_index = round_index
        self.cause = cause


def make_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (environment, learner) Philox streams derived from one 64-bit seed."""
    env_ss, learner_ss = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(2)
    return np.random.Generator(np.random.Philox(env_ss)), np.random.Generator(np.random.Philox(learner_ss))


def checkpoint_rounds(T: int, per_decade: int = 10) -> np.ndarray:
    """Log-spaced 1-based rounds in ``[1, T]``, always including T."""
    pts = np.unique(np.round(np.logspace(0, math.log10(T), max(2, int(per_decade * math.log10(T)) + 2))).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= T)]
    return np.union1d(pts, [T])


def best_fixed_hypothesis(cumulative_policy_losses) -> tuple[int, float]:
    """Policy with the smallest cumulative loss; ties go to the lowest index."""
    c = np.asarray(cumulative_policy_losses, dtype=np.float64)
    if c.size == 0:
        raise ValueError("need at least one policy")
    i = int(np.argmin(c))
    return i, float(c[i])


def theoretical_bound(N: int, K: int, T: int, s: float) -> tuple[float, float, float]:
    """``(16 N log(NT) + 2 sqrt(s T log N), sqrt(K T log N), min of the two)``."""
    logn = math.log(N)
    sparse = 16.0 * N * math.log(N * T) + 2.0 * math.sqrt(s * T * logn)
    exp4 = math.sqrt(K * T * logn)
    return sparse, exp4, min(sparse, exp4)


def run_episode(learner: Learner, env, T: int, seed: int, record_full_trace: bool = False,
                on_round=None) -> RunResult:
    """Play ``T`` rounds of ``learner`` against ``env``.

    The harness sees the full loss vector every round, so it tracks the
    cumulative loss of every policy and reports realized regret against the
    best of them.  For stochastic environments it also accumulates
    pseudo-regret: per round, the expected loss of the learner's action
    distribution at ``x_t`` minus that of the policy with the smallest
    expected loss.

    ``on_round(t, learner, estimator)``, if given, is called after every
    update; invariant suites use it to inspect each iterate.
    """
    table = learner.policy_table
    if table.num_contexts != env.num_contexts or table.num_actions != env.num_actions:
        raise ConfigError("learner and environment disagree on the number of contexts or actions")
    if T < 1:
        raise ConfigError("T must be >= 1")
    env_rng, learner_rng = make_streams(seed)
    cols = np.ascontiguousarray(table.table.T)
    N = table.num_policies
    cum_policy = np.zeros(N)
    learner_loss = 0.0
    pair_counts = np.zeros((env.num_contexts, env.num_actions), dtype=np.int64)

    is_script = isinstance(env, ScriptEnvironment)
    if is_script:
        if T > len(env.script):
            raise ConfigError(f"T={T} exceeds script length {len(env.script)}")
        contexts, loss_rows = env.script.contexts, env.script.losses
        labels = None
    else:
        contexts, labels = env.sample(env_rng, T)

    pseudo = None
    if env.expected_loss is not None:
        best = best_fixed_hypothesis(env.policy_expected_losses())[0]
        comparator = env.expected_loss[np.arange(env.num_contexts), table.table[best]]
        pseudo = 0.0

    checkpoints = np.arange(1, T + 1) if record_full_trace else checkpoint_rounds(T)
    trace = np.empty(checkpoints.size)
    next_cp = 0
    records: list[RoundRecord] = []

    t = 0
    try:
        for t in range(T):
            x = int(contexts[t])
            if pseudo is not None:
                pseudo += learner.action_distribution(x) @ env.expected_loss[x] - comparator[x]
            i, a = learner.act(x, learner_rng)
            if is_script:
                row = loss_rows[t]
                loss = float(row[a])
                cum_policy += row[cols[x]]
            else:
                y = int(labels[t])
                loss = -1.0 if a == y else 0.0
                cum_policy -= cols[x] == y
            learner_loss += loss
            pair_counts[x, a] += 1
            pend = learner.pending
            est = learner.update(loss)
            if on_round is not None:
                on_round(t + 1, learner, est)
            if record_full_trace:
                records.append(RoundRecord(t + 1, x, i, a, loss, est, pend.action_prob, learner.last_stability_ratio))
            if t + 1 == checkpoints[next_cp]:
                trace[next_cp] = learner_loss - cum_policy.min()
                next_cp += 1
    except BanditLabError as exc:
        raise EpisodeError(t + 1, exc) from exc

    realized = learner_loss - best_fixed_hypothesis(cum_policy)[1]
    return RunResult(
        cumulative_policy_losses=cum_policy,
        learner_loss=learner_loss,
        realized_regret=realized,
        pseudo_regret=pseudo,
        seed=int(seed),
        params={**learner.params, "T": T},
        trace_rounds=checkpoints,
        regret_trace=trace,
        max_stability_ratio=learner.max_stability_ratio,
        min_action_prob=learner.min_action_prob,
        second_order_sum=learner.second_order_sum,
        per_round=records,
        pair_counts=pair_counts,
    )


# --------------------------------------------------------------------------
# experiment configuration
# --------------------------------------------------------------------------

EnvSpec = Union[StochasticMulticlassSpec, HardInstanceSpec, AdversarialScript]


@dataclass(frozen=True)
class RandomInstanceSpec:
    """Parameters of :func:`random_multiclass_instance`."""

    N: int
    C: int
    K: int
    seed: int = 0

    def build(self) -> tuple[StochasticMulticlassSpec, PolicyTable]:
        return random_multiclass_instance(self.N, self.C, self.K, self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    env: object
    learner: str = "lbftrl"
    hyper: HyperParams = field(default_factory=HyperParams)
    T: int = 1000
    repeats: int = 1
    base_seed: int = 0
    record_full_trace: bool = False
    s: float = 1.0
    table: Optional[PolicyTable] = None

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.learner not in LEARNERS:
            raise ConfigError(f"learner must be one of {LEARNERS}, got {self.learner!r}")
        if not self.s > 0:
            raise ConfigError("s must be > 0")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if isinstance(self.env, (StochasticMulticlassSpec, AdversarialScript)) and self.table is None:
            raise ConfigError("stochastic and script environments need a policy table")

    def build_environment(self):
        if isinstance(self.env, HardInstanceSpec):
            return HardEnvironment(self.env)
        if isinstance(self.env, RandomInstanceSpec):
            spec, table = self.env.build()
            return LabelEnvironment(spec, table, name="random")
        if isinstance(self.env, StochasticMulticlassSpec):
            return LabelEnvironment(self.env, self.table)
        if isinstance(self.env, AdversarialScript):
            return ScriptEnvironment(self.env, self.table)
        raise ConfigError(f"unknown environment spec {type(self.env).__name__}")

    def build_learner(self, env) -> Learner:
        table = env.policy_table
        if self.learner == "lbftrl":
            return lbftrl_new(table, self.s, self.T, self.hyper)
        return exp4_new(table, self.T, eta=self.hyper.eta)

    def resolved_params(self, env) -> dict:
        """Hyperparameters the learner will actually use."""
        return self.build_learner(env).params


@dataclass
class AggregateResult:
    mean_regret: float
    std_regret: float
    per_seed_regret: np.ndarray
    mean_pseudo_regret: Optional[float]
    per_seed_pseudo_regret: Optional[np.ndarray]
    mean_stability_max: float
    max_stability_ratio: float
    bound_value: float
    bound_satisfied: bool
    min_action_prob: float
    second_order_sum: float
    runs: list[RunResult]


def _run_one(config: ExperimentConfig, index: int) -> RunResult:
    env = config.build_environment()
    learner = config.build_learner(env)
    seed = (config.base_seed + index) % 2**64
    return run_episode(learner, env, config.T, seed, config.record_full_trace)


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("BANDITLAB_THREADS", "1") or 1)
    return max(1, int(threads))


def run_batch(config: ExperimentConfig, threads: Optional[int] = None) -> AggregateResult:
    """Run ``repeats`` episodes with seeds ``base_seed + run index`` and aggregate.

    With ``threads > 1`` runs are spread over worker processes; results are
    merged in run-index order so the aggregate does not depend on scheduling.
    """
    n = resolve_threads(threads)
    idx = range(config.repeats)
    if n > 1 and config.repeats > 1:
        with ProcessPoolExecutor(max_workers=min(n, config.repeats)) as pool:
            runs = list(pool.map(_run_one, [config] * config.repeats, idx))
    else:
        runs = [_run_one(config, i) for i in idx]

    regrets = np.array([r.realized_regret for r in runs])
    pseudo = None
    if runs[0].pseudo_regret is not None:
        pseudo = np.array([r.pseudo_regret for r in runs])
    env = config.build_environment()
    N, K = env.policy_table.num_policies, env.num_actions
    sparse, exp4, _ = theoretical_bound(N, K, config.T, config.s)
    bound = sparse if config.learner == "lbftrl" else exp4
    mean = float(regrets.mean())
    return AggregateResult(
        mean_regret=mean,
        std_regret=float(regrets.std(ddof=1)) if regrets.size > 1 else 0.0,
        per_seed_regret=regrets,
        mean_pseudo_regret=None if pseudo is None else float(pseudo.mean()),
        per_seed_pseudo_regret=pseudo,
        mean_stability_max=float(np.mean([r.max_stability_ratio for r in runs])),
        max_stability_ratio=float(max(r.max_stability_ratio for r in runs)),
        bound_value=bound,
        bound_satisfied=mean <= bound,
        min_action_prob=float(min(r.min_action_prob for r in runs)),
        second_order_sum=float(np.mean([r.second_order_sum for r in runs])),
        runs=runs,
    )
