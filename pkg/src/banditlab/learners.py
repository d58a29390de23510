"""Online learners over a finite policy class: log-barrier FTRL and EXP4.

Both learners follow the same two-call protocol per round::

    policy, action = learner.act(context, rng)
    estimator = learner.update(observed_loss)

``act`` and ``update`` must strictly alternate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import ConfigError, InputError, PolicyTable, ProtocolError, SimplexPoint
from .solver import SolverConfig, solve_raw

STABILITY_NU_MAX = 1.0 / 16.0


@dataclass(frozen=True)
class HyperParams:
    """Learning rate ``eta``, log-barrier weight ``nu`` and simplex floor ``epsilon``.

    ``derived_from`` is ``(s, T, N)`` when the values were set automatically.
    Any field left as ``None`` is filled in by :func:`default_params`.
    """

    eta: Optional[float] = None
    nu: Optional[float] = None
    epsilon: Optional[float] = None
    derived_from: Optional[tuple] = None


def default_params(num_policies: int, s: float, T: int) -> HyperParams:
    """Default tuning: ``eta = sqrt(log N / (s T))``, ``nu = 1/16``, ``epsilon = 1/(N T)``.

    ``log N`` is replaced by ``log max(N, 2)`` so that N = 1 still gets a
    positive rate, and T = 1 uses ``epsilon = 1/(2N)`` to keep the
    truncated simplex non-degenerate.
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if not s > 0:
        raise ConfigError(f"s must be > 0, got {s}")
    n = int(num_policies)
    eta = math.sqrt(math.log(max(n, 2)) / (s * T))
    return HyperParams(eta=eta, nu=1.0 / 16.0, epsilon=1.0 / (n * max(T, 2)), derived_from=(s, T, n))


def induced_action_dist(p, table: PolicyTable, context: int) -> np.ndarray:
    """Action distribution ``q[a] = sum_i p_i [table(i, context) = a]``."""
    table.check_context(context)
    w = np.asarray(p, dtype=np.float64)
    if w.size != table.num_policies:
        raise InputError("p must have one entry per policy")
    return np.bincount(table.table[:, context], weights=w, minlength=table.num_actions)


def importance_weighted_estimate(p, table: PolicyTable, context: int, action: int, loss: float) -> np.ndarray:
    """Loss estimate for every policy from one observed action loss.

    ``c_i = loss [table(i, context) = action] / q_action`` where ``q_action``
    is the probability mass of the policies that play ``action``.
    """
    w = np.asarray(p, dtype=np.float64)
    mask = table.table[:, context] == action
    q = float(w[mask].sum())
    if q <= 0:
        raise InputError(f"action {action} has zero probability at context {context}")
    est = np.zeros(w.size)
    est[mask] = loss / q
    return est


def _sample_index(cdf: np.ndarray, u: float) -> int:
    # Inverse-CDF over ascending indices; u in [0, 1).
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(i, cdf.size - 1)


@dataclass
class _Pending:
    context: int
    policy: int
    action: int
    action_prob: float
    mask: np.ndarray


class Learner:
    """Shared act/update bookkeeping. Subclasses implement ``_choose`` and ``_learn``."""

    name = "learner"

    def __init__(self, table: PolicyTable, initial_dist=None):
        self.policy_table = table
        self._columns = np.ascontiguousarray(table.table.T)  # (C, N) for row access
        n = table.num_policies
        self.p = np.full(n, 1.0 / n) if initial_dist is None else np.array(initial_dist, dtype=np.float64)
        if self.p.shape != (n,):
            raise ConfigError(f"initial distribution must have {n} entries")
        SimplexPoint(self.p)  # validates
        self.round = 0
        self.pending: Optional[_Pending] = None
        self.last_stability_ratio = math.nan
        self.max_stability_ratio = 0.0
        self.min_action_prob = math.inf
        self.second_order_sum = 0.0

    @property
    def current_dist(self) -> SimplexPoint:
        return SimplexPoint(self.p)

    @property
    def num_policies(self) -> int:
        return self.policy_table.num_policies

    def action_distribution(self, context: int) -> np.ndarray:
        """Probability of each action at ``context`` under the current state."""
        return np.bincount(self._columns[context], weights=self.p, minlength=self.policy_table.num_actions)

    def act(self, context: int, rng: np.random.Generator) -> tuple[int, int]:
        if self.pending is not None:
            raise ProtocolError("act called twice without an update in between")
        self.policy_table.check_context(context)
        policy, action = self._choose(context, float(rng.random()))
        mask = self._columns[context] == action
        q = self._action_prob(mask)
        self.pending = _Pending(context, policy, action, q, mask)
        if q < self.min_action_prob:
            self.min_action_prob = q
        return policy, action

    def update(self, observed_loss: float) -> np.ndarray:
        """Feed back the loss of the pending action; returns the loss estimates."""
        pend = self.pending
        if pend is None:
            raise ProtocolError("update called without a pending act")
        loss = float(observed_loss)
        if not -1.0 <= loss <= 1.0:
            raise InputError(f"observed loss {loss} outside [-1, 1]")
        old = self.p
        est = self._learn(pend, loss)
        self.second_order_sum += float(old @ (est * est))
        ratio = float(np.max(self.p / np.maximum(old, 1e-300)))
        self.last_stability_ratio = ratio
        if ratio > self.max_stability_ratio:
            self.max_stability_ratio = ratio
        self.round += 1
        self.pending = None
        return est

    def _choose(self, context: int, u: float) -> tuple[int, int]:
        # Inverse-CDF draw of a policy; the action is the policy's prediction.
        i = _sample_index(np.cumsum(self.p), u)
        return i, int(self._columns[context, i])

    def _action_prob(self, mask: np.ndarray) -> float:
        return float(self.p[mask].sum())

    def _learn(self, pend: _Pending, loss: float) -> np.ndarray:
        raise NotImplementedError

    @property
    def params(self) -> dict:
        return {}


class LBFTRL(Learner):
    """FTRL with entropy plus log-barrier regularization on the truncated simplex.

    Samples a policy from ``p_t``, plays its action, builds the
    importance-weighted estimate ``c_i = loss [pi_i(x) = a] / q_a`` and sets
    ``p_{t+1}`` to the exact regularized leader on the cumulative estimates.
    """

    name = "lbftrl"

    def __init__(self, table: PolicyTable, config: SolverConfig, hyper: HyperParams, initial_dist=None):
        config.check_dimension(table.num_policies)
        super().__init__(table, initial_dist)
        self.config = config
        self.hyper = hyper
        self.cumulative_estimates = np.zeros(table.num_policies)
        self._lam = math.nan
        self._u = None

    @property
    def params(self) -> dict:
        return {"eta": self.config.eta, "nu": self.config.nu, "epsilon": self.config.epsilon}

    def _learn(self, pend, loss):
        est = np.zeros(self.num_policies)
        est[pend.mask] = loss / pend.action_prob
        self.cumulative_estimates += est
        p, lam, u, _, _ = solve_raw(self.cumulative_estimates, self.config, self._lam, self._u)
        self.p, self._lam, self._u = p, lam, u
        return est


class EXP4(Learner):
    """Exponential weights over policies with uniform action exploration.

    Works on nonnegative losses ``loss + 1`` (for the shifted multiclass loss
    this is the zero-one loss).  Plays a uniformly random action with
    probability ``gamma`` and otherwise the action of a policy drawn from the
    weights; the estimate divides by the mixed action probability.
    """

    name = "exp4"

    def __init__(self, table: PolicyTable, eta: float, gamma: float, initial_dist=None):
        if not eta > 0 or not 0 <= gamma <= 1:
            raise ConfigError(f"need eta > 0 and gamma in [0, 1], got eta={eta}, gamma={gamma}")
        super().__init__(table, initial_dist)
        self.eta = float(eta)
        self.gamma = float(gamma)
        self._logw = np.log(np.maximum(self.p, 1e-300))

    @property
    def params(self) -> dict:
        return {"eta": self.eta, "gamma": self.gamma}

    def action_distribution(self, context):
        q = super().action_distribution(context)
        k = self.policy_table.num_actions
        return (1.0 - self.gamma) * q + self.gamma / k

    def _choose(self, context, u):
        k = self.policy_table.num_actions
        g = self.gamma
        if u < g:
            i = -1
            a = min(int(u / g * k), k - 1)
        else:
            i = _sample_index(np.cumsum(self.p), (u - g) / (1.0 - g))
            a = int(self._columns[context, i])
        return i, a

    def _action_prob(self, mask):
        return (1.0 - self.gamma) * float(self.p[mask].sum()) + self.gamma / self.policy_table.num_actions

    def _learn(self, pend, loss):
        est = np.zeros(self.num_policies)
        est[pend.mask] = (loss + 1.0) / pend.action_prob
        self._logw -= self.eta * est
        self._logw -= self._logw.max()
        w = np.exp(self._logw)
        self.p = w / w.sum()
        return est


class FixedLearner(Learner):
    """Plays a fixed distribution over policies and never adapts."""

    name = "fixed"

    def _learn(self, pend, loss):
        est = np.zeros(self.num_policies)
        est[pend.mask] = loss / pend.action_prob
        return est


def lbftrl_new(table: PolicyTable, s: float, T: int, overrides: Optional[HyperParams] = None,
               initial_dist=None, **solver_options) -> LBFTRL:
    """Build an LB-FTRL learner with default tuning, optionally overridden per field."""
    base = default_params(table.num_policies, s, T)
    if overrides is not None:
        base = replace(
            base,
            eta=overrides.eta if overrides.eta is not None else base.eta,
            nu=overrides.nu if overrides.nu is not None else base.nu,
            epsilon=overrides.epsilon if overrides.epsilon is not None else base.epsilon,
        )
    config = SolverConfig(eta=base.eta, nu=base.nu, epsilon=base.epsilon, **solver_options)
    return LBFTRL(table, config, base, initial_dist)


def exp4_params(num_policies: int, num_actions: int, T: int) -> tuple[float, float]:
    """Classical tuning ``eta = sqrt(log N / (K T))``, ``gamma = min(1, sqrt(K log N / T))``."""
    logn = math.log(max(num_policies, 2))
    eta = math.sqrt(logn / (num_actions * T))
    gamma = min(1.0, math.sqrt(num_actions * logn / T))
    return eta, gamma


def exp4_new(table: PolicyTable, T: int, eta: Optional[float] = None, gamma: Optional[float] = None,
             initial_dist=None) -> EXP4:
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    d_eta, d_gamma = exp4_params(table.num_policies, table.num_actions, T)
    return EXP4(table, d_eta if eta is None else eta, d_gamma if gamma is None else gamma, initial_dist)
