"""Verification suites shared by the CLI and the test-suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LossVector, PolicyTable, policy_cost_vector, shift_multiclass_loss
from .harness import ExperimentConfig, checkpoint_rounds, run_episode
from .learners import STABILITY_NU_MAX, LBFTRL, _sample_index, importance_weighted_estimate
from .solver import SolverConfig, oracle_solve, solve_ftrl

ORACLE_TOL = 1e-4
STABILITY_LIMIT = 2.0 + 1e-9


@dataclass
class CheckResult:
    name: str
    status: str  # PASS, FAIL or SKIP
    detail: str

    @property
    def ok(self) -> bool:
        return self.status != "FAIL"

    def line(self) -> str:
        return f"{self.status:4s}  {self.name}: {self.detail}"


def random_solver_instance(rng: np.random.Generator, n: int | None = None) -> tuple[np.ndarray, SolverConfig]:
    """Random FTRL problem of the kind met in runs.

    ``N`` in {2, 3, 4, 6}, ``eta ~ U[0.01, 1]``, ``nu = 1/16``,
    ``epsilon`` in {1e-4, 1e-2}; cumulative losses are uniform on
    ``[-M, M]`` with a log-uniform magnitude ``M`` in ``[1, 1000]``.
    """
    if n is None:
        n = int(rng.choice([2, 3, 4, 6]))
    eta = float(rng.uniform(0.01, 1.0))
    eps = float(rng.choice([1e-4, 1e-2]))
    scale = 10.0 ** rng.uniform(0.0, 3.0)
    L = rng.uniform(-scale, scale, size=n)
    return L, SolverConfig(eta=eta, nu=1.0 / 16.0, epsilon=eps)


def oracle_check(trials: int, seed: int = 0, oracle_iters: int = 1_000_000) -> list[dict]:
    """Compare :func:`solve_ftrl` against :func:`oracle_solve` on random instances."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rows = []
    for k in range(trials):
        L, cfg = random_solver_instance(rng)
        a = solve_ftrl(L, cfg).point.weights
        b = oracle_solve(L, cfg, iters=oracle_iters).weights
        rows.append({"trial": k, "N": L.size, "eta": cfg.eta, "nu": cfg.nu, "epsilon": cfg.epsilon,
                     "max_deviation": float(np.abs(a - b).max())})
    return rows


def estimator_mc(p, table: PolicyTable, context: int, loss: LossVector, samples: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monte-Carlo mean and standard error of the importance-weighted estimate.

    Each sample draws a policy from ``p`` by inverse CDF, plays its action and
    forms the estimate from that action's loss.

    Returns:
        (mean, standard error, exact policy cost vector)
    """
    w = np.asarray(p, dtype=np.float64)
    cdf = np.cumsum(w)
    total = np.zeros(w.size)
    total_sq = np.zeros(w.size)
    for u in rng.random(samples):
        i = _sample_index(cdf, float(u))
        a = table.action(i, context)
        est = importance_weighted_estimate(w, table, context, a, float(loss.losses[a]))
        total += est
        total_sq += est * est
    mean = total / samples
    var = np.maximum(total_sq / samples - mean * mean, 0.0)
    return mean, np.sqrt(var / samples), policy_cost_vector(table, context, loss)


def unbiasedness_check(table: PolicyTable, rng: np.random.Generator, samples: int = 100_000,
                       loss: LossVector | None = None) -> CheckResult:
    N, C, K = table.num_policies, table.num_contexts, table.num_actions
    p = rng.dirichlet(np.ones(N))
    x = int(rng.integers(C))
    if loss is None:
        loss = shift_multiclass_loss(int(rng.integers(K)), K)
    mean, se, target = estimator_mc(p, table, x, loss, samples, rng)
    z = np.abs(mean - target) / np.maximum(se, 1e-300)
    ok = np.all(np.abs(mean - target) <= 3.0 * se + 1e-12)
    worst = float(np.max(np.where(se > 0, z, 0.0)))
    return CheckResult("estimator unbiasedness", "PASS" if ok else "FAIL",
                       f"{samples} resamples, worst |mean - cost| = {worst:.2f} standard errors (limit 3)")


def _nonpositive_losses(env) -> bool:
    if env.kind == "script":
        return bool(np.all(env.script.losses <= 0))
    return True


def invariant_suite(cfg: ExperimentConfig, seed: int = 0, mc_samples: int = 100_000) -> list[CheckResult]:
    """Run every runtime invariant on the episodes described by ``cfg``."""
    env = cfg.build_environment()
    probe = cfg.build_learner(env)
    is_ftrl = isinstance(probe, LBFTRL)
    eps = probe.config.epsilon if is_ftrl else 0.0
    worst = {"sum": 0.0, "floor": math.inf}
    checkpoints = checkpoint_rounds(cfg.T)
    prefix = np.zeros((cfg.repeats, checkpoints.size))
    run_idx = 0

    def on_round(t, learner, est):
        worst["sum"] = max(worst["sum"], abs(learner.p.sum() - 1.0))
        worst["floor"] = min(worst["floor"], learner.p.min())
        k = np.searchsorted(checkpoints, t)
        if k < checkpoints.size and checkpoints[k] == t:
            prefix[run_idx, k] = learner.second_order_sum

    runs = []
    for run_idx in range(cfg.repeats):
        e = cfg.build_environment()
        seed = (cfg.base_seed + run_idx) % 2**64
        runs.append(run_episode(cfg.build_learner(e), e, cfg.T, seed, on_round=on_round))

    out = []
    floor_ok = worst["floor"] >= eps - 1e-12
    sum_ok = worst["sum"] <= 1e-10
    out.append(CheckResult(
        "normalization", "PASS" if (sum_ok and floor_ok) else "FAIL",
        f"max |sum p - 1| = {worst['sum']:.2e} (limit 1e-10), min p = {worst['floor']:.3e} (floor {eps:.3e})",
    ))

    max_ratio = max(r.max_stability_ratio for r in runs)
    if not is_ftrl:
        out.append(CheckResult("iterate stability", "SKIP", f"not applicable to {cfg.learner}"))
    elif probe.config.nu > STABILITY_NU_MAX:
        out.append(CheckResult("iterate stability", "SKIP",
                               f"nu = {probe.config.nu:g} is outside the precondition nu <= 1/16 "
                               f"(observed max ratio {max_ratio:.6f})"))
    elif not _nonpositive_losses(env):
        out.append(CheckResult("iterate stability", "SKIP", "script has positive losses; guarantee needs losses <= 0"))
    else:
        out.append(CheckResult("iterate stability", "PASS" if max_ratio <= STABILITY_LIMIT else "FAIL",
                               f"max p_(t+1,i)/p_(t,i) = {max_ratio:.9f} (limit 2 + 1e-9)"))

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out.append(unbiasedness_check(env.policy_table, rng, mc_samples))

    if not is_ftrl:
        out.append(CheckResult("second-order sum", "SKIP", f"not applicable to {cfg.learner}"))
    else:
        mean = prefix.mean(axis=0)
        se = prefix.std(axis=0, ddof=1) / math.sqrt(cfg.repeats) if cfg.repeats > 1 else np.zeros_like(mean)
        ok = bool(np.all(mean <= cfg.s * checkpoints + 3 * se))
        out.append(CheckResult("second-order sum", "PASS" if ok else "FAIL",
                               f"mean sum_t sum_i p_ti c_ti^2 <= s t at {checkpoints.size} prefixes over "
                               f"{cfg.repeats} runs; final {mean[-1]:.2f} vs sT = {cfg.s * cfg.T:g}"))

    trace_ok = all(abs(r.regret_trace[-1] - r.realized_regret) <= 1e-9 for r in runs)
    out.append(CheckResult("regret trace", "PASS" if trace_ok else "FAIL",
                           "last checkpoint equals final realized regret"))

    if runs[0].pseudo_regret is not None and len(runs) >= 2:
        ps = np.array([r.pseudo_regret for r in runs])
        se = ps.std(ddof=1) / math.sqrt(ps.size)
        out.append(CheckResult("pseudo-regret sign", "PASS" if ps.mean() >= -2 * se else "FAIL",
                               f"mean {ps.mean():.2f}, standard error {se:.2f} (need mean >= -2 se)"))
    return out

