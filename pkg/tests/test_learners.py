import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditlab.checks import estimator_mc
from banditlab.core import ConfigError, InputError, LossVector, PolicyTable, ProtocolError
from banditlab.environments import build_hard_class
from banditlab.learners import (
    EXP4,
    FixedLearner,
    HyperParams,
    exp4_new,
    exp4_params,
    importance_weighted_estimate,
    induced_action_dist,
    lbftrl_new,
    default_params,
)


def test_default_params_example():
    hp = default_params(2, 1.0, 100)
    assert hp.eta == pytest.approx(math.sqrt(math.log(2) / 100))
    assert hp.eta == pytest.approx(0.083255, abs=1e-6)
    assert hp.nu == 0.0625
    assert hp.epsilon == pytest.approx(0.005)
    assert hp.derived_from == (1.0, 100, 2)


def test_single_policy_learner():
    table = PolicyTable(np.zeros((1, 3), dtype=int), 2)
    learner = lbftrl_new(table, 1.0, 50)
    assert learner.current_dist.weights.tolist() == [1.0]
    assert learner.config.eta == pytest.approx(math.sqrt(math.log(2) / 50))
    rng = np.random.default_rng(0)
    for _ in range(5):
        learner.act(0, rng)
        learner.update(-1.0)
    assert learner.p.tolist() == [1.0]


def test_overrides_respected(two_policy_table):
    learner = lbftrl_new(two_policy_table, 1.0, 100, HyperParams(eta=0.1))
    assert learner.config.eta == 0.1
    assert learner.config.nu == 0.0625
    assert learner.config.epsilon == pytest.approx(0.005)


def test_epsilon_too_large(two_policy_table):
    with pytest.raises(ConfigError):
        lbftrl_new(two_policy_table, 1.0, 100, HyperParams(epsilon=0.5))


def test_initial_state_uniform(two_policy_table):
    learner = lbftrl_new(two_policy_table, 1.0, 100)
    assert learner.p.tolist() == [0.5, 0.5]
    assert learner.round == 0 and learner.pending is None


def test_point_mass_always_picks_first(two_policy_table):
    learner = FixedLearner(two_policy_table, [1.0, 0.0])
    rng = np.random.default_rng(1)
    for _ in range(100):
        i, a = learner.act(1, rng)
        assert (i, a) == (0, 1)
        learner.update(0.0)


def test_action_prob_at_least_policy_prob(rng):
    table = PolicyTable(rng.integers(0, 3, size=(6, 4)), 3)
    learner = lbftrl_new(table, 1.0, 100)
    for t in range(200):
        x = int(rng.integers(4))
        i, a = learner.act(x, rng)
        assert learner.pending.action_prob >= learner.p[i] - 1e-15
        assert a == table.action(i, x)
        learner.update(-1.0 if rng.random() < 0.5 else 0.0)


def test_shared_action_has_prob_one():
    table = PolicyTable(np.array([[1], [1]]), 2)
    learner = lbftrl_new(table, 1.0, 10)
    learner.act(0, np.random.default_rng(0))
    assert learner.pending.action_prob == 1.0


def test_protocol_errors(two_policy_table):
    learner = lbftrl_new(two_policy_table, 1.0, 10)
    with pytest.raises(ProtocolError):
        learner.update(0.0)
    learner.act(0, np.random.default_rng(0))
    with pytest.raises(ProtocolError):
        learner.act(0, np.random.default_rng(0))


def test_loss_outside_range_rejected(two_policy_table):
    learner = lbftrl_new(two_policy_table, 1.0, 10)
    learner.act(0, np.random.default_rng(0))
    with pytest.raises(InputError):
        learner.update(-1.5)
    assert learner.pending is not None  # still waiting for a valid loss


def test_estimate_example():
    table = PolicyTable(np.array([[0], [1]]), 2)
    est = importance_weighted_estimate(np.array([0.25, 0.75]), table, 0, 1, -1.0)
    assert est[0] == 0.0
    assert est[1] == pytest.approx(-4.0 / 3.0)


def test_estimate_when_all_agree():
    table = PolicyTable(np.array([[1], [1]]), 2)
    assert importance_weighted_estimate(np.array([0.9, 0.1]), table, 0, 1, -1.0).tolist() == [-1.0, -1.0]


def test_zero_loss_keeps_distribution(rng):
    table = PolicyTable(rng.integers(0, 3, size=(5, 2)), 3)
    learner = lbftrl_new(table, 1.0, 100)
    for _ in range(30):
        learner.act(int(rng.integers(2)), rng)
        learner.update(-1.0)
    before = learner.p.copy()
    learner.act(0, rng)
    est = learner.update(0.0)
    assert not est.any()
    assert np.abs(learner.p - before).max() <= 1e-10


def test_update_increments_and_records(two_policy_table):
    learner = lbftrl_new(two_policy_table, 1.0, 10)
    learner.act(0, np.random.default_rng(0))
    learner.update(-1.0)
    assert learner.round == 1 and learner.pending is None
    assert math.isfinite(learner.last_stability_ratio)
    assert learner.second_order_sum > 0


def test_induced_action_dist_examples(rng):
    table = PolicyTable(np.zeros((3, 1), dtype=int), 4)
    assert induced_action_dist(np.full(3, 1 / 3), table, 0).tolist() == pytest.approx([1, 0, 0, 0])
    table = PolicyTable(np.arange(4).reshape(4, 1), 4)
    assert np.allclose(induced_action_dist(np.full(4, 0.25), table, 0), 0.25)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_induced_action_dist_sums_to_one(n, c, k, seed):
    r = np.random.default_rng(seed)
    table = PolicyTable(r.integers(0, k, size=(n, c)), k)
    q = induced_action_dist(r.dirichlet(np.ones(n)), table, int(r.integers(c)))
    assert abs(q.sum() - 1) <= 1e-12 and q.min() >= 0


def test_stability_on_hard_instance():
    table = build_hard_class(2, 3)
    learner = lbftrl_new(table, 1.0, 3000)
    rng = np.random.default_rng(5)
    for _ in range(3000):
        x = int(rng.integers(2))
        _, a = learner.act(x, rng)
        learner.update(-1.0 if a == 0 and rng.random() < 1 / 3 else 0.0)
        assert learner.last_stability_ratio <= 2 + 1e-9


def test_estimator_unbiased(rng):
    table = PolicyTable(rng.integers(0, 3, size=(5, 2)), 3)
    p = rng.dirichlet(np.ones(5))
    loss = LossVector([0.0, -1.0, 0.0])
    mean, se, target = estimator_mc(p, table, 1, loss, 100_000, rng)
    assert np.all(np.abs(mean - target) <= 3 * se + 1e-12)


# EXP4 ------------------------------------------------------------------------

def test_exp4_params():
    eta, gamma = exp4_params(10, 5, 1000)
    assert eta == pytest.approx(math.sqrt(math.log(10) / 5000))
    assert gamma == pytest.approx(math.sqrt(5 * math.log(10) / 1000))
    assert exp4_params(10, 5, 1)[1] == 1.0


def test_exp4_stays_uniform_without_errors(rng):
    # The shifted loss -1 is a zero-one loss of 0 for EXP4.
    table = PolicyTable(rng.integers(0, 3, size=(4, 2)), 3)
    learner = exp4_new(table, 100)
    for _ in range(100):
        learner.act(int(rng.integers(2)), rng)
        learner.update(-1.0)
        assert np.allclose(learner.p, 0.25, atol=1e-15)


def test_exp4_weights_normalized(rng):
    table = PolicyTable(rng.integers(0, 3, size=(6, 2)), 3)
    learner = exp4_new(table, 500)
    for _ in range(500):
        x = int(rng.integers(2))
        learner.act(x, rng)
        learner.update(0.0 if rng.random() < 0.7 else -1.0)
        assert learner.p.min() > 0 and abs(learner.p.sum() - 1) <= 1e-12


def test_exp4_exploration_draw():
    table = PolicyTable(np.zeros((2, 1), dtype=int), 4)
    learner = EXP4(table, eta=0.1, gamma=1.0)
    i, a = learner._choose(0, 0.6)
    assert i == -1 and a == 2
    assert np.allclose(learner.action_distribution(0), 0.25)
