from fractions import Fraction

import numpy as np
import pytest

from banditlab.core import EnvError, InputError, LossVector, PolicyTable
from banditlab.environments import (
    AdversarialScript,
    HardInstanceSpec,
    StochasticMulticlassSpec,
    build_hard_class,
    duplicate_examples,
    hard_hypothesis_index,
    hard_instance_expected_rewards,
    hard_instance_probability_table,
    hard_instance_step,
    random_multiclass_instance,
    sample_stochastic,
    script_step,
    stochastic_step,
    validate_sparsity,
)


def test_stochastic_spec_validation():
    with pytest.raises(InputError):
        StochasticMulticlassSpec([0.5, 0.6], [[1.0], [1.0]])
    with pytest.raises(InputError):
        StochasticMulticlassSpec([1.0], [[0.5, 0.4]])
    with pytest.raises(InputError):
        StochasticMulticlassSpec([1.0], [[1.2, -0.2]])


def test_point_mass_spec_is_deterministic(rng):
    spec = StochasticMulticlassSpec([0, 1, 0], [[1, 0], [0, 1], [1, 0]])
    assert {stochastic_step(spec, rng) for _ in range(50)} == {(1, 1)}


def test_sample_stochastic_frequencies(rng):
    spec = StochasticMulticlassSpec([0.3, 0.7], [[0.2, 0.8], [0.6, 0.4]])
    x, y = sample_stochastic(spec, rng, 200_000)
    assert abs((x == 1).mean() - 0.7) < 4 * np.sqrt(0.21 / 200_000)
    sel = y[x == 0]
    assert abs((sel == 1).mean() - 0.8) < 4 * np.sqrt(0.16 / sel.size)


def test_script_step_verbatim():
    script = AdversarialScript([1, 0], [[-1.0, 0.0], [0.0, -0.5]])
    x, loss = script_step(script, 1)
    assert x == 0 and loss.losses.tolist() == [0.0, -0.5]
    with pytest.raises(InputError):
        script_step(script, 2)


def test_validate_sparsity():
    assert validate_sparsity(LossVector([-1.0, 0.0, 0.0], 1.0))
    with pytest.raises(EnvError):
        validate_sparsity(LossVector([-1.0, -1.0, 0.0], 1.0))


def test_script_fails_fast_on_sparsity():
    with pytest.raises(EnvError):
        AdversarialScript([0], [[-1.0, -1.0]], sparsity=1.0)
    AdversarialScript([0], [[-1.0, -1.0]], sparsity=2.0)


def test_hard_spec_validation():
    with pytest.raises(InputError):
        HardInstanceSpec(2, 3, (2, 1))
    with pytest.raises(InputError):
        HardInstanceSpec(2, 3, (0, 0))
    with pytest.raises(InputError):
        HardInstanceSpec(2, 3, (0, 4))
    assert HardInstanceSpec(2, 3).num_actions == 4


@pytest.mark.parametrize("target", [None, (1, 2)])
def test_hard_probabilities_sum_exactly(target):
    for row in hard_instance_probability_table(HardInstanceSpec(3, 7, target)):
        assert sum(row) == Fraction(1)


def test_hard_expected_reward_examples():
    K = 10
    r0 = hard_instance_expected_rewards(HardInstanceSpec(2, K))
    assert np.allclose(r0[:, 1:], 2 / (3 * K))
    r = hard_instance_expected_rewards(HardInstanceSpec(2, K, (1, 4)))
    assert np.allclose(r[:, 0], 1 / 3)
    assert r[1, 4] == pytest.approx(2 / 3 - (K - 1) / K**2)
    assert r[1, 4] == pytest.approx(0.576667, abs=1e-6)
    assert r[1, 5] == pytest.approx(1 / K**2)
    assert np.allclose(r[0, 1:], 2 / (3 * K))


def test_hard_step_returns_basis_vector(rng):
    spec = HardInstanceSpec(3, 4, (0, 2))
    for _ in range(100):
        x, r = hard_instance_step(spec, rng)
        assert 0 <= x < 3 and r.shape == (5,) and r.sum() == 1.0 and set(r) <= {0.0, 1.0}


def test_build_hard_class():
    table = build_hard_class(2, 3)
    assert table.num_policies == 7 and table.num_actions == 4
    assert not table.table[0].any()
    for x in range(2):
        for y in range(1, 4):
            row = table.table[hard_hypothesis_index(x, y, 3)]
            assert np.count_nonzero(row) == 1 and row[x] == y


@pytest.mark.parametrize("target,best", [(None, 0), ((2, 3), hard_hypothesis_index(2, 3, 5))])
def test_best_hypothesis_is_planted(target, best):
    spec = HardInstanceSpec(4, 5, target)
    r = hard_instance_expected_rewards(spec)
    table = build_hard_class(4, 5)
    value = r[np.arange(4), table.table].sum(axis=1)
    assert int(np.argmax(value)) == best
    assert np.sum(value == value.max()) == 1


def test_json_round_trips():
    spec = HardInstanceSpec(4, 50, (1, 7))
    assert spec.to_dict() == {"C": 4, "K": 50, "target": [1, 7]}
    assert HardInstanceSpec.from_dict(spec.to_dict()) == spec
    assert HardInstanceSpec.from_dict({"C": 1, "K": 2, "target": None}).target is None
    s = StochasticMulticlassSpec([0.5, 0.5], [[1, 0], [0.3, 0.7]])
    s2 = StochasticMulticlassSpec.from_dict(s.to_dict())
    assert np.array_equal(s2.label_probs, s.label_probs)
    a = AdversarialScript([0], [[-1.0, 0.0]])
    assert np.array_equal(AdversarialScript.from_dict(a.to_dict()).losses, a.losses)


def test_random_instance_reproducible():
    s1, t1 = random_multiclass_instance(5, 3, 5, seed=9)
    s2, t2 = random_multiclass_instance(5, 3, 5, seed=9)
    assert t1 == t2 and np.array_equal(s1.label_probs, s2.label_probs)
    assert sorted(t1.table[:, 0]) == [0, 1, 2, 3, 4]


def test_duplicate_examples():
    spec = StochasticMulticlassSpec([0.25, 0.75], [[0.5, 0.5], [0.2, 0.8]])
    table = PolicyTable(np.array([[0, 1], [1, 1]]), 2)
    new_spec, new_table, origin = duplicate_examples(spec, table, 10)
    assert new_spec.num_contexts == 20 and origin.tolist() == [0] * 10 + [1] * 10
    assert set(new_spec.label_probs.ravel()) <= {0.0, 1.0}
    assert new_spec.label_probs[:10, 1].sum() == 5 and new_spec.label_probs[10:, 1].sum() == 8
    assert new_table.num_policies == 2
    assert np.array_equal(new_table.table[:, 15], table.table[:, 1])
    assert new_spec.context_probs.sum() == pytest.approx(1.0)
