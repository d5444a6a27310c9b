import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regmdp import (
    MdpModel,
    ModelValidationError,
    NonAbsorbingError,
    Policy,
    PriorSpec,
    StartWeights,
    expected_action_rewards,
    load_model,
    policy_reward,
    policy_transition,
    save_model,
)
from regmdp.experiments import example1_model

from conftest import random_model


def test_expected_rewards_example1():
    m = example1_model(10)
    r = expected_action_rewards(m)
    # 1-based state 1 is index 0: 0.35 * 12 + 0.65 * 11
    assert r[0, 0] == pytest.approx(11.35, abs=1e-12)
    assert np.all(r[9] == 0.0)


def test_expected_rewards_deterministic_edge():
    P = np.zeros((1, 2, 2))
    R = np.zeros((1, 2, 2))
    P[0, 0, 1], R[0, 0, 1] = 1.0, 3.5
    P[0, 1, 1] = 1.0
    m = MdpModel(P, R, 0.9, (1,))
    assert expected_action_rewards(m)[0, 0] == 3.5


def test_zero_probability_rewards_ignored():
    m = example1_model(5)
    R = m.rewards.copy()
    R[0, 0, 1] = 1e6  # P[0, 0, 1] == 0
    assert np.array_equal(expected_action_rewards(m.replace(rewards=R)), expected_action_rewards(m))


def test_policy_transition_collapses_and_mixes():
    m = example1_model(10)
    for a in (0, 1):
        pol = Policy.deterministic([a] * 10, 2)
        assert np.array_equal(policy_transition(m, pol), m.transitions[a])
    uni = Policy(np.full((10, 2), 0.5))
    Ppi = policy_transition(m, uni)
    np.testing.assert_allclose(Ppi, (m.transitions[0] + m.transitions[1]) / 2)
    # 1-based state 1 -> states 9 (idx 8), 2 (idx 1), 10 (idx 9)
    assert Ppi[0, 8] == pytest.approx(0.175)
    assert Ppi[0, 1] == pytest.approx(0.125)
    assert Ppi[0, 9] == pytest.approx(0.70)


def test_policy_reward():
    m = example1_model(10)
    r = expected_action_rewards(m)
    assert np.array_equal(policy_reward(m, Policy.deterministic([1] * 10, 2)), r[:, 1])
    uni = policy_reward(m, Policy(np.full((10, 2), 0.5)))
    assert uni[0] == pytest.approx(0.5 * r[0, 0] + 0.5 * r[0, 1])
    assert uni[9] == 0.0


def test_shape_mismatch():
    with pytest.raises(ModelValidationError):
        policy_reward(example1_model(5), Policy(np.full((4, 2), 0.5)))


@pytest.mark.parametrize("mutate, message", [
    (lambda P, R: P.__setitem__((0, 0, 0), P[0, 0, 0] + 1e-6), "sums to"),
    (lambda P, R: P.__setitem__((0, 0, 8), -0.1), "negative"),
    (lambda P, R: R.__setitem__((1, 9, 9), 1.0), "nonzero reward"),
    (lambda P, R: (P.__setitem__((0, 9, 9), 0.5), P.__setitem__((0, 9, 0), 0.5)), "not absorbing"),
])
def test_validation_names_violation(mutate, message):
    m = example1_model(10)
    P, R = m.transitions.copy(), m.rewards.copy()
    mutate(P, R)
    with pytest.raises(ModelValidationError, match=message):
        MdpModel(P, R, 1.0, (9,))


def test_small_row_error_renormalized():
    m = example1_model(10)
    P = m.transitions.copy()
    P[0, 0, 8] += 5e-10
    fixed = MdpModel(P, m.rewards, 1.0, (9,))
    assert abs(fixed.transitions[0, 0].sum() - 1.0) < 1e-15


def test_discount_one_needs_absorption():
    P = np.zeros((1, 3, 3))
    P[0, 0, 1] = P[0, 1, 0] = 1.0
    P[0, 2, 2] = 1.0
    with pytest.raises(NonAbsorbingError) as info:
        MdpModel(P, np.zeros_like(P), 1.0, (2,))
    assert info.value.state in (0, 1)
    with pytest.raises(ModelValidationError, match="terminal"):
        MdpModel(P, np.zeros_like(P), 1.0, ())
    MdpModel(P, np.zeros_like(P), 0.9, (2,))


def test_arrays_are_immutable():
    m = example1_model(4)
    with pytest.raises(ValueError):
        m.transitions[0, 0, 0] = 1.0


def test_prior_spec():
    p = PriorSpec.single(3, 2, 0, lam=0.5, kappa=0.25, q_other=1e-3)
    np.testing.assert_allclose(p.prior_probs[1], [0.999, 0.001])
    np.testing.assert_array_equal(p.penalty(), [[0, 1]] * 3)
    with pytest.raises(ModelValidationError, match="floor"):
        PriorSpec.single(3, 2, 0, q_other=1e-13)
    with pytest.raises(ModelValidationError):
        PriorSpec(3, 2, {0: {5}})
    with pytest.raises(ModelValidationError):
        PriorSpec(3, 2, lam=-1.0)
    with pytest.raises(ModelValidationError):
        PriorSpec(3, 2, kappa=0.0)
    sets = PriorSpec(3, 3, {0: {0, 2}})
    np.testing.assert_array_equal(sets.penalty(), [[0, 1, 0], [0, 0, 0], [0, 0, 0]])


def test_start_weights_validation():
    with pytest.raises(ModelValidationError):
        StartWeights([0.0, 0.0])
    with pytest.raises(ModelValidationError):
        StartWeights([1.0, -1.0])


def test_model_round_trip(tmp_path):
    m = random_model(3, S=5, A=3)
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert np.array_equal(back.transitions, m.transitions)
    assert np.array_equal(back.rewards, m.rewards)
    assert back.discount == m.discount and back.terminal_states == m.terminal_states
    assert back.digest() == m.digest()
    text = path.read_text()
    assert '"version": 1' in text


def test_model_file_rejects_missing_fields(tmp_path):
    path = tmp_path / "m.json"
    path.write_text('{"version": 1, "num_states": 2}')
    with pytest.raises(ModelValidationError, match="missing"):
        load_model(path)


policies = st.integers(0, 10_000)


@settings(max_examples=50, deadline=None)
@given(seed=policies, mix=st.floats(0, 1))
def test_stochasticity_and_linearity(seed, mix):
    m = random_model(seed, S=5, A=3)
    rng = np.random.default_rng(seed + 1)
    p1 = Policy(rng.dirichlet(np.ones(3), size=5))
    p2 = Policy(rng.dirichlet(np.ones(3), size=5))
    np.testing.assert_allclose(policy_transition(m, p1).sum(axis=1), 1.0, atol=1e-9)
    combo = Policy(mix * p1.probs + (1 - mix) * p2.probs)
    np.testing.assert_allclose(policy_reward(m, combo),
                               mix * policy_reward(m, p1) + (1 - mix) * policy_reward(m, p2),
                               rtol=1e-12, atol=1e-12)


def test_terminal_absorption_powers():
    m = example1_model(10)
    Ppi = policy_transition(m, Policy.deterministic([1] * 10, 2))
    unit = np.eye(10)[9]
    Pk = np.eye(10)
    for _ in range(6):
        Pk = Pk @ Ppi
        assert np.array_equal(Pk[9], unit)
