"""Constructive game families."""

import itertools

import numpy as np
import pytest

import mpglearn as m
from mpglearn import CongestionSpec, GameValidationError, JointPolicy
from mpglearn.game import action_decode_table, joint_index


def test_congestion_defaults_build_valid_game():
    game = m.build_congestion(CongestionSpec())
    assert game.num_players == 8
    assert game.num_states == 2
    assert game.num_actions == 4
    assert game.discount == 0.99
    assert game.rewards.min() >= 0.0 and game.rewards.max() <= 1.0


def test_congestion_crowded_action_triggers_distancing():
    game = m.build_congestion(CongestionSpec())
    everyone_on_a = joint_index((0,) * 8, 4)
    assert game.transition[0, everyone_on_a, 1] == 1.0  # safe -> distancing
    assert game.transition[1, everyone_on_a, 1] == 1.0


def test_congestion_split_players_stay_safe():
    spec = CongestionSpec(num_players=2, weights_safe=(1.0, 2.0), weights_distancing=(0.5, 1.0), penalty=0.5, discount=0.9)
    game = m.build_congestion(spec)
    split = joint_index((0, 1), 2)
    assert game.transition[0, split, 0] == 1.0
    assert game.transition[1, split, 0] == 1.0


def test_congestion_hand_rescaled_reward():
    # Two players, safe weights (1, 2): alone on action B in safe earns raw
    # 2 * 1 = 2; the global raw maximum is 2 * 2 = 4 (both on B), so 0.5 after
    # rescaling. The penalty keeps distancing raws at zero or above.
    spec = CongestionSpec(num_players=2, weights_safe=(1.0, 2.0), weights_distancing=(0.5, 1.0), penalty=0.5, discount=0.9)
    game = m.build_congestion(spec)
    alone_on_b = joint_index((1, 0), 2)  # player 0 on B, player 1 on A
    assert game.rewards[0, 0, alone_on_b] == pytest.approx(0.5)


def test_congestion_transitions_exchangeable():
    spec = CongestionSpec(num_players=3, weights_safe=(1.0, 2.0), weights_distancing=(0.5, 1.0), penalty=0.4, discount=0.9)
    game = m.build_congestion(spec)
    decode = action_decode_table(3, 2)
    for ja in range(game.num_joint_actions):
        for perm in itertools.permutations(range(3)):
            permuted = joint_index(tuple(decode[ja][list(perm)]), 2)
            assert np.array_equal(game.transition[:, ja, :], game.transition[:, permuted, :])


def test_congestion_rejects_bad_weights_and_penalty():
    with pytest.raises(GameValidationError, match="increasing"):
        CongestionSpec(weights_safe=(2.0, 1.0, 3.0, 4.0))
    with pytest.raises(GameValidationError, match="penalty"):
        m.build_congestion(CongestionSpec(num_players=2, penalty=100.0))


def test_cooperative_random_single_player_is_mdp():
    game = m.build_cooperative_random(3, 1, 2, 0.9, np.random.default_rng(0))
    assert game.num_players == 1
    assert game.num_joint_actions == 2


def test_cooperative_random_rewards_identical_and_reproducible():
    game_a = m.build_cooperative_random(2, 3, 2, 0.8, np.random.default_rng(7))
    game_b = m.build_cooperative_random(2, 3, 2, 0.8, np.random.default_rng(7))
    for i in range(3):
        assert np.array_equal(game_a.rewards[i], game_a.rewards[0])
    assert np.array_equal(game_a.transition, game_b.transition)
    assert np.array_equal(game_a.rewards, game_b.rewards)


def test_cooperative_potential_property_unilateral_deviations():
    # Identical rewards mean every player's value *is* the shared potential:
    # a unilateral deviation changes all players' values by the same amount.
    rng = np.random.default_rng(8)
    game = m.build_cooperative_random(2, 3, 2, 0.85, rng)
    base = JointPolicy.random(3, 2, 2, rng)
    alt = base.replace_player(1, rng.dirichlet(np.ones(2), size=2))
    diff = (
        m.evaluate(game, alt).values @ game.initial_dist
        - m.evaluate(game, base).values @ game.initial_dist
    )
    assert np.max(np.abs(diff - diff[0])) <= 1e-8


def test_matrix_game_matching_pennies_uniform_is_minimax():
    pennies = np.array([[1.0, 0.0], [0.0, 1.0]])
    game = m.build_matrix_game(pennies, "zero_sum", 0.9)
    report = m.nash_gap(game, JointPolicy.uniform(2, 1, 2))
    assert np.all(np.abs(report.per_player_gap) <= 1e-8)
    # Value at the uniform pair is the game value 1/2, scaled by the horizon.
    assert report.player_values[0] == pytest.approx(0.5 / 0.1, abs=1e-8)


def test_matrix_game_cooperative_unique_max_vertex():
    payoff = np.array([[0.3, 0.2], [0.1, 0.95]])
    game = m.build_matrix_game(payoff, "cooperative", 0.7)
    vertex = np.zeros((2, 1, 2))
    vertex[:, 0, 1] = 1.0
    report = m.nash_gap(game, JointPolicy(vertex))
    assert np.all(np.abs(report.per_player_gap) <= 1e-9)


def test_matrix_game_coordination_has_two_pure_equilibria():
    payoff = np.eye(2)
    game = m.build_matrix_game(payoff, "cooperative", 0.5)
    for cell in ((0, 0), (1, 1)):
        probs = np.zeros((2, 1, 2))
        probs[0, 0, cell[0]] = 1.0
        probs[1, 0, cell[1]] = 1.0
        report = m.nash_gap(game, JointPolicy(probs))
        assert report.max_gap <= 1e-9
    # The mismatched vertex is not an equilibrium.
    probs = np.zeros((2, 1, 2))
    probs[0, 0, 0] = 1.0
    probs[1, 0, 1] = 1.0
    assert m.nash_gap(game, JointPolicy(probs)).max_gap > 0.5


def test_matrix_game_zero_sum_rewards_complementary():
    payoff = np.array([[0.8, 0.1], [0.4, 0.6]])
    game = m.build_matrix_game(payoff, "zero_sum", 0.9)
    assert np.allclose(game.rewards[0] + game.rewards[1], 1.0, atol=1e-15)


def test_matrix_game_validates_inputs():
    with pytest.raises(GameValidationError):
        m.build_matrix_game(np.array([[1.5, 0.0], [0.0, 1.0]]), "zero_sum", 0.9)
    with pytest.raises(GameValidationError):
        m.build_matrix_game(np.eye(2), "bogus", 0.9)
    with pytest.raises(GameValidationError):
        m.build_matrix_game(np.ones((2, 3)), "zero_sum", 0.9)
