"""Shared test utilities: random instances and independent oracles.

The oracles deliberately avoid the code paths they check: values via
truncated rollouts instead of linear solves, best responses via exhaustive
policy enumeration instead of value iteration, visitation via power series.
"""

from __future__ import annotations

import itertools

import numpy as np

from mpglearn import JointPolicy, TabularMarkovGame, deterministic_rows
from mpglearn.evaluation import joint_action_probs, policy_transition


def random_game(
    rng: np.random.Generator,
    num_states: int,
    num_players: int,
    num_actions: int,
    gamma: float,
    identical_rewards: bool = False,
) -> TabularMarkovGame:
    """Random dense game; per-player independent rewards unless identical."""
    ja = num_actions**num_players
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, ja))
    if identical_rewards:
        shared = rng.random((num_states, ja))
        rewards = np.broadcast_to(shared, (num_players, num_states, ja)).copy()
    else:
        rewards = rng.random((num_players, num_states, ja))
    rho = rng.dirichlet(np.ones(num_states))
    return TabularMarkovGame(
        num_players=num_players,
        num_states=num_states,
        num_actions=num_actions,
        transition=transition,
        rewards=rewards,
        discount=gamma,
        initial_dist=rho,
    )


def truncated_values(game: TabularMarkovGame, policy: JointPolicy, steps: int) -> np.ndarray:
    """(N, S) values by backing up the Bellman sum for a fixed number of steps."""
    probs = joint_action_probs(game, policy)
    kernel = policy_transition(game, policy)
    reward_pi = np.einsum("isj,sj->is", game.rewards, probs)
    values = np.zeros_like(reward_pi)
    for _ in range(steps):
        values = reward_pi + game.discount * (values @ kernel.T)
    return values


def truncated_visitation(
    game: TabularMarkovGame, policy: JointPolicy, start: np.ndarray, steps: int
) -> np.ndarray:
    """Power-series visitation (1-gamma) * sum_t gamma^t start P^t, then normalized."""
    kernel = policy_transition(game, policy)
    current = np.asarray(start, dtype=float)
    total = np.zeros_like(current)
    scale = 1.0
    for _ in range(steps):
        total += scale * current
        current = current @ kernel
        scale *= game.discount
    dist = (1.0 - game.discount) * total
    return dist / dist.sum()


def enumerate_player_policies(num_states: int, num_actions: int):
    """Yield every deterministic (S, A) one-hot policy table."""
    for actions in itertools.product(range(num_actions), repeat=num_states):
        yield np.asarray(actions, dtype=int), deterministic_rows(actions, num_actions)


def brute_force_best_response(
    game: TabularMarkovGame, policy: JointPolicy, player: int, evaluate_fn
) -> float:
    """Best-response value by exhausting deterministic policies for one player."""
    best = -np.inf
    for _, table in enumerate_player_policies(game.num_states, game.num_actions):
        candidate = policy.replace_player(player, table)
        value = evaluate_fn(game, candidate).values[player] @ game.initial_dist
        best = max(best, float(value))
    return best


def pure_matrix_nash(payoff: np.ndarray) -> list[tuple[int, int]]:
    """All pure Nash cells of a cooperative (identical-payoff) matrix game."""
    out = []
    a = payoff.shape[0]
    for i in range(a):
        for j in range(a):
            if payoff[i, j] >= payoff[:, j].max() - 1e-12 and payoff[i, j] >= payoff[i, :].max() - 1e-12:
                out.append((i, j))
    return out
