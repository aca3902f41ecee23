"""Constructive game families.

build_congestion: a two-state crowding game. Each state carries strictly
increasing per-action weights; a player's raw payoff is its action's weight
times the number of players choosing that action, minus a penalty in the
crowded state. The state flips to "distancing" exactly when strictly more
than half the players share one action, and back to "safe" otherwise. Raw
payoffs are affinely rescaled into [0, 1], which preserves best responses
and equilibria.

build_cooperative_random: random transitions with one shared reward tensor,
so the shared value function certifies the potential property.

build_matrix_game: a one-state embedding of an A x A matrix game, either with
identical payoffs or with r2 = 1 - r1 (a rescaled zero-sum game, strategically
equivalent to the unscaled one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import (
    GameValidationError,
    TabularMarkovGame,
    action_decode_table,
    num_joint_actions,
)

SAFE, DISTANCING = 0, 1


@dataclass(frozen=True)
class CongestionSpec:
    num_players: int = 8
    weights_safe: tuple[float, ...] = (1.0, 2.0, 4.0, 6.0)
    weights_distancing: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0)
    penalty: float | None = None       # None: half the raw distancing maximum
    discount: float = 0.99
    initial_dist: tuple[float, float] | None = None  # None: uniform over both states

    def __post_init__(self):
        if self.num_players < 1:
            raise GameValidationError("num_players must be >= 1")
        if len(self.weights_safe) != len(self.weights_distancing):
            raise GameValidationError("both states need the same number of actions")
        for name, weights in (
            ("weights_safe", self.weights_safe),
            ("weights_distancing", self.weights_distancing),
        ):
            diffs = np.diff(weights)
            if len(weights) < 2 or np.any(diffs <= 0):
                raise GameValidationError(f"{name} must be strictly increasing")

    @property
    def num_actions(self) -> int:
        return len(self.weights_safe)


def build_congestion(spec: CongestionSpec) -> TabularMarkovGame:
    n, a = spec.num_players, spec.num_actions
    ja = num_joint_actions(n, a)
    decode = action_decode_table(n, a)

    counts = np.zeros((ja, a), dtype=int)
    for act in range(a):
        counts[:, act] = (decode == act).sum(axis=1)

    weights = np.array([spec.weights_safe, spec.weights_distancing])  # (2, A)
    raw_max_by_state = weights.max(axis=1) * n
    penalty = spec.penalty
    if penalty is None:
        penalty = raw_max_by_state[DISTANCING] / 2.0
    if penalty <= 0:
        raise GameValidationError("penalty must be positive")
    if penalty > raw_max_by_state.max():
        raise GameValidationError(
            f"penalty {penalty} exceeds the maximum raw reward {raw_max_by_state.max()}"
        )

    own_counts = np.take_along_axis(counts, decode, axis=1)  # (JA, N): count of own action
    raw = np.empty((n, 2, ja))
    for s in (SAFE, DISTANCING):
        per_player = weights[s][decode] * own_counts  # (JA, N)
        raw[:, s, :] = per_player.T - (penalty if s == DISTANCING else 0.0)
    shift = min(0.0, float(raw.min()))
    rewards = (raw - shift) / (raw.max() - shift)

    crowded = counts.max(axis=1) > n / 2.0  # strict majority on one action
    transition = np.zeros((2, ja, 2))
    transition[:, crowded, DISTANCING] = 1.0
    transition[:, ~crowded, SAFE] = 1.0

    initial = spec.initial_dist if spec.initial_dist is not None else (0.5, 0.5)
    return TabularMarkovGame(
        num_players=n,
        num_states=2,
        num_actions=a,
        transition=transition,
        rewards=rewards,
        discount=spec.discount,
        initial_dist=np.asarray(initial, dtype=float),
    )


def build_cooperative_random(
    num_states: int,
    num_players: int,
    num_actions: int,
    discount: float,
    rng: np.random.Generator,
) -> TabularMarkovGame:
    """Random identical-reward game: Dirichlet transition rows, uniform start."""
    ja = num_joint_actions(num_players, num_actions)
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, ja))
    shared = rng.random((num_states, ja))
    rewards = np.broadcast_to(shared, (num_players, num_states, ja)).copy()
    return TabularMarkovGame(
        num_players=num_players,
        num_states=num_states,
        num_actions=num_actions,
        transition=transition,
        rewards=rewards,
        discount=discount,
        initial_dist=np.full(num_states, 1.0 / num_states),
    )


def build_matrix_game(
    payoff: np.ndarray, mode: str, discount: float
) -> TabularMarkovGame:
    """One-state embedding of an A x A matrix game.

    payoff[a1, a2] is player 0's reward, required to lie in [0, 1].
    cooperative: both players receive payoff. zero_sum: player 1 receives
    1 - payoff, an affine encoding of the zero-sum game with the same
    equilibria.
    """
    payoff = np.asarray(payoff, dtype=float)
    if payoff.ndim != 2 or payoff.shape[0] != payoff.shape[1]:
        raise GameValidationError(f"payoff must be square, got shape {payoff.shape}")
    if np.any(payoff < 0.0) or np.any(payoff > 1.0):
        raise GameValidationError("payoff entries must lie in [0, 1]")
    if mode not in ("cooperative", "zero_sum"):
        raise GameValidationError(f"mode must be 'cooperative' or 'zero_sum', got {mode!r}")
    a = payoff.shape[0]
    ja = a * a
    decode = action_decode_table(2, a)
    r1 = payoff[decode[:, 0], decode[:, 1]]
    r2 = r1 if mode == "cooperative" else 1.0 - r1
    rewards = np.stack([r1, r2])[:, None, :]  # (2, 1, JA)
    transition = np.ones((1, ja, 1))
    return TabularMarkovGame(
        num_players=2,
        num_states=1,
        num_actions=a,
        transition=transition,
        rewards=rewards,
        discount=discount,
        initial_dist=np.ones(1),
    )
