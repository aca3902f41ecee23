"""Tabular Markov game data model, joint-action codec, and serialization.

A game couples a shared transition kernel over joint actions with one reward
tensor per player. Joint actions are encoded as base-A integers with player 0
in the least-significant digit, which makes per-player marginalization plain
index arithmetic.

Serialized games are JSON documents with the following keys::

    {
      "n_players":  N,
      "n_states":   S,
      "n_actions":  A,
      "gamma":      discount in [0, 1),
      "rho":        [S floats summing to 1],
      "transitions": [[s, joint_a, s_next, p], ...],
      "rewards":     [[player, s, joint_a, r], ...]
    }

Every (s, joint_a) pair must have its outgoing probabilities fully specified
(rows are renormalized when within 1e-9 of summing to one and rejected
otherwise). Omitted reward entries default to zero. The loader reports the
first violated invariant together with the offending indices.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np

# Rows this close to summing to one are renormalized; anything worse is rejected.
PROB_ATOL = 1e-9
REWARD_ATOL = 1e-12


class GameValidationError(ValueError):
    """A game, policy, or distribution violates a construction invariant."""


def num_joint_actions(num_players: int, num_actions: int) -> int:
    return num_actions**num_players


def joint_index(actions, num_actions: int) -> int:
    """Encode per-player actions as a base-A integer, player 0 least significant."""
    index = 0
    for i, a in enumerate(actions):
        if not 0 <= a < num_actions:
            raise ValueError(f"action {a} of player {i} outside [0, {num_actions})")
        index += a * num_actions**i
    return index


def joint_actions(index: int, num_players: int, num_actions: int) -> tuple[int, ...]:
    """Decode a joint-action index into the per-player action tuple."""
    out = []
    for _ in range(num_players):
        out.append(index % num_actions)
        index //= num_actions
    return tuple(out)


@functools.lru_cache(maxsize=None)
def action_decode_table(num_players: int, num_actions: int) -> np.ndarray:
    """(A**N, N) int table; entry [ja, i] is player i's action inside joint action ja."""
    ja = np.arange(num_actions**num_players)
    table = np.empty((ja.size, num_players), dtype=np.int64)
    for i in range(num_players):
        table[:, i] = (ja // num_actions**i) % num_actions
    table.flags.writeable = False
    return table


@functools.lru_cache(maxsize=None)
def action_group_table(num_players: int, num_actions: int) -> np.ndarray:
    """(N, A, A**(N-1)) int table of joint-action ids grouped by one player's action.

    Row [i, a] lists every joint action in which player i takes action a.
    """
    decode = action_decode_table(num_players, num_actions)
    total = decode.shape[0]
    groups = np.empty((num_players, num_actions, total // num_actions), dtype=np.int64)
    for i in range(num_players):
        for a in range(num_actions):
            groups[i, a] = np.nonzero(decode[:, i] == a)[0]
    groups.flags.writeable = False
    return groups


def _checked_rows(arr: np.ndarray, what: str) -> np.ndarray:
    """Validate that the trailing axis holds probability rows; renormalize them.

    Rows must be nonnegative (up to -1e-9) and sum to one within 1e-9; the
    first violation is reported with its leading indices.
    """
    arr = np.asarray(arr, dtype=float)
    bad = np.argwhere(arr < -PROB_ATOL)
    if bad.size:
        idx = tuple(int(k) for k in bad[0])
        raise GameValidationError(f"{what}{idx} = {arr[idx]:.3g} is negative")
    sums = arr.sum(axis=-1)
    off = np.argwhere(np.abs(sums - 1.0) > PROB_ATOL)
    if off.size:
        idx = tuple(int(k) for k in off[0])
        raise GameValidationError(f"{what} row {idx} sums to {float(sums[idx]):.9g}, expected 1")
    arr = np.clip(arr, 0.0, None)
    return arr / arr.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class TabularMarkovGame:
    """Finite N-player discounted game with a shared action count per player.

    transition has shape (S, A**N, S), rewards (N, S, A**N) with entries in
    [0, 1], and initial_dist shape (S,). Instances are immutable after
    construction; all evaluators treat them as read-only.
    """

    num_players: int
    num_states: int
    num_actions: int
    transition: np.ndarray
    rewards: np.ndarray
    discount: float
    initial_dist: np.ndarray

    def __post_init__(self):
        n, s, a = self.num_players, self.num_states, self.num_actions
        if min(n, s, a) < 1:
            raise GameValidationError("num_players, num_states, num_actions must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise GameValidationError(f"discount {self.discount} outside [0, 1)")
        ja = num_joint_actions(n, a)
        transition = _checked_rows(self.transition, "transition")
        if transition.shape != (s, ja, s):
            raise GameValidationError(
                f"transition shape {transition.shape}, expected {(s, ja, s)}"
            )
        rewards = np.asarray(self.rewards, dtype=float)
        if rewards.shape != (n, s, ja):
            raise GameValidationError(f"rewards shape {rewards.shape}, expected {(n, s, ja)}")
        bad = np.argwhere((rewards < -REWARD_ATOL) | (rewards > 1.0 + REWARD_ATOL))
        if bad.size:
            idx = tuple(int(k) for k in bad[0])
            raise GameValidationError(f"rewards{idx} = {rewards[idx]:.6g} outside [0, 1]")
        rewards = np.clip(rewards, 0.0, 1.0)
        initial = _checked_rows(self.initial_dist, "initial_dist")
        if initial.shape != (s,):
            raise GameValidationError(f"initial_dist shape {initial.shape}, expected {(s,)}")
        for name, value in (
            ("transition", transition),
            ("rewards", rewards),
            ("initial_dist", initial),
        ):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def num_joint_actions(self) -> int:
        return num_joint_actions(self.num_players, self.num_actions)

    @property
    def decode(self) -> np.ndarray:
        return action_decode_table(self.num_players, self.num_actions)

    @property
    def action_groups(self) -> np.ndarray:
        return action_group_table(self.num_players, self.num_actions)

    def identical_rewards(self, atol: float = 1e-12) -> bool:
        """True when every player shares one reward tensor (cooperative game)."""
        return bool(np.all(np.abs(self.rewards - self.rewards[0]) <= atol))


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Per-player, per-state action distributions, stored as an (N, S, A) array."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _checked_rows(self.probs, "policy")
        if probs.ndim != 3:
            raise GameValidationError(f"policy must be (N, S, A), got shape {probs.shape}")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, num_players: int, num_states: int, num_actions: int) -> "JointPolicy":
        return cls(np.full((num_players, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def random(
        cls, num_players: int, num_states: int, num_actions: int, rng: np.random.Generator
    ) -> "JointPolicy":
        """Dirichlet(1, ..., 1) rows, i.e. uniform over the simplex."""
        probs = rng.dirichlet(np.ones(num_actions), size=(num_players, num_states))
        return cls(probs)

    @property
    def num_players(self) -> int:
        return self.probs.shape[0]

    @property
    def num_states(self) -> int:
        return self.probs.shape[1]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[2]

    def player(self, i: int) -> np.ndarray:
        return self.probs[i]

    def replace_player(self, i: int, table: np.ndarray) -> "JointPolicy":
        probs = np.array(self.probs)
        probs[i] = table
        return JointPolicy(probs)


def deterministic_rows(actions, num_actions: int) -> np.ndarray:
    """One-hot (S, A) policy table from a vector of per-state action indices."""
    actions = np.asarray(actions, dtype=int)
    rows = np.zeros((actions.size, num_actions))
    rows[np.arange(actions.size), actions] = 1.0
    return rows


def check_policy_matches(game: TabularMarkovGame, policy: JointPolicy) -> None:
    expected = (game.num_players, game.num_states, game.num_actions)
    if policy.probs.shape != expected:
        raise GameValidationError(
            f"policy shape {policy.probs.shape} does not match game {expected}"
        )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def game_to_dict(game: TabularMarkovGame) -> dict:
    transitions = []
    for s in range(game.num_states):
        for ja in range(game.num_joint_actions):
            for s2 in range(game.num_states):
                p = game.transition[s, ja, s2]
                if p != 0.0:
                    transitions.append([s, ja, s2, float(p)])
    rewards = []
    for i in range(game.num_players):
        for s in range(game.num_states):
            for ja in range(game.num_joint_actions):
                r = game.rewards[i, s, ja]
                if r != 0.0:
                    rewards.append([i, s, ja, float(r)])
    return {
        "n_players": game.num_players,
        "n_states": game.num_states,
        "n_actions": game.num_actions,
        "gamma": float(game.discount),
        "rho": [float(p) for p in game.initial_dist],
        "transitions": transitions,
        "rewards": rewards,
    }


def save_game(game: TabularMarkovGame, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game_to_dict(game), fh, indent=1)
        fh.write("\n")


def _require_int(doc: dict, key: str) -> int:
    if key not in doc:
        raise GameValidationError(f"missing field '{key}'")
    value = doc[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise GameValidationError(f"field '{key}' must be an integer, got {value!r}")
    return value


def game_from_dict(doc: dict) -> TabularMarkovGame:
    n = _require_int(doc, "n_players")
    s = _require_int(doc, "n_states")
    a = _require_int(doc, "n_actions")
    if "gamma" not in doc:
        raise GameValidationError("missing field 'gamma'")
    gamma = float(doc["gamma"])
    rho = np.asarray(doc.get("rho", []), dtype=float)
    ja = num_joint_actions(n, a)

    transition = np.zeros((s, ja, s))
    seen = np.zeros((s, ja, s), dtype=bool)
    for row_no, entry in enumerate(doc.get("transitions", [])):
        if len(entry) != 4:
            raise GameValidationError(f"transitions[{row_no}] must be [s, joint_a, s_next, p]")
        si, jai, s2, p = int(entry[0]), int(entry[1]), int(entry[2]), float(entry[3])
        if not (0 <= si < s and 0 <= jai < ja and 0 <= s2 < s):
            raise GameValidationError(
                f"transitions[{row_no}] indices ({si}, {jai}, {s2}) out of range"
            )
        if seen[si, jai, s2]:
            raise GameValidationError(
                f"transitions[{row_no}] duplicates entry ({si}, {jai}, {s2})"
            )
        seen[si, jai, s2] = True
        transition[si, jai, s2] = p

    rewards = np.zeros((n, s, ja))
    seen_r = np.zeros((n, s, ja), dtype=bool)
    for row_no, entry in enumerate(doc.get("rewards", [])):
        if len(entry) != 4:
            raise GameValidationError(f"rewards[{row_no}] must be [player, s, joint_a, r]")
        i, si, jai, r = int(entry[0]), int(entry[1]), int(entry[2]), float(entry[3])
        if not (0 <= i < n and 0 <= si < s and 0 <= jai < ja):
            raise GameValidationError(f"rewards[{row_no}] indices ({i}, {si}, {jai}) out of range")
        if seen_r[i, si, jai]:
            raise GameValidationError(f"rewards[{row_no}] duplicates entry ({i}, {si}, {jai})")
        seen_r[i, si, jai] = True
        rewards[i, si, jai] = r

    return TabularMarkovGame(
        num_players=n,
        num_states=s,
        num_actions=a,
        transition=transition,
        rewards=rewards,
        discount=gamma,
        initial_dist=rho,
    )


def load_game(path) -> TabularMarkovGame:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameValidationError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GameValidationError("top-level JSON value must be an object")
    return game_from_dict(doc)


def save_policy(policy: JointPolicy, path) -> None:
    doc = {"policies": [[list(map(float, row)) for row in table] for table in policy.probs]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_policy(path) -> JointPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameValidationError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "policies" not in doc:
        raise GameValidationError("policy file must be an object with a 'policies' key")
    probs = np.asarray(doc["policies"], dtype=float)
    if probs.ndim != 3:
        raise GameValidationError(f"'policies' must be nested (N, S, A) lists, got shape {probs.shape}")
    return JointPolicy(probs)
