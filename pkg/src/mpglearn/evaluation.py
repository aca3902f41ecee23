"""Exact evaluation machinery for tabular Markov games.

Values solve (I - gamma * P_pi) V_i = r_{i,pi} directly; action values come
from one Bellman backup; averaged action values marginalize the opponents'
policy. Best responses are solved by value iteration on the opponent-
marginalized single-agent MDP with an a-posteriori accuracy bound. On top of
these sit the Nash gap/regret metrics and two numerical identity checks
(single-player value difference, pairwise difference decomposition) that the
test suites use as oracles; production code never branches on the residuals.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .game import (
    GameValidationError,
    JointPolicy,
    TabularMarkovGame,
    check_policy_matches,
)

# Direct dense solves up to this many states; truncated power series beyond.
DENSE_SOLVE_MAX_STATES = 2000
NEUMANN_RESIDUAL = 1e-10

BEST_RESPONSE_TOL = 1e-9
GAP_FLOOR = -1e-8


class BudgetExceededError(RuntimeError):
    """An exhaustive enumeration would exceed its configured budget."""


@dataclass(frozen=True, eq=False)
class ValueProfile:
    """Exact V_i(s), Q_i(s, a) over joint actions, and own-action averages."""

    values: np.ndarray        # (N, S)
    action_values: np.ndarray  # (N, S, A**N)
    averaged: np.ndarray       # (N, S, A)


@dataclass(frozen=True, eq=False)
class VisitationDistribution:
    """Discounted state-visitation distribution d and the start distribution mu."""

    dist: np.ndarray
    start: np.ndarray


@dataclass(frozen=True, eq=False)
class BestResponse:
    value: float              # optimal value at the initial distribution
    actions: np.ndarray       # (S,) greedy deterministic policy, lowest index on ties
    state_values: np.ndarray  # (S,) optimal state values (within tolerance)


@dataclass(frozen=True, eq=False)
class NashGapReport:
    """Per-player best-response advantages over the current joint policy."""

    per_player_gap: np.ndarray        # (N,)
    max_gap: float
    best_response_policies: np.ndarray  # (N, S) action indices
    player_values: np.ndarray          # (N,) V_i at the initial distribution

    def __post_init__(self):
        if np.any(self.per_player_gap < GAP_FLOOR):
            worst = float(self.per_player_gap.min())
            raise GameValidationError(
                f"negative best-response gap {worst:.3g}; evaluator inconsistency"
            )


@dataclass(frozen=True, eq=False)
class TraceRecord:
    iteration: int
    policy: JointPolicy | None
    gaps: NashGapReport


@dataclass(eq=False)
class LearnTrace:
    """Gap reports collected over a learning run, plus regret summaries."""

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def iterations(self) -> np.ndarray:
        return np.array([rec.iteration for rec in self.records], dtype=int)

    def max_gaps(self) -> np.ndarray:
        return np.array([rec.gaps.max_gap for rec in self.records])

    def nash_regret(self) -> float:
        if not self.records:
            raise ValueError("nash_regret of an empty trace")
        return float(self.max_gaps().mean())

    def t_star(self) -> int:
        """Iteration index attaining the smallest max gap (earliest on ties)."""
        if not self.records:
            raise ValueError("t_star of an empty trace")
        gaps = self.max_gaps()
        return int(self.records[int(np.argmin(gaps))].iteration)

    def min_max_gap(self) -> float:
        if not self.records:
            raise ValueError("min_max_gap of an empty trace")
        return float(self.max_gaps().min())

    @property
    def final_policy(self) -> JointPolicy:
        if not self.records or self.records[-1].policy is None:
            raise ValueError("trace does not carry policy snapshots")
        return self.records[-1].policy

    def policy_distances_to_final(self) -> np.ndarray:
        """Mean over players of ||pi_i^(t) - pi_i^(final)||_1 per record."""
        final = self.final_policy.probs
        out = np.empty(len(self.records))
        for k, rec in enumerate(self.records):
            if rec.policy is None:
                raise ValueError("trace does not carry policy snapshots")
            out[k] = np.abs(rec.policy.probs - final).sum(axis=(1, 2)).mean()
        return out


def nash_regret(trace: LearnTrace) -> float:
    """Arithmetic mean of the recorded max gaps; see also LearnTrace.t_star."""
    return trace.nash_regret()


# ---------------------------------------------------------------------------
# Policy-induced kernels and marginals
# ---------------------------------------------------------------------------


class EvalWorkspace:
    """Reusable buffers for evaluate on one game shape.

    A workspace must not be shared across concurrent calls; run loops create
    one per run. Plain evaluate calls allocate fresh arrays and stay safe for
    unrestricted concurrent use.
    """

    def __init__(self, game: TabularMarkovGame):
        n, s, ja = game.num_players, game.num_states, game.num_joint_actions
        self.prefix = np.empty((n, s, ja))
        self.suffix = np.empty((n, s, ja))
        self.opponents = np.empty((n, s, ja))
        self.action_values = np.empty((n, s, ja))
        self.next_values = np.empty((n, s * ja))


def _policy_products(
    game: TabularMarkovGame, policy: JointPolicy, work: EvalWorkspace | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Joint probabilities (S, A**N) and leave-one-out products (N, S, A**N).

    Built from cumulative prefix/suffix products along the player axis, so
    fully deterministic policies (zero entries) never require division.
    """
    n, s, ja = game.num_players, game.num_states, game.num_joint_actions
    a = game.num_actions
    full = (s,) + (a,) * n

    def view(i):
        # Player i's action is the joint-action digit i, i.e. tensor axis n - i.
        return policy.probs[i].reshape((s,) + (1,) * (n - 1 - i) + (a,) + (1,) * i)

    if n == 1:
        joint = np.empty((s, ja))
        np.copyto(joint.reshape(full), np.broadcast_to(view(0), full))
        return joint, np.ones((1, s, ja))
    prefix = np.empty((n, s, ja)) if work is None else work.prefix
    suffix = np.empty((n, s, ja)) if work is None else work.suffix
    np.copyto(prefix[0].reshape(full), np.broadcast_to(view(0), full))
    for i in range(1, n):  # prefix[i] = prod_{j <= i}
        np.multiply(prefix[i - 1].reshape(full), view(i), out=prefix[i].reshape(full))
    np.copyto(suffix[n - 1].reshape(full), np.broadcast_to(view(n - 1), full))
    for i in range(n - 2, 0, -1):  # suffix[i] = prod_{j >= i}; suffix[0] never needed
        np.multiply(suffix[i + 1].reshape(full), view(i), out=suffix[i].reshape(full))
    opponents = np.empty((n, s, ja)) if work is None else work.opponents
    opponents[0] = suffix[1]
    opponents[n - 1] = prefix[n - 2]
    if n > 2:
        np.multiply(prefix[: n - 2], suffix[2:], out=opponents[1 : n - 1])
    return prefix[n - 1], opponents


def joint_action_probs(game: TabularMarkovGame, policy: JointPolicy) -> np.ndarray:
    """(S, A**N) joint probabilities prod_i pi_i(a_i | s)."""
    check_policy_matches(game, policy)
    return _policy_products(game, policy)[0]


def opponent_action_probs(game: TabularMarkovGame, policy: JointPolicy) -> np.ndarray:
    """(N, S, A**N) leave-one-out joint probabilities prod_{j != i} pi_j(a_j | s)."""
    check_policy_matches(game, policy)
    return _policy_products(game, policy)[1]


def _sum_over_opponents(table: np.ndarray, player: int, num_players: int, num_actions: int):
    """Reduce a (..., A**N, trailing...) axis to (..., A, trailing...) for one player.

    Joint actions are base-A integers with player 0 least significant, so the
    joint axis factors into (high digits, own digit, low digits) by a reshape;
    summing the outer factors marginalizes everyone else.
    """
    low = num_actions**player
    high = num_actions ** (num_players - 1 - player)
    shape = table.shape
    axis = 1  # callers pass (S, A**N) or (S, A**N, S')
    new_shape = shape[:axis] + (high, num_actions, low) + shape[axis + 1 :]
    return table.reshape(new_shape).sum(axis=(axis, axis + 2))


def policy_transition(game: TabularMarkovGame, policy: JointPolicy) -> np.ndarray:
    """(S, S) state kernel under the joint policy."""
    probs = joint_action_probs(game, policy)
    return np.einsum("sj,sjt->st", probs, game.transition)


def _solve_discounted(kernel: np.ndarray, targets: np.ndarray, gamma: float) -> np.ndarray:
    """Solve (I - gamma * kernel) X = targets for column-stacked targets."""
    s = kernel.shape[0]
    if s <= DENSE_SOLVE_MAX_STATES:
        return np.linalg.solve(np.eye(s) - gamma * kernel, targets)
    x = np.array(targets)
    while True:
        nxt = targets + gamma * (kernel @ x)
        if np.max(np.abs(nxt - x)) <= NEUMANN_RESIDUAL:
            return nxt
        x = nxt


def evaluate(
    game: TabularMarkovGame, policy: JointPolicy, work: EvalWorkspace | None = None
) -> ValueProfile:
    """Exact values, joint-action values, and own-action averages for all players.

    When a workspace is passed, the returned arrays alias its buffers and stay
    valid only until the next call with that workspace.
    """
    check_policy_matches(game, policy)
    n, s, ja = game.num_players, game.num_states, game.num_joint_actions
    probs, opponents = _policy_products(game, policy, work)
    kernel = np.einsum("sj,sjt->st", probs, game.transition)
    reward_pi = np.einsum("isj,sj->is", game.rewards, probs)  # (N, S)
    values = _solve_discounted(kernel, reward_pi.T, game.discount).T  # (N, S)
    next_values = np.empty((n, s * ja)) if work is None else work.next_values
    np.matmul(values, game.transition.reshape(s * ja, s).T, out=next_values)
    action_values = np.empty((n, s, ja)) if work is None else work.action_values
    np.multiply(next_values.reshape(n, s, ja), game.discount, out=action_values)
    action_values += game.rewards
    averaged = np.empty((n, s, game.num_actions))
    # The opponent products are not needed past this point; reuse them.
    np.multiply(opponents, action_values, out=opponents)
    for i in range(n):
        averaged[i] = _sum_over_opponents(opponents[i], i, n, game.num_actions)
    return ValueProfile(values=values, action_values=action_values, averaged=averaged)


def _visitation_from_kernel(
    kernel: np.ndarray, start: np.ndarray, gamma: float
) -> np.ndarray:
    dist = (1.0 - gamma) * np.linalg.solve(np.eye(kernel.shape[0]) - gamma * kernel.T, start)
    return dist / dist.sum()


def visitation(
    game: TabularMarkovGame, policy: JointPolicy, start: np.ndarray
) -> VisitationDistribution:
    """Discounted visitation d(s) = (1-gamma) * sum_t gamma^t Pr(s_t = s | s_0 ~ start)."""
    start = np.asarray(start, dtype=float)
    if start.shape != (game.num_states,):
        raise GameValidationError(
            f"start distribution shape {start.shape}, expected {(game.num_states,)}"
        )
    if abs(start.sum() - 1.0) > 1e-9 or np.any(start < -1e-12):
        raise GameValidationError("start distribution is not a probability vector")
    kernel = policy_transition(game, policy)
    dist = _visitation_from_kernel(kernel, start, game.discount)
    return VisitationDistribution(dist=dist, start=start)


# ---------------------------------------------------------------------------
# Best responses and Nash metrics
# ---------------------------------------------------------------------------


def _marginal_mdp(
    game: TabularMarkovGame, policy: JointPolicy, player: int
) -> tuple[np.ndarray, np.ndarray]:
    """Single-agent (S, A, S) kernel and (S, A) reward with opponents averaged out."""
    opponents = opponent_action_probs(game, policy)[player]
    n, a = game.num_players, game.num_actions
    kernel = _sum_over_opponents(opponents[:, :, None] * game.transition, player, n, a)
    reward = _sum_over_opponents(opponents * game.rewards[player], player, n, a)
    return kernel, reward


def best_response(
    game: TabularMarkovGame,
    policy: JointPolicy,
    player: int,
    value_hint: np.ndarray | None = None,
    tol: float = BEST_RESPONSE_TOL,
) -> BestResponse:
    """Optimal value and deterministic policy against the fixed opponents.

    Value iteration stops once gamma * ||V_{k+1} - V_k||_inf / (1 - gamma) <= tol,
    which bounds the distance to the optimum. The iteration may start from a
    caller-provided hint; the stopping rule keeps the guarantee regardless.
    Greedy ties break toward the lowest action index.
    """
    if not 0 <= player < game.num_players:
        raise GameValidationError(f"player index {player} out of range")
    check_policy_matches(game, policy)
    kernel, reward = _marginal_mdp(game, policy, player)
    gamma = game.discount
    values = np.zeros(game.num_states) if value_hint is None else np.array(value_hint, dtype=float)
    while True:
        backed = reward + gamma * (kernel @ values)
        new_values = backed.max(axis=1)
        residual = np.max(np.abs(new_values - values))
        values = new_values
        if gamma * residual <= (1.0 - gamma) * tol:
            break
    greedy = np.argmax(reward + gamma * (kernel @ values), axis=1)
    return BestResponse(
        value=float(game.initial_dist @ values),
        actions=greedy,
        state_values=values,
    )


def _marginal_mdps_all(
    game: TabularMarkovGame, policy: JointPolicy
) -> tuple[np.ndarray, np.ndarray]:
    """(N, S, A, S) kernels and (N, S, A) rewards, one single-agent MDP per player."""
    opponents = opponent_action_probs(game, policy)
    n, s, a = game.num_players, game.num_states, game.num_actions
    kernels = np.empty((n, s, a, s))
    rewards = np.empty((n, s, a))
    for i in range(n):
        kernels[i] = _sum_over_opponents(opponents[i][:, :, None] * game.transition, i, n, a)
        rewards[i] = _sum_over_opponents(opponents[i] * game.rewards[i], i, n, a)
    return kernels, rewards


def _batched_optimal_values(
    kernels: np.ndarray, rewards: np.ndarray, gamma: float, hints: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal values/greedy actions of stacked single-agent MDPs.

    Solved by policy iteration with exact evaluation solves: greedy
    improvement with lowest-index tie-break, then a direct linear solve per
    player. With a consistent tie-break the iteration terminates at the exact
    optimum after finitely many improvements, independent of the discount.
    """
    n, s, a, _ = kernels.shape
    flat_kernels = kernels.reshape(n, s * a, s)
    flat_rewards = rewards.reshape(n, s * a)
    values = np.zeros((n, s)) if hints is None else np.array(hints, dtype=float)
    eye = np.eye(s)
    actions = None
    for _ in range(64 + s * a):
        backed = flat_rewards + gamma * np.matmul(flat_kernels, values[:, :, None])[:, :, 0]
        new_actions = np.argmax(backed.reshape(n, s, a), axis=2)
        if actions is not None and np.array_equal(new_actions, actions):
            return values, actions
        actions = new_actions
        rows = actions + np.arange(s)[None, :] * a  # (N, S) flat (state, action) ids
        chosen_kernels = np.take_along_axis(flat_kernels, rows[:, :, None], axis=1)
        chosen_rewards = np.take_along_axis(flat_rewards, rows, axis=1)
        mats = eye[None] - gamma * chosen_kernels
        values = np.linalg.solve(mats, chosen_rewards[:, :, None])[:, :, 0]
    raise RuntimeError("policy iteration failed to stabilize; ties should preclude this")


def nash_gap(
    game: TabularMarkovGame,
    policy: JointPolicy,
    value_profile: ValueProfile | None = None,
    value_hints: np.ndarray | None = None,
) -> NashGapReport:
    """Best-response advantage per player at the initial distribution.

    All players' best responses are solved together by exact policy iteration
    (see _batched_optimal_values), which agrees with best_response well inside
    its tolerance while staying fast at discounts close to one. value_hints,
    when given, warm-starts the solves and is updated in place.
    """
    check_policy_matches(game, policy)
    profile = value_profile if value_profile is not None else evaluate(game, policy)
    values_at_init = profile.values @ game.initial_dist  # (N,)
    kernels, rewards = _marginal_mdps_all(game, policy)
    values, br_actions = _batched_optimal_values(
        kernels, rewards, game.discount, value_hints
    )
    if value_hints is not None:
        value_hints[...] = values
    gaps = values @ game.initial_dist - values_at_init
    return NashGapReport(
        per_player_gap=gaps,
        max_gap=float(gaps.max()),
        best_response_policies=br_actions,
        player_values=values_at_init,
    )


# ---------------------------------------------------------------------------
# Identity residuals (test oracles) and the mismatch coefficient
# ---------------------------------------------------------------------------


def performance_difference_residual(
    game: TabularMarkovGame,
    player: int,
    policy_hat_i: np.ndarray,
    policy_bar_i: np.ndarray,
    opponents: JointPolicy,
    start: np.ndarray,
) -> float:
    """|LHS - RHS| of the single-player value-difference identity.

    LHS is the value change when player `player` switches from policy_bar_i to
    policy_hat_i against fixed opponents. RHS rewrites it through the
    visitation of the switched-to policy and the averaged action values of the
    switched-from policy:

        1/(1-gamma) * sum_{s,a} d_hat(s) (hat - bar)(a|s) Qbar_bar(s, a).
    """
    hat = opponents.replace_player(player, policy_hat_i)
    bar = opponents.replace_player(player, policy_bar_i)
    start = np.asarray(start, dtype=float)
    profile_hat = evaluate(game, hat)
    profile_bar = evaluate(game, bar)
    lhs = (profile_hat.values[player] - profile_bar.values[player]) @ start
    dist = visitation(game, hat, start).dist
    diff = hat.probs[player] - bar.probs[player]  # (S, A)
    rhs = (dist[:, None] * diff * profile_bar.averaged[player]).sum() / (1.0 - game.discount)
    return float(abs(lhs - rhs))


_OLD, _NEW = "old", "new"


def decomposition_residual(psi: dict, num_players: int) -> float:
    """Residual of the pairwise difference decomposition on an abstract table.

    psi maps length-N tuples over {'old', 'new'} to scalars. The identity
    states that psi(all new) - psi(all old) equals the sum of single-player
    switches plus pairwise second-order corrections, where the (i, j < k... )
    correction is evaluated with players before j at 'old' (except i), players
    after j at 'new', and (i, j) toggled through all four label pairs.
    """
    labels = list(itertools.product((_OLD, _NEW), repeat=num_players))
    for key in labels:
        if key not in psi:
            raise KeyError(f"table is missing entry {key}")
    all_old = (_OLD,) * num_players
    all_new = (_NEW,) * num_players
    lhs = psi[all_new] - psi[all_old]

    total = 0.0
    for i in range(num_players):
        key = tuple(_NEW if k == i else _OLD for k in range(num_players))
        total += psi[key] - psi[all_old]
    for i in range(num_players):
        for j in range(i + 1, num_players):
            def key(label_i, label_j):
                parts = []
                for k in range(num_players):
                    if k == i:
                        parts.append(label_i)
                    elif k == j:
                        parts.append(label_j)
                    elif k < j:
                        parts.append(_OLD)
                    else:
                        parts.append(_NEW)
                return tuple(parts)

            total += (
                psi[key(_NEW, _NEW)]
                - psi[key(_OLD, _NEW)]
                - psi[key(_NEW, _OLD)]
                + psi[key(_OLD, _OLD)]
            )
    return float(abs(lhs - total))


def estimate_kappa(
    game: TabularMarkovGame,
    start: np.ndarray,
    budget: int = 100_000,
    chunk: int = 4096,
) -> float:
    """Estimated distribution-mismatch coefficient max_pi ||d_start^pi / start||_inf.

    The maximum is taken over all deterministic joint policies, which suffice
    as extreme points of this objective; the result is an estimate of the
    supremum over stochastic policies, not a certified value. Games whose
    deterministic policy count exceeds the budget are rejected.
    """
    start = np.asarray(start, dtype=float)
    if np.any(start <= 0.0):
        raise GameValidationError("mismatch estimation requires start(s) > 0 for every s")
    s, ja = game.num_states, game.num_joint_actions
    count = ja**s
    if count > budget:
        raise BudgetExceededError(
            f"enumerating {count} deterministic joint policies exceeds budget {budget}"
        )
    gamma = game.discount
    eye = np.eye(s)
    best = 0.0
    state_idx = np.arange(s)
    assignments = itertools.product(range(ja), repeat=s)
    while True:
        block = np.array(list(itertools.islice(assignments, chunk)), dtype=int)
        if block.size == 0:
            break
        kernels = game.transition[state_idx[None, :], block]  # (B, S, S)
        mats = eye[None] - gamma * np.transpose(kernels, (0, 2, 1))
        rhs = np.broadcast_to(start[:, None], (block.shape[0], s, 1))
        dists = (1.0 - gamma) * np.linalg.solve(mats, rhs)[..., 0]
        dists = dists / dists.sum(axis=1, keepdims=True)
        ratios = (dists / start).max(axis=1)
        best = max(best, float(ratios.max()))
    return best
