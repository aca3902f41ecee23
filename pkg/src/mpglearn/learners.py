"""Exact-gradient learners.

step_exact_pg is the simultaneous projected ascent on averaged action values:
every player i and state s moves to project(pi_i(.|s) + eta * Qbar_i(s, .)).
Because the common offset of Qbar across actions cancels inside the
projection, the update depends only on the local policy row and Qbar row,
never on the initial-state distribution.

step_optimistic is the two-player optimistic variant with a smoothed critic:
each state keeps main and secondary ("bar") iterates per player plus a scalar
critic value blended at rate alpha; policy steps are proximal ascent on the
critic matrix, with the second player's gradient negated in zero-sum mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .evaluation import (
    EvalWorkspace,
    LearnTrace,
    TraceRecord,
    ValueProfile,
    evaluate,
    nash_gap,
)
from .game import GameValidationError, JointPolicy, TabularMarkovGame, check_policy_matches
from .simplex import project_rows_simplex

# Gap evaluation becomes the dominant cost on large games; thin it out there.
CADENCE_THRESHOLD = 10_000


def default_cadence(game: TabularMarkovGame) -> int:
    return 1 if game.num_states * game.num_joint_actions <= CADENCE_THRESHOLD else 100


def _record_iterations(total: int, cadence: int) -> set[int]:
    wanted = set(range(1, total + 1, cadence))
    wanted.add(total)
    return wanted


# ---------------------------------------------------------------------------
# Simultaneous projected ascent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactPGConfig:
    eta: float
    iterations: int
    cadence: int | None = None        # None: every iteration on small games, 100 otherwise
    record_policies: bool = True

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError(f"stepsize eta={self.eta} must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def step_exact_pg(
    game: TabularMarkovGame,
    policy: JointPolicy,
    eta: float,
    value_profile: ValueProfile | None = None,
) -> JointPolicy:
    """One simultaneous update from a shared evaluation snapshot."""
    if eta < 0.0:
        raise ValueError(f"stepsize eta={eta} must be nonnegative")
    check_policy_matches(game, policy)
    profile = value_profile if value_profile is not None else evaluate(game, policy)
    return JointPolicy(project_rows_simplex(policy.probs + eta * profile.averaged))


def run_exact_pg(
    game: TabularMarkovGame,
    config: ExactPGConfig,
    init: JointPolicy | None = None,
) -> LearnTrace:
    """Iterate step_exact_pg, recording gap reports at the configured cadence.

    The default initial policy is uniform. The run is deterministic given the
    initial policy.
    """
    policy = (
        init
        if init is not None
        else JointPolicy.uniform(game.num_players, game.num_states, game.num_actions)
    )
    check_policy_matches(game, policy)
    cadence = config.cadence if config.cadence is not None else default_cadence(game)
    wanted = _record_iterations(config.iterations, cadence)
    hints = np.zeros((game.num_players, game.num_states))
    trace = LearnTrace()
    work = EvalWorkspace(game)
    for t in range(1, config.iterations + 1):
        profile = evaluate(game, policy, work)
        if t in wanted:
            report = nash_gap(game, policy, value_profile=profile, value_hints=hints)
            snapshot = policy if config.record_policies else None
            trace.append(TraceRecord(iteration=t, policy=snapshot, gaps=report))
        if t < config.iterations:
            policy = JointPolicy(
                project_rows_simplex(policy.probs + config.eta * profile.averaged)
            )
    return trace


STEPSIZE_VARIANTS = ("potential_sqrt_t", "potential_mismatch", "cooperative")


def suggest_stepsize(
    game: TabularMarkovGame,
    variant: str,
    kappa_hat: float | None = None,
    horizon: int | None = None,
) -> float:
    """Theory-suggested stepsizes for the simultaneous projected ascent.

    potential_sqrt_t:     (1-gamma)^{5/2} sqrt(phi_max) / (N A sqrt(T)),
                          with the potential range phi_max bounded by N/(1-gamma);
                          requires horizon=T.
    potential_mismatch:   (1-gamma)^4 / (8 kappa^3 N A); requires kappa_hat >= 1.
    cooperative:          (1-gamma) / (2 N A) for identical-reward games.

    The phi_max and kappa substitutions are upper bounds, so suggested
    stepsizes are conservative.
    """
    n, a, gamma = game.num_players, game.num_actions, game.discount
    if variant == "cooperative":
        return (1.0 - gamma) / (2.0 * n * a)
    if variant == "potential_mismatch":
        if kappa_hat is None or kappa_hat < 1.0:
            raise ValueError("potential_mismatch requires kappa_hat >= 1")
        return (1.0 - gamma) ** 4 / (8.0 * kappa_hat**3 * n * a)
    if variant == "potential_sqrt_t":
        if horizon is None or horizon < 1:
            raise ValueError("potential_sqrt_t requires horizon >= 1")
        phi_max = n / (1.0 - gamma)
        return (1.0 - gamma) ** 2.5 * math.sqrt(phi_max) / (n * a * math.sqrt(horizon))
    raise ValueError(f"unknown stepsize variant {variant!r}; choose from {STEPSIZE_VARIANTS}")


# ---------------------------------------------------------------------------
# Optimistic ascent with a smoothed critic (two players)
# ---------------------------------------------------------------------------

ALPHA_SCHEDULES = ("constant", "decaying")
MODES = ("cooperative", "zero_sum")


@dataclass(frozen=True)
class OptimisticConfig:
    eta: float
    iterations: int
    alpha: float = 1.0 / 12.0
    alpha_schedule: str = "constant"   # "decaying": alpha_t = (H+1) / (6 (H+t))
    critic_horizon: float | None = None  # H above; default ceil(1/(1-gamma))
    mode: str = "cooperative"
    cadence: int | None = None
    record_policies: bool = True

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError(f"stepsize eta={self.eta} must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise ValueError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}")
        if self.alpha_schedule == "constant" and not 0.0 < self.alpha < 1.0 / 6.0:
            raise ValueError(f"constant critic rate alpha={self.alpha} outside (0, 1/6)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def critic_rate(self, t: int, gamma: float) -> float:
        if self.alpha_schedule == "constant":
            return self.alpha
        h = self.critic_horizon
        if h is None:
            h = math.ceil(1.0 / (1.0 - gamma))
        return (h + 1.0) / (6.0 * (h + t))


@dataclass(frozen=True, eq=False)
class OptimisticState:
    """Main/secondary policy rows per state for both players, plus the critic."""

    x: np.ndarray       # (S, A)
    x_bar: np.ndarray
    y: np.ndarray
    y_bar: np.ndarray
    critic: np.ndarray  # (S,)
    iteration: int      # completed update steps

    @classmethod
    def initial(cls, num_states: int, num_actions: int) -> "OptimisticState":
        uniform = np.full((num_states, num_actions), 1.0 / num_actions)
        return cls(
            x=uniform,
            x_bar=uniform.copy(),
            y=uniform.copy(),
            y_bar=uniform.copy(),
            critic=np.zeros(num_states),
            iteration=0,
        )

    def as_policy(self) -> JointPolicy:
        return JointPolicy(np.stack([self.x, self.y]))


def _check_optimistic_game(game: TabularMarkovGame, config: OptimisticConfig) -> None:
    if game.num_players != 2:
        raise GameValidationError("optimistic learner requires exactly two players")
    if config.mode == "cooperative":
        if not game.identical_rewards(atol=1e-9):
            raise GameValidationError("cooperative mode requires identical rewards")
    else:
        sums = game.rewards[0] + game.rewards[1]
        if np.max(np.abs(sums - sums.flat[0])) > 1e-9:
            raise GameValidationError(
                "zero_sum mode requires rewards summing to a constant across players"
            )
    bound = (1.0 - game.discount) / (32.0 * math.sqrt(game.num_actions))
    if config.eta > bound:
        warnings.warn(
            f"eta={config.eta:.3g} exceeds the theory range (0, {bound:.3g}]; "
            "convergence is not guaranteed",
            RuntimeWarning,
            stacklevel=3,
        )


def _critic_matrices(game: TabularMarkovGame, critic: np.ndarray) -> np.ndarray:
    """(S, A, A) critic payoff Q[s, a1, a2] from player 1's reward and the critic."""
    a = game.num_actions
    backed = game.rewards[0] + game.discount * (game.transition @ critic)  # (S, JA)
    # Joint index a1 + A * a2 reshapes to [a2, a1]; swap to [a1, a2].
    return backed.reshape(game.num_states, a, a).transpose(0, 2, 1)


def _optimistic_core(
    game: TabularMarkovGame, state: OptimisticState, config: OptimisticConfig
) -> OptimisticState:
    t = state.iteration + 1
    alpha = config.critic_rate(t, game.discount)
    if not 0.0 < alpha <= 1.0 / 6.0:
        raise ValueError(f"critic rate alpha={alpha} at step {t} outside (0, 1/6]")
    q = _critic_matrices(game, state.critic)  # (S, A, A)
    grad_x = np.einsum("sab,sb->sa", q, state.y)
    grad_y = np.einsum("sab,sa->sb", q, state.x)
    if config.mode == "zero_sum":
        grad_y = -grad_y
    eta = config.eta
    x_bar = project_rows_simplex(state.x_bar + eta * grad_x)
    x = project_rows_simplex(x_bar + eta * grad_x)
    y_bar = project_rows_simplex(state.y_bar + eta * grad_y)
    y = project_rows_simplex(y_bar + eta * grad_y)
    payoff = np.einsum("sa,sab,sb->s", state.x, q, state.y)
    critic = (1.0 - alpha) * state.critic + alpha * payoff
    limit = 1.0 / (1.0 - game.discount) + 1e-9
    if np.any(critic < -1e-9) or np.any(critic > limit):
        raise GameValidationError("critic left the value range [0, 1/(1-gamma)]")
    return OptimisticState(x=x, x_bar=x_bar, y=y, y_bar=y_bar, critic=critic, iteration=t)


def step_optimistic(
    game: TabularMarkovGame, state: OptimisticState, config: OptimisticConfig
) -> OptimisticState:
    """One optimistic update; see the module docstring for the scheme."""
    _check_optimistic_game(game, config)
    return _optimistic_core(game, state, config)


def run_optimistic(game: TabularMarkovGame, config: OptimisticConfig) -> LearnTrace:
    """Iterate step_optimistic from the uniform initialization, recording gaps."""
    _check_optimistic_game(game, config)
    state = OptimisticState.initial(game.num_states, game.num_actions)
    cadence = config.cadence if config.cadence is not None else default_cadence(game)
    wanted = _record_iterations(config.iterations, cadence)
    hints = np.zeros((2, game.num_states))
    trace = LearnTrace()
    for t in range(1, config.iterations + 1):
        if t in wanted:
            policy = state.as_policy()
            report = nash_gap(game, policy, value_hints=hints)
            snapshot = policy if config.record_policies else None
            trace.append(TraceRecord(iteration=t, policy=snapshot, gaps=report))
        if t < config.iterations:
            state = _optimistic_core(game, state, config)
    return trace
