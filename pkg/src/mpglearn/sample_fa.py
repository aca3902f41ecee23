"""Sample-based policy gradient with linear function approximation.

One learning iteration has two phases. Phase 1 rolls shared trajectories:
for each of K rounds, every player i draws a start offset h_i and a window
length h_i' from geometric distributions, all players follow the current
policy on one trajectory of length max_i (h_i + h_i'), and player i keeps the
tuple (state at h_i, own action at h_i, sum of its raw rewards over
[h_i, h_i + h_i' - 1]). The offset h_i counts failures before a success
(support 0, 1, ...), which makes the kept state follow the discounted
visitation distribution; the window length h_i' counts trials (support
1, 2, ...), which makes the kept return unbiased for the averaged action
value at the kept state-action pair.

Phase 2 fits one weight vector per player by stochastic projected gradient
descent on the squared regression loss over the K tuples (norm-ball
constraint, weighted iterate averaging) and moves every policy row to the
floor-constrained projection of pi_i(.|s) + eta * <phi_i(s, .), w_i>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evaluation import LearnTrace, TraceRecord, nash_gap
from .game import GameValidationError, JointPolicy, TabularMarkovGame, check_policy_matches
from .learners import default_cadence, _record_iterations
from .simplex import project_rows_xi_simplex

FEATURE_NORM_ATOL = 1e-9
WEIGHT_NORM_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Per-player feature tables phi_i(s, a_i), stored as an (N, S, A, d) array.

    Every feature vector must have Euclidean norm at most one; this is checked
    at construction.
    """

    tables: np.ndarray

    def __post_init__(self):
        tables = np.asarray(self.tables, dtype=float)
        if tables.ndim != 4:
            raise ValueError(f"feature tables must be (N, S, A, d), got shape {tables.shape}")
        norms = np.linalg.norm(tables, axis=-1)
        worst = float(norms.max())
        if worst > 1.0 + FEATURE_NORM_ATOL:
            raise ValueError(f"feature norm {worst:.6g} exceeds 1")
        tables.flags.writeable = False
        object.__setattr__(self, "tables", tables)

    @property
    def dim(self) -> int:
        return self.tables.shape[-1]

    @property
    def num_players(self) -> int:
        return self.tables.shape[0]

    @classmethod
    def tabular(cls, num_players: int, num_states: int, num_actions: int) -> "FeatureMap":
        """Indicator features of dimension S * A; one basis vector per (s, a)."""
        d = num_states * num_actions
        table = np.zeros((num_states, num_actions, d))
        for s in range(num_states):
            for a in range(num_actions):
                table[s, a, s * num_actions + a] = 1.0
        return cls(np.broadcast_to(table, (num_players, num_states, num_actions, d)).copy())

    def q_estimates(self, weights: np.ndarray) -> np.ndarray:
        """(N, S, A) estimated averaged action values from per-player weights."""
        return np.einsum("isad,id->isa", self.tables, np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class SampleTuple:
    """One regression sample: visited state, own action, windowed raw-reward sum."""

    state: int
    action: int
    ret: float


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Column-oriented batch of sample tuples for one player."""

    states: np.ndarray   # (K,) int
    actions: np.ndarray  # (K,) int
    returns: np.ndarray  # (K,) float

    def __len__(self) -> int:
        return self.states.size

    def tuples(self) -> list[SampleTuple]:
        return [
            SampleTuple(int(s), int(a), float(r))
            for s, a, r in zip(self.states, self.actions, self.returns)
        ]


def sample_geometric(rng: np.random.Generator, gamma: float, size=None):
    """Failures before the first success: P(h = k) = (1 - gamma) gamma^k, k >= 0."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma={gamma} outside [0, 1)")
    draws = rng.geometric(1.0 - gamma, size=size) - 1
    if size is None:
        return int(draws)
    return draws


def _sample_rows(prob_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one category per row of a (m, C) probability matrix."""
    cdf = np.cumsum(prob_rows, axis=1)
    u = rng.random(prob_rows.shape[0])
    return np.minimum((cdf < u[:, None]).sum(axis=1), prob_rows.shape[1] - 1)


def collect_batch(
    game: TabularMarkovGame,
    policy: JointPolicy,
    num_rounds: int,
    rng: np.random.Generator,
) -> list[SampleBatch]:
    """Phase-1 data collection: one shared rollout per round, one tuple per player.

    All rounds are simulated as one vectorized batch, ordered by decreasing
    horizon so the still-running rounds always form a prefix of the working
    arrays. A window length of zero cannot occur (h' >= 1), so every player's
    tuple is recorded strictly before its round ends.
    """
    check_policy_matches(game, policy)
    n = game.num_players
    if num_rounds < 0:
        raise ValueError("num_rounds must be >= 0")
    if num_rounds == 0:
        empty_i = np.empty(0, dtype=int)
        return [SampleBatch(empty_i, empty_i, np.empty(0)) for _ in range(n)]
    gamma = game.discount
    offset = sample_geometric(rng, gamma, size=(n, num_rounds))       # h_i
    window = 1 + sample_geometric(rng, gamma, size=(n, num_rounds))   # h_i' >= 1
    horizon = (offset + window).max(axis=0)                            # steps per round

    order = np.argsort(-horizon, kind="stable")
    offset = offset[:, order]
    deadline = offset + window[:, order]
    horizon = horizon[order]

    rec_state = np.zeros((n, num_rounds), dtype=np.int64)
    rec_action = np.zeros((n, num_rounds), dtype=np.int64)
    returns = np.zeros((n, num_rounds))

    policy_cdf = np.cumsum(policy.probs, axis=2)        # (N, S, A)
    transition_cdf = np.cumsum(game.transition, axis=2)  # (S, JA, S)
    powers = (game.num_actions ** np.arange(n))[:, None]

    state = _sample_rows(
        np.broadcast_to(game.initial_dist, (num_rounds, game.num_states)), rng
    )
    alive = num_rounds
    step = 0
    while alive:
        # One batched draw covers every player's action and the transition.
        u = rng.random((n + 1, alive))
        action_cdf = policy_cdf[:, state, :]  # (N, m, A)
        actions = (action_cdf < u[:n, :, None]).sum(axis=2)
        np.minimum(actions, game.num_actions - 1, out=actions)
        joint = (actions * powers).sum(axis=0)

        rel = step - offset[:, :alive]  # (N, m)
        starting = rel == 0
        rec_state[:, :alive][starting] = np.broadcast_to(state, (n, alive))[starting]
        rec_action[:, :alive][starting] = actions[starting]
        active = (rel >= 0) & (step < deadline[:, :alive])
        returns[:, :alive][active] += game.rewards[:, state, joint][active]

        cdf = transition_cdf[state, joint]
        state = (cdf < u[n, :, None]).sum(axis=1)
        np.minimum(state, game.num_states - 1, out=state)
        step += 1
        alive = int(np.searchsorted(-horizon, -step, side="left"))  # rounds with horizon > step
        state = state[:alive]
    inverse = np.empty(num_rounds, dtype=np.int64)
    inverse[order] = np.arange(num_rounds)
    return [
        SampleBatch(rec_state[i][inverse], rec_action[i][inverse], returns[i][inverse])
        for i in range(n)
    ]


def write_sample_dump(path, batches: list[SampleBatch]) -> None:
    """Dump raw tuples as delimited text with columns round,player,state,action,return."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("round,player,state,action,return\n")
        for i, batch in enumerate(batches):
            for k in range(len(batch)):
                fh.write(
                    f"{k},{i},{batch.states[k]},{batch.actions[k]},{batch.returns[k]!r}\n"
                )


@dataclass(frozen=True)
class RegressionConfig:
    """Stochastic projected gradient descent settings for the Phase-2 fit.

    The stepsize schedule is 2/(2+k) and iterates are averaged with weights
    proportional to (2+k)/2, starting from the zero vector. The default
    weight-norm bound sqrt(d)/(1-gamma) must be supplied by the caller since
    the config does not know d or gamma.
    """

    weight_bound: float
    inner_steps: int | None = None  # default: one pass worth, i.e. the batch size

    def __post_init__(self):
        if self.weight_bound <= 0.0:
            raise ValueError("weight_bound must be positive")
        if self.inner_steps is not None and self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")


def default_weight_bound(dim: int, gamma: float) -> float:
    return math.sqrt(dim) / (1.0 - gamma)


def spgd_regress(
    batch: SampleBatch,
    features: np.ndarray,
    config: RegressionConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fit weights to the batch by projected SGD with weighted averaging.

    features is the (S, A, d) table of one player. Tuples are resampled
    uniformly with replacement; each step follows the gradient of the sampled
    squared error and projects back onto the weight-norm ball. The returned
    vector is the schedule-weighted average of all iterates, so it stays
    inside the ball.
    """
    if len(batch) == 0:
        raise ValueError("cannot regress on an empty sample batch")
    bound = config.weight_bound
    bound_sq = bound * bound
    gathered = features[batch.states, batch.actions]  # (K, d)
    targets = batch.returns.tolist()
    steps = config.inner_steps if config.inner_steps is not None else len(batch)
    picks = rng.integers(0, len(batch), size=steps).tolist()
    d = features.shape[-1]
    w = np.zeros(d)
    acc = np.zeros(d)
    weight_sum = 1.0  # iterate 0 carries averaging weight (2+0)/2 = 1
    for k, pick in enumerate(picks):
        phi = gathered[pick]
        scale = (2.0 / (2.0 + k)) * 2.0 * (float(phi @ w) - targets[pick])
        w = w - scale * phi
        norm_sq = float(w @ w)
        if norm_sq > bound_sq:
            w *= bound / math.sqrt(norm_sq)
        avg_weight = (2.0 + (k + 1)) / 2.0
        acc += avg_weight * w
        weight_sum += avg_weight
    return acc / weight_sum


def step_sample_pg(
    game: TabularMarkovGame,
    policy: JointPolicy,
    weights: np.ndarray,
    eta: float,
    xi: float,
    features: FeatureMap,
    weight_bound: float | None = None,
) -> JointPolicy:
    """Floor-constrained projected ascent on the estimated averaged action values."""
    check_policy_matches(game, policy)
    if eta < 0.0:
        raise ValueError(f"stepsize eta={eta} must be nonnegative")
    weights = np.asarray(weights, dtype=float)
    if weight_bound is not None:
        norms = np.linalg.norm(weights, axis=-1)
        if np.any(norms > weight_bound + WEIGHT_NORM_ATOL):
            raise ValueError(
                f"weight norm {float(norms.max()):.6g} exceeds bound {weight_bound:.6g}"
            )
    estimates = features.q_estimates(weights)  # (N, S, A)
    return JointPolicy(project_rows_xi_simplex(policy.probs + eta * estimates, xi))


@dataclass(frozen=True)
class SamplePGConfig:
    iterations: int
    batch_size: int
    eta: float
    xi: float | None = None            # None: plug the statistical-error formula below
    seed: int = 0
    features: FeatureMap | None = None  # None: per-player tabular indicators
    weight_bound: float | None = None   # None: sqrt(d)/(1-gamma)
    inner_steps: int | None = None      # None: batch_size
    kappa: float = 1.0                  # mismatch estimate fed to the default xi
    cadence: int | None = None
    record_policies: bool = True
    sample_dump_dir: str | None = None  # one tuples file per iteration when set

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.xi is not None and not 0.0 < self.xi <= 0.5:
            raise ValueError(f"xi={self.xi} outside (0, 1/2]")


def default_xi(
    game: TabularMarkovGame, dim: int, batch_size: int, kappa: float = 1.0
) -> float:
    """Exploration rate from the statistical-error heuristic, capped at 1/2.

    Uses eps_stat ~= d W^2 / ((1-gamma)^2 K) with W = sqrt(d)/(1-gamma), so
    xi = min((kappa^2 N A d / ((1-gamma)^4 K))^{1/3}, 1/2).
    """
    gamma = game.discount
    raw = (
        kappa**2
        * game.num_players
        * game.num_actions
        * dim
        / ((1.0 - gamma) ** 4 * batch_size)
    ) ** (1.0 / 3.0)
    return min(raw, 0.5)


def run_sample_pg(game: TabularMarkovGame, config: SamplePGConfig) -> LearnTrace:
    """Alternate collect / regress / update for the configured iteration count.

    Gap reports come from the exact evaluators, which act purely as a
    measurement oracle; the learner itself sees only sampled tuples. Traces
    are bitwise reproducible for a fixed seed: iteration t draws its
    randomness from a stream keyed by (seed, t).
    """
    features = (
        config.features
        if config.features is not None
        else FeatureMap.tabular(game.num_players, game.num_states, game.num_actions)
    )
    if features.num_players != game.num_players:
        raise GameValidationError("feature map player count does not match the game")
    bound = (
        config.weight_bound
        if config.weight_bound is not None
        else default_weight_bound(features.dim, game.discount)
    )
    xi = config.xi if config.xi is not None else default_xi(game, features.dim, config.batch_size, config.kappa)
    reg = RegressionConfig(weight_bound=bound, inner_steps=config.inner_steps)
    policy = JointPolicy.uniform(game.num_players, game.num_states, game.num_actions)
    cadence = config.cadence if config.cadence is not None else default_cadence(game)
    wanted = _record_iterations(config.iterations, cadence)
    hints = np.zeros((game.num_players, game.num_states))
    trace = LearnTrace()
    for t in range(1, config.iterations + 1):
        if t in wanted:
            report = nash_gap(game, policy, value_hints=hints)
            snapshot = policy if config.record_policies else None
            trace.append(TraceRecord(iteration=t, policy=snapshot, gaps=report))
        if t == config.iterations:
            break
        rng = np.random.default_rng([config.seed, t])
        batches = collect_batch(game, policy, config.batch_size, rng)
        if config.sample_dump_dir is not None:
            write_sample_dump(f"{config.sample_dump_dir}/samples_t{t:05d}.csv", batches)
        weights = np.stack(
            [spgd_regress(batches[i], features.tables[i], reg, rng) for i in range(game.num_players)]
        )
        policy = step_sample_pg(game, policy, weights, config.eta, xi, features, bound)
    return trace
