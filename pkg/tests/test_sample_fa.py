"""Sampling, regression, and the sample-based learner."""

import numpy as np
import pytest

import mpglearn as m
from mpglearn import (
    FeatureMap,
    JointPolicy,
    RegressionConfig,
    SamplePGConfig,
    TabularMarkovGame,
)

from helpers import random_game


def one_state_unit_reward(gamma):
    return TabularMarkovGame(1, 1, 1, np.ones((1, 1, 1)), np.ones((1, 1, 1)), gamma, np.ones(1))


# ---------------------------------------------------------------------------
# geometric sampling
# ---------------------------------------------------------------------------


def test_geometric_zero_discount_always_zero():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert m.sample_geometric(rng, 0.0) == 0
    assert np.all(m.sample_geometric(rng, 0.0, size=1000) == 0)


def test_geometric_mean_matches_closed_form():
    rng = np.random.default_rng(1)
    gamma = 0.5
    draws = m.sample_geometric(rng, gamma, size=1_000_000)
    mean, want = draws.mean(), gamma / (1 - gamma)
    sigma = np.sqrt(gamma) / (1 - gamma) / np.sqrt(draws.size)
    assert abs(mean - want) <= 3 * sigma


def test_geometric_mass_at_zero():
    rng = np.random.default_rng(2)
    gamma = 0.9
    draws = m.sample_geometric(rng, gamma, size=1_000_000)
    frac = (draws == 0).mean()
    sigma = np.sqrt(0.1 * 0.9 / draws.size)
    assert abs(frac - 0.1) <= 3 * sigma


def test_geometric_rejects_bad_discount():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        m.sample_geometric(rng, 1.0)
    with pytest.raises(ValueError):
        m.sample_geometric(rng, -0.2)


# ---------------------------------------------------------------------------
# batch collection
# ---------------------------------------------------------------------------


def test_collect_batch_unbiased_on_deterministic_game():
    game = one_state_unit_reward(0.5)
    policy = JointPolicy.uniform(1, 1, 1)
    exact = m.evaluate(game, policy).averaged[0, 0, 0]  # = 2
    batch = m.collect_batch(game, policy, 20_000, np.random.default_rng(4))[0]
    se = batch.returns.std(ddof=1) / np.sqrt(len(batch))
    assert abs(batch.returns.mean() - exact) <= 3 * se


def test_collect_batch_zero_discount_keeps_first_reward():
    # With gamma = 0 the offset is 0 and the window has length one, so the
    # return is exactly the first-step reward of the recorded pair.
    rng = np.random.default_rng(5)
    game = random_game(rng, 1, 2, 3, 0.0)
    policy = JointPolicy.random(2, 1, 3, rng)
    batches = m.collect_batch(game, policy, 500, rng)
    decode = game.decode
    for i, batch in enumerate(batches):
        assert np.all(batch.states == 0)
        own = game.rewards[i, 0]
        for k in range(len(batch)):
            candidates = own[decode[:, i] == batch.actions[k]]
            assert np.any(np.abs(candidates - batch.returns[k]) < 1e-12)


def test_collect_batch_empty():
    game = one_state_unit_reward(0.5)
    batches = m.collect_batch(game, JointPolicy.uniform(1, 1, 1), 0, np.random.default_rng(6))
    assert len(batches) == 1 and len(batches[0]) == 0


def test_collect_batch_shared_trajectory_correlates_players():
    # Both players sample from one rollout: with one state and equal offsets
    # forced by gamma = 0, their recorded states agree.
    rng = np.random.default_rng(7)
    game = random_game(rng, 3, 2, 2, 0.0)
    policy = JointPolicy.uniform(2, 3, 2)
    batches = m.collect_batch(game, policy, 300, rng)
    assert np.array_equal(batches[0].states, batches[1].states)


def test_sample_dump_format(tmp_path):
    game = one_state_unit_reward(0.3)
    batches = m.collect_batch(game, JointPolicy.uniform(1, 1, 1), 5, np.random.default_rng(8))
    path = tmp_path / "samples.csv"
    m.write_sample_dump(path, batches)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "round,player,state,action,return"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "0"


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------


def sphere_features(rng, count, dim):
    raw = rng.normal(size=(count, dim))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def synthetic_batch_and_features(rng, count, dim, noise, true_w):
    """Pack synthetic regression data into the (batch, features) calling shape."""
    phi = sphere_features(rng, count, dim)
    returns = phi @ true_w + noise * rng.normal(size=count)
    features = phi[:, None, :]  # (S=count, A=1, d)
    batch = m.SampleBatch(
        states=np.arange(count), actions=np.zeros(count, dtype=int), returns=returns
    )
    return batch, features


def test_spgd_noiseless_recovery():
    rng = np.random.default_rng(9)
    dim, bound = 3, 1.0
    true_w = rng.normal(size=dim)
    true_w *= 0.8 / np.linalg.norm(true_w)
    batch, features = synthetic_batch_and_features(rng, 2000, dim, 0.0, true_w)
    config = RegressionConfig(weight_bound=bound, inner_steps=10_000)
    w = m.spgd_regress(batch, features, config, rng)
    loss = np.mean((features[batch.states, batch.actions] @ w - batch.returns) ** 2)
    assert loss <= 1e-3


def test_spgd_zero_targets_returns_zero():
    rng = np.random.default_rng(10)
    batch, features = synthetic_batch_and_features(rng, 100, 4, 0.0, np.zeros(4))
    config = RegressionConfig(weight_bound=5.0, inner_steps=500)
    w = m.spgd_regress(batch, features, config, rng)
    assert np.allclose(w, 0.0, atol=0)


def test_spgd_output_respects_norm_bound():
    rng = np.random.default_rng(11)
    true_w = rng.normal(size=4) * 10.0
    batch, features = synthetic_batch_and_features(rng, 200, 4, 0.1, true_w)
    config = RegressionConfig(weight_bound=0.5)
    w = m.spgd_regress(batch, features, config, rng)
    assert np.linalg.norm(w) <= 0.5 + 1e-12


def test_spgd_rejects_empty_batch():
    empty = m.SampleBatch(np.empty(0, dtype=int), np.empty(0, dtype=int), np.empty(0))
    with pytest.raises(ValueError):
        m.spgd_regress(empty, np.zeros((1, 1, 2)), RegressionConfig(weight_bound=1.0), np.random.default_rng(0))


# ---------------------------------------------------------------------------
# policy update
# ---------------------------------------------------------------------------


def test_tabular_features_with_exact_weights_reduce_to_exact_step():
    rng = np.random.default_rng(12)
    game = random_game(rng, 2, 2, 2, 0.6)
    policy = JointPolicy.random(2, 2, 2, rng)
    profile = m.evaluate(game, policy)
    features = FeatureMap.tabular(2, 2, 2)
    weights = profile.averaged.reshape(2, -1)  # indicator basis: weights = Qbar
    eta = 0.2
    sampled = m.step_sample_pg(game, policy, weights, eta, 0.0, features)
    exact = m.step_exact_pg(game, policy, eta, value_profile=profile)
    assert np.allclose(sampled.probs, exact.probs, atol=1e-12)


def test_zero_eta_projects_onto_floor_set_only():
    game = random_game(np.random.default_rng(13), 1, 2, 2, 0.5)
    uniform = JointPolicy.uniform(2, 1, 2)
    features = FeatureMap.tabular(2, 1, 2)
    stepped = m.step_sample_pg(game, uniform, np.zeros((2, features.dim)), 0.0, 0.5, features)
    assert np.allclose(stepped.probs, uniform.probs, atol=1e-15)


def test_exploration_floor_enforced():
    rng = np.random.default_rng(14)
    game = random_game(rng, 1, 2, 4, 0.5)
    policy = JointPolicy.random(2, 1, 4, rng)
    features = FeatureMap.tabular(2, 1, 4)
    weights = rng.normal(scale=30.0, size=(2, features.dim))
    weights /= np.maximum(np.linalg.norm(weights, axis=1, keepdims=True), 1.0)
    weights *= 20.0
    stepped = m.step_sample_pg(game, policy, weights, 0.5, 0.2, features)
    assert stepped.probs.min() >= 0.05 - 1e-10


def test_weight_bound_violation_rejected():
    game = random_game(np.random.default_rng(15), 1, 1, 2, 0.5)
    features = FeatureMap.tabular(1, 1, 2)
    big = np.full((1, 2), 10.0)
    with pytest.raises(ValueError, match="weight norm"):
        m.step_sample_pg(game, JointPolicy.uniform(1, 1, 2), big, 0.1, 0.1, features, weight_bound=1.0)


def test_feature_norm_bound_enforced():
    with pytest.raises(ValueError, match="feature norm"):
        FeatureMap(np.full((1, 1, 1, 4), 1.0))


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


def test_run_single_iteration_trace():
    rng = np.random.default_rng(16)
    game = random_game(rng, 2, 2, 2, 0.5, identical_rewards=True)
    config = SamplePGConfig(iterations=1, batch_size=1, eta=0.1, xi=0.1, seed=1)
    trace = m.run_sample_pg(game, config)
    assert len(trace) == 1
    assert np.isfinite(trace.records[0].gaps.max_gap)


def test_run_seed_determinism_is_bitwise():
    rng = np.random.default_rng(17)
    game = random_game(rng, 2, 2, 2, 0.8, identical_rewards=True)
    config = SamplePGConfig(iterations=5, batch_size=50, eta=0.05, xi=0.1, seed=42)
    a = m.run_sample_pg(game, config)
    b = m.run_sample_pg(game, config)
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.policy.probs, rb.policy.probs)
        assert ra.gaps.max_gap == rb.gaps.max_gap
    other = m.run_sample_pg(game, SamplePGConfig(iterations=5, batch_size=50, eta=0.05, xi=0.1, seed=43))
    assert any(
        not np.array_equal(ra.policy.probs, rb.policy.probs)
        for ra, rb in zip(a.records, other.records)
    )


def test_run_policies_respect_floor_every_iteration():
    rng = np.random.default_rng(18)
    game = random_game(rng, 2, 2, 2, 0.6, identical_rewards=True)
    config = SamplePGConfig(iterations=6, batch_size=40, eta=0.3, xi=0.2, seed=3)
    trace = m.run_sample_pg(game, config)
    for rec in trace.records[1:]:
        assert rec.policy.probs.min() >= 0.2 / 2 - 1e-10


def test_default_xi_formula_and_cap():
    game = random_game(np.random.default_rng(19), 2, 2, 2, 0.99, identical_rewards=True)
    assert m.default_xi(game, dim=4, batch_size=2000) == 0.5
    value = m.default_xi(game, dim=4, batch_size=10**12)
    expected = (2 * 2 * 4 / ((0.01) ** 4 * 10**12)) ** (1 / 3)
    assert value == pytest.approx(expected)


def test_run_on_congestion_game_smoke():
    # Small-batch shared rollouts on the crowding game stay well-formed.
    spec = m.CongestionSpec(num_players=4, discount=0.95)
    game = m.build_congestion(spec)
    config = SamplePGConfig(iterations=3, batch_size=20, eta=0.002, xi=0.1, seed=0, cadence=1)
    trace = m.run_sample_pg(game, config)
    assert len(trace) == 3
    gaps = trace.max_gaps()
    assert np.all(np.isfinite(gaps)) and np.all(gaps >= -1e-8)
