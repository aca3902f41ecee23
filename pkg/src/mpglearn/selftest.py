"""Fast built-in invariant suites backing the CLI selftest command.

Each suite returns (name, ok, detail). They are deliberately small: full
coverage lives in the test suite; these catch a broken build in seconds.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import simplex
from .envs import build_cooperative_random
from .evaluation import decomposition_residual, evaluate, performance_difference_residual
from .game import JointPolicy
from .sample_fa import collect_batch


def projection_suite(trials: int = 200, seed: int = 7) -> tuple[str, bool, str]:
    name = "simplex-projection"
    rng = np.random.default_rng(seed)
    known = [
        (np.array([2.0, 0.0]), np.array([1.0, 0.0])),
        (np.array([0.5, 0.5, -1.0]), np.array([0.5, 0.5, 0.0])),
        (np.array([0.25, 0.25, 0.5]), np.array([0.25, 0.25, 0.5])),
    ]
    for v, expected in known:
        got = simplex.project_simplex(v)
        if np.max(np.abs(got - expected)) > 1e-12:
            return name, False, f"project({v.tolist()}) = {got.tolist()}"
    for _ in range(trials):
        a = int(rng.integers(2, 6))
        v = rng.normal(scale=2.0, size=a)
        p = simplex.project_simplex(v)
        if abs(p.sum() - 1.0) > 1e-10 or p.min() < -1e-12:
            return name, False, f"projection of {v.tolist()} is not a distribution"
        again = simplex.project_simplex(p)
        if np.max(np.abs(again - p)) > 1e-12:
            return name, False, "projection is not idempotent"
        u = rng.normal(scale=2.0, size=a)
        q = simplex.project_simplex(u)
        if np.linalg.norm(p - q) > np.linalg.norm(v - u) + 1e-12:
            return name, False, "projection is expansive"
    return name, True, f"{trials} random vectors"


def decomposition_suite(tables: int = 20, seed: int = 11) -> tuple[str, bool, str]:
    name = "pairwise-decomposition"
    rng = np.random.default_rng(seed)
    for _ in range(tables):
        n = int(rng.integers(2, 5))
        psi = {
            key: float(rng.normal())
            for key in itertools.product(("old", "new"), repeat=n)
        }
        residual = decomposition_residual(psi, n)
        if residual > 1e-12:
            return name, False, f"residual {residual:.3g} on a random {n}-player table"
    return name, True, f"{tables} random tables"


def value_difference_suite(instances: int = 10, seed: int = 13) -> tuple[str, bool, str]:
    name = "value-difference-identity"
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        s = int(rng.integers(1, 4))
        n = int(rng.integers(2, 4))
        a = int(rng.integers(2, 4))
        game = build_cooperative_random(s, n, a, 0.7, rng)
        player = int(rng.integers(n))
        base = JointPolicy.random(n, s, a, rng)
        hat = rng.dirichlet(np.ones(a), size=s)
        bar = rng.dirichlet(np.ones(a), size=s)
        mu = rng.dirichlet(np.ones(s))
        residual = performance_difference_residual(game, player, hat, bar, base, mu)
        if residual > 1e-8:
            return name, False, f"residual {residual:.3g} on a random instance"
    return name, True, f"{instances} random instances"


def unbiasedness_suite(rounds: int = 20_000, seed: int = 17) -> tuple[str, bool, str]:
    name = "sampling-unbiasedness"
    rng = np.random.default_rng(seed)
    game = build_cooperative_random(1, 1, 1, 0.5, rng)
    policy = JointPolicy.uniform(1, 1, 1)
    exact = evaluate(game, policy).averaged[0, 0, 0]
    batch = collect_batch(game, policy, rounds, np.random.default_rng(seed + 1))[0]
    mean = batch.returns.mean()
    stderr = batch.returns.std(ddof=1) / np.sqrt(rounds)
    if abs(mean - exact) > 4.0 * stderr:
        return name, False, f"mean return {mean:.4f} vs exact {exact:.4f} (se {stderr:.2g})"
    return name, True, f"{rounds} rounds, |bias| <= 4 se"


ALL_SUITES = (
    projection_suite,
    decomposition_suite,
    value_difference_suite,
    unbiasedness_suite,
)


def run_selftest(stream=None) -> int:
    """Run every suite, print one line per suite, return a process exit code."""
    import sys

    stream = stream if stream is not None else sys.stdout
    failures = []
    for suite in ALL_SUITES:
        name, ok, detail = suite()
        status = "ok" if ok else "FAIL"
        print(f"{status:4s} {name}: {detail}", file=stream)
        if not ok:
            failures.append(name)
    if failures:
        print(f"selftest failed: {', '.join(failures)}", file=stream)
        return 1
    print("selftest passed", file=stream)
    return 0
