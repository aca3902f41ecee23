"""Experiment command line.

Subcommands:
  run       execute a configured experiment; one delimited trace per seed, a
            summary file, and learning-curve figures in the output directory
  eval      print the per-player best-response gaps of a policy on a game
  selftest  run the fast invariant suites

Configuration is a JSON file; see the README for the full key reference.
Log verbosity is controlled by the MPGLEARN_LOG environment variable
(debug, info, warning; default warning).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .envs import CongestionSpec, build_congestion, build_cooperative_random, build_matrix_game
from .evaluation import BudgetExceededError, estimate_kappa, nash_gap
from .game import (
    GameValidationError,
    JointPolicy,
    TabularMarkovGame,
    load_game,
    load_policy,
)
from .learners import (
    ExactPGConfig,
    OptimisticConfig,
    run_exact_pg,
    run_optimistic,
    suggest_stepsize,
)
from .sample_fa import SamplePGConfig, run_sample_pg
from .selftest import run_selftest

log = logging.getLogger("mpglearn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

LEARNERS = ("exact_pg", "sample_pg", "optimistic")


class ConfigError(Exception):
    """Invalid experiment configuration; carries the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _setup_logging() -> None:
    level = os.environ.get("MPGLEARN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(message)s")


# ---------------------------------------------------------------------------
# Configuration handling
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", "top-level value must be an object")
    return doc


def _build_game(doc: dict) -> TabularMarkovGame:
    game_spec = doc.get("game")
    if not isinstance(game_spec, dict):
        raise ConfigError("game", "must be an object with 'file' or 'builder'")
    has_file = "file" in game_spec
    has_builder = "builder" in game_spec
    if has_file == has_builder:
        raise ConfigError("game", "exactly one of 'file' and 'builder' is required")
    if has_file:
        return load_game(game_spec["file"])
    builder = game_spec["builder"]
    params = game_spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("game.params", "must be an object")
    try:
        if builder == "congestion":
            spec = CongestionSpec(
                num_players=params.get("n_players", 8),
                weights_safe=tuple(params.get("weights_safe", (1.0, 2.0, 4.0, 6.0))),
                weights_distancing=tuple(params.get("weights_distancing", (0.5, 1.0, 2.0, 3.0))),
                penalty=params.get("penalty"),
                discount=params.get("gamma", 0.99),
                initial_dist=tuple(params["rho"]) if "rho" in params else None,
            )
            return build_congestion(spec)
        if builder == "cooperative_random":
            required = ("n_states", "n_players", "n_actions", "gamma", "seed")
            missing = [key for key in required if key not in params]
            if missing:
                raise ConfigError("game.params", f"missing {', '.join(missing)}")
            return build_cooperative_random(
                int(params["n_states"]),
                int(params["n_players"]),
                int(params["n_actions"]),
                float(params["gamma"]),
                np.random.default_rng(int(params["seed"])),
            )
        if builder == "matrix":
            if "payoff" not in params:
                raise ConfigError("game.params.payoff", "required for the matrix builder")
            return build_matrix_game(
                np.asarray(params["payoff"], dtype=float),
                params.get("mode", "cooperative"),
                float(params.get("gamma", 0.9)),
            )
    except GameValidationError:
        raise
    raise ConfigError("game.builder", f"unknown builder {builder!r}")


def _positive_int(doc: dict, key: str, required: bool = True, default=None) -> int | None:
    if key not in doc:
        if required:
            raise ConfigError(key, "is required")
        return default
    value = doc[key]
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(key, f"T must be >= 1, got {value!r}")
    return value


def _resolve_eta(doc: dict, game: TabularMarkovGame, learner: str, iterations: int) -> float:
    eta = doc.get("eta", "auto")
    if eta != "auto":
        if not isinstance(eta, (int, float)) or eta <= 0:
            raise ConfigError("eta", f"must be a positive number or 'auto', got {eta!r}")
        return float(eta)
    if learner == "optimistic":
        alpha = float(doc.get("alpha", 1.0 / 12.0))
        value = (
            (1.0 - game.discount) ** 2
            * alpha
            / (32.0 * np.sqrt(game.num_states * game.num_actions))
        )
        log.info("auto stepsize (optimistic critic rule): eta=%.6g", value)
        return value
    if game.identical_rewards(atol=1e-9):
        value = suggest_stepsize(game, "cooperative")
        log.info("auto stepsize (cooperative rule): eta=%.6g", value)
        return value
    try:
        kappa = estimate_kappa(game, game.initial_dist)
    except BudgetExceededError:
        if np.any(game.initial_dist <= 0):
            raise ConfigError(
                "eta", "auto stepsize needs rho > 0 when mismatch enumeration exceeds its budget"
            )
        kappa = float(1.0 / game.initial_dist.min())
        log.info("mismatch enumeration over budget; using upper bound kappa=%.3g", kappa)
    value = suggest_stepsize(game, "potential_mismatch", kappa_hat=max(kappa, 1.0))
    log.info("auto stepsize (mismatch rule, kappa=%.3g): eta=%.6g", kappa, value)
    return value


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _write_trace(path: Path, trace, num_players: int) -> None:
    iterations = trace.iterations()
    gaps = trace.max_gaps()
    per_player = np.stack([rec.gaps.per_player_gap for rec in trace.records])
    distances = trace.policy_distances_to_final()
    header = ["t", "max_gap"] + [f"gap_player_{i}" for i in range(num_players)]
    header.append("mean_policy_l1_distance_to_final")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in range(len(iterations)):
            cells = [str(int(iterations[row])), repr(float(gaps[row]))]
            cells += [repr(float(v)) for v in per_player[row]]
            cells.append(repr(float(distances[row])))
            fh.write(",".join(cells) + "\n")


def cmd_run(args) -> int:
    doc = _load_config(args.config)
    game = _build_game(doc)

    learner = doc.get("learner")
    if learner not in LEARNERS:
        raise ConfigError("learner", f"must be one of {LEARNERS}, got {learner!r}")
    iterations = _positive_int(doc, "iterations")

    seeds = doc.get("seeds", [0])
    if args.seed is not None:
        seeds = args.seed
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds
    ):
        raise ConfigError("seeds", "must be a nonempty list of integers")

    cadence = args.cadence if args.cadence is not None else doc.get("cadence")
    if cadence is not None and (not isinstance(cadence, int) or cadence < 1):
        raise ConfigError("cadence", f"must be a positive integer, got {cadence!r}")

    out_dir = Path(args.out if args.out is not None else doc.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    eta = _resolve_eta(doc, game, learner, iterations)
    init_mode = doc.get("init", "uniform")
    if init_mode not in ("uniform", "random"):
        raise ConfigError("init", f"must be 'uniform' or 'random', got {init_mode!r}")

    summary_path = out_dir / "summary.csv"
    gap_curves = {}
    distance_curves = {}
    with open(summary_path, "w", encoding="utf-8", newline="\n") as summary:
        summary.write("seed,nash_regret,t_star,min_max_gap,wall_time_s\n")
        for seed in seeds:
            started = time.perf_counter()
            trace = _run_one(doc, game, learner, iterations, eta, cadence, init_mode, seed)
            elapsed = time.perf_counter() - started
            trace_path = out_dir / f"trace_seed{seed}.csv"
            _write_trace(trace_path, trace, game.num_players)
            summary.write(
                f"{seed},{trace.nash_regret()!r},{trace.t_star()},"
                f"{trace.min_max_gap()!r},{elapsed:.3f}\n"
            )
            gap_curves[seed] = (trace.iterations(), trace.max_gaps())
            distance_curves[seed] = (trace.iterations(), trace.policy_distances_to_final())
            log.info("seed %d: %d records -> %s (%.2fs)", seed, len(trace), trace_path, elapsed)
    if not args.no_plot:
        from .plotting import render_run_figures

        for path in render_run_figures(out_dir, gap_curves, distance_curves):
            log.info("figure: %s", path)
    return EXIT_OK


def _run_one(doc, game, learner, iterations, eta, cadence, init_mode, seed):
    if learner == "exact_pg":
        init = None
        if init_mode == "random":
            init = JointPolicy.random(
                game.num_players, game.num_states, game.num_actions, np.random.default_rng(seed)
            )
        config = ExactPGConfig(eta=eta, iterations=iterations, cadence=cadence)
        return run_exact_pg(game, config, init=init)
    if learner == "sample_pg":
        batch_size = _positive_int(doc, "batch_size")
        xi = doc.get("xi")
        try:
            config = SamplePGConfig(
                iterations=iterations,
                batch_size=batch_size,
                eta=eta,
                xi=xi,
                seed=seed,
                inner_steps=doc.get("inner_steps"),
                cadence=cadence,
            )
        except ValueError as exc:
            raise ConfigError("learner", str(exc)) from exc
        return run_sample_pg(game, config)
    alpha_schedule = doc.get("alpha_schedule", "constant")
    try:
        config = OptimisticConfig(
            eta=eta,
            iterations=iterations,
            alpha=float(doc.get("alpha", 1.0 / 12.0)),
            alpha_schedule=alpha_schedule,
            critic_horizon=doc.get("critic_horizon"),
            mode=doc.get("mode", "cooperative"),
            cadence=cadence,
        )
    except ValueError as exc:
        raise ConfigError("learner", str(exc)) from exc
    return run_optimistic(game, config)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args) -> int:
    # Any load, validation, or shape failure is a usage error for eval.
    try:
        game = load_game(args.game)
        policy = load_policy(args.policy)
        report = nash_gap(game, policy)
    except (GameValidationError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    def shown(value: float) -> float:
        # Sub-tolerance solver noise (incl. negative zero) displays as zero.
        return 0.0 if abs(value) < 1e-9 else value

    print(f"{'player':<8}{'gap':>16}{'value_at_rho':>16}")
    for i in range(game.num_players):
        print(f"{i:<8}{shown(report.per_player_gap[i]):>16.8f}{report.player_values[i]:>16.8f}")
    print(f"{'max_gap':<8}{shown(report.max_gap):>16.8f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parse_seed_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpglearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured experiment")
    run_p.add_argument("--config", required=True, help="path to the JSON experiment config")
    run_p.add_argument("--seed", type=_parse_seed_list, default=None,
                       help="comma-separated seeds overriding the config")
    run_p.add_argument("--out", default=None, help="output directory overriding the config")
    run_p.add_argument("--cadence", type=int, default=None,
                       help="gap-evaluation cadence overriding the config")
    run_p.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    eval_p = sub.add_parser("eval", help="print the Nash gap report of a stored policy")
    eval_p.add_argument("game", help="path to a serialized game")
    eval_p.add_argument("policy", help="path to a serialized joint policy")

    sub.add_parser("selftest", help="run the fast invariant suites")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "eval":
            return cmd_eval(args)
        return run_selftest()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GameValidationError as exc:
        print(f"invalid game or policy: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
