"""Independent policy-gradient learning in tabular Markov potential games.

The package bundles the game model with exact evaluators (values, visitation,
best responses, Nash gaps and regret), simplex projections, three learners
(exact projected ascent, a sample-based variant with linear function
approximation, and a two-player optimistic variant with a smoothed critic),
constructive game families, and an experiment CLI.
"""

from .envs import CongestionSpec, build_congestion, build_cooperative_random, build_matrix_game
from .evaluation import (
    BestResponse,
    BudgetExceededError,
    LearnTrace,
    NashGapReport,
    TraceRecord,
    ValueProfile,
    VisitationDistribution,
    best_response,
    decomposition_residual,
    estimate_kappa,
    evaluate,
    nash_gap,
    nash_regret,
    performance_difference_residual,
    visitation,
)
from .game import (
    GameValidationError,
    JointPolicy,
    TabularMarkovGame,
    deterministic_rows,
    joint_actions,
    joint_index,
    load_game,
    load_policy,
    save_game,
    save_policy,
)
from .learners import (
    ExactPGConfig,
    OptimisticConfig,
    OptimisticState,
    run_exact_pg,
    run_optimistic,
    step_exact_pg,
    step_optimistic,
    suggest_stepsize,
)
from .sample_fa import (
    FeatureMap,
    RegressionConfig,
    SampleBatch,
    SamplePGConfig,
    SampleTuple,
    collect_batch,
    default_weight_bound,
    default_xi,
    run_sample_pg,
    sample_geometric,
    spgd_regress,
    step_sample_pg,
    write_sample_dump,
)
from .simplex import (
    project_rows_simplex,
    project_rows_xi_simplex,
    project_simplex,
    project_xi_simplex,
)

__version__ = "0.1.0"
