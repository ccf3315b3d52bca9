"""Stochastic column-block gradient descent for nonlinear systems.

Solvers for f(x) = 0 via the least-squares objective 0.5 ||f(x)||^2: full
gradient descent with an adaptive quadratic-model step, its randomized
column-block variant, and a row-block baseline.  Ships tridiagonal benchmark
problems, a seeded benchmark harness with CSV export, and machine checks of
the methods' convergence analysis on linear instances.
"""

from .exceptions import (
    BlockGDError,
    ConfigFileError,
    EvaluationError,
    InvalidBlockError,
    InvalidConfigError,
    InvalidConstantsError,
    InvalidProblemError,
    NumericalInconsistencyError,
    TooManyBlocksError,
    UnknownProblemError,
    UnsupportedModeError,
    ZeroMatrixError,
)
from .problems import (
    LinearProblemSpec,
    ProblemInstance,
    broyden_jacobian_columns,
    broyden_jacobian_rows,
    broyden_problem,
    broyden_residual,
    broyden_residual_rows,
    default_start,
    finite_difference_column,
    li_jacobian_columns,
    li_jacobian_rows,
    li_problem,
    li_residual,
    li_residual_rows,
    linear_problem,
    load_linear_problem,
    make_problem,
    register_problem,
    registered_problems,
)
from .solvers import (
    DEGENERATE_STALL_LIMIT,
    EPS_DEGENERATE,
    METHODS,
    TIME_SAMPLE_STRIDE,
    BlockSelection,
    SolveResult,
    SolverConfig,
    StepOutcome,
    compute_step_size,
    gd_step,
    incremental_residual_update,
    rowblock_gd_step,
    sample_block,
    scbgd_step,
    solve,
)
from .analysis import (
    TheoremConstants,
    VerificationCheck,
    block_lipschitz_constants,
    descent_direction_check,
    enumerate_blocks,
    expected_decrease_check,
    pl_rate_bound,
    run_bounds_suite,
    run_descent_suite,
    run_expectation_suite,
    run_jacobian_suite,
    sigma_bounds,
    theorem1_bounds,
)
from .harness import (
    BenchmarkReport,
    ExperimentConfig,
    MethodSpec,
    RunRecord,
    compare_table,
    export_csv,
    export_trace,
    load_experiment_config,
    run_experiment,
)

__version__ = "0.1.0"
