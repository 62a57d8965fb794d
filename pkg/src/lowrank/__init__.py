"""Alternating-minimization solvers for low-rank matrix sensing and completion."""

from .completion import (
    CompletionProblem,
    IncoherenceReport,
    altmin_complete,
    clip_and_orthonormalize,
    incoherence_of,
    init_complete,
    solve_row_block,
)
from .errors import *  # noqa: F401,F403
from .harness import (
    CompletionConfig,
    ExperimentReport,
    ProblemInstance,
    SensingConfig,
    convergence_report,
    generate_problem,
    run_completion_experiment,
    run_sensing_experiment,
)
from .linalg import (
    SvdResult,
    jacobi_svd,
    qr_decompose,
    solve_least_squares,
    spectral_norm,
    subspace_distance,
    svd_topk,
)
from .operators import (
    ObservationSet,
    SensingOperator,
    adjoint_sensing,
    apply_sensing,
    complete_ensemble,
    estimate_rip_constant,
    gaussian_ensemble,
    partition_omega,
    project_omega,
    sample_omega,
)
from .sensing import (
    ConvergenceTrace,
    FactorPair,
    SolverConfig,
    altmin_sense,
    init_sensing,
    residual,
    stage_altmin,
)

__version__ = "0.1.0"
