"""Federated optimization with client cohorts and local training.

The package simulates a primal-dual family of federated methods in which each
round samples a cohort of clients, lets them approximately solve a regularized
local subproblem, and aggregates the resulting dual updates.  Certified
stepsize/local-step schedules, classical baselines, and an experiment harness
with a Lyapunov contraction checker are included.
"""

from .algorithms import (
    VARIANTS,
    Schedule,
    ServerState,
    advance_with_cohort,
    build_schedule,
    contraction_rate,
    init_state,
    lyapunov,
    lyapunov_weights,
    rounds_bound,
    round_5gcs,
    round_point_saga,
    round_zero,
    run_round,
    schedule_for_local_steps,
    schedule_thm1,
    schedule_thm2,
    schedule_thm3,
    schedule_thm5,
    schedule_thm6,
)
from .baselines import iterate_gd, iterate_localgd, iterate_proxskip, iterate_scaffold
from .data_io import ClientShard, LibsvmParseError, load_libsvm_file, parse_libsvm, partition
from .harness import (
    ExperimentConfig,
    Reference,
    compute_reference,
    contraction_test,
    median_by,
    run_experiment,
    sweep_cohort,
    sweep_T_vs_K,
    write_summary,
    write_sweep,
    write_trace,
)
from .local_solvers import (
    SolverSpec,
    check_gtps,
    delta_tolerance,
    exact_prox,
    gd_solve,
    lsvrg_solve,
    required_K_gd,
    solve_local,
)
from .objective import LocalSubproblem, LogisticProblem, Problem, QuadraticProblem
from .sampling import (
    SeededRng,
    apply_sampling_operator,
    enumerate_cohorts,
    expected_sq_deviation,
    sample_cohort,
)
from .synthetic import make_logistic, make_quadratic, parse_synthetic_spec

__version__ = "0.1.0"

__all__ = [
    "VARIANTS",
    "Schedule",
    "ServerState",
    "advance_with_cohort",
    "build_schedule",
    "contraction_rate",
    "init_state",
    "lyapunov",
    "lyapunov_weights",
    "rounds_bound",
    "round_5gcs",
    "round_point_saga",
    "round_zero",
    "run_round",
    "schedule_for_local_steps",
    "schedule_thm1",
    "schedule_thm2",
    "schedule_thm3",
    "schedule_thm5",
    "schedule_thm6",
    "iterate_gd",
    "iterate_localgd",
    "iterate_proxskip",
    "iterate_scaffold",
    "ClientShard",
    "LibsvmParseError",
    "load_libsvm_file",
    "parse_libsvm",
    "partition",
    "ExperimentConfig",
    "Reference",
    "compute_reference",
    "contraction_test",
    "median_by",
    "run_experiment",
    "sweep_cohort",
    "sweep_T_vs_K",
    "write_summary",
    "write_sweep",
    "write_trace",
    "SolverSpec",
    "check_gtps",
    "delta_tolerance",
    "exact_prox",
    "gd_solve",
    "lsvrg_solve",
    "required_K_gd",
    "solve_local",
    "LocalSubproblem",
    "LogisticProblem",
    "Problem",
    "QuadraticProblem",
    "SeededRng",
    "apply_sampling_operator",
    "enumerate_cohorts",
    "expected_sq_deviation",
    "sample_cohort",
    "make_logistic",
    "make_quadratic",
    "parse_synthetic_spec",
    "__version__",
]
