"""Accelerated primal-dual methods for convex-concave saddle-point problems."""
from .errors import *  # noqa: F401,F403
from .problem import (SaddlePointProblem, SetDescriptor, StochasticOracle, OracleNoise,
                      box, ball, simplex, free, eval_Q, estimate_operator_norm)
from .geometry import BregmanGeometry, EUCLIDEAN, ENTROPY, bregman_div, prox_map
from .schedules import ParamSchedule, make_schedule, custom_schedule, validate_schedule
from .solvers import (SolverState, Trajectory, CaptureOptions, initial_state, apd_step,
                      stochastic_apd_step, pd_baseline_step, run)
from .certification import (exact_gap, perturbation_certificate_det, perturbation_certificate_stoch,
                            theoretical_bound, recursion_audit)
from .harness import ExperimentConfig, generate_problem, run_experiment, replicate_stats

__version__ = "0.1.0"
