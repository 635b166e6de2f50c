"""Multi-agent optimization with Laplace-noised broadcasts.

Agents minimise a sum of strongly convex costs over a box while exchanging
Laplace-noised estimates across a time-varying doubly stochastic network.
"""

from .core import (BoxDomain, geometric_tail_limit, laplace_log_density, laplace_sample,
                   norm1, norm2, project)
from .engine import (ExecutionTrace, RoundRecord, ScheduleParams, disagreement, gamma,
                     mean_estimate, noise_scale, replay, run, run_batch, step)
from .graphs import GraphSchedule, certify_eta, envelope, matrix_at, transfer_matrix
from .privacy import budget, dp_ratio_check, measured_sensitivity, sensitivity_bound
from .problem import (AdjacentPair, CostConstants, ProblemInstance, QuadraticCost,
                      eval_cost, eval_gradient, global_optimum, make_adjacent, make_rendezvous)
from .rng import RandomStream
from .tuning import (accuracy_bound, convergence_bound, solve_c_star, solve_p_star,
                     solve_q_star, tune)

__version__ = "0.1.0"
