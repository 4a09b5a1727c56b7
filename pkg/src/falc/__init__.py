"""First-order augmented Lagrangian solver for composite norm minimization.

Minimizes  mu1*||sigma(X)||_alpha + mu2*||C(X) - d||_beta  subject to
||A(X) - b||_gamma <= rho, with presets for robust PCA, stable principal
component pursuit, matrix completion and basis pursuit.
"""

from .inner import (InnerCertificate, InnerState, StopBranch, Subproblem,
                    certificate, gradient, inner_step, run_inner, theta_next)
from .linalg import (DenseOperatorMap, LinearMap, NormIndex, SamplingMap,
                     ScaledMap, ShapeError, SvdError, SvdResult, VectorizeMap,
                     ZeroMap, matrix_two_norm, norm_factor_I, norm_factor_J,
                     schatten_norm, sigma_max_stacked, svd_full, svd_truncated,
                     unvec, vec, vec_norm)
from .matio import (read_matrix_csv, read_matrix_fmat, write_matrix_csv,
                    write_matrix_fmat)
from .outer import (AdaptiveSchedule, GeometricSchedule, SolveReport,
                    SolverParams, diagnostic_bounds, least_norm_init, solve,
                    update_multiplier)
from .problems import (ConstraintBlock, DualPoint, GroundTruth, MetricsRow,
                       ProblemSpec, compute_metrics, dual_candidate_from_multipliers,
                       dual_feasible, dual_objective, estimate_rank,
                       generate_instance, load_instance, preset_basis_pursuit,
                       preset_matrix_completion, preset_robust_pca,
                       preset_stable_pcp, save_instance, sparse_part)
from .prox import (ShrinkResult, project_ball, shrink_matrix, shrink_vec,
                   shrink_vec_ball)
from .rng import CounterRng

__version__ = "0.1.0"
