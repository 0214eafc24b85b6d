"""EE-Grad: picking the lowest-variance mini-batch gradient oracle on the fly."""
__version__ = "0.1.0"

from .core_math import (EEGradParams, GapConstants, block_matrix_norms, conf_radius,
                        conf_radius_inverse, contraction_factors, gap_constants,
                        quadratic_form_trace, regret_threshold)
from .oracle_model import (CostModel, GradientSample, OracleBank, max_feasible_batch,
                           oracle_sigma_sq, query_mini_batch)
from .selector import (IterationOutput, OracleStats, SelectorState, init_state, run_iteration,
                       select_oracle, update_stats)
from .sgd_driver import (Objective, SGDTrace, predicted_contraction, quadratic,
                         run_ee_grad_sgd, run_optimal_oracle_sgd, sgd_step)

__all__ = [
    "EEGradParams", "GapConstants", "block_matrix_norms", "conf_radius", "conf_radius_inverse",
    "contraction_factors", "gap_constants", "quadratic_form_trace", "regret_threshold",
    "CostModel", "GradientSample", "OracleBank", "max_feasible_batch", "oracle_sigma_sq",
    "query_mini_batch", "IterationOutput", "OracleStats", "SelectorState", "init_state",
    "run_iteration", "select_oracle", "update_stats", "Objective", "SGDTrace",
    "predicted_contraction", "quadratic", "run_ee_grad_sgd", "run_optimal_oracle_sgd", "sgd_step",
]
