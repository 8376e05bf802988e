"""Joint row-sparse recovery from multiple measurement vectors.

The main entry points are :func:`osnst_solve` (or the scikit-learn style
:class:`OSNSTRegressor`), the brute-force constants in
:mod:`jointsparse.diagnostics` and the sweep harness in :mod:`jointsparse.bench`.
"""

__version__ = "0.1.0"

from .estimators import OSNSTRegressor, SOMPRegressor
from .exceptions import (
    ContractViolationError,
    DegenerateInputError,
    NumericOverflowError,
    RankDeficiencyError,
    SubsetLimitError,
)
from .linalg import RowPseudoInverse, orth_basis, pinv_apply, restricted_lsq, spectral_norm
from .model import (
    FeedbackSchedule,
    ProblemInstance,
    RecoveryResult,
    SolverConfig,
    eval_schedule,
    load_instance,
    residual_norm,
    save_instance,
)
from .solver import feedback_step, nst_project, osnst_solve, select_support, somp_solve

__all__ = [
    "OSNSTRegressor",
    "SOMPRegressor",
    "ContractViolationError",
    "DegenerateInputError",
    "NumericOverflowError",
    "RankDeficiencyError",
    "SubsetLimitError",
    "RowPseudoInverse",
    "orth_basis",
    "pinv_apply",
    "restricted_lsq",
    "spectral_norm",
    "FeedbackSchedule",
    "ProblemInstance",
    "RecoveryResult",
    "SolverConfig",
    "eval_schedule",
    "load_instance",
    "residual_norm",
    "save_instance",
    "feedback_step",
    "nst_project",
    "osnst_solve",
    "select_support",
    "somp_solve",
]
