"""Last-iterate Rényi DP accounting for projected Noisy-SGD.

The bounds track how far two runs on adjacent datasets can drift apart, then
trade per-step noise between composition and shift reduction to show that
only the final iterate leaks a bounded amount.
"""

__version__ = "0.1.0"

from hsa.config import (Convexity, LossAssumptions, ProblemValidationError,
                        SgdConfig, Strategy, ValidatedProblem, validate)
from hsa.optimizer import BoundResult, compute_bound, sweep

__all__ = [
    "BoundResult", "Convexity", "LossAssumptions", "ProblemValidationError",
    "SgdConfig", "Strategy", "ValidatedProblem", "compute_bound", "sweep",
    "validate",
]
