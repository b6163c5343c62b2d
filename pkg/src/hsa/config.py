"""Loss assumptions, Noisy-SGD hyperparameters and their validation.

Everything downstream (tracking, bounds, baselines) consumes a
:class:`ValidatedProblem`, so the preconditions of the contraction results are
checked exactly once, here.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import List, Optional


class Convexity(str, enum.Enum):
    NON_CONVEX = "non_convex"
    CONVEX = "convex"
    STRONGLY_CONVEX = "strongly_convex"


class Strategy(str, enum.Enum):
    FULL_BATCH = "full_batch"
    WO_REPLACEMENT = "wo_replacement"
    SHUFFLED_CYCLIC = "shuffled_cyclic"


@dataclasses.dataclass(frozen=True)
class LossAssumptions:
    """Regularity class of the per-example losses.

    Attributes:
      holder_L: Hölder constant of the gradient.
      holder_lambda: Hölder order of the gradient, in (0, 1]. Order 1 means
        smooth with constant ``holder_L``.
      convexity: One of :class:`Convexity`.
      lipschitz_K: Lipschitz constant of the loss (bound on gradient norm).
      strong_convexity_m: Modulus ``m``; only meaningful when strongly convex.
    """

    holder_L: float
    holder_lambda: float
    convexity: Convexity = Convexity.NON_CONVEX
    lipschitz_K: float = math.inf
    strong_convexity_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "convexity", Convexity(self.convexity))

    @property
    def is_smooth(self) -> bool:
        return self.holder_lambda == 1.0


@dataclasses.dataclass(frozen=True)
class SgdConfig:
    """Hyperparameters of projected Noisy-SGD plus the Rényi order."""

    eta: float
    sigma: float
    clip_K: float
    n: int
    b: int
    T: int
    diameter_D: float
    strategy: Strategy = Strategy.FULL_BATCH
    alpha: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    @property
    def batches_per_epoch(self) -> int:
        return self.n // self.b


@dataclasses.dataclass(frozen=True)
class Violation:
    field: str
    message: str
    precondition: str

    def __str__(self):
        return f"{self.field}: {self.message} ({self.precondition})"


class ProblemValidationError(ValueError):
    """Raised when assumptions/config violate a theorem precondition."""

    def __init__(self, violations: List[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclasses.dataclass(frozen=True)
class ValidatedProblem:
    """A problem whose every precondition has been checked.

    ``update_lipschitz`` is the Lipschitz constant of the gradient-update map
    when the loss is smooth, ``None`` for genuinely Hölder (order < 1) losses.
    """

    assumptions: LossAssumptions
    config: SgdConfig
    update_lipschitz: Optional[float]

    def replace(self, **config_changes) -> "ValidatedProblem":
        """Returns a re-validated problem with some config fields changed."""
        return validate(self.assumptions,
                        dataclasses.replace(self.config, **config_changes))


_LIP_LEMMA = "Lipschitz constant of the gradient update"
_HOLDER_DEF = "Hölder continuity of the gradient"
_ALGO = "Noisy-SGD parameters"


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def check(assumptions: LossAssumptions, config: SgdConfig) -> List[Violation]:
    """Lists every violated precondition; empty when the problem is valid."""
    out = []

    def bad(field, message, precondition):
        out.append(Violation(field, message, precondition))

    a = assumptions
    lam, L = a.holder_lambda, a.holder_L
    if not (math.isfinite(lam) and 0.0 < lam <= 1.0):
        bad("holder_lambda", "holder_lambda out of (0,1]", _HOLDER_DEF)
    if not (math.isfinite(L) and L >= 0.0):
        bad("holder_L", "holder_L must be finite and >= 0", _HOLDER_DEF)
    if not (a.lipschitz_K >= 0.0):
        bad("lipschitz_K", "lipschitz_K must be >= 0", _LIP_LEMMA)

    c = config
    for name in ("eta", "sigma", "clip_K", "diameter_D"):
        v = getattr(c, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            bad(name, f"{name} must be a positive finite real", _ALGO)
    for name in ("n", "b"):
        v = getattr(c, name)
        if not (_is_int(v) and v >= 1):
            bad(name, f"{name} must be a positive integer", _ALGO)
    if not (_is_int(c.T) and c.T >= 0):
        bad("T", "T must be a non-negative integer", _ALGO)
    if not (isinstance(c.alpha, (int, float)) and c.alpha > 1
            and math.isfinite(c.alpha)):
        bad("alpha", "alpha must be a finite real > 1", "Rényi order")

    sizes_ok = _is_int(c.n) and _is_int(c.b) and c.n >= 1 and c.b >= 1
    if sizes_ok:
        if c.b > c.n:
            bad("b", "batch size b must satisfy b <= n", _ALGO)
        elif c.strategy is Strategy.FULL_BATCH and c.b != c.n:
            bad("b", "full_batch requires b = n", _ALGO)
        elif c.strategy is Strategy.SHUFFLED_CYCLIC and c.n % c.b:
            bad("b", "shuffled_cyclic requires b to divide n",
                "cyclic mini-batch partition")

    if a.convexity is not Convexity.NON_CONVEX:
        kind = a.convexity.value
        if lam != 1.0:
            bad("holder_lambda", f"{kind} claims require holder_lambda = 1",
                _LIP_LEMMA)
        if not math.isfinite(a.lipschitz_K):
            bad("lipschitz_K", f"{kind} claims require a finite lipschitz_K",
                _LIP_LEMMA)
        elif c.clip_K > 0 and a.lipschitz_K > c.clip_K:
            bad("lipschitz_K",
                f"{kind} claims require lipschitz_K <= clip_K so clipping is "
                "inactive", _LIP_LEMMA)
        if a.convexity is Convexity.CONVEX:
            if L > 0 and c.eta > 2.0 / L:
                bad("eta", "η ≤ 2/L required for c=1", _LIP_LEMMA)
        else:
            m = a.strong_convexity_m
            if not (m > 0 and math.isfinite(m)):
                bad("strong_convexity_m", "m must be > 0 when strongly convex",
                    _LIP_LEMMA)
            elif m > L:
                bad("strong_convexity_m",
                    "m <= L required (no m-strongly convex L-smooth loss has "
                    "m > L)", _LIP_LEMMA)
            elif L > 0 and c.eta > 1.0 / L:
                bad("eta", "η ≤ 1/L required for c=1-ηm", _LIP_LEMMA)
            elif c.eta * m >= 1.0:
                bad("eta", "η·m < 1 required; the update map would be constant",
                    _LIP_LEMMA)
    return out


def validate(assumptions: LossAssumptions,
             config: SgdConfig) -> ValidatedProblem:
    """Validates the pair and attaches the update-map Lipschitz constant.

    Raises:
      ProblemValidationError: listing every violated precondition.
    """
    violations = check(assumptions, config)
    if violations:
        raise ProblemValidationError(violations)
    from hsa.maps import lipschitz_update_constant

    c = (lipschitz_update_constant(assumptions, config.eta)
         if assumptions.is_smooth else None)
    return ValidatedProblem(assumptions, config, c)
