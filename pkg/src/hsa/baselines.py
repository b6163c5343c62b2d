"""Reference bounds: standard composition and output perturbation.

Any useful last-iterate bound has to beat the pointwise minimum of the two
(their Pareto frontier).
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from hsa.config import Strategy, ValidatedProblem
from hsa.mechanisms import gaussian_rdp, sgm_renyi


def per_step_sensitivity(problem: ValidatedProblem) -> float:
    """W-infinity gap a single differing gradient opens in one step."""
    c = problem.config
    if c.strategy is Strategy.FULL_BATCH:
        return 2.0 * c.eta * c.clip_K / c.n
    return 2.0 * c.eta * c.clip_K / c.b


def worst_case_encounters(T: int, batches_per_epoch: int) -> int:
    """Number of (possibly partial) epochs started within T steps."""
    return -(-T // batches_per_epoch)


def composition_bound(problem: ValidatedProblem,
                      encounter_times: Optional[Sequence[int]] = None) -> float:
    """RDP of releasing every iterate, charged per step.

    For shuffled cyclic batches only the steps that touch the differing
    example cost anything. Given ``encounter_times`` those are counted;
    otherwise one encounter per started epoch is assumed.
    """
    c = problem.config
    if c.T == 0:
        return 0.0
    if c.strategy is Strategy.FULL_BATCH:
        return c.T * gaussian_rdp(c.alpha, per_step_sensitivity(problem), c.sigma)
    if c.strategy is Strategy.WO_REPLACEMENT:
        noise = c.sigma * c.b / (2.0 * c.eta * c.clip_K)
        return c.T * sgm_renyi(c.alpha, c.b / c.n, noise)
    if encounter_times is None:
        count = worst_case_encounters(c.T, c.batches_per_epoch)
    else:
        count = sum(1 for t in encounter_times if 0 <= t < c.T)
    return count * gaussian_rdp(c.alpha, per_step_sensitivity(problem), c.sigma)


def output_perturbation_value(alpha: float, diameter: float, sigma: float) -> float:
    """``alpha D^2 / (2 sigma^2)``; accepts D = 0 for the degenerate domain."""
    return gaussian_rdp(alpha, diameter, sigma)


def output_perturbation_bound(problem: ValidatedProblem) -> float:
    """Gaussian mechanism whose sensitivity is the domain diameter."""
    c = problem.config
    return output_perturbation_value(c.alpha, c.diameter_D, c.sigma)


def pareto_frontier(problem: ValidatedProblem,
                    encounter_times: Optional[Sequence[int]] = None) -> float:
    return min(composition_bound(problem, encounter_times),
               output_perturbation_bound(problem))


def crossover_T(problem: ValidatedProblem) -> float:
    """Full-batch horizon at which composition overtakes output perturbation.

    Equals ``n^2 D^2 / (4 eta^2 K^2)``.
    """
    c = problem.config
    if c.strategy is not Strategy.FULL_BATCH:
        raise ValueError("closed-form crossover is only defined for full batch")
    step = per_step_sensitivity(problem)
    return math.inf if step == 0 else (c.diameter_D / step) ** 2
