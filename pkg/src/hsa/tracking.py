"""Forward W-infinity tracking between two adjacent Noisy-SGD runs.

Every recursion here couples the two runs through identical noise and bounds
``sup |W_t - W_t'|`` step by step. The value stored at each step is already
clipped at the domain diameter, since that is the only form ever consumed.
"""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence, Tuple

import numpy as np

from hsa.maps import GrowthMap


@dataclasses.dataclass(frozen=True)
class WassersteinTrace:
    """Upper bounds D_0..D_T on W_inf(W_t, W_t')."""

    values: Tuple[float, ...]
    strategy: str
    encounter_times: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values or self.values[0] != 0.0:
            raise ValueError("a trace starts at D_0 = 0")
        if min(self.values) < 0.0:
            raise ValueError("trace values must be non-negative")

    @property
    def T(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, t):
        return self.values[t]

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)


def _check_common(eta, K, D, T):
    if eta <= 0 or K < 0 or D <= 0:
        raise ValueError("need eta > 0, K >= 0, D > 0")
    if int(T) != T or T < 0:
        raise ValueError(f"T must be a non-negative integer, got {T}")


def track_full_lipschitz(c: float, eta: float, K: float, n: int, D: float,
                         T: int) -> WassersteinTrace:
    """Full-batch tracking for a c-Lipschitz gradient update."""
    _check_common(eta, K, D, T)
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    inc, jump = 2.0 * eta * K / n, 2.0 * eta * K
    vals = [0.0]
    for _ in range(T):
        prev = vals[-1]
        vals.append(min(c * prev + inc, prev + jump, D))
    return WassersteinTrace(tuple(vals), "full_batch")


def _track_holder(growth: GrowthMap, inc: float, jump: float, D: float, T: int):
    vals = [0.0]
    for _ in range(T):
        prev = vals[-1]
        vals.append(min(growth.g(prev) + inc, prev + jump, D))
    return vals


def track_full_holder(L: float, lam: float, eta: float, K: float, n: int,
                      D: float, T: int) -> WassersteinTrace:
    """Full-batch tracking for an (L, lam)-Hölder gradient."""
    _check_common(eta, K, D, T)
    vals = _track_holder(GrowthMap(eta * L, lam), 2.0 * eta * K / n,
                         2.0 * eta * K, D, T)
    return WassersteinTrace(tuple(vals), "full_batch")


def track_subsampled(L: float, lam: float, eta: float, K: float, b: int,
                     D: float, T: int) -> WassersteinTrace:
    """Tracking under without-replacement batches of size b.

    Of the b per-example gradients at most one differs, so only the other
    b - 1 contribute Hölder growth.
    """
    _check_common(eta, K, D, T)
    vals = _track_holder(GrowthMap(eta * L * (b - 1) / b, lam),
                         2.0 * eta * K / b, 2.0 * eta * K, D, T)
    return WassersteinTrace(tuple(vals), "wo_replacement")


def check_encounter_times(encounter_times: Sequence[int], T: int,
                          batches_per_epoch: Optional[int] = None
                          ) -> Tuple[int, ...]:
    """Validates a realised encounter sequence and returns it as a tuple.

    Raises:
      ValueError: if times are not strictly increasing integers in [0, T), or,
        when ``batches_per_epoch`` is given, not exactly one per epoch.
    """
    times = tuple(int(t) for t in encounter_times)
    if any(int(t) != t for t in encounter_times):
        raise ValueError("encounter times must be integers")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"encounter times must be strictly increasing: {times}")
    if times and (times[0] < 0 or times[-1] >= T):
        raise ValueError(f"encounter times must lie in [0, {T}): {times}")
    if batches_per_epoch is not None:
        for e, t in enumerate(times):
            if t // batches_per_epoch != e:
                raise ValueError(
                    f"encounter {t} is not in epoch {e} "
                    f"({batches_per_epoch} batches per epoch)")
    return times


def track_cyclic(L: float, lam: float, eta: float, K: float, b: int, D: float,
                 T: int, encounter_times: Sequence[int],
                 batches_per_epoch: Optional[int] = None) -> WassersteinTrace:
    """Tracking for a fixed shuffled-cyclic batch sequence.

    The two runs coincide up to and including the first encounter t_0 of the
    differing example. Right after an encounter the batch update grows the gap
    through the b - 1 shared gradients plus 2*eta*K/b; on every other step all
    b gradients are shared.
    """
    _check_common(eta, K, D, T)
    times = check_encounter_times(encounter_times, T, batches_per_epoch)
    vals = [0.0] * (T + 1)
    if not times:
        return WassersteinTrace(tuple(vals), "shuffled_cyclic", times)
    inc, jump = 2.0 * eta * K / b, 2.0 * eta * K
    after_encounter = GrowthMap(eta * L * (b - 1) / b, lam)
    otherwise = GrowthMap(eta * L, lam)
    later = set(times[1:])
    t0 = times[0]
    for t in range(t0 + 1, T + 1):
        prev = vals[t - 1]
        if t == t0 + 1:
            v = inc
        elif t - 1 in later:
            v = min(after_encounter.g(prev) + inc, prev + jump)
        else:
            v = min(otherwise.g(prev), prev + jump)
        vals[t] = min(v, D)
    return WassersteinTrace(tuple(vals), "shuffled_cyclic", times)


def closed_form_discrepancy(c: float, eta: float, K: float, n: int, D: float,
                            tau: int) -> float:
    """``min((2 eta K / n) * sum_{t<tau} c**t, 2 eta K tau, D)``.

    The unrolled full-batch bound; the recursion in
    :func:`track_full_lipschitz` never exceeds it.
    """
    geometric = sum(c ** t for t in range(tau))
    return min(2.0 * eta * K / n * geometric, 2.0 * eta * K * tau, D)


def trace_for(problem, encounter_times: Optional[Sequence[int]] = None
              ) -> WassersteinTrace:
    """Builds the trace matching a validated problem's batch strategy."""
    from hsa.config import Strategy

    a, c = problem.assumptions, problem.config
    if c.strategy is Strategy.FULL_BATCH:
        if problem.update_lipschitz is not None:
            return track_full_lipschitz(problem.update_lipschitz, c.eta,
                                        c.clip_K, c.n, c.diameter_D, c.T)
        return track_full_holder(a.holder_L, a.holder_lambda, c.eta, c.clip_K,
                                 c.n, c.diameter_D, c.T)
    if c.strategy is Strategy.WO_REPLACEMENT:
        return track_subsampled(a.holder_L, a.holder_lambda, c.eta, c.clip_K,
                                c.b, c.diameter_D, c.T)
    if encounter_times is None:
        raise ValueError("cyclic tracking needs realised encounter times")
    return track_cyclic(a.holder_L, a.holder_lambda, c.eta, c.clip_K, c.b,
                        c.diameter_D, c.T, encounter_times,
                        c.batches_per_epoch)
