"""Shift-schedule optimisation for last-iterate Rényi DP bounds.

A schedule ``(tau, beta, a)`` splits the noise of each step t >= tau into a
composition share ``beta_t`` and a shift share ``1 - beta_t``, and spends a
W-infinity shift ``a_t`` per step. Every feasible schedule certifies a bound,
so the optimisers below only need to find good feasible schedules; they never
need to prove global optimality.

Two facts drive the implementation:

* For a Gaussian step the two costs combine as
  ``min_beta kappa*(delta^2/beta + a^2/(1-beta)) = kappa*(delta + a)^2``,
  attained at ``beta = delta/(delta + a)``. The smooth full-batch problem thus
  reduces to ``min sum (delta + a_t)^2`` under one linear constraint, which is
  solved exactly by water-filling.
* Under a Hölder growth map the constraint is a chain
  ``x_{t+1} = g(x_t) - a_t, x_tau = D_tau, x_T = 0``. We shoot on the costate
  (the marginal price of shift), which yields trajectories that are feasible
  by construction, and keep the cheapest.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from hsa import baselines, tracking
from hsa.config import Strategy, ValidatedProblem
from hsa.maps import GrowthMap
from hsa.mechanisms import sgm_renyi

EXHAUSTIVE_TAU_LIMIT = 4096
_COARSE_TAU_POINTS = 512
_MAX_LOG_WEIGHT = 700.0
_FEASIBILITY_TOL = 1e-9


# ---------------------------------------------------------------- result types


@dataclasses.dataclass(frozen=True)
class ShiftSchedule:
    """A schedule over steps ``tau .. T-1``; ``beta[k]``, ``a[k]`` belong to
    step ``tau + k``."""

    tau: int
    beta: Tuple[float, ...]
    a: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        if len(self.beta) != len(self.a):
            raise ValueError("beta and a must have the same length")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if any(not 0.0 <= b <= 1.0 for b in self.beta):
            raise ValueError("beta values must lie in [0, 1]")
        if any(not x >= 0.0 for x in self.a):
            raise ValueError("shifts a must be >= 0")

    def __len__(self):
        return len(self.a)

    @property
    def steps(self) -> range:
        return range(self.tau, self.tau + len(self.a))

    def summary(self) -> Dict[str, float]:
        a = np.asarray(self.a)
        b = np.asarray(self.beta)
        return {
            "tau": self.tau,
            "length": len(self.a),
            "total_shift": float(a.sum()) if a.size else 0.0,
            "active_shifts": int(np.count_nonzero(a)),
            "beta_min": float(b.min()) if b.size else 1.0,
            "beta_max": float(b.max()) if b.size else 1.0,
        }


@dataclasses.dataclass(frozen=True)
class Baselines:
    composition: float
    output_perturbation: float

    @property
    def frontier(self) -> float:
        return min(self.composition, self.output_perturbation)


@dataclasses.dataclass(frozen=True)
class Diagnostics:
    objective_evaluations: int
    feasibility_residual: float
    optimizer_iterations: int
    method: str


@dataclasses.dataclass(frozen=True)
class BoundResult:
    """A certified RDP bound together with the schedule certifying it."""

    epsilon: float
    alpha: float
    schedule: ShiftSchedule
    baselines: Baselines
    diagnostics: Diagnostics

    def to_dict(self, full_schedule: bool = False) -> dict:
        out = {
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "schedule": self.schedule.summary(),
            "baselines": {
                "composition": self.baselines.composition,
                "output_perturbation": self.baselines.output_perturbation,
            },
            "diagnostics": dataclasses.asdict(self.diagnostics),
        }
        if full_schedule:
            out["schedule"]["beta"] = list(self.schedule.beta)
            out["schedule"]["a"] = list(self.schedule.a)
        return out


@dataclasses.dataclass(frozen=True)
class ShuffledBoundResult:
    """Aggregate over shuffled cyclic batch sequences.

    ``estimate`` is the log-mean-exp aggregate. It is the exact expectation
    (and hence a certified bound) only when ``exhaustive`` is true; otherwise
    it is a Monte-Carlo estimate. ``worst_case`` bounds every sequence that
    was evaluated.
    """

    estimate: float
    worst_case: float
    alpha: float
    exhaustive: bool
    num_sequences: int
    seed: Optional[int]
    per_sequence: Tuple[Tuple[Tuple[int, ...], float, float], ...]
    baselines: Baselines

    @property
    def epsilon(self) -> float:
        return self.estimate

    @property
    def certified(self) -> bool:
        return self.exhaustive

    def to_dict(self) -> dict:
        return {
            "epsilon": self.estimate,
            "estimate": self.estimate,
            "estimate_kind": "exact expectation" if self.exhaustive
                             else "monte carlo estimate",
            "worst_case": self.worst_case,
            "alpha": self.alpha,
            "exhaustive": self.exhaustive,
            "num_sequences": self.num_sequences,
            "distinct_sequences": len(self.per_sequence),
            "seed": self.seed,
            "baselines": {
                "composition": self.baselines.composition,
                "output_perturbation": self.baselines.output_perturbation,
            },
        }


# ------------------------------------------------------------ step cost models


class _GaussianSteps:
    """Steps whose composition part is a Gaussian with per-step gap delta_t."""

    def __init__(self, deltas: np.ndarray, kappa: float):
        self.deltas = np.asarray(deltas, dtype=float)
        self.kappa = kappa

    def zero_cost(self, t):
        return self.kappa * self.deltas[t] ** 2

    def max_delta(self, steps):
        return float(self.deltas[steps[0]:steps[-1] + 1].max())

    def cost(self, t, a):
        return self.kappa * (self.deltas[t] + a) ** 2

    def best_response(self, t, price):
        a = np.maximum(price - self.deltas[t], 0.0)
        return a, self.cost(t, a)

    def beta_for(self, t, a):
        d = self.deltas[t]
        if d == 0.0:
            return 0.0
        return d / (d + a)

    def composition_term(self, t, beta):
        d = self.deltas[t]
        if d == 0.0:
            return 0.0
        if beta == 0.0:
            return math.inf
        return self.kappa * d * d / beta


class _SgmSteps:
    """Steps charged by the sampled Gaussian mechanism.

    The composition noise std is ``sqrt(beta) * sigma``; beta is restricted to
    a fixed grid, so the best response is an exact minimum over that grid.
    """

    def __init__(self, alpha, q, noise_multiplier, kappa, grid_size=96):
        self.alpha, self.q, self.s0, self.kappa = alpha, q, noise_multiplier, kappa
        grid = np.concatenate(([0.0], np.geomspace(1e-4, 1.0, grid_size)))
        grid[-1] = 1.0
        self.betas = grid
        self.S = np.array([self._comp(b) for b in grid])
        self.one_minus = 1.0 - grid

    def _comp(self, beta):
        if beta == 0.0:
            # zero-noise limit of S_alpha: log(1/(1-q))
            return -math.log1p(-self.q) if self.q < 1.0 else math.inf
        return sgm_renyi(self.alpha, self.q, math.sqrt(beta) * self.s0)

    def zero_cost(self, t):
        return float(self.S[-1])

    def max_delta(self, steps):
        return 0.0

    def _table(self, a):
        a = np.asarray(a, dtype=float)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            shift = np.where(a == 0.0, 0.0,
                             self.kappa * a * a / self.one_minus[None, :])
        return self.S[None, :] + shift

    def cost(self, t, a):
        return self._table(np.atleast_1d(a)).min(axis=1)

    def best_response(self, t, price):
        price = np.asarray(price, dtype=float)
        val = (self.S[None, :]
               - self.kappa * price[:, None] ** 2 * self.one_minus[None, :])
        k = np.argmin(val, axis=1)
        a = price * self.one_minus[k]
        return a, self.S[k] + self.kappa * a * a / np.where(
            self.one_minus[k] > 0, self.one_minus[k], 1.0)

    def beta_for(self, t, a):
        return float(self.betas[int(np.argmin(self._table([a])[0]))])

    def composition_term(self, t, beta):
        return self._comp(beta)


def _kappa(problem):
    c = problem.config
    return c.alpha / (2.0 * c.sigma ** 2)


def _step_model(problem, encounter_times=None):
    c = problem.config
    kappa = _kappa(problem)
    if c.strategy is Strategy.FULL_BATCH:
        return _GaussianSteps(np.full(c.T, 2.0 * c.eta * c.clip_K / c.n), kappa)
    if c.strategy is Strategy.WO_REPLACEMENT:
        return _SgmSteps(c.alpha, c.b / c.n, c.sigma * c.b / (2.0 * c.eta * c.clip_K),
                         kappa)
    deltas = np.zeros(c.T)
    for t in encounter_times or ():
        deltas[t] = 2.0 * c.eta * c.clip_K / c.b
    return _GaussianSteps(deltas, kappa)


def _backward_growth(problem) -> GrowthMap:
    a = problem.assumptions
    return GrowthMap(problem.config.eta * a.holder_L, a.holder_lambda)


# ------------------------------------------------------- objective/feasibility


def schedule_objective(problem: ValidatedProblem, schedule: ShiftSchedule,
                       encounter_times: Optional[Sequence[int]] = None) -> float:
    """Evaluates the bound certified by a schedule (ignoring feasibility).

    Endpoint conventions: ``beta = 0`` costs nothing only on steps with no
    differing gradient (cyclic non-encounter steps) or, under subsampling, the
    finite zero-noise limit of the sampled Gaussian mechanism; otherwise it is
    infinite. ``beta = 1`` forbids any shift on that step.
    """
    c = problem.config
    if schedule.tau + len(schedule) != c.T:
        raise ValueError(f"schedule covers steps {schedule.tau}.."
                         f"{schedule.tau + len(schedule) - 1}, expected up to {c.T - 1}")
    model = _step_model(problem, encounter_times)
    kappa = _kappa(problem)
    total = 0.0
    for t, beta, a in zip(schedule.steps, schedule.beta, schedule.a):
        total += model.composition_term(t, beta)
        if a > 0.0:
            total += math.inf if beta == 1.0 else kappa * a * a / (1.0 - beta)
    return total


def _uses_linear_constraint(problem) -> bool:
    return (problem.config.strategy is Strategy.FULL_BATCH
            and problem.update_lipschitz is not None)


def feasibility_residual(problem: ValidatedProblem, schedule: ShiftSchedule,
                         trace: Optional[tracking.WassersteinTrace],
                         constraint: str = "auto",
                         target: Optional[float] = None) -> float:
    """``D_tau - (shift the schedule can absorb)``; feasible iff <= 0.

    Args:
      constraint: ``"linear"`` for the smooth form
        ``sum_t c^{-(t-tau+1)} a_t >= min(D_tau, D)``, ``"holder"`` for the
        backward recursion ``A_{t-1} = h(A_t + a_{t-1})`` or ``"auto"`` to pick
        linear for smooth full-batch problems.
      target: Overrides ``min(D_tau, D)``, e.g. with the diameter itself.
    """
    if target is None:
        target = min(trace[schedule.tau], problem.config.diameter_D)
    if constraint == "auto":
        constraint = "linear" if _uses_linear_constraint(problem) else "holder"
    if constraint == "linear":
        c = problem.update_lipschitz
        k = np.arange(1, len(schedule) + 1)
        a = np.asarray(schedule.a)
        with np.errstate(over="ignore"):
            absorbed = float(np.sum(a * np.exp(-k * math.log(c)))) if a.size else 0.0
        return target - absorbed
    growth = _backward_growth(problem)
    A = 0.0
    for a in reversed(schedule.a):
        A = growth.h(A + a)
    return target - A


def _make_feasible(problem, schedule, trace, constraint, target=None):
    """Nudges shifts up by a few ulps if roundoff left the schedule short."""
    res = feasibility_residual(problem, schedule, trace, constraint, target)
    factor = 1e-15
    while res > 0.0 and factor < 1e-9:
        factor *= 4.0
        a = tuple(x * (1.0 + factor) for x in schedule.a)
        candidate = dataclasses.replace(schedule, a=a)
        new_res = feasibility_residual(problem, candidate, trace, constraint,
                                       target)
        if new_res <= 0.0:
            return candidate, new_res
        res = min(res, new_res)
    return schedule, res


def _baselines(problem, encounter_times=None):
    return Baselines(baselines.composition_bound(problem, encounter_times),
                     baselines.output_perturbation_bound(problem))


def _composition_schedule(model, T):
    return ShiftSchedule(0, tuple(model.beta_for(t, 0.0) for t in range(T)),
                         (0.0,) * T)


def _empty_result(problem, method, encounter_times=None):
    return BoundResult(0.0, problem.config.alpha, ShiftSchedule(0, (), ()),
                       _baselines(problem, encounter_times),
                       Diagnostics(0, 0.0, 0, method))


def _tau_targets(problem, trace, tau, variant):
    D = problem.config.diameter_D
    if variant == "diameter" and tau > 0:
        return D
    return min(trace[tau], D)


def _tau_range(T, tau_candidates):
    if tau_candidates is None:
        return list(range(T))
    taus = sorted({int(t) for t in tau_candidates})
    if any(not 0 <= t < T for t in taus):
        raise ValueError(f"tau candidates must lie in [0, {T})")
    return taus


# ----------------------------------------------------------- smooth full batch


def _water_fill(M, log_c, rho):
    """Exact minimiser of ``sum (1 + a_k)^2`` s.t. ``sum w_k a_k >= rho``.

    Shifts are in units of delta and the weights ``w_k = c^{-k}`` are
    normalised by their maximum, so the sorted weights are ``gamma^i``.

    Returns:
      ``(F, theta, j)`` with objective ``F`` (units delta^2), water level
      ``theta`` and number ``j`` of active steps.
    """
    gamma = math.exp(-abs(log_c))
    if gamma == 1.0:
        return (rho + M) ** 2 / M, M / (rho + M), M
    i = np.arange(M)
    w = gamma ** i
    P1 = np.cumsum(w)
    P2 = np.cumsum(w * w)
    theta = P2 / (rho + P1)
    w_next = np.append(w[1:], 0.0)
    ok = (theta <= w) & ((i == M - 1) | (theta >= w_next))
    F = (rho + P1) ** 2 / P2 + (M - 1 - i)
    F = np.where(ok, F, np.inf)
    j = int(np.argmin(F))
    if not np.isfinite(F[j]):  # roundoff at a tie; every step active is safe
        j = M - 1
        F[j] = (rho + P1[j]) ** 2 / P2[j]
    return float(F[j]), float(theta[j]), j + 1


def _smooth_schedule(tau, M, log_c, rho, delta, theta, j):
    """Schedule realising the water-filling solution."""
    gamma = math.exp(-abs(log_c))
    ranks = np.arange(M)
    if log_c < 0:  # c < 1: the heaviest weight is the last step
        ranks = ranks[::-1]
    v = gamma ** ranks
    active = ranks < j
    beta = np.ones(M)
    a = np.zeros(M)
    beta[active] = np.minimum(theta / v[active], 1.0)
    a[active] = delta * (v[active] / theta - 1.0)
    a = np.maximum(a, 0.0)
    return ShiftSchedule(tau, tuple(beta), tuple(a))


def _smooth_value(tau, problem, trace, delta, log_c, variant):
    T = problem.config.T
    M = T - tau
    target = _tau_targets(problem, trace, tau, variant)
    if target == 0.0:
        return M * delta * delta, 1.0, 0, 0.0
    U = -log_c if log_c >= 0 else -M * log_c
    rho = math.exp(math.log(target / delta) - U)
    F, theta, j = _water_fill(M, log_c, rho)
    return F * delta * delta, theta, j, rho


def bound_smooth_full(problem: ValidatedProblem,
                      trace: Optional[tracking.WassersteinTrace] = None, *,
                      tau_candidates: Optional[Sequence[int]] = None,
                      variant: str = "tracked") -> BoundResult:
    """Bound for smooth losses with full-batch updates.

    Args:
      problem: A validated full-batch problem with ``holder_lambda = 1``.
      trace: Forward W-infinity trace; built from the problem when omitted.
      tau_candidates: Restricts the split points searched (e.g. ``[0]``).
      variant: ``"tracked"`` uses ``min(D_tau, D)`` from the trace;
        ``"diameter"`` charges the full diameter for every ``tau > 0``, as
        analyses without forward tracking do.
    """
    c = problem.config
    if c.strategy is not Strategy.FULL_BATCH or problem.update_lipschitz is None:
        raise ValueError("bound_smooth_full needs a smooth full-batch problem")
    if variant not in ("tracked", "diameter"):
        raise ValueError(f"unknown variant {variant!r}")
    if c.T == 0:
        return _empty_result(problem, "water-filling")
    trace = trace or tracking.trace_for(problem)
    delta = 2.0 * c.eta * c.clip_K / c.n
    kappa = _kappa(problem)
    log_c = math.log(problem.update_lipschitz)

    taus = _tau_range(c.T, tau_candidates)
    if log_c < 0:
        # beyond this window the heaviest weight dwarfs D_tau/delta by e^700,
        # so the split costs at least one more full composition step
        M_max = max(1, int(_MAX_LOG_WEIGHT / -log_c))
        taus = [t for t in taus if t == 0 or c.T - t <= M_max]

    evaluations = 0
    if tau_candidates is None and c.T > EXHAUSTIVE_TAU_LIMIT:
        stride = -(-c.T // _COARSE_TAU_POINTS)
        coarse = [t for t in taus if t % stride == 0 or t == c.T - 1]
        vals = {t: _smooth_value(t, problem, trace, delta, log_c, variant)[0]
                for t in coarse}
        evaluations += len(coarse)
        best_t = min(vals, key=lambda t: (vals[t], t))
        allowed = set(taus)
        fine = [t for t in range(best_t - stride, best_t + stride + 1) if t in allowed]
        taus = sorted(set(coarse) | set(fine))

    best = (math.inf, None)
    for tau in taus:
        F, theta, j, rho = _smooth_value(tau, problem, trace, delta, log_c, variant)
        evaluations += 1
        if F < best[0]:
            best = (F, (tau, theta, j, rho))

    tau, theta, j, rho = best[1]
    M = c.T - tau
    if j == 0:
        sched = ShiftSchedule(tau, (1.0,) * M, (0.0,) * M)
    else:
        sched = _smooth_schedule(tau, M, log_c, rho, delta, theta, j)
    sched, res = _make_feasible(problem, sched, trace, "linear",
                                _tau_targets(problem, trace, tau, variant))
    eps = schedule_objective(problem, sched)
    return BoundResult(eps, c.alpha, sched, _baselines(problem),
                       Diagnostics(evaluations, res, len(taus),
                                   f"water-filling/{variant}"))


# ---------------------------------------------------- Hölder chain (shooting)


def _g(growth, x):
    if growth.lam == 1.0:
        return (1.0 + growth.L_eff) * x
    return x + growth.L_eff * np.power(x, growth.lam)


def _g_prime(growth, x):
    if growth.lam == 1.0 or growth.L_eff == 0.0:
        return np.full_like(x, 1.0 + (growth.L_eff if growth.lam == 1.0 else 0.0))
    with np.errstate(divide="ignore"):
        return 1.0 + growth.L_eff * growth.lam * np.power(x, growth.lam - 1.0)


class _Chain:
    """Shooting solver for one split point tau."""

    def __init__(self, model, growth, x0, tau, T):
        self.model, self.growth, self.x0 = model, growth, x0
        self.steps = list(range(tau, T))
        zero = np.array([model.zero_cost(t) for t in self.steps])
        self.tail0 = np.append(np.cumsum(zero[::-1])[::-1][1:], 0.0)
        self.zero_total = float(zero.sum())
        self.evaluations = 0

    def run(self, prices, record=False):
        """Best cost per starting price and the step at which to stop."""
        P = len(prices)
        x = np.full(P, self.x0)
        m = np.asarray(prices, dtype=float).copy()
        cost = np.zeros(P)
        best = np.full(P, np.inf)
        stop = np.full(P, -1)
        hist = []
        for k, t in enumerate(self.steps):
            gx = _g(self.growth, x)
            absorb = cost + self.model.cost(t, gx) + self.tail0[k]
            better = absorb < best
            best[better] = absorb[better]
            stop[better] = k
            a, c = self.model.best_response(t, m)
            capped = a >= gx
            if np.any(capped):
                a = np.where(capped, gx, a)
                c = np.where(capped, self.model.cost(t, gx), c)
            cost = cost + c
            if record:
                hist.append((gx.copy(), a.copy()))
            x = np.maximum(gx - a, 0.0)
            with np.errstate(invalid="ignore", divide="ignore"):
                m = np.where(x > 0.0, m / _g_prime(self.growth, x), 0.0)
        done = x <= 0.0
        final = np.where(done, cost, np.inf)
        better = final < best
        best[better] = final[better]
        stop[better] = len(self.steps)
        self.evaluations += P
        if record:
            return best, stop, hist
        return best, stop

    def solve(self, n_coarse=64, zoom_rounds=8, n_zoom=16):
        if self.x0 == 0.0:
            return self.zero_total, None
        # any larger starting price absorbs the whole shift at once
        top = 2.0 * (float(_g(self.growth, np.array([self.x0]))[0])
                     + self.model.max_delta(self.steps))
        prices = np.geomspace(top * 1e-10, top, n_coarse)
        best, _ = self.run(prices)
        i = int(np.argmin(best))
        cur_best, cur_price = best[i], prices[i]
        lo = prices[max(i - 1, 0)]
        hi = prices[min(i + 1, len(prices) - 1)]
        for _ in range(zoom_rounds):
            grid = np.linspace(lo, hi, n_zoom)
            vals, _ = self.run(grid)
            k = int(np.argmin(vals))
            if vals[k] < cur_best:
                cur_best, cur_price = vals[k], grid[k]
            lo = grid[max(k - 1, 0)]
            hi = grid[min(k + 1, n_zoom - 1)]
        return cur_best, cur_price

    def schedule(self, price, tau):
        _, stop, hist = self.run(np.array([price]), record=True)
        k_stop = int(stop[0])
        a = []
        for k, (gx, ak) in enumerate(hist):
            if k < k_stop:
                a.append(float(ak[0]))
            elif k == k_stop:
                a.append(float(gx[0]))
            else:
                a.append(0.0)
        beta = [self.model.beta_for(t, x) for t, x in zip(self.steps, a)]
        return ShiftSchedule(tau, tuple(beta), tuple(a))


def _chain_bound(problem, trace, model, method, encounter_times=None,
                 tau_candidates=None, variant="tracked"):
    c = problem.config
    if c.T == 0:
        return _empty_result(problem, method, encounter_times)
    growth = _backward_growth(problem)
    taus = _tau_range(c.T, tau_candidates)
    zero = np.array([model.zero_cost(t) for t in range(c.T)])
    suffix = np.append(np.cumsum(zero[::-1])[::-1], 0.0)

    best_eps, best_sched, evaluations, iterations = math.inf, None, 0, 0
    if 0 in taus:
        best_eps = float(suffix[0])
        best_sched = _composition_schedule(model, c.T)
    for tau in sorted((t for t in taus if t > 0), reverse=True):
        if suffix[tau] >= best_eps:
            break  # every schedule from here on costs at least this much
        iterations += 1
        target = _tau_targets(problem, trace, tau, variant)
        chain = _Chain(model, growth, target, tau, c.T)
        val, price = chain.solve()
        evaluations += chain.evaluations
        if val < best_eps:
            best_eps = val
            if price is None:  # nothing to absorb
                best_sched = ShiftSchedule(
                    tau, tuple(model.beta_for(t, 0.0) for t in range(tau, c.T)),
                    (0.0,) * (c.T - tau))
            else:
                best_sched = chain.schedule(price, tau)
    if best_sched is None:
        raise ValueError("no candidate split point")

    sched, res = _make_feasible(problem, best_sched, trace, "holder",
                                _tau_targets(problem, trace, best_sched.tau, variant))
    eps = schedule_objective(problem, sched, encounter_times)
    return BoundResult(eps, c.alpha, sched, _baselines(problem, encounter_times),
                       Diagnostics(evaluations, res, iterations, method))


def bound_holder_full(problem: ValidatedProblem,
                      trace: Optional[tracking.WassersteinTrace] = None, *,
                      tau_candidates=None, variant="tracked") -> BoundResult:
    """Full-batch bound for (L, lambda)-Hölder gradients, any lambda in (0, 1]."""
    c = problem.config
    if c.strategy is not Strategy.FULL_BATCH:
        raise ValueError("bound_holder_full needs a full-batch problem")
    a = problem.assumptions
    trace = trace or tracking.track_full_holder(a.holder_L, a.holder_lambda, c.eta,
                                                c.clip_K, c.n, c.diameter_D, c.T)
    return _chain_bound(problem, trace, _step_model(problem), "holder-shooting",
                        tau_candidates=tau_candidates, variant=variant)


def bound_subsampled(problem: ValidatedProblem,
                     trace: Optional[tracking.WassersteinTrace] = None, *,
                     tau_candidates=None) -> BoundResult:
    """Bound for without-replacement mini-batches via the sampled Gaussian
    mechanism."""
    if problem.config.strategy is not Strategy.WO_REPLACEMENT:
        raise ValueError("bound_subsampled needs a wo_replacement problem")
    trace = trace or tracking.trace_for(problem)
    return _chain_bound(problem, trace, _step_model(problem), "sgm-shooting",
                        tau_candidates=tau_candidates)


def bound_cyclic_fixed(problem: ValidatedProblem, encounter_times: Sequence[int],
                       trace: Optional[tracking.WassersteinTrace] = None, *,
                       tau_candidates=None) -> BoundResult:
    """Bound for one realised shuffled-cyclic batch sequence.

    Only encounters at or after the split point are charged a composition
    term; every other step spends its whole noise on shifting. Encounters that
    fall at or beyond T (a last, partial epoch that never reaches the
    differing example) are simply absent from ``encounter_times``.
    """
    c = problem.config
    if c.strategy is not Strategy.SHUFFLED_CYCLIC:
        raise ValueError("bound_cyclic_fixed needs a shuffled_cyclic problem")
    times = tracking.check_encounter_times(encounter_times, c.T, c.batches_per_epoch)
    trace = trace or tracking.trace_for(problem, times)
    return _chain_bound(problem, trace, _step_model(problem, times),
                        "cyclic-shooting", encounter_times=times,
                        tau_candidates=tau_candidates)


# ---------------------------------------------------------- shuffled cyclic


def _max_workers():
    env = os.environ.get("HSA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def _ordered_map(fn, items):
    items = list(items)
    workers = min(_max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def encounter_sequences(T: int, batches_per_epoch: int):
    """All realisable encounter tuples with their probabilities.

    In every epoch the differing example lands in each of the B batches with
    probability 1/B, independently across epochs. In a partial last epoch an
    encounter slot past T means the example is never met in that epoch.
    """
    B = batches_per_epoch
    epochs = -(-T // B)
    seqs = {}
    for offsets in np.ndindex(*([B] * epochs)):
        times = tuple(e * B + u for e, u in enumerate(offsets) if e * B + u < T)
        seqs[times] = seqs.get(times, 0) + 1
    total = B ** epochs
    return [(k, v / total) for k, v in seqs.items()]


def sample_encounters(n: int, b: int, T: int, rng: np.random.Generator,
                      differing_index: int = 0) -> Tuple[int, ...]:
    """Draws one shuffled cyclic schedule and returns its encounter times."""
    B = n // b
    epochs = -(-T // B)
    times = []
    for e in range(epochs):
        perm = rng.permutation(n)
        slot = int(np.flatnonzero(perm == differing_index)[0]) // b
        t = e * B + slot
        if t < T:
            times.append(t)
    return tuple(times)


def log_mean_exp_bound(values: Sequence[float], alpha: float,
                       weights: Optional[Sequence[float]] = None) -> float:
    """``(1/(alpha-1)) log E[exp((alpha-1) eps)]`` evaluated stably."""
    v = (alpha - 1.0) * np.asarray(values, dtype=float)
    if weights is None:
        w = np.full(len(v), 1.0 / len(v))
    else:
        w = np.asarray(weights, dtype=float)
    return float(special.logsumexp(v, b=w) / (alpha - 1.0))


def bound_cyclic_shuffled(problem: ValidatedProblem, num_sequences: int = 1000,
                          seed: Optional[int] = 0, *,
                          exhaustive_limit: int = 10_000,
                          force_sampling: bool = False) -> ShuffledBoundResult:
    """Aggregates fixed-sequence bounds over random shuffles.

    Enumerates every encounter pattern exactly whenever there are at most
    ``exhaustive_limit`` of them, which makes the aggregate exact; otherwise
    draws ``num_sequences`` shuffles from ``seed``.
    """
    c = problem.config
    if c.strategy is not Strategy.SHUFFLED_CYCLIC:
        raise ValueError("bound_cyclic_shuffled needs a shuffled_cyclic problem")
    if num_sequences < 1:
        raise ValueError("num_sequences must be >= 1")
    B = c.batches_per_epoch
    epochs = -(-c.T // B) if c.T else 0
    exhaustive = (not force_sampling) and B ** epochs <= exhaustive_limit

    if exhaustive:
        pairs = encounter_sequences(c.T, B)
        seqs = [p[0] for p in pairs]
        weights = [p[1] for p in pairs]
        draws = None
    else:
        rng = np.random.default_rng(seed)
        draws = [sample_encounters(c.n, c.b, c.T, rng) for _ in range(num_sequences)]
        counts: Dict[Tuple[int, ...], int] = {}
        for d in draws:
            counts[d] = counts.get(d, 0) + 1
        seqs = sorted(counts)
        weights = [counts[s] / num_sequences for s in seqs]

    results = _ordered_map(lambda s: bound_cyclic_fixed(problem, s).epsilon, seqs)
    eps = dict(zip(seqs, results))
    estimate = log_mean_exp_bound([eps[s] for s in seqs], c.alpha, weights)
    worst = float(max(results))
    return ShuffledBoundResult(
        estimate=estimate, worst_case=worst, alpha=c.alpha, exhaustive=exhaustive,
        num_sequences=len(seqs) if exhaustive else num_sequences,
        seed=None if exhaustive else seed,
        per_sequence=tuple((s, w, eps[s]) for s, w in zip(seqs, weights)),
        baselines=_baselines(problem))


# ------------------------------------------------------------------ dispatch


def compute_bound(problem: ValidatedProblem, *, num_sequences: int = 1000,
                  seed: Optional[int] = 0, encounter_times=None):
    """Picks the bound matching the problem's batch strategy and loss class."""
    c = problem.config
    if c.strategy is Strategy.FULL_BATCH:
        if problem.update_lipschitz is not None:
            return bound_smooth_full(problem)
        return bound_holder_full(problem)
    if c.strategy is Strategy.WO_REPLACEMENT:
        return bound_subsampled(problem)
    if encounter_times is not None:
        return bound_cyclic_fixed(problem, encounter_times)
    return bound_cyclic_shuffled(problem, num_sequences, seed)


@dataclasses.dataclass(frozen=True)
class SweepRow:
    axis_value: float
    result: object  # BoundResult or ShuffledBoundResult

    @property
    def epsilon(self):
        return self.result.epsilon

    @property
    def tau(self):
        sched = getattr(self.result, "schedule", None)
        return sched.tau if sched is not None else None


def sweep(problem: ValidatedProblem, axis: str, values: Sequence[float], *,
          num_sequences: int = 1000, seed: Optional[int] = 0) -> List[SweepRow]:
    """Evaluates the bound at each value of ``T`` or ``alpha``.

    Rows come back in input order whatever the thread count.
    """
    if axis not in ("T", "alpha"):
        raise ValueError(f"axis must be 'T' or 'alpha', got {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")

    def one(v):
        changed = {"T": int(v)} if axis == "T" else {"alpha": float(v)}
        if axis == "T" and int(v) != v:
            raise ValueError(f"T values must be integers, got {v}")
        p = problem.replace(**changed)
        return SweepRow(v, compute_bound(p, num_sequences=num_sequences, seed=seed))

    return _ordered_map(one, values)
