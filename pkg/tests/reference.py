"""Brute-force references for small optimizer instances.

These search the schedule space directly on dense grids with no use of the
optimizer's elimination tricks. The objective is written out from its
definition: kappa * sum(delta^2 / beta + a^2 / (1 - beta)).
"""

import itertools
import math

import numpy as np

from hsa import tracking
from hsa.maps import GrowthMap

_BETAS = np.linspace(1e-4, 1.0, 4000)


def step_cost(delta, a):
    """min over the beta grid of delta^2/beta + a^2/(1-beta), vectorised in a."""
    a = np.asarray(a, dtype=float)[..., None]
    b = _BETAS
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(a == 0.0, 0.0, a * a / (1.0 - b))
        shift = np.where((a > 0.0) & (b == 1.0), np.inf, shift)
    return (delta * delta / b + shift).min(axis=-1)


def _simplex(M, res):
    if M == 1:
        return np.ones((1, 1))
    pts = [c for c in itertools.product(range(res + 1), repeat=M - 1) if sum(c) <= res]
    P = np.array([list(c) + [res - sum(c)] for c in pts], dtype=float)
    return P / res


def grid_smooth(problem, res=300):
    """Dense search for smooth full batch: a on the constraint simplex."""
    cfg = problem.config
    c = problem.update_lipschitz
    kappa = cfg.alpha / (2 * cfg.sigma ** 2)
    delta = 2 * cfg.eta * cfg.clip_K / cfg.n
    trace = tracking.trace_for(problem)
    best = math.inf
    for tau in range(cfg.T):
        M = cfg.T - tau
        target = min(trace[tau], cfg.diameter_D)
        if target == 0.0:
            best = min(best, kappa * M * delta * delta)
            continue
        w = c ** -np.arange(1, M + 1, dtype=float)
        A = _simplex(M, res) * target / w
        cost = sum(step_cost(delta, A[:, k]) for k in range(M))
        best = min(best, kappa * float(cost.min()))
    return best


def grid_holder(problem, res=1500):
    """Dense search for Hölder full batch with T <= 3.

    All shifts but the first are gridded; the first is the smallest value
    meeting the backward feasibility recursion, which is optimal because the
    cost increases in it.
    """
    cfg, a = problem.config, problem.assumptions
    assert cfg.T <= 3
    gm = GrowthMap(cfg.eta * a.holder_L, a.holder_lambda)
    kappa = cfg.alpha / (2 * cfg.sigma ** 2)
    delta = 2 * cfg.eta * cfg.clip_K / cfg.n
    trace = tracking.trace_for(problem)
    best = math.inf
    for tau in range(cfg.T):
        M = cfg.T - tau
        target = min(trace[tau], cfg.diameter_D)
        if target == 0.0:
            best = min(best, kappa * M * delta * delta)
            continue
        need = gm.g(target)
        h = np.vectorize(gm.h)
        axis = np.linspace(0.0, need * 1.2, res if M <= 2 else res // 4)
        later = np.meshgrid(*([axis] * (M - 1)), indexing="ij")
        later = [x.ravel() for x in later]
        A = np.zeros(later[0].size if later else 1)
        for x in reversed(later):
            A = h(A + x)
        first = np.maximum(need - A, 0.0)
        cost = step_cost(delta, first) + sum(step_cost(delta, x) for x in later)
        best = min(best, kappa * float(np.min(cost)))
    return best
