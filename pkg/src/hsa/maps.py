"""One-step expansion maps of the gradient update.

``g(x) = x + L_eff * x**lam`` bounds how far apart two iterates can drift in
one step when the gradient is (L, lam)-Hölder; ``h`` is its inverse and turns
a post-step shift budget back into a pre-step one.
"""

from __future__ import annotations

import dataclasses
import math

from hsa.config import Convexity, LossAssumptions

_MAX_BISECTION_STEPS = 200


def lipschitz_update_constant(assumptions: LossAssumptions, eta: float) -> float:
    """Lipschitz constant of ``x -> x - eta * clip(grad(x))`` for smooth losses.

    Returns ``1 + eta*L`` without convexity, ``1`` for convex losses with
    ``eta <= 2/L`` and ``1 - eta*m`` for m-strongly convex ones with
    ``eta <= 1/L``.

    Raises:
      ValueError: if the loss is not smooth or a step-size condition fails.
    """
    a = assumptions
    if a.holder_lambda != 1.0:
        raise ValueError("update map is Lipschitz only for smooth losses "
                         f"(holder_lambda=1), got {a.holder_lambda}")
    L = a.holder_L
    if a.convexity is Convexity.NON_CONVEX:
        return 1.0 + eta * L
    if a.convexity is Convexity.CONVEX:
        if L > 0 and eta > 2.0 / L:
            raise ValueError("η ≤ 2/L required for c=1")
        return 1.0
    if L > 0 and eta > 1.0 / L:
        raise ValueError("η ≤ 1/L required for c=1-ηm")
    return 1.0 - eta * a.strong_convexity_m


@dataclasses.dataclass(frozen=True)
class GrowthMap:
    """``g(x) = x + L_eff * x**lam`` on [0, inf) and its inverse."""

    L_eff: float
    lam: float

    def __post_init__(self):
        if not (self.L_eff >= 0 and math.isfinite(self.L_eff)):
            raise ValueError(f"L_eff must be finite and >= 0, got {self.L_eff}")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lam must lie in (0, 1], got {self.lam}")

    def g(self, x: float) -> float:
        if x < 0:
            raise ValueError(f"g is defined on x >= 0, got {x}")
        if self.lam == 1.0:
            return (1.0 + self.L_eff) * x
        return x + self.L_eff * x ** self.lam

    def g_prime(self, x: float) -> float:
        """Right derivative of g; infinite at 0 when lam < 1 and L_eff > 0."""
        if self.lam == 1.0 or self.L_eff == 0.0:
            return 1.0 + (self.L_eff if self.lam == 1.0 else 0.0)
        if x == 0.0:
            return math.inf
        return 1.0 + self.L_eff * self.lam * x ** (self.lam - 1.0)

    def h(self, z: float) -> float:
        """The unique x >= 0 with g(x) = z."""
        if z < 0:
            raise ValueError(f"h is defined on z >= 0, got {z}")
        if z == 0.0 or self.L_eff == 0.0:
            return z
        if self.lam == 1.0:
            return z / (1.0 + self.L_eff)
        if self.lam == 0.5:
            return h_sqrt_closed_form(self.L_eff, z)
        return self.h_bisect(z)

    def h_bisect(self, z: float) -> float:
        """Inverts g by bisection, whatever the order.

        Since ``g(x) <= 2*max(x, L*x**lam)`` and both terms are increasing,
        the root lies in ``[min(z/2, (z/2L)**(1/lam)), min(z, (z/L)**(1/lam))]``;
        that bracket is at most a factor ``2**(1/lam)`` wide, so bisecting
        geometrically reaches full double precision in well under 200 steps
        even when the root is many orders of magnitude below z.
        """
        if z < 0:
            raise ValueError(f"h is defined on z >= 0, got {z}")
        L, lam = self.L_eff, self.lam
        if z == 0.0 or L == 0.0:
            return z
        inv = 1.0 / lam
        lo = min(0.5 * z, _pow_safe(0.5 * z / L, inv))
        hi = min(z, _pow_safe(z / L, inv))
        if lo <= 0.0:
            lo = 0.0
        for _ in range(_MAX_BISECTION_STEPS):
            mid = math.sqrt(lo * hi) if lo > 0.0 else 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if mid + L * mid ** lam < z:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 4 * math.ulp(hi):
                break
        # pick the endpoint with the smaller residual
        if abs(lo + L * lo ** lam - z) < abs(hi + L * hi ** lam - z):
            return lo
        return hi


def _pow_safe(base: float, exponent: float) -> float:
    try:
        return base ** exponent
    except OverflowError:
        return math.inf


def h_sqrt_closed_form(L_eff: float, z: float) -> float:
    """Inverse of ``x + L*sqrt(x)``: ``((-L + sqrt(L**2 + 4z)) / 2)**2``.

    Evaluated as ``(2z / (L + sqrt(L**2 + 4z)))**2``, which is the same number
    without the cancellation when ``L**2 >> z``.
    """
    u = 2.0 * z / (L_eff + math.sqrt(L_eff * L_eff + 4.0 * z))
    return u * u


def g_eval(growth: GrowthMap, x: float) -> float:
    return growth.g(x)


def h_eval(growth: GrowthMap, z: float) -> float:
    return growth.h(z)
