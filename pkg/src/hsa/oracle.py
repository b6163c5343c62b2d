"""Independent numerical checks of the bounds on 1-D toy problems.

The density engine propagates the exact law of projected Noisy-GD on a line
segment. Projection creates point masses at both ends, so a law is a
:class:`MixedMeasure1D`: cell masses on a uniform grid plus two boundary
atoms. Divergences computed from these laws are then compared with the
theoretical bounds, which must dominate them.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal, special

from hsa import tracking
from hsa.config import (Convexity, LossAssumptions, SgdConfig, Strategy,
                        ValidatedProblem, validate)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)  # nodes on [0, 1]
_GL_W = 0.5 * _GL_W
_MASS_TOL = 1e-10
_ATOM_DROP = 1e-12
_KERNEL_SIGMAS = 10.0
_MIN_CELLS = 512

HOLDER_EXPONENT = 1.0 / 3.0


class MassConservationError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class MixedMeasure1D:
    """A law on ``[-D/2, D/2]``: N cell masses plus two boundary atoms."""

    diameter: float
    density: np.ndarray
    atom_left: float = 0.0
    atom_right: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "density", d)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("density must be a non-empty 1-D array")
        if np.any(d < 0) or self.atom_left < 0 or self.atom_right < 0:
            raise ValueError("masses must be non-negative")

    @property
    def N(self) -> int:
        return self.density.size

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-self.diameter / 2, self.diameter / 2, self.N + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.density) + self.atom_left + self.atom_right)

    def mean(self) -> float:
        D = self.diameter
        return float(np.dot(self.density, self.centers)
                     + D / 2 * (self.atom_right - self.atom_left))

    @classmethod
    def point_mass(cls, diameter, N, w):
        d = np.zeros(N)
        if w <= -diameter / 2:
            return cls(diameter, d, 1.0, 0.0)
        if w >= diameter / 2:
            return cls(diameter, d, 0.0, 1.0)
        k = min(int((w + diameter / 2) / diameter * N), N - 1)
        d[k] = 1.0
        return cls(diameter, d)


# ------------------------------------------------------------ toy problems


@dataclasses.dataclass(frozen=True)
class ToyProblem1D:
    """Full-batch projected Noisy-GD on ``[-D/2, D/2]`` with n scalar data.

    Kinds of per-example loss (``u = w - d_i``):

    * ``quadratic``: ``(m/2) u^2``. Strongly convex for m > 0, smooth and
      non-convex for m < 0.
    * ``logistic``: ``softplus(y_i u)`` with labels ``y_i = +-1``. Convex,
      1/4-smooth.
    * ``linear``: ``d_i * w``, so each datum is a fixed slope. Convex with a
      0-Lipschitz gradient; with a wide domain the composition bound is exact,
      which makes it a sharp negative control.
    * ``holder``: ``(m/2) u^2 - (3/4) s |u|^{4/3}``. Its gradient is
      (m D^{2/3} + 2^{2/3} s, 1/3)-Hölder and the update map stays increasing,
      which the density engine needs.

    Attributes:
      data: The n primary data points in [-1/2, 1/2].
      adjacent_value: Replacement for ``data[i_star]`` in the adjacent set.
      labels: Only used by ``logistic``.
    """

    kind: str
    data: Tuple[float, ...]
    adjacent_value: float
    i_star: int = 0
    m: float = 1.0
    s: float = 0.0
    labels: Optional[Tuple[int, ...]] = None
    eta: float = 0.1
    sigma: float = 1.0
    T: int = 10
    diameter: float = 1.0
    w0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic", "holder", "linear"):
            raise ValueError(f"unknown toy kind {self.kind!r}")
        object.__setattr__(self, "data", tuple(float(x) for x in self.data))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(y) for y in self.labels))
        elif self.kind == "logistic":
            object.__setattr__(self, "labels", tuple(
                1 if i % 2 == 0 else -1 for i in range(len(self.data))))
        if not 0 <= self.i_star < len(self.data):
            raise ValueError("i_star out of range")
        if not self.diameter > 0 or not self.sigma > 0 or not self.eta > 0:
            raise ValueError("diameter, sigma and eta must be positive")
        if self.kind == "holder" and self.s < 0:
            raise ValueError("s must be >= 0")

    @property
    def n(self) -> int:
        return len(self.data)

    def dataset(self, variant: str = "primary") -> np.ndarray:
        d = np.array(self.data)
        if variant == "adjacent":
            d[self.i_star] = self.adjacent_value
        elif variant != "primary":
            raise ValueError(f"variant must be primary or adjacent, got {variant!r}")
        return d

    def per_example_gradients(self, w, variant="primary") -> np.ndarray:
        """Array of shape ``w.shape + (n,)``."""
        w = np.asarray(w, dtype=float)[..., None]
        if self.kind == "linear":
            return np.broadcast_to(self.dataset(variant), w.shape[:-1] + (self.n,))
        u = w - self.dataset(variant)
        if self.kind == "quadratic":
            return self.m * u
        if self.kind == "logistic":
            y = np.array(self.labels, dtype=float)
            return y * special.expit(y * u)
        return self.m * u - self.s * np.sign(u) * np.abs(u) ** HOLDER_EXPONENT

    def gradient(self, w, variant="primary"):
        return self.per_example_gradients(w, variant).mean(axis=-1)

    def update(self, w, variant="primary"):
        """The gradient-update map ``w - eta * grad(w)`` (no projection)."""
        return np.asarray(w, dtype=float) - self.eta * self.gradient(w, variant)

    def gradient_bound(self) -> float:
        """Largest per-example gradient magnitude on the domain."""
        if self.kind == "linear":
            return max(max(abs(x) for x in self.data), abs(self.adjacent_value))
        r = self.diameter / 2 + max(max(abs(x) for x in self.data),
                                    abs(self.adjacent_value))
        if self.kind == "quadratic":
            return abs(self.m) * r
        if self.kind == "logistic":
            return 1.0
        return abs(self.m) * r + self.s * r ** HOLDER_EXPONENT

    def assumptions(self) -> LossAssumptions:
        K = self.gradient_bound()
        if self.kind == "quadratic":
            if self.m > 0:
                return LossAssumptions(self.m, 1.0, Convexity.STRONGLY_CONVEX, K, self.m)
            return LossAssumptions(abs(self.m), 1.0, Convexity.NON_CONVEX, K)
        if self.kind == "linear":
            return LossAssumptions(0.0, 1.0, Convexity.CONVEX, K)
        if self.kind == "logistic":
            return LossAssumptions(0.25, 1.0, Convexity.CONVEX, K)
        L = abs(self.m) * self.diameter ** (1 - HOLDER_EXPONENT) + 2 ** (2 / 3) * self.s
        return LossAssumptions(L, HOLDER_EXPONENT, Convexity.NON_CONVEX, K)

    def config(self, alpha: float = 2.0, T: Optional[int] = None) -> SgdConfig:
        # the clip radius equals the gradient bound, so clipping never fires
        return SgdConfig(self.eta, self.sigma, self.gradient_bound(), self.n,
                         self.n, self.T if T is None else T, self.diameter,
                         Strategy.FULL_BATCH, alpha)

    def problem(self, alpha: float = 2.0, T: Optional[int] = None) -> ValidatedProblem:
        return validate(self.assumptions(), self.config(alpha, T))

    def identical(self) -> "ToyProblem1D":
        """The same toy with the adjacent dataset equal to the primary one."""
        return dataclasses.replace(self, adjacent_value=self.data[self.i_star])


# ------------------------------------------------------- density propagation


def _phi_diff(b, a):
    """``Phi(b) - Phi(a)`` for ``b >= a``, accurate in both tails."""
    b, a = np.broadcast_arrays(np.asarray(b, float), np.asarray(a, float))
    upper = a > 0
    out = np.where(upper, special.ndtr(-a) - special.ndtr(-b),
                   special.ndtr(b) - special.ndtr(a))
    return np.maximum(out, 0.0)


def _cell_kernel(h, sigma, reach):
    """Mass a uniform unit cell sends to each cell at offset -reach..reach."""
    d = np.arange(-reach, reach + 1)[:, None]
    x = h * _GL_X[None, :]
    k = _phi_diff(((d + 1) * h - x) / sigma, (d * h - x) / sigma)
    return k @ _GL_W


def _cell_tails(edges_lo, h, sigma, left, right):
    """Average mass a uniform cell sends below ``left`` and above ``right``."""
    x = edges_lo[:, None] + h * _GL_X[None, :]
    lo = special.ndtr((left - x) / sigma) @ _GL_W
    hi = special.ndtr((x - right) / sigma) @ _GL_W
    return lo, hi


class _Propagator:
    def __init__(self, toy: ToyProblem1D, N: int):
        if N < 2:
            raise ValueError("N must be >= 2")
        self.toy, self.N = toy, N
        D = toy.diameter
        self.h = D / N
        self.edges = np.linspace(-D / 2, D / 2, N + 1)
        step = toy.eta * toy.gradient_bound() + self.h
        self.pad = int(math.ceil(step / self.h)) + 1
        self.ext_edges = -D / 2 + self.h * np.arange(-self.pad, N + self.pad + 1)
        reach = N + 2 * self.pad
        reach = min(reach, int(math.ceil(_KERNEL_SIGMAS * toy.sigma / self.h)) + 1)
        self.reach = reach
        self.kernel = _cell_kernel(self.h, toy.sigma, reach)
        self.tail_lo, self.tail_hi = _cell_tails(self.ext_edges[:-1], self.h,
                                                 toy.sigma, -D / 2, D / 2)

    def _points_to_grid(self, ys, masses):
        s = self.toy.sigma
        D = self.toy.diameter
        z = (self.edges[None, :] - np.asarray(ys)[:, None]) / s
        cells = _phi_diff(z[:, 1:], z[:, :-1])
        left = special.ndtr((-D / 2 - np.asarray(ys)) / s)
        right = special.ndtr((np.asarray(ys) - D / 2) / s)
        m = np.asarray(masses)
        return m @ cells, float(m @ left), float(m @ right)

    def step(self, cells, points, variant):
        """One projected Noisy-GD step; points are ``[(position, mass)]``."""
        toy = self.toy
        new_cells = np.zeros(self.N)
        atom_l = atom_r = 0.0
        if cells is not None and cells.sum() > 0:
            img = toy.update(self.edges, variant)
            if np.any(np.diff(img) <= 0):
                raise ValueError("update map is not increasing on the domain")
            cum = np.concatenate(([0.0], np.cumsum(cells)))
            ext_cum = np.interp(self.ext_edges, img, cum, left=0.0, right=cum[-1])
            ext = np.diff(ext_cum)
            conv = signal.fftconvolve(ext, self.kernel)
            # conv[k] is the mass landing at extended offset k - reach
            start = self.pad + self.reach
            new_cells += np.maximum(conv[start:start + self.N], 0.0)
            atom_l += float(ext @ self.tail_lo)
            atom_r += float(ext @ self.tail_hi)
        if points:
            ys = toy.update(np.array([p for p, _ in points]), variant)
            c, l, r = self._points_to_grid(ys, [m for _, m in points])
            new_cells += c
            atom_l += l
            atom_r += r
        return new_cells, atom_l, atom_r


def propagate_density(toy: ToyProblem1D, variant: str = "primary",
                      T: Optional[int] = None, N: int = 4096,
                      history: bool = False):
    """Exact-in-law propagation of the toy process up to step T.

    Each step pushes the cell masses through the increasing update map by
    re-binning the cumulative mass at the preimages of the grid edges,
    convolves with the Gaussian noise (cells are uniform within themselves;
    atoms and the initial point mass are points) and folds everything outside
    the segment into the boundary atoms.

    Returns:
      The law of W_T, or the list of laws W_0..W_T if ``history``.

    Raises:
      MassConservationError: if total mass drifts by more than 1e-10.
    """
    T = toy.T if T is None else T
    if N < _MIN_CELLS:
        raise ValueError(f"N must be >= {_MIN_CELLS}, got {N}")
    D = toy.diameter
    w0 = float(np.clip(toy.w0, -D / 2, D / 2))
    laws = [MixedMeasure1D.point_mass(D, N, w0)]
    prop = _Propagator(toy, N) if T > 0 else None
    cells, points = None, [(w0, 1.0)]
    for t in range(T):
        c, l, r = prop.step(cells, points, variant)
        cells = c
        points = [(x, m) for x, m in ((-D / 2, l), (D / 2, r)) if m > 0]
        law = MixedMeasure1D(D, c, l, r)
        drift = abs(law.total_mass - 1.0)
        if drift > _MASS_TOL:
            raise MassConservationError(
                f"mass drifted by {drift:.3g} at step {t + 1}")
        laws.append(law)
    return laws if history else laws[-1]


# ---------------------------------------------------------------- divergence


def renyi_divergence_mixed(P: MixedMeasure1D, Q: MixedMeasure1D,
                           alpha: float) -> float:
    """Rényi divergence of order alpha between two mixed measures.

    Returns ``inf`` when P charges a cell or atom that Q does not.
    """
    if P.N != Q.N or P.diameter != Q.diameter:
        raise ValueError("P and Q must live on the same grid")
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    p = list(P.density)
    q = list(Q.density)
    for a, b in ((P.atom_left, Q.atom_left), (P.atom_right, Q.atom_right)):
        if a < _ATOM_DROP and b < _ATOM_DROP:
            continue
        p.append(a)
        q.append(b)
    p = np.asarray(p)
    q = np.asarray(q)
    used = p > 0
    if np.any(used & (q <= 0)):
        return math.inf
    lp, lq = np.log(p[used]), np.log(q[used])
    # both laws are renormalised (their mass is 1 only up to rounding); the
    # arrangement makes D(P || P) exactly 0
    log_mass_p = special.logsumexp(lp)
    log_mass_q = special.logsumexp(np.log(q[q > 0]))
    log_sum = special.logsumexp(lp + (alpha - 1.0) * (lp - lq)) - log_mass_p
    value = float(log_sum) / (alpha - 1.0) + float(log_mass_q - log_mass_p)
    return max(value, 0.0)


def symmetric_divergence(P, Q, alpha):
    return max(renyi_divergence_mixed(P, Q, alpha),
               renyi_divergence_mixed(Q, P, alpha))


# ------------------------------------------------------------- verification


@dataclasses.dataclass(frozen=True)
class VerificationReport:
    name: str
    numeric: float
    numeric_refined: float
    theoretical: float
    margin: float
    refinement_change: float
    passed: bool

    def to_dict(self):
        return dataclasses.asdict(self)


def verify_bound(toy: ToyProblem1D, alpha: float, bound, *, N: int = 4096,
                 tol: float = 1e-6, name: str = "toy",
                 scale_bound: float = 1.0) -> VerificationReport:
    """Checks ``D_alpha(W_T || W_T') <= epsilon`` for a toy problem.

    The divergence is taken in both directions (the bound covers both) at
    grid sizes N and 2N; the check passes only if both resolutions agree
    with the bound. ``scale_bound`` multiplies the theoretical value and is
    meant for negative controls only.

    Args:
      bound: A BoundResult or a plain number.
    """
    eps = float(getattr(bound, "epsilon", bound)) * scale_bound
    vals = []
    for grid in (N, 2 * N):
        P = propagate_density(toy, "primary", N=grid)
        Q = propagate_density(toy, "adjacent", N=grid)
        vals.append(symmetric_divergence(P, Q, alpha))
    worst = max(vals)
    return VerificationReport(
        name=name, numeric=vals[0], numeric_refined=vals[1], theoretical=eps,
        margin=eps - worst, refinement_change=abs(vals[1] - vals[0]),
        passed=bool(worst <= eps + tol))


@dataclasses.dataclass(frozen=True)
class CouplingReport:
    max_deviation: Tuple[float, ...]
    trace: Tuple[float, ...]
    worst_excess: float
    trials: int
    passed: bool


def simulate_coupled(toy: ToyProblem1D, trials: int, seed: int,
                     random_start: bool = True):
    """Runs both processes with shared noise; returns |W_t - W_t'| per trial.

    Both runs start from the same point, drawn uniformly per trial when
    ``random_start``.
    """
    rng = np.random.default_rng(seed)
    D = toy.diameter
    w = (rng.uniform(-D / 2, D / 2, trials) if random_start
         else np.full(trials, toy.w0))
    w = np.clip(w, -D / 2, D / 2)
    v = w.copy()
    gaps = [np.zeros(trials)]
    for _ in range(toy.T):
        g = rng.normal(0.0, toy.sigma, trials)
        w = np.clip(toy.update(w, "primary") + g, -D / 2, D / 2)
        v = np.clip(toy.update(v, "adjacent") + g, -D / 2, D / 2)
        gaps.append(np.abs(w - v))
    return np.stack(gaps)


def coupled_w_inf_check(toy: ToyProblem1D, trace: tracking.WassersteinTrace,
                        trials: int = 1000, seed: int = 0,
                        tol: float = 1e-9) -> CouplingReport:
    """Checks the tracked W-infinity bounds against shared-noise simulation."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trace.T != toy.T:
        raise ValueError(f"trace covers {trace.T} steps, toy runs {toy.T}")
    gaps = simulate_coupled(toy, trials, seed)
    dev = gaps.max(axis=1)
    excess = float(np.max(dev - trace.as_array()))
    return CouplingReport(tuple(float(x) for x in dev), trace.values, excess,
                          trials, excess <= tol)


# ----------------------------------------------------------- Hölder estimate


def estimate_holder(gradient: Callable[[np.ndarray], np.ndarray],
                    domain: Tuple[float, float], lam: float, num_pairs: int,
                    seed: int = 0) -> float:
    """Largest ``|grad(x) - grad(y)| / |x - y|^lam`` over random pairs.

    Sampling can only under-estimate the true constant. Coincident pairs are
    skipped.
    """
    if not 0 < lam <= 1:
        raise ValueError("lam must lie in (0, 1]")
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    lo, hi = domain
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, num_pairs)
    y = rng.uniform(lo, hi, num_pairs)
    keep = x != y
    x, y = x[keep], y[keep]
    if x.size == 0:
        return 0.0
    ratio = np.abs(gradient(x) - gradient(y)) / np.abs(x - y) ** lam
    return float(ratio.max())


def abs_cuberoot_grad(x):
    """``|x|^{1/3}``, the derivative of ``sign(x) (3/4) |x|^{4/3}``.

    Its sharp (., 1/3)-Hölder constant is 1: for same-sign pairs the cube
    root is subadditive and for opposite signs the difference only shrinks.
    """
    return np.abs(np.asarray(x, dtype=float)) ** (1.0 / 3.0)


def signed_cuberoot_grad(x):
    """``sign(x)|x|^{1/3}``, the derivative of ``(3/4)|x|^{4/3}``.

    Sharp (., 1/3)-Hölder constant ``2^{2/3}``, attained at ``x = -y``.
    """
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** (1.0 / 3.0)


@dataclasses.dataclass(frozen=True)
class ZooEntry:
    gradient: Callable[[float], Callable]  # slope -> gradient function
    constant: Callable[[float, float], Optional[float]]  # (lam, slope) -> L
    description: str


def _only_at(lam_value, value):
    return lambda lam, slope: value if math.isclose(lam, lam_value) else None


HOLDER_ZOO: Dict[str, ZooEntry] = {
    "abs_cuberoot_grad": ZooEntry(lambda slope: abs_cuberoot_grad,
                                  _only_at(1 / 3, 1.0), "|x|^(1/3)"),
    "signed_cuberoot_grad": ZooEntry(lambda slope: signed_cuberoot_grad,
                                     _only_at(1 / 3, 2 ** (2 / 3)),
                                     "sign(x)|x|^(1/3)"),
    "linear": ZooEntry(lambda slope: (lambda x: slope * np.asarray(x, dtype=float)),
                       lambda lam, slope: abs(slope) if lam == 1 else None,
                       "slope * x"),
    "constant": ZooEntry(
        lambda slope: (lambda x: np.full_like(np.asarray(x, dtype=float), slope)),
        lambda lam, slope: 0.0, "constant slope"),
}


# ------------------------------------------------------------ random suites


def random_toys(count: int, seed: int, T_max: int = 20) -> List[ToyProblem1D]:
    """Seeded mix of strongly convex quadratic and Hölder toys, n = 5."""
    rng = np.random.default_rng(seed)
    toys = []
    for i in range(count):
        data = tuple(rng.uniform(-0.5, 0.5, 5))
        adj = float(rng.uniform(-0.5, 0.5))
        T = int(rng.integers(1, T_max + 1))
        sigma = float(rng.uniform(0.3, 1.5))
        if i % 2 == 0:
            toys.append(ToyProblem1D("quadratic", data, adj, int(rng.integers(5)),
                                     m=float(rng.uniform(0.2, 1.0)),
                                     eta=float(rng.uniform(0.05, 0.5)),
                                     sigma=sigma, T=T,
                                     w0=float(rng.uniform(-0.5, 0.5))))
        else:
            toys.append(ToyProblem1D("holder", data, adj, int(rng.integers(5)),
                                     m=float(rng.uniform(0.0, 1.0)),
                                     s=float(rng.uniform(0.05, 0.5)),
                                     eta=float(rng.uniform(0.05, 0.3)),
                                     sigma=sigma, T=T,
                                     w0=float(rng.uniform(-0.5, 0.5))))
    return toys
