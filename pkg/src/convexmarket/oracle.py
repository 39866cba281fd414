"""Brute-force validators: grid maximization, hull membership, finite differences.

Nothing here is used on the engine's closed-form or projection fast paths;
these routines exist to check them independently.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EnumerationUnavailable, SolverError
from .regions import BandRegion, SimplexRegion, HalfspaceTrimmedSimplex

WOLFE_MAX_ITER = 10_000


# Wolfe's min-norm-point ---------------------------------------------------------

def _affine_minimizer(B: np.ndarray) -> np.ndarray:
    """Weights (summing to 1) of the min-norm point of the affine hull of the rows of ``B``."""
    k = B.shape[0]
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = B @ B.T
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_point(P, tol: float = 1e-12, max_iter: int = WOLFE_MAX_ITER):
    """Minimum-norm point of ``conv(rows of P)``.

    Returns ``(x, support, weights)`` where ``x = weights @ P[support]``.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise DimensionError("need a nonempty 2-D array of generators")
    scale = max(1.0, float(np.max(np.einsum("ij,ij->i", P, P))))
    S = [int(np.argmin(np.einsum("ij,ij->i", P, P)))]
    w = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(max_iter):
        vals = P @ x
        j = int(np.argmin(vals))
        if x @ x - vals[j] <= tol * scale or j in S:
            return x, np.array(S), w
        S.append(j)
        w = np.append(w, 0.0)
        # minor cycles
        while True:
            v = _affine_minimizer(P[S])
            if np.all(v > 1e-14):
                w = v
                break
            mask = v <= 1e-14
            denom = w[mask] - v[mask]
            ratios = np.where(denom > 0, w[mask] / np.where(denom > 0, denom, 1.0), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            w = (1.0 - theta) * w + theta * v
            keep = w > 1e-14
            if keep.all():
                keep[int(np.argmin(w))] = False
            S = [s for s, k in zip(S, keep) if k]
            w = w[keep]
            w = w / w.sum()
        x = w @ P[S]
    raise SolverError("min-norm-point did not converge")


@dataclass(frozen=True)
class BeliefDistribution:
    """A probability vector over an enumerated outcome list."""

    p: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or len(p) == 0:
            raise DimensionError("belief must be a nonempty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("belief must be nonnegative and sum to 1")
        object.__setattr__(self, "p", tuple(float(v) for v in p))

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.p)

    @classmethod
    def random(cls, n_outcomes: int, rng, concentration: float = 1.0) -> "BeliefDistribution":
        return cls(tuple(rng.dirichlet(np.full(n_outcomes, concentration))))


class HullHandle:
    """The convex hull of a finite set of payoff vectors.

    Behaves like a price region (``contains``, ``project``, ``linear_maximize``,
    ``interior_point``) so that solvers can optimize over it directly.
    """

    def __init__(self, generators):
        G = np.atleast_2d(np.asarray(generators, dtype=np.float64))
        if G.shape[0] == 0 or G.shape[1] == 0:
            raise DimensionError("hull needs at least one generator")
        self.generators = np.unique(G, axis=0)

    @classmethod
    def from_payoffs(cls, payoffs) -> "HullHandle":
        return cls(payoffs.payoff_matrix())

    @property
    def dimension(self) -> int:
        return self.generators.shape[1]

    def project(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.dimension,):
            raise DimensionError("dimension mismatch")
        x, _, _ = min_norm_point(self.generators - y)
        return x + y

    def distance(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(np.linalg.norm(self.project(x) - x))

    def contains(self, x, tol: float = 1e-7) -> bool:
        return self.distance(x) <= tol

    def linear_maximize(self, c) -> np.ndarray:
        return self.generators[int(np.argmax(self.generators @ np.asarray(c, dtype=np.float64)))].copy()

    def interior_point(self) -> np.ndarray:
        return self.generators.mean(axis=0)

    @property
    def diameter(self) -> float:
        G = self.generators
        if len(G) > 5000:
            raise EnumerationUnavailable("too many generators for pairwise diameter")
        sq = np.einsum("ij,ij->i", G, G)
        d2 = sq[:, None] + sq[None, :] - 2.0 * G @ G.T
        return float(np.sqrt(max(0.0, d2.max())))


def hull_distance(H: HullHandle, x) -> float:
    return H.distance(x)


def hull_project(H: HullHandle, x) -> np.ndarray:
    return H.project(x)


# grid maximization -------------------------------------------------------------

def _simplex_lattice(n: int, res: int, total: float = 1.0) -> np.ndarray:
    pts = []
    for combo in itertools.combinations(range(res + n - 1), n - 1):
        prev = -1
        parts = []
        for c in combo:
            parts.append(c - prev - 1)
            prev = c
        parts.append(res + n - 2 - prev)
        pts.append(parts)
    return np.asarray(pts, dtype=np.float64) * (total / res)


def grid_points(region, resolution: int) -> np.ndarray:
    """Member points of ``region`` on a regular grid."""
    K = region.dimension
    if K > 4:
        raise DimensionError("grid oracle is limited to dimension <= 4")
    if resolution < 50:
        raise ValueError("grid resolution must be at least 50")
    if isinstance(region, (SimplexRegion, HalfspaceTrimmedSimplex)):
        pts = _simplex_lattice(K, resolution)
    elif isinstance(region, BandRegion):
        levels = np.linspace(1.0, 1.0 + region.c, max(2, int(resolution * region.c / 2) + 1))
        per = max(50, resolution // 4)
        pts = np.vstack([_simplex_lattice(K, per, s) for s in levels])
    else:
        lo, hi = region.bounding_box()
        axes = [np.linspace(l, h, resolution + 1) for l, h in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, K)
    if isinstance(region, SimplexRegion):
        return pts
    return pts[region.member_mask(pts, 1e-12)]


@functools.lru_cache(maxsize=16)
def _cached_grid(region, resolution: int) -> np.ndarray:
    pts = grid_points(region, resolution)
    pts.setflags(write=False)
    return pts


def grid_cost(region, R, q, resolution: int = 200) -> float:
    """Lower bound on ``sup_{x in region} x . q - R(x)`` from a grid search."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (region.dimension,):
        raise DimensionError("dimension mismatch")
    pts = _cached_grid(region, resolution)
    vals = pts @ q - R.values(pts)
    return float(vals.max())


def grid_error_bound(region, R, q, resolution: int) -> float:
    """Heuristic accuracy of :func:`grid_cost`: ``diam * (|q|_inf + slope) / resolution``.

    ``slope`` bounds ``|grad R|`` away from the boundary by the modulus times the
    diameter, plus one for the entropy's logarithmic growth.
    """
    q = np.asarray(q, dtype=np.float64)
    d = region.diameter
    slope = R.modulus * d + 1.0
    return d * (float(np.max(np.abs(q))) + slope) / resolution


# finite differences ------------------------------------------------------------

def finite_diff_gradient(f, q, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field."""
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    q = np.asarray(q, dtype=np.float64)
    g = np.empty_like(q)
    for i in range(len(q)):
        e = np.zeros_like(q)
        e[i] = h
        g[i] = (f(q + e) - f(q - e)) / (2.0 * h)
    return g


# no-arbitrage -----------------------------------------------------------------

@dataclass
class WitnessReport:
    ok: bool
    outcome: object
    cost: float
    payout: float
    margin: float  # cost - payout for the reported outcome; >= -tol means no arbitrage

    def to_dict(self):
        return {"ok": self.ok, "outcome": self.outcome, "cost": self.cost,
                "payout": self.payout, "margin": self.margin}


def no_arbitrage_witness(market, q, r, tol: float = 1e-6) -> WitnessReport:
    """Find an outcome whose payout does not exceed the cost of ``r``.

    The candidate is the outcome minimizing ``rho(o) . r``: by enumeration when
    possible, otherwise from the payoff structure's closed form (sphere). If
    even that outcome pays more than the cost, the report has ``ok=False``.
    """
    from .payoffs import SpherePayoff

    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    try:
        outs = market.payoffs.enumerate()
        payouts = market.payoffs.payoff_matrix() @ r
        i = int(np.argmin(payouts))
        o, pay = outs[i], float(payouts[i])
    except EnumerationUnavailable:
        if not isinstance(market.payoffs, SpherePayoff):
            raise
        o = market.payoffs.worst_outcome(r)
        pay = float(market.payoffs.payoff(o) @ r)
    cost = market.cost(q + r) - market.cost(q)
    margin = cost - pay
    return WitnessReport(margin >= -tol, o, float(cost), pay, float(margin))


# GOM versus hull ---------------------------------------------------------------

@dataclass
class ContainmentProbe:
    n: int
    samples: int
    max_distance: float
    witness: list = field(default_factory=list)

    def to_dict(self):
        return {"n": self.n, "samples": self.samples, "max_distance": self.max_distance,
                "witness": self.witness}


def gom_containment_probe(n: int, samples: int = 200, seed: int = 0) -> ContainmentProbe:
    """Search GOM vertices for points outside the hull of the order matrices.

    Vertices are found by linear maximization in random directions; the
    largest hull distance found is reported (no claim is made either way).
    """
    from .payoffs import PairBetPayoff
    from .regions import GomRegion

    gom = GomRegion(n)
    H = HullHandle.from_payoffs(PairBetPayoff(n))
    rng = np.random.default_rng(seed)
    best, arg = 0.0, None
    seen = set()
    for _ in range(samples):
        v = gom.linear_maximize(rng.normal(size=gom.dimension))
        key = tuple(np.round(v, 9))
        if key in seen:
            continue
        seen.add(key)
        d = H.distance(v)
        if d > best:
            best, arg = d, v
    return ContainmentProbe(n, samples, best, [] if arg is None else np.round(arg, 12).tolist())
