"""Cost-function market maker: C(q) = sup_{x in region} x . q - R(x).

A :class:`Market` bundles a price region, a conjugate R and a payoff
structure. Prices are the maximizer ``x*``; trade costs are differences of C.
Several markets have closed forms (LMSR, sphere, the transaction-cost band);
quadratic conjugates reduce to a Euclidean projection; anything else goes
through a projected-gradient solver with a Frank-Wolfe duality-gap certificate.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, softmax

from .conjugates import BarrierEntropy, NegEntropy, QuadraticR
from .errors import (
    BundleError,
    ConfigError,
    DepthUndefined,
    DimensionError,
    DomainError,
    EnumerationUnavailable,
    SolverError,
    UndefinedGradient,
)
from .oracle import HullHandle
from .payoffs import CompletePayoff, PairBetPayoff, SpherePayoff
from .regions import BallRegion, BandRegion, GomRegion, HalfspaceTrimmedSimplex, SimplexRegion

MODES = ("hull", "relaxed", "unchecked")
KINDS = ("lmsr", "sphere", "txncost", "quadratic", "generic")

SEAM_TOL = 1e-6
FD_HESSIAN_STEP = 1e-4


@dataclass
class Solution:
    x: np.ndarray
    value: float
    gap: float = 0.0
    iterations: int = 0
    method: str = "closed"


@dataclass
class Quote:
    bundle: np.ndarray
    cost: float
    pre_price: np.ndarray
    post_price: np.ndarray
    spread: float | None = None
    constant: float = 0.0

    def to_dict(self):
        return {
            "bundle": self.bundle.tolist(),
            "cost": self.cost,
            "pre_price": self.pre_price.tolist(),
            "post_price": self.post_price.tolist(),
            "spread": self.spread,
            "constant": self.constant,
        }


@dataclass
class LossBound:
    bound: float
    apriori: float
    r_value: float
    min_hull_r: float
    divergence: float
    divergence_exact: bool = True


@dataclass
class Arbitrage:
    bundle: np.ndarray
    target: np.ndarray
    bound: float
    guaranteed_profit: float | None
    status: str  # "in-hull", "ok", "boundary", "unverified"
    tradable: bool = True
    details: dict = field(default_factory=dict)


def power_iteration(H: np.ndarray, tol: float = 1e-8, max_iter: int = 20_000) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite matrix."""
    n = H.shape[0]
    v = np.random.default_rng(12345).normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = H @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return float(v @ H @ v)
        lam = lam_new
    raise SolverError("power iteration did not converge")


def maximize_concave(q, R, region, tol: float = 1e-8, max_iter: int = 100_000, x0=None) -> Solution:
    """Maximize ``x . q - R(x)`` over ``region`` by projected gradient ascent.

    Steps use Barzilai-Borwein lengths with Armijo backtracking along the
    projection arc. Termination is certified by the Frank-Wolfe gap
    ``max_s grad . (s - x)``, which upper-bounds the suboptimality.
    """
    q = np.asarray(q, dtype=np.float64)

    def f(x):
        try:
            return float(x @ q - R.value(x))
        except DomainError:
            return -math.inf

    def grad(x):
        return q - R.gradient(x, strict=False)

    def fw_gap(x, g):
        return float(g @ (region.linear_maximize(g) - x))

    x = region.project(region.interior_point() if x0 is None else np.asarray(x0, dtype=np.float64))
    fx, g = f(x), grad(x)
    if not math.isfinite(fx):
        x = region.interior_point()
        fx, g = f(x), grad(x)
    step = 1.0 / max(R.modulus, 1e-12)
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        t = step
        while True:
            xn = region.project(x + t * g)
            fn = f(xn)
            # tolerate rounding in f so that progress below float resolution is accepted
            if fn >= fx + 1e-4 * float(g @ (xn - x)) - 1e-15 * (1.0 + abs(fx)):
                break
            t *= 0.5
            if t < 1e-20:
                xn, fn = x, fx
                break
        s = xn - x
        gn = grad(xn)
        y = gn - g
        sy = float(s @ y)
        step = float(s @ s) / -sy if sy < 0 else 2.0 * t
        step = min(max(step, 1e-12), 1e12)
        x, fx, g = xn, fn, gn
        small = np.linalg.norm(s) <= 1e-9 * t or np.linalg.norm(s) == 0.0
        if small or it % 25 == 0:
            gap = fw_gap(x, g)
            if gap <= tol:
                break
            if np.linalg.norm(s) == 0.0 and t < 1e-20:
                break
    else:
        raise SolverError(f"projected gradient did not reach gap {tol} (gap {gap:.3g})")
    if gap > tol:
        raise SolverError(f"projected gradient stalled with gap {gap:.3g}")
    return Solution(x, fx, gap, it, "generic")


class Market:
    """A complex cost-function market over ``region`` with conjugate ``conjugate``."""

    def __init__(self, region, conjugate, payoffs, *, mode="hull", positive_only=False,
                 kind=None, tol=1e-8, max_iter=100_000, name=None, cache_size=256):
        if region.dimension != payoffs.K:
            raise DimensionError("region and payoff dimensions differ")
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        dom = getattr(conjugate, "domain", None)
        if dom is not None and dom != region:
            raise ConfigError("the conjugate's domain must be the price region")
        self.region = region
        self.conjugate = conjugate
        self.payoffs = payoffs
        self.mode = mode
        self.positive_only = positive_only
        self.tol = tol
        self.max_iter = max_iter
        self.name = name
        self.kind = kind or self._detect_kind()
        if self.kind not in KINDS:
            raise ConfigError(f"unknown market kind {self.kind!r}")
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()
        self._memo: dict = {}
        if mode in ("hull", "relaxed"):
            self._check_payoffs_in_region()

    def _detect_kind(self):
        R, reg = self.conjugate, self.region
        if isinstance(R, NegEntropy) and isinstance(reg, SimplexRegion):
            return "lmsr"
        if (isinstance(R, QuadraticR) and isinstance(reg, BallRegion)
                and np.allclose(R.center(reg.dimension), 1.0)):
            return "sphere"
        if isinstance(R, BarrierEntropy) and isinstance(reg, BandRegion) and R.c == reg.c:
            return "txncost"
        if isinstance(R, QuadraticR):
            return "quadratic"
        return "generic"

    def _check_payoffs_in_region(self):
        try:
            P = self.payoffs.payoff_matrix()
        except EnumerationUnavailable:
            rng = np.random.default_rng(0)
            P = np.array([self.payoffs.payoff(o) for o in self.payoffs.sample(rng, 256)])
        if not self.region.contains_all(P, 1e-9):
            raise ConfigError("some payoff vectors lie outside the price region")

    @property
    def K(self) -> int:
        return self.region.dimension

    def _vec(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.K,):
            raise DimensionError(f"expected a vector of length {self.K}, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise DomainError("quantities must be finite")
        return q

    # solving --------------------------------------------------------------

    def solve(self, q, method: str | None = None, certify: bool = False) -> Solution:
        """Maximizer and value of ``x . q - R(x)``.

        ``method="generic"`` forces the projected-gradient solver (used for
        cross-checks). ``certify=True`` computes the duality gap on fast paths.
        """
        q = self._vec(q)
        if method == "generic":
            return maximize_concave(q, self.conjugate, self.region, self.tol, self.max_iter)
        key = (q.tobytes(), certify)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        sol = self._solve_fast(q)
        if certify and sol.method != "generic":
            g = q - self.conjugate.gradient(sol.x, strict=False)
            sol.gap = float(g @ (self.region.linear_maximize(g) - sol.x))
        with self._lock:
            self._cache[key] = sol
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return sol

    def _solve_fast(self, q) -> Solution:
        R = self.conjugate
        if self.kind == "lmsr":
            z = q / R.b
            return Solution(softmax(z), float(R.b * logsumexp(z)))
        if self.kind == "sphere":
            lam = R.lam
            nq = float(np.linalg.norm(q))
            if nq <= 2.0 * lam:
                return Solution(q / (2.0 * lam) + 1.0, nq * nq / (4.0 * lam) + float(q.sum()))
            return Solution(1.0 + q / nq, nq + float(q.sum()) - lam)
        if self.kind == "txncost":
            x, value, *_ = self._txn_solve(q)
            return Solution(x, value)
        if self.kind == "quadratic":
            x = self.region.project(R.unconstrained_argmax(q))
            d = x - R.center(self.K)
            return Solution(x, float(x @ q - R.lam * d @ d), method="projection")
        return maximize_concave(q, R, self.region, self.tol, self.max_iter)

    def _txn_solve(self, q):
        """Exact solve for the band market.

        The maximizer is ``S * softmax(q / b)`` for a scalar price sum ``S``, so
        only a one-dimensional concave problem in ``S`` remains. It is solved in
        the barrier slack ``t = 1 + c - S`` to keep precision near ``S -> 1 + c``.
        """
        R = self.conjugate
        b, g, c = R.b, R.gamma, R.c
        z = q / b
        L = b * float(logsumexp(z))
        p = softmax(z)
        d1 = L - b - g / c  # slope at S = 1

        def slope(t):
            return L - b * math.log1p(c - t) - b - g / t

        if d1 <= 0.0:
            t = c
        else:
            lo = min(c, 0.5 * g / max(L - b, 1e-300))
            while slope(lo) >= 0.0:
                lo *= 0.5
            t = brentq(slope, lo, c, xtol=1e-300, rtol=1e-15, maxiter=500) if slope(c) > 0 else c
        S = 1.0 + c - t
        value = S * L - b * S * math.log(S) + g * math.log(t)
        return S * p, value, S, t, p, d1

    def cost(self, q, method=None) -> float:
        return self.solve(q, method).value

    def price(self, q, method=None) -> np.ndarray:
        return self.solve(q, method).x.copy()

    # trading --------------------------------------------------------------

    def check_bundle(self, r) -> np.ndarray:
        r = self._vec(r)
        if self.positive_only and np.any(r < 0):
            raise BundleError("this market only sells nonnegative bundles")
        return r

    def trade_cost(self, q, r) -> float:
        q = self._vec(q)
        r = self.check_bundle(r)
        if not np.any(r):
            return 0.0
        return self.cost(q + r) - self.cost(q)

    def bid_ask_spread(self, q, r) -> float:
        q = self._vec(q)
        r = self.check_bundle(r)
        if not np.any(r):
            return 0.0
        if self.positive_only:
            # the bid side sells -r, which this market does not allow
            raise BundleError("no bid side in a market that only sells nonnegative bundles")
        return self.cost(q + r) - 2.0 * self.cost(q) + self.cost(q - r)

    def cost_divergence(self, q_new, q) -> float:
        """``D_C(q_new, q) = C(q_new) - C(q) - grad C(q) . (q_new - q)``."""
        q_new, q = self._vec(q_new), self._vec(q)
        return self.cost(q_new) - self.cost(q) - float(self.price(q) @ (q_new - q))

    def quote(self, q, r, with_spread: bool = True) -> Quote:
        q = self._vec(q)
        r = self.check_bundle(r)
        cost = self.trade_cost(q, r)
        spread = None
        if with_spread and not self.positive_only:
            spread = self.bid_ask_spread(q, r)
        return Quote(r.copy(), cost, self.price(q), self.price(q + r), spread)

    def settle(self, q, o) -> float:
        """Total payout ``rho(o) . q`` owed to traders."""
        return float(self.payoffs.payoff(o) @ self._vec(q))

    def realized_loss(self, q, o) -> float:
        q = self._vec(q)
        return self.settle(q, o) - (self.cost(q) - self.cost(np.zeros(self.K)))

    def drain_step(self, q, o, eps: float) -> np.ndarray:
        """``q + eps * (rho(o) - price(q))``: the loss-increasing step toward outcome ``o``."""
        if not eps > 0:
            raise ValueError("step size must be positive")
        q = self._vec(q)
        return q + eps * (self.payoffs.payoff(o) - self.price(q))

    # curvature ------------------------------------------------------------

    def hessian(self, q) -> np.ndarray:
        """Hessian of C; analytic where available, else central differences of the price."""
        q = self._vec(q)
        R = self.conjugate
        if self.kind == "lmsr":
            p = softmax(q / R.b)
            return (np.diag(p) - np.outer(p, p)) / R.b
        if self.kind == "sphere":
            nq = float(np.linalg.norm(q))
            if abs(nq - 2.0 * R.lam) < SEAM_TOL:
                raise DepthUndefined("C is not twice differentiable on the sphere seam")
            if nq < 2.0 * R.lam:
                return np.eye(self.K) / (2.0 * R.lam)
            u = q / nq
            return (np.eye(self.K) - np.outer(u, u)) / nq
        if self.kind == "txncost":
            _, _, S, t, p, d1 = self._txn_solve(q)
            if abs(d1) < 1e-9:
                raise DepthUndefined("price sum sits exactly at the kink S = 1")
            H = (np.diag(p) - np.outer(p, p)) / R.b
            if S > 1.0:
                H = S * H + np.outer(p, p) / (R.b / S + R.gamma / t**2)
            return H
        h = FD_HESSIAN_STEP
        H = np.empty((self.K, self.K))
        for j in range(self.K):
            e = np.zeros(self.K)
            e[j] = h
            H[:, j] = (self.price(q + e) - self.price(q - e)) / (2.0 * h)
        return 0.5 * (H + H.T)

    def depth(self, q) -> float:
        """``1 / lambda_max`` of the Hessian of C at ``q``."""
        lam = power_iteration(self.hessian(q))
        return math.inf if lam <= 0.0 else 1.0 / lam

    def worst_case_depth(self) -> tuple[float, bool]:
        """A lower bound on depth over all ``q``, and whether it is attained."""
        R = self.conjugate
        if self.kind == "lmsr":
            return 2.0 * R.b, True
        if self.kind == "sphere":
            return 2.0 * R.lam, True
        if isinstance(R, QuadraticR):
            # Euclidean projection is nonexpansive
            return 2.0 * R.lam, False
        if self.kind == "txncost":
            return R.b / (1.0 + R.c), False
        return R.modulus, False

    # bounds ---------------------------------------------------------------

    def hull(self):
        """The convex hull of all payoff vectors, as a region-like object."""
        if "hull" not in self._memo:
            if isinstance(self.payoffs, CompletePayoff):
                self._memo["hull"] = SimplexRegion(self.payoffs.n)
            elif isinstance(self.payoffs, SpherePayoff):
                self._memo["hull"] = BallRegion(self.payoffs.dim)
            else:
                self._memo["hull"] = HullHandle.from_payoffs(self.payoffs)
        return self._memo["hull"]

    def min_hull_r(self) -> float:
        """``min over the payoff hull of R``."""
        if "min_hull_r" in self._memo:
            return self._memo["min_hull_r"]
        R = self.conjugate
        if self.kind == "lmsr":
            v = -R.b * math.log(self.K)
        elif self.kind == "sphere":
            v = 0.0
        elif self.kind == "txncost":
            v = -R.b * math.log(self.K) - R.gamma * math.log(R.c)
        elif isinstance(R, QuadraticR):
            m = R.center(self.K)
            d = self.hull().project(m) - m
            v = R.lam * float(d @ d)
        else:
            v = -maximize_concave(np.zeros(self.K), R, self.hull(), self.tol, self.max_iter).value
        self._memo["min_hull_r"] = v
        return v

    def max_payoff_r(self) -> float:
        """``sup over payoff vectors of R`` (sampled for infinite outcome spaces)."""
        if "max_payoff_r" not in self._memo:
            try:
                P = self.payoffs.payoff_matrix()
            except EnumerationUnavailable:
                rng = np.random.default_rng(0)
                P = [self.payoffs.payoff(o) for o in self.payoffs.sample(rng, 256)]
            self._memo["max_payoff_r"] = max(self.conjugate.value(p) for p in P)
        return self._memo["max_payoff_r"]

    def apriori_loss_bound(self) -> float:
        return self.max_payoff_r() - self.min_hull_r()

    def worst_loss_bound(self, q, o) -> LossBound:
        """``R(rho(o)) - min_H R - D_R(rho(o), price(q))`` and the a-priori bound."""
        q = self._vec(q)
        rho = self.payoffs.payoff(o)
        if not self.region.contains(rho, 1e-9):
            raise DomainError("payoff vector lies outside the price region; the bound does not apply")
        x = self.price(q)
        rv = self.conjugate.value(rho)
        mh = self.min_hull_r()
        try:
            d, exact = self.conjugate.bregman(rho, x), True
        except UndefinedGradient:
            # price underflowed to the boundary; dropping D_R >= 0 keeps a valid bound
            d, exact = 0.0, False
        return LossBound(rv - mh - d, self.apriori_loss_bound(), rv, mh, d, exact)

    def _arbitrage_target(self, x0):
        R = self.conjugate
        H = self.hull()
        if isinstance(R, QuadraticR):
            return H.project(x0)
        # min_x D_R(x, x0) over H  <=>  max_x x . grad R(x0) - R(x)
        return maximize_concave(R.gradient(x0), R, H, self.tol, self.max_iter).x

    def arbitrage_profit_bound(self, q) -> float:
        """``min over the payoff hull of D_R(x, price(q))``."""
        q = self._vec(q)
        x0 = self.price(q)
        R = self.conjugate
        R.gradient(x0)  # raises UndefinedGradient on the boundary
        if self._in_hull(x0):
            return 0.0
        return max(0.0, R.bregman(self._arbitrage_target(x0), x0))

    def _in_hull(self, x, tol=1e-9) -> bool:
        H = self.hull()
        if isinstance(H, HullHandle):
            return H.distance(x) <= tol
        return H.contains(x, tol)

    def arbitrage_bundle(self, q) -> Arbitrage:
        """Bundle moving the price to the divergence projection onto the payoff hull.

        Its guaranteed profit (worst case over enumerated outcomes) is at least
        :meth:`arbitrage_profit_bound`.
        """
        q = self._vec(q)
        x0 = self.price(q)
        R = self.conjugate
        if self._in_hull(x0):
            return Arbitrage(np.zeros(self.K), x0, 0.0, 0.0, "in-hull")
        bound = self.arbitrage_profit_bound(q)
        target = self._arbitrage_target(x0)
        status = "ok"
        try:
            gt = R.gradient(target)
        except UndefinedGradient:
            gt = R.gradient(target, strict=False)
            status = "boundary"
        r = gt - q
        cost = self.cost(q + r) - self.cost(q)
        try:
            payouts = self.payoffs.payoff_matrix() @ r
            profit = float(payouts.min() - cost)
        except EnumerationUnavailable:
            profit, status = None, "unverified"
        tradable = not (self.positive_only and np.any(r < 0))
        return Arbitrage(r, target, bound, profit, status, tradable, {"cost": cost, "price": x0})


# factories ------------------------------------------------------------------

def lmsr_market(n: int, b: float = 1.0, **kw) -> Market:
    reg = SimplexRegion(n)
    return Market(reg, NegEntropy(b, reg), CompletePayoff(n), mode="hull", name="lmsr", **kw)


def sphere_market(lam: float = 1.0, dim: int = 3, **kw) -> Market:
    reg = BallRegion(dim)
    return Market(reg, QuadraticR(lam, 1.0, reg), SpherePayoff(dim), mode="hull", name="sphere", **kw)


def pairbet_market(n: int, lam: float = 1.0, centre: float = 0.5, **kw) -> Market:
    reg = GomRegion(n)
    return Market(reg, QuadraticR(lam, centre, reg), PairBetPayoff(n), mode="relaxed",
                  name="pairbet", **kw)


def txncost_market(n: int, b: float = 1.0, c: float = 0.5, gamma: float | None = None, **kw) -> Market:
    if gamma is None:
        gamma = BarrierEntropy.default_gamma(n, b, c)
    if gamma < BarrierEntropy.min_gamma(n, b, c):
        raise ConfigError(
            f"gamma={gamma} < c*b*(log n - 1) = {BarrierEntropy.min_gamma(n, b, c)}: "
            "the initial price would leave the simplex"
        )
    reg = BandRegion(n, c)
    m = Market(reg, BarrierEntropy(b, gamma, c, reg), CompletePayoff(n), mode="relaxed",
               positive_only=True, name="txncost", **kw)
    x0 = m.price(np.zeros(n))
    if abs(x0.sum() - 1.0) > 1e-9:
        raise ConfigError("initial price is not on the simplex")
    return m


def band_market(n: int, c: float, conjugate, positive_only: bool = False, **kw) -> Market:
    reg = BandRegion(n, c)
    if getattr(conjugate, "domain", None) is None:
        conjugate = _with_domain(conjugate, reg)
    return Market(reg, conjugate, CompletePayoff(n), mode="relaxed", positive_only=positive_only,
                  name="band", **kw)


def trimmed_simplex_market(n: int = 2, halfspaces=(((1.0, 0.0), 0.8),), lam: float = 1.0,
                           centre=None, **kw) -> Market:
    """A market whose price region excludes some payoff vectors (unbounded-loss fixture)."""
    reg = HalfspaceTrimmedSimplex(n, tuple(h[0] for h in halfspaces), tuple(h[1] for h in halfspaces))
    m = np.full(n, 1.0 / n) if centre is None else centre
    return Market(reg, QuadraticR(lam, m, reg), CompletePayoff(n), mode="unchecked",
                  name="trimmed", **kw)


def _with_domain(R, region):
    d = dict(R.__dict__)
    d["domain"] = region
    return type(R)(**d)
