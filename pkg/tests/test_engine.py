import math
import threading

import numpy as np
import pytest
from scipy.special import logsumexp

from convexmarket.conjugates import BarrierEntropy, NegEntropy, QuadraticR
from convexmarket.engine import (
    Market,
    band_market,
    lmsr_market,
    maximize_concave,
    pairbet_market,
    power_iteration,
    sphere_market,
    trimmed_simplex_market,
    txncost_market,
)
from convexmarket.errors import (
    BundleError,
    ConfigError,
    DepthUndefined,
    DimensionError,
    DomainError,
    SolverError,
    UndefinedGradient,
)
from convexmarket.ledger import drain_detector
from convexmarket.payoffs import CompletePayoff, SpherePayoff
from convexmarket.regions import BallRegion, BandRegion, SimplexRegion

E = math.e
X6 = np.array([1, 0, .5, .5, .5, 0, .5, .5, 0, 1, 1, .5, 1, .5, 0])


def quadratic_simplex_market(n=3, lam=1.0):
    reg = SimplexRegion(n)
    return Market(reg, QuadraticR(lam, 1.0 / n, reg), CompletePayoff(n))


MARKETS = {
    "lmsr3": lambda: lmsr_market(3),
    "sphere": lambda: sphere_market(1.0),
    "pairbet4": lambda: pairbet_market(4),
    "txncost3": lambda: txncost_market(3, 1.0, 0.5),
    "quad-simplex": quadratic_simplex_market,
}


def sample_q(m, rng, scale=2.0):
    q = rng.normal(0, scale, m.K)
    return np.abs(q) if m.positive_only else q


# cost / price -----------------------------------------------------------------

def test_cost_examples():
    assert lmsr_market(2).cost([0, 0]) == pytest.approx(math.log(2), abs=1e-12)
    assert sphere_market(1.0).cost([0, 0, 0]) == 0.0
    assert sphere_market(1.0).cost([3, 0, 0]) == pytest.approx(5.0, abs=1e-12)


def test_price_examples():
    np.testing.assert_allclose(sphere_market(1.0).price([1, 0, 0]), [1.5, 1, 1], atol=1e-12)
    np.testing.assert_allclose(lmsr_market(2).price([1, 0]), [E / (1 + E), 1 / (1 + E)], atol=1e-12)
    np.testing.assert_allclose(lmsr_market(4).price(np.zeros(4)), np.full(4, 0.25))
    np.testing.assert_allclose(sphere_market(2.0).price(np.zeros(3)), np.ones(3))


def test_lmsr_matches_independent_logsumexp(rng):
    for n in (2, 3, 6):
        for b in (0.5, 1.0, 3.0):
            m = lmsr_market(n, b)
            for _ in range(20):
                q = rng.normal(0, 5, n)
                assert m.cost(q) == pytest.approx(b * logsumexp(q / b), abs=1e-10)


def test_lmsr_overflow_safe():
    m = lmsr_market(3)
    assert m.cost([1000.0, 0.0, 0.0]) == pytest.approx(1000.0)
    np.testing.assert_allclose(m.price([1000.0, 0.0, 0.0]), [1, 0, 0])


def test_sphere_branches_agree_on_seam():
    m = sphere_market(1.0)
    u = np.array([0.6, 0.8, 0.0])
    lo, hi = m.solve(u * (2 - 1e-12)), m.solve(u * (2 + 1e-12))
    assert lo.value == pytest.approx(hi.value, abs=1e-10)
    np.testing.assert_allclose(lo.x, hi.x, atol=1e-10)


@pytest.mark.parametrize("name", MARKETS)
def test_price_matches_finite_difference(name, rng):
    m = MARKETS[name]()
    for _ in range(10):
        q = sample_q(m, rng)
        h = 1e-5
        fd = np.array([(m.cost(q + h * e) - m.cost(q - h * e)) / (2 * h) for e in np.eye(m.K)])
        np.testing.assert_allclose(fd, m.price(q), atol=1e-4)


@pytest.mark.parametrize("name", MARKETS)
def test_conjugate_consistency_and_membership(name, rng):
    m = MARKETS[name]()
    for _ in range(30):
        q = sample_q(m, rng)
        x = m.price(q)
        assert m.region.contains(x, 1e-7)
        assert m.cost(q) == pytest.approx(x @ q - m.conjugate.value(x), abs=2e-8)


@pytest.mark.parametrize("name", MARKETS)
def test_fast_path_agrees_with_generic_solver(name, rng):
    m = MARKETS[name]()
    for _ in range(5):
        q = sample_q(m, rng, 1.0)
        g = m.solve(q, method="generic")
        assert g.value == pytest.approx(m.cost(q), abs=1e-6)
        assert g.gap <= m.tol


@pytest.mark.parametrize("name", MARKETS)
def test_unique_maximizer_under_perturbation(name, rng):
    m = MARKETS[name]()
    for _ in range(10):
        q = sample_q(m, rng)
        x = m.price(q)
        d = rng.normal(size=m.K)
        d *= 1e-3 / np.linalg.norm(d)
        z = m.region.project(x + d)
        # any other feasible point has strictly lower objective
        if np.linalg.norm(z - x) > 1e-6:
            assert z @ q - m.conjugate.value(z) < m.cost(q)


def test_certified_pairbet_quotes():
    for n in (5, 8):
        m = pairbet_market(n)
        rng = np.random.default_rng(n)
        for _ in range(3):
            sol = m.solve(rng.normal(0, 1, m.K), certify=True)
            assert sol.gap <= 1e-8


def test_invalid_quantities():
    m = lmsr_market(3)
    with pytest.raises(DimensionError):
        m.cost([0, 0])
    with pytest.raises(DomainError):
        m.cost([np.nan, 0, 0])
    with pytest.raises(DomainError):
        m.price([np.inf, 0, 0])


def test_market_construction_errors():
    reg = SimplexRegion(3)
    with pytest.raises(ConfigError):
        Market(reg, NegEntropy(1.0, SimplexRegion(3)), CompletePayoff(3), mode="magic")
    with pytest.raises(ConfigError):
        Market(reg, NegEntropy(1.0, BandRegion(3, 0.5)), CompletePayoff(3))
    with pytest.raises(DimensionError):
        Market(reg, NegEntropy(1.0), CompletePayoff(4))
    # sphere payoffs are outside the simplex-shaped region
    with pytest.raises(ConfigError):
        Market(SimplexRegion(3), QuadraticR(1.0), SpherePayoff())


def test_kind_detection():
    assert lmsr_market(3).kind == "lmsr"
    assert sphere_market().kind == "sphere"
    assert txncost_market(2).kind == "txncost"
    assert pairbet_market(3).kind == "quadratic"
    assert band_market(3, 0.5, NegEntropy(1.0)).kind == "generic"


def test_solver_error_when_iterations_exhausted():
    m = band_market(3, 0.5, NegEntropy(1.0), max_iter=1)
    with pytest.raises(SolverError):
        m.cost([2.0, 0.0, -1.0])


def test_maximize_concave_direct():
    sol = maximize_concave([1.0, 0.0], NegEntropy(1.0), SimplexRegion(2), tol=1e-10)
    np.testing.assert_allclose(sol.x, [E / (1 + E), 1 / (1 + E)], atol=1e-6)
    assert sol.value == pytest.approx(math.log(1 + E), abs=1e-9)


def test_concurrent_evaluation_is_consistent(rng):
    m = pairbet_market(5)
    qs = [rng.normal(size=m.K) for _ in range(20)]
    expected = [m.cost(q) for q in qs]
    m._cache.clear()
    out = [None] * len(qs)

    def work(i):
        out[i] = m.cost(qs[i])

    threads = [threading.Thread(target=work, args=(i,)) for i in range(len(qs))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == expected


# trading ----------------------------------------------------------------------

def test_trade_cost_examples():
    assert lmsr_market(2).trade_cost([0, 0], [1, 0]) == pytest.approx(math.log((E + 1) / 2), abs=1e-12)
    assert lmsr_market(2).trade_cost([0, 0], [1, 0]) == pytest.approx(0.620115, abs=1e-6)
    assert sphere_market(1.0).trade_cost([0, 0, 0], [1, 0, 0]) == pytest.approx(1.25)
    for name, f in MARKETS.items():
        m = f()
        assert m.trade_cost(np.ones(m.K), np.zeros(m.K)) == 0.0


def test_spread_examples():
    assert sphere_market(1.0).bid_ask_spread(np.zeros(3), [1, 0, 0]) == pytest.approx(0.5)
    s = lmsr_market(2).bid_ask_spread([0, 0], [1, 0])
    assert s == pytest.approx(2 * math.log((E + 1) / 2) - 1, abs=1e-12)
    assert lmsr_market(3).bid_ask_spread(np.zeros(3), np.zeros(3)) == 0.0


@pytest.mark.parametrize("name", ["lmsr3", "sphere", "pairbet4", "quad-simplex"])
def test_spread_is_sum_of_divergences(name, rng):
    m = MARKETS[name]()
    for _ in range(20):
        q, r = rng.normal(0, 2, m.K), rng.normal(0, 1, m.K)
        s = m.bid_ask_spread(q, r)
        assert s >= -1e-12
        assert s == pytest.approx(m.cost_divergence(q + r, q) + m.cost_divergence(q - r, q), abs=1e-6)


@pytest.mark.parametrize("name", MARKETS)
def test_path_independence(name, rng):
    m = MARKETS[name]()
    for _ in range(30):
        q = sample_q(m, rng)
        r1, r2 = sample_q(m, rng, 1.0), sample_q(m, rng, 1.0)
        whole = m.trade_cost(q, r1 + r2)
        split = m.trade_cost(q, r1) + m.trade_cost(q + r1, r2)
        assert whole == pytest.approx(split, abs=3e-8)


def test_positive_only_market_rejects_short_bundles():
    m = txncost_market(3)
    with pytest.raises(BundleError):
        m.trade_cost(np.zeros(3), [1.0, -0.5, 0.0])
    with pytest.raises(BundleError):
        m.quote(np.zeros(3), [-1.0, 0.0, 0.0])
    with pytest.raises(BundleError):
        m.bid_ask_spread(np.zeros(3), [1.0, 0.0, 0.0])
    qt = m.quote(np.zeros(3), [1.0, 0.0, 0.0])
    assert qt.spread is None and qt.cost > 0


def test_quote_fields():
    m = lmsr_market(2)
    qt = m.quote([0.0, 0.0], [1.0, 0.0])
    assert qt.cost == pytest.approx(0.620115, abs=1e-6)
    np.testing.assert_allclose(qt.post_price, [0.731059, 0.268941], atol=1e-6)
    np.testing.assert_allclose(qt.pre_price, [0.5, 0.5])
    assert set(qt.to_dict()) >= {"bundle", "cost", "pre_price", "post_price", "spread"}


def test_settle_examples():
    assert lmsr_market(2).settle([0, 0], 1) == 0.0
    assert lmsr_market(2).settle([3, 1], 1) == 3.0
    assert sphere_market().settle([1, 1, 1], [1, 0, 0]) == pytest.approx(4.0)


def test_realized_loss_zero_without_trades():
    for name, f in MARKETS.items():
        m = f()
        o = m.payoffs.sample(np.random.default_rng(0), 1)[0]
        assert m.realized_loss(np.zeros(m.K), o) == pytest.approx(0.0, abs=1e-12)


# curvature --------------------------------------------------------------------

def test_depth_examples():
    assert sphere_market(1.0).depth([0.3, -0.2, 0.5]) == pytest.approx(2.0, abs=1e-8)
    assert sphere_market(3.0).depth([1.0, 0.0, 0.0]) == pytest.approx(6.0, abs=1e-8)
    assert lmsr_market(2).depth([0.0, 0.0]) == pytest.approx(2.0, abs=1e-8)
    assert quadratic_simplex_market(3, 0.7).depth([0.1, 0.0, -0.1]) == pytest.approx(1.4, abs=1e-4)


def test_depth_undefined_on_sphere_seam():
    m = sphere_market(1.0)
    with pytest.raises(DepthUndefined):
        m.depth([2.0, 0.0, 0.0])
    with pytest.raises(DepthUndefined):
        m.depth([0.0, 2.0 + 5e-7, 0.0])
    assert m.depth([0.0, 4.0, 0.0]) == pytest.approx(4.0)


def test_depth_undefined_at_txncost_kink():
    m = txncost_market(2, 1.0, 0.5, 0.1)
    # slope at S = 1 vanishes when b log sum e^(q/b) = b + gamma / c
    L = 1.0 + 0.1 / 0.5
    q = np.full(2, L - math.log(2))
    with pytest.raises(DepthUndefined):
        m.depth(q)


def test_sphere_hessian_correspondence(rng):
    # u' H_C u * u' H_R u = |u|^4 inside the ball
    m = sphere_market(1.5)
    for _ in range(20):
        q = rng.normal(size=3)
        q *= rng.uniform(0.1, 2.9) / np.linalg.norm(q)
        x = m.price(q)
        z = m.region.project(rng.normal(1, 1, 3))
        u = z - x
        h = 1e-4
        Hu = (m.price(q + h * u) - m.price(q - h * u)) / (2 * h)
        lhs = (u @ Hu) * (u @ m.conjugate.hessian(x) @ u)
        assert lhs == pytest.approx((u @ u) ** 2, rel=1e-4)


def test_txncost_hessian_matches_finite_differences(rng):
    m = txncost_market(3, 1.0, 0.5)
    for _ in range(10):
        q = np.abs(rng.normal(0, 2, 3)) + 1.0
        H = m.hessian(q)
        h = 1e-5
        fd = np.column_stack([(m.price(q + h * e) - m.price(q - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(H, fd, atol=1e-4)


def test_power_iteration():
    A = np.diag([3.0, 1.0, 0.5])
    assert power_iteration(A) == pytest.approx(3.0, rel=1e-8)
    assert power_iteration(np.zeros((2, 2))) == 0.0


def test_worst_case_depth():
    assert lmsr_market(3, 2.0).worst_case_depth() == (4.0, True)
    assert sphere_market(1.5).worst_case_depth() == (3.0, True)
    assert pairbet_market(4, 2.0).worst_case_depth() == (4.0, False)


# bounds -----------------------------------------------------------------------

def test_worst_loss_bound_examples(rng):
    m = sphere_market(1.0)
    for u in SpherePayoff().sample(rng, 10):
        lb = m.worst_loss_bound(np.zeros(3), u)
        assert lb.bound == pytest.approx(0.0, abs=1e-12)
        assert lb.apriori == pytest.approx(1.0, abs=1e-12)
    assert lmsr_market(3).apriori_loss_bound() == pytest.approx(math.log(3), abs=1e-12)


def test_worst_loss_bound_dominates_realized_loss(rng):
    for name in ("lmsr3", "sphere", "pairbet4", "txncost3"):
        m = MARKETS[name]()
        for _ in range(20):
            q = sample_q(m, rng)
            o = m.payoffs.sample(rng, 1)[0]
            lb = m.worst_loss_bound(q, o)
            assert m.realized_loss(q, o) <= lb.bound + 1e-6
            assert lb.bound <= lb.apriori + 1e-9


def test_loss_bound_boundary_flag():
    m = lmsr_market(2)
    lb = m.worst_loss_bound([800.0, 0.0], 2)
    assert not lb.divergence_exact
    assert m.realized_loss([800.0, 0.0], 2) <= lb.bound + 1e-9


def test_loss_bound_rejects_payoff_outside_region():
    m = trimmed_simplex_market()
    with pytest.raises(DomainError):
        m.worst_loss_bound(np.zeros(2), 1)


def test_arbitrage_inside_hull_is_zero(rng):
    for name in ("lmsr3", "pairbet4"):
        m = MARKETS[name]()
        q = rng.normal(size=m.K)
        assert m.arbitrage_profit_bound(q) == 0.0
        a = m.arbitrage_bundle(q)
        assert a.status == "in-hull" and not np.any(a.bundle)


def test_band_arbitrage_example():
    m = band_market(2, 1.0, QuadraticR(1.0, 0.0))
    q = np.array([1.5, 1.5])
    np.testing.assert_allclose(m.price(q), [0.75, 0.75])
    assert m.arbitrage_profit_bound(q) == pytest.approx(0.125, abs=1e-9)
    a = m.arbitrage_bundle(q)
    np.testing.assert_allclose(a.target, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(m.price(q + a.bundle), [0.5, 0.5], atol=1e-12)
    for o in (1, 2):
        assert m.payoffs.payoff(o) @ a.bundle - m.trade_cost(q, a.bundle) >= 0.125 - 1e-6
    assert a.guaranteed_profit >= 0.125 - 1e-6


def test_pairbet_arbitrage_at_fractional_gom_vertex():
    m = pairbet_market(6)
    q = 2.0 * (X6 - 0.5)
    np.testing.assert_allclose(m.price(q), X6, atol=1e-12)
    bound = m.arbitrage_profit_bound(q)
    assert bound == pytest.approx(0.150756**2, abs=1e-6)
    a = m.arbitrage_bundle(q)
    assert a.guaranteed_profit >= bound - 1e-6
    assert m.hull().distance(m.price(q + a.bundle)) <= 1e-7


def test_entropy_arbitrage_uses_divergence_projection():
    reg = BandRegion(3, 0.5)
    m = Market(reg, NegEntropy(1.0, reg), CompletePayoff(3), mode="relaxed")
    q = np.array([0.5, 0.3, 0.2])
    x0 = m.price(q)
    assert x0.sum() > 1.0
    a = m.arbitrage_bundle(q)
    # KL projection onto the simplex is normalization
    np.testing.assert_allclose(a.target, x0 / x0.sum(), atol=1e-6)
    assert a.guaranteed_profit >= a.bound - 1e-6 > 0


def test_arbitrage_undefined_gradient_on_boundary():
    reg = BandRegion(2, 0.5)
    m = Market(reg, NegEntropy(1.0, reg), CompletePayoff(2), mode="relaxed")
    with pytest.raises(UndefinedGradient):
        m.arbitrage_profit_bound([800.0, 0.0])


def test_arbitrage_bundle_flags_untradable_in_positive_only_market():
    reg = BandRegion(2, 0.5)
    m = Market(reg, BarrierEntropy(1.0, 0.1, 0.5, reg), CompletePayoff(2), mode="relaxed",
               positive_only=True)
    q = np.array([3.0, 3.0])
    a = m.arbitrage_bundle(q)
    assert a.bound > 0 and not a.tradable


# drain ------------------------------------------------------------------------

def test_drain_step_fixed_point():
    # on the sphere seam the price already equals the payoff vector 1 + u
    s = sphere_market(1.0)
    u = np.array([1.0, 0.0, 0.0])
    q = 2.0 * u
    np.testing.assert_allclose(s.drain_step(q, u, 0.1), q, atol=1e-12)
    with pytest.raises(ValueError):
        s.drain_step(q, u, 0.0)


def test_trimmed_simplex_drain_grows_linearly():
    m = trimmed_simplex_market()
    d = drain_detector(m, 1, steps=1000, eps=0.01)
    assert d["k"] == pytest.approx(0.2 * math.sqrt(2), abs=1e-12)
    assert d["min_increase"] >= 0.9 * 0.01 * d["k"] ** 2
    assert d["total_loss"] >= 0.8


def test_full_hull_drain_respects_bound():
    m = lmsr_market(3)
    q = np.zeros(3)
    for _ in range(500):
        q = m.drain_step(q, 1, 0.05)
        assert m.realized_loss(q, 1) <= m.worst_loss_bound(q, 1).bound + 1e-9


def test_txncost_construction_validates_gamma():
    with pytest.raises(ConfigError):
        txncost_market(6, 1.0, 0.5, gamma=0.01)
    m = txncost_market(2, 1.0, 0.5, 0.1)
    np.testing.assert_allclose(m.price(np.zeros(2)), [0.5, 0.5], atol=1e-12)
    assert m.positive_only


def test_txncost_price_sum_in_band(rng):
    m = txncost_market(4, 1.0, 0.5)
    q = np.zeros(4)
    prev = 1.0
    for _ in range(200):
        q = q + np.abs(rng.normal(0, 0.3, 4))
        s = m.price(q).sum()
        assert 1.0 - 1e-12 <= s <= 1.5
        assert s >= prev - 1e-12
        prev = s


def test_hull_objects():
    assert lmsr_market(3).hull() == SimplexRegion(3)
    assert sphere_market().hull() == BallRegion(3)
    assert len(pairbet_market(4).hull().generators) == 24


@pytest.mark.parametrize("name", ["lmsr3", "pairbet4", "txncost3", "quad-simplex"])
def test_expressiveness_belief_targets(name, rng):
    # every expected payoff under a belief is reachable: price(grad R(x*)) = x*
    m = MARKETS[name]()
    N = len(m.payoffs.enumerate())
    for _ in range(100):
        x_star = m.payoffs.expected_payoff(rng.dirichlet(np.ones(N)))
        np.testing.assert_allclose(m.price(m.conjugate.gradient(x_star)), x_star, atol=1e-6)
