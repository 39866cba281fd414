"""Stateful market operation: configs, trade log, cash accounting, settlement, persistence.

States and configs are JSON documents. Floats are written with Python's
shortest round-trip representation, so load(save(s)) is bit-identical and a
replay of the log reproduces the final state exactly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from .conjugates import conjugate_from_dict
from .errors import ConfigError, DimensionError, DomainError, EnumerationUnavailable, SettlementError
from .oracle import HullHandle, finite_diff_gradient, gom_containment_probe, no_arbitrage_witness
from .payoffs import PairBetPayoff, payoffs_from_dict
from .regions import GomRegion, region_from_dict

KINDS = ("lmsr", "sphere", "pairbet", "txncost", "custom")
STATE_VERSION = 1


@dataclass(frozen=True)
class MarketConfig:
    kind: str
    params: dict = field(default_factory=dict)
    positive_only: bool = False
    tol: float = 1e-8
    max_iter: int = 100_000

    @classmethod
    def from_dict(cls, d: dict) -> "MarketConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
        solver = d.get("solver", {}) or {}
        params = {k: v for k, v in d.items() if k not in ("kind", "solver", "positive_only")}
        pos = bool(d.get("positive_only", False))
        if kind == "txncost":
            pos = True
        cfg = cls(kind, params, pos, float(solver.get("tol", 1e-8)), int(solver.get("max_iter", 100_000)))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = {"kind": self.kind, **self.params, "positive_only": self.positive_only,
             "solver": {"tol": self.tol, "max_iter": self.max_iter}}
        return d

    def _num(self, name, default=None, positive=True):
        v = self.params.get(name, default)
        if v is None:
            return None
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {name!r} must be a number") from None
        if positive and not v > 0:
            raise ConfigError(f"parameter {name!r} must be positive")
        return v

    def _int(self, name, lo):
        v = self.params.get(name)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            raise ConfigError(f"parameter {name!r} must be an integer >= {lo}")
        return v

    def validate(self):
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("solver tolerance and iteration cap must be positive")
        if self.kind == "lmsr":
            self._int("n", 2), self._num("b", 1.0)
        elif self.kind == "sphere":
            self._num("lam", 1.0)
        elif self.kind == "pairbet":
            self._int("n", 2), self._num("lam", 1.0)
        elif self.kind == "txncost":
            self._int("n", 2), self._num("b", 1.0), self._num("c", 0.5), self._num("gamma", None)
        elif self.kind == "custom":
            for key in ("region", "conjugate", "payoffs"):
                if not isinstance(self.params.get(key), dict):
                    raise ConfigError(f"custom market needs a {key!r} object")

    def build(self) -> eng.Market:
        kw = {"tol": self.tol, "max_iter": self.max_iter}
        p = self.params
        try:
            if self.kind == "lmsr":
                return eng.lmsr_market(p["n"], self._num("b", 1.0), **kw)
            if self.kind == "sphere":
                return eng.sphere_market(self._num("lam", 1.0), **kw)
            if self.kind == "pairbet":
                return eng.pairbet_market(p["n"], self._num("lam", 1.0), self._num("centre", 0.5, False), **kw)
            if self.kind == "txncost":
                return eng.txncost_market(p["n"], self._num("b", 1.0), self._num("c", 0.5),
                                          self._num("gamma", None), **kw)
            region = region_from_dict(p["region"])
            conj = conjugate_from_dict(p["conjugate"], region)
            pay = payoffs_from_dict(p["payoffs"])
            return eng.Market(region, conj, pay, mode=p.get("mode", "relaxed"),
                              positive_only=self.positive_only, name="custom", **kw)
        except (KeyError, TypeError, ValueError, DimensionError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid market parameters: {exc}") from exc


@dataclass
class TradeRecord:
    seq: int
    bundle: list
    cost: float
    price: list
    constant: float = 0.0

    def to_dict(self):
        return {"seq": self.seq, "bundle": self.bundle, "constant": self.constant,
                "cost": self.cost, "price": self.price}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["seq"]), [float(v) for v in d["bundle"]], float(d["cost"]),
                   [float(v) for v in d["price"]], float(d.get("constant", 0.0)))


@dataclass
class MarketState:
    config: MarketConfig
    q: np.ndarray
    collected: float = 0.0
    offset: float = 0.0  # riskless part of folded ordered-pair bundles
    log: list = field(default_factory=list)
    settled: dict | None = None

    @property
    def seq(self) -> int:
        return self.log[-1].seq if self.log else 0

    def copy(self) -> "MarketState":
        return MarketState(self.config, self.q.copy(), self.collected, self.offset,
                           list(self.log), copy.deepcopy(self.settled))

    def to_dict(self) -> dict:
        return {
            "version": STATE_VERSION,
            "config": self.config.to_dict(),
            "q": self.q.tolist(),
            "collected": self.collected,
            "offset": self.offset,
            "log": [t.to_dict() for t in self.log],
            "settled": self.settled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarketState":
        if d.get("version") != STATE_VERSION:
            raise ConfigError("unsupported state document version")
        cfg = MarketConfig.from_dict(d["config"])
        return cls(cfg, np.asarray(d["q"], dtype=np.float64), float(d["collected"]),
                   float(d.get("offset", 0.0)), [TradeRecord.from_dict(t) for t in d["log"]],
                   d.get("settled"))


_MARKETS: dict = {}


def market_for(config: MarketConfig) -> eng.Market:
    """Build (and memoize) the market described by ``config``."""
    key = json.dumps(config.to_dict(), sort_keys=True)
    if key not in _MARKETS:
        _MARKETS[key] = config.build()
    return _MARKETS[key]


def init(config: MarketConfig) -> tuple[MarketState, np.ndarray]:
    """Fresh state with ``q = 0``; returns the state and the initial price."""
    m = market_for(config)
    q0 = np.zeros(m.K)
    x0 = m.price(q0)
    if m.mode == "relaxed":
        hull = m.hull()
        inside = hull.distance(x0) <= 1e-7 if isinstance(hull, HullHandle) else hull.contains(x0, 1e-9)
        if not inside:
            raise ConfigError("initial price lies outside the payoff hull")
    return MarketState(config, q0), x0


def normalize_bundle(market: eng.Market, bundle) -> tuple[np.ndarray, float]:
    """Accept a reduced bundle, or for pair betting an ``n x n`` ordered-pair matrix."""
    arr = np.asarray(bundle, dtype=np.float64)
    if isinstance(market.payoffs, PairBetPayoff) and arr.ndim == 2:
        return market.payoffs.fold_ordered(arr)
    if arr.shape != (market.K,):
        raise DimensionError(f"bundle must have {market.K} entries")
    return arr, 0.0


def quote(state: MarketState, bundle) -> eng.Quote:
    m = market_for(state.config)
    r, const = normalize_bundle(m, bundle)
    qt = m.quote(state.q, r)
    qt.cost += const
    qt.constant = const
    return qt


def apply_trade(state: MarketState, bundle) -> tuple[MarketState, eng.Quote]:
    """Execute a trade at the quoted cost. The input state is never modified."""
    if state.settled is not None:
        raise SettlementError("market is already settled")
    m = market_for(state.config)
    r, const = normalize_bundle(m, bundle)
    m.check_bundle(r)
    if not np.any(r) and const == 0.0:
        x = m.price(state.q)
        return state, eng.Quote(r, 0.0, x, x, 0.0)
    qt = quote(state, bundle)
    new = state.copy()
    new.q = state.q + r
    new.collected = state.collected + qt.cost
    new.offset = state.offset + const
    new.log.append(TradeRecord(state.seq + 1, r.tolist(), qt.cost, qt.post_price.tolist(), const))
    return new, qt


@dataclass
class SettlementReport:
    outcome: object
    payout: float
    collected: float
    realized_loss: float
    bound: float | None
    apriori_bound: float | None
    divergence_term: float | None
    note: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def settle_market(state: MarketState, outcome) -> tuple[MarketState, SettlementReport]:
    if state.settled is not None:
        raise SettlementError("market is already settled")
    m = market_for(state.config)
    o = m.payoffs.canonical(outcome)
    payout = m.settle(state.q, o) + state.offset
    loss = payout - state.collected
    bound = apriori = div = None
    note = ""
    try:
        lb = m.worst_loss_bound(state.q, o)
        bound, apriori, div = lb.bound, lb.apriori, -lb.divergence
        if not lb.divergence_exact:
            note = "price on the boundary; divergence term omitted"
    except DomainError:
        note = "payoff vector outside the price region; no loss bound applies"
    rep = SettlementReport(o, payout, state.collected, loss, bound, apriori, div, note)
    new = state.copy()
    new.settled = rep.to_dict()
    return new, rep


def recomputed_cash(state: MarketState) -> float:
    m = market_for(state.config)
    return m.cost(state.q) - m.cost(np.zeros(m.K)) + state.offset


def replay(state: MarketState) -> MarketState:
    """Re-apply the trade log to a fresh state."""
    s, _ = init(state.config)
    m = market_for(state.config)
    for rec in state.log:
        r = np.asarray(rec.bundle)
        cost = m.trade_cost(s.q, r) + rec.constant
        s.q = s.q + r
        s.collected += cost
        s.offset += rec.constant
        s.log.append(TradeRecord(rec.seq, list(rec.bundle), cost, m.price(s.q).tolist(), rec.constant))
    return s


def save(state: MarketState, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state.to_dict(), fh, indent=1)
        fh.write("\n")


def load(path) -> MarketState:
    with open(path, encoding="utf-8") as fh:
        return MarketState.from_dict(json.load(fh))


def load_config(path) -> MarketConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            return MarketConfig.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


# verification ------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.residual = float(self.residual)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "residual": self.residual, "detail": self.detail}


@dataclass
class VerifyReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def text(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<28} residual={c.residual:.3e}  {c.detail}"
                 for c in self.checks]
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _sample_q(m: eng.Market, rng, count: int) -> list:
    scale = 2.0
    if m.kind == "sphere":
        scale = m.conjugate.lam
    qs = [rng.normal(0.0, scale, m.K) for _ in range(count)]
    if m.positive_only:
        qs = [np.abs(q) for q in qs]
    return qs


def drain_detector(m: eng.Market, outcome, steps: int = 1000, eps: float = 0.01) -> dict:
    """Run the drain sequence toward ``outcome`` and measure per-step loss growth."""
    rho = m.payoffs.payoff(outcome)
    k = m.region.distance(rho)
    q = np.zeros(m.K)
    loss = m.realized_loss(q, outcome)
    incs = []
    for _ in range(steps):
        q = m.drain_step(q, outcome, eps)
        new = m.realized_loss(q, outcome)
        incs.append(new - loss)
        loss = new
    incs = np.asarray(incs)
    return {"k": k, "min_increase": float(incs.min()), "threshold": 0.9 * eps * k * k,
            "total_loss": float(loss), "steps": steps, "eps": eps}


def verify_market(m: eng.Market, samples: int = 50, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    checks = []
    qs = _sample_q(m, rng, samples)
    zero = np.zeros(m.K)

    res = max(m.region.distance(m.price(q)) for q in qs)
    checks.append(Check("price-in-region", res <= 1e-7, res))

    res = 0.0
    for q in qs:
        x = m.price(q)
        try:
            res = max(res, abs(m.cost(q) - (x @ q - m.conjugate.value(x))))
        except DomainError:
            pass
    checks.append(Check("conjugate-consistency", res <= 2e-8, res))

    res = 0.0
    for q in qs[:10]:
        fd = finite_diff_gradient(m.cost, q, 1e-5)
        res = max(res, float(np.max(np.abs(fd - m.price(q)))))
    checks.append(Check("finite-difference-gradient", res <= 1e-4, res))

    res_path = res_conv = res_info = 0.0
    for q in qs:
        r1, r2 = rng.normal(0, 1, m.K), rng.normal(0, 1, m.K)
        if m.positive_only:
            r1, r2 = np.abs(r1), np.abs(r2)
        whole = m.trade_cost(q, r1 + r2)
        split = m.trade_cost(q, r1) + m.trade_cost(q + r1, r2)
        res_path = max(res_path, abs(whole - split))
        q2 = q + r1
        res_conv = max(res_conv, m.cost(0.5 * (q + q2)) - 0.5 * (m.cost(q) + m.cost(q2)))
        step = m.cost(q + r1) - m.cost(q)
        nxt = m.cost(q + 2 * r1) - m.cost(q + r1)
        res_info = max(res_info, step - nxt)
    checks.append(Check("path-independence", res_path <= 3 * m.tol, res_path))
    checks.append(Check("convexity", res_conv <= 1e-7, max(res_conv, 0.0)))
    checks.append(Check("information-incorporation", res_info <= 1e-7, max(res_info, 0.0)))

    try:
        P = m.payoffs.payoff_matrix()
        enumerable = True
    except EnumerationUnavailable:
        enumerable = False

    if m.mode == "hull":
        H = m.hull()
        res = max(H.distance(m.price(q)) for q in qs[:20])
        checks.append(Check("price-in-hull", res <= 1e-6, res))
        if enumerable:
            worst = 0.0
            for q in qs:
                r = rng.normal(0, 1, m.K)
                w = no_arbitrage_witness(m, q, r)
                worst = min(worst, w.margin)
            checks.append(Check("no-arbitrage", worst >= -1e-6, max(0.0, -worst)))

    if m.mode == "relaxed":
        x0 = m.price(zero)
        H = m.hull()
        d = H.distance(x0)
        checks.append(Check("initial-price-in-hull", d <= 1e-7, d))

    if m.kind == "txncost":
        sums = [m.price(q).sum() for q in qs]
        res = max(max(0.0, 1 - s, s - 1 - m.conjugate.c) for s in sums)
        checks.append(Check("price-sum-band", res <= 1e-9, res))

    if isinstance(m.region, GomRegion) and m.region.n <= 4:
        gens = {tuple(v) for v in P}
        bad = 0
        for _ in range(200):
            v = m.region.linear_maximize(rng.normal(size=m.K))
            if tuple(np.round(v, 9)) not in gens:
                bad += 1
        checks.append(Check("gom-equals-hull", bad == 0, float(bad), "vertices that are not order matrices"))
    elif isinstance(m.region, GomRegion) and m.region.n == 5:
        probe = gom_containment_probe(5, 100, seed)
        checks.append(Check("gom-containment-probe", True, probe.max_distance, "informational"))

    if enumerable:
        outside = [o for o, p in zip(m.payoffs.enumerate(), P) if not m.region.contains(p, 1e-9)]
        if outside:
            rep = drain_detector(m, outside[0])
            grows = rep["min_increase"] >= rep["threshold"]
            checks.append(Check(
                "bounded-loss", False, rep["total_loss"],
                f"payoff of outcome {outside[0]!r} lies outside the price region; drain loss grows "
                f"{'linearly' if grows else 'sublinearly'} (min step {rep['min_increase']:.4g} vs "
                f"0.9*eps*k^2 = {rep['threshold']:.4g})",
            ))
        else:
            checks.append(Check("payoffs-in-region", True, 0.0))
    return checks


def verify_state(state: MarketState) -> list:
    m = market_for(state.config)
    checks = []
    n = max(1, len(state.log))
    res = abs(state.collected - recomputed_cash(state))
    checks.append(Check("cash-conservation", res <= n * 3 * m.tol + 1e-12, res))
    rep = replay(state)
    same = np.array_equal(rep.q, state.q) and rep.collected == state.collected
    checks.append(Check("replay-determinism", same, abs(rep.collected - state.collected)))
    rt = MarketState.from_dict(json.loads(json.dumps(state.to_dict())))
    same = (np.array_equal(rt.q, state.q) and rt.collected == state.collected
            and [t.to_dict() for t in rt.log] == [t.to_dict() for t in state.log])
    checks.append(Check("persistence-round-trip", same, 0.0))
    return checks


def verify(target, samples: int = 50, seed: int = 0) -> VerifyReport:
    """Run the invariant battery on a config or a state."""
    if isinstance(target, MarketState):
        m = market_for(target.config)
        checks = verify_market(m, samples, seed) + verify_state(target)
    else:
        checks = verify_market(market_for(target), samples, seed)
    return VerifyReport(checks)


def loads_any(path):
    """Load a JSON file as a state (if it has a ``q`` field) or a config."""
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from exc
    if isinstance(d, dict) and "q" in d:
        return MarketState.from_dict(d)
    return MarketConfig.from_dict(d)


__all__ = [
    "MarketConfig", "MarketState", "TradeRecord", "SettlementReport", "Check", "VerifyReport",
    "init", "quote", "apply_trade", "settle_market", "replay", "recomputed_cash", "save", "load",
    "load_config", "verify", "drain_detector", "market_for", "normalize_bundle", "loads_any",
]
