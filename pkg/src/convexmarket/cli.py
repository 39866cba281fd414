"""Command-line front end for running a market from JSON config and state files.

Exit codes: 0 success, 1 configuration or input error, 2 solver failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import ledger
from .errors import MarketError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from None


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, default=_default))
    else:
        print(text)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(v) -> str:
    return np.array2string(np.asarray(v), precision=6, separator=", ")


def cmd_init(args):
    cfg = ledger.load_config(args.config)
    state, x0 = ledger.init(cfg)
    ledger.save(state, args.state)
    _emit(args, {"state": args.state, "price": x0}, f"initialized {cfg.kind} market; price {_fmt(x0)}")


def cmd_quote(args):
    state = ledger.load(args.state)
    qt = ledger.quote(state, args.bundle)
    _emit(args, qt.to_dict(), f"cost {qt.cost:.10g}; price after {_fmt(qt.post_price)}")


def cmd_trade(args):
    state = ledger.load(args.state)
    new, qt = ledger.apply_trade(state, args.bundle)
    ledger.save(new, args.state)
    _emit(args, {**qt.to_dict(), "seq": new.seq},
          f"trade #{new.seq}: cost {qt.cost:.10g}; price {_fmt(qt.post_price)}")


def cmd_price(args):
    state = ledger.load(args.state)
    x = ledger.market_for(state.config).price(state.q)
    _emit(args, {"price": x}, _fmt(x))


def cmd_spread(args):
    state = ledger.load(args.state)
    m = ledger.market_for(state.config)
    r, _ = ledger.normalize_bundle(m, args.bundle)
    s = m.bid_ask_spread(state.q, r)
    _emit(args, {"spread": s}, f"spread {s:.10g}")


def cmd_settle(args):
    state = ledger.load(args.state)
    new, rep = ledger.settle_market(state, args.outcome)
    ledger.save(new, args.state)
    bound = "n/a" if rep.bound is None else f"{rep.bound:.10g}"
    _emit(args, rep.to_dict(),
          f"payout {rep.payout:.10g}; collected {rep.collected:.10g}; "
          f"loss {rep.realized_loss:.10g}; bound {bound} {rep.note}".rstrip())


def cmd_report(args):
    state = ledger.load(args.state)
    m = ledger.market_for(state.config)
    x = m.price(state.q)
    depth, exact = m.worst_case_depth()
    try:
        apriori = m.apriori_loss_bound()
    except MarketError:
        apriori = None
    payload = {
        "kind": state.config.kind,
        "q": state.q,
        "price": x,
        "collected": state.collected,
        "recomputed_cash": ledger.recomputed_cash(state),
        "trades": len(state.log),
        "worst_case_depth": depth,
        "worst_case_depth_exact": exact,
        "apriori_loss_bound": apriori,
        "settled": state.settled,
    }
    lines = [f"{k}: {_fmt(v) if isinstance(v, np.ndarray) else v}" for k, v in payload.items()]
    _emit(args, payload, "\n".join(lines))


def cmd_verify(args):
    target = ledger.loads_any(args.path)
    rep = ledger.verify(target, samples=args.samples, seed=args.seed)
    _emit(args, rep.to_dict(), rep.text())
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_drain(args):
    state = ledger.load(args.state)
    m = ledger.market_for(state.config)
    o = m.payoffs.canonical(args.outcome)
    s = state
    losses = [m.realized_loss(s.q, o)]
    for _ in range(args.steps):
        q_next = m.drain_step(s.q, o, args.eps)
        s, _ = ledger.apply_trade(s, q_next - s.q)
        losses.append(m.realized_loss(s.q, o))
    inc = np.diff(losses)
    rho = m.payoffs.payoff(o)
    k = m.region.distance(rho)
    payload = {"steps": args.steps, "eps": args.eps, "separation": k,
               "final_loss": losses[-1], "min_step_increase": float(inc.min()) if len(inc) else 0.0,
               "eps_k2": args.eps * k * k}
    if args.commit:
        ledger.save(s, args.state)
    _emit(args, payload, "\n".join(f"{k_}: {v}" for k_, v in payload.items()))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convexmarket", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="create a state file from a config")
    s.add_argument("config")
    s.add_argument("state")
    s.set_defaults(func=cmd_init)

    for name, fn, hlp in (("quote", cmd_quote, "price a bundle without trading"),
                          ("trade", cmd_trade, "buy a bundle"),
                          ("spread", cmd_spread, "bid-ask spread of a bundle")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("state")
        s.add_argument("--bundle", type=_json_arg, required=True, help="JSON array")
        s.set_defaults(func=fn)

    s = sub.add_parser("price", help="current prices")
    s.add_argument("state")
    s.set_defaults(func=cmd_price)

    s = sub.add_parser("settle", help="settle on an outcome")
    s.add_argument("state")
    s.add_argument("--outcome", type=_json_arg, required=True)
    s.set_defaults(func=cmd_settle)

    s = sub.add_parser("report", help="summary of a state")
    s.add_argument("state")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("verify", help="run the invariant battery on a config or state")
    s.add_argument("path")
    s.add_argument("--samples", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("drain", help="simulate loss-increasing trades toward an outcome")
    s.add_argument("state")
    s.add_argument("--outcome", type=_json_arg, required=True)
    s.add_argument("--steps", type=int, default=1000)
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--commit", action="store_true", help="write the drained state back")
    s.set_defaults(func=cmd_drain)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MarketError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
