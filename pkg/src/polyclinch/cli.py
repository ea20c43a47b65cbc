"""Command-line interface: ``run``, ``slot``, ``audit`` and ``gen``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

from . import audit as au
from .clinching import ClinchRule
from .extended import is_inf, render, to_rational
from .market import (MarketError, MarketSchemaError, allocation_from_dict, allocation_to_dict, exact, load_market,
                     market_to_dict, random_market)
from .mechanisms import PreconditionError, RevenueError, RevenuePolicy, Trace, mechanism1, mechanism2, render_table
from .slotting import SlottingError, page_distribution, page_oracles, per_page_split, quality_decompose

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2


@dataclass
class RunConfig:
    market: str
    mechanism: int = 2
    epsilon: Fraction = Fraction(1)
    rule: ClinchRule = ClinchRule()
    revenue_policy: RevenuePolicy = RevenuePolicy()
    trace: Optional[str] = None
    audit: bool = False
    output: Optional[str] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.mechanism not in (1, 2):
            raise ValueError("mechanism must be 1 or 2")


def _rational(text: str) -> Fraction:
    try:
        value = to_rational(text)
    except (ValueError, ZeroDivisionError, TypeError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None
    if is_inf(value):
        raise argparse.ArgumentTypeError(f"not a finite rational: {text!r}")
    return value


def _parsed(parser):
    def parse(text):
        try:
            return parser(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def trace_to_dict(trace: Trace) -> dict:
    def vec(d):
        return {k: render(v) for k, v in d.items()}

    return {
        "algorithm": trace.algorithm,
        "epsilon": render(trace.epsilon),
        "rule": trace.rule,
        "iterations": [
            {
                "l": rec.l,
                "owner": rec.owner,
                "c": vec(rec.c),
                "d": vec(rec.d),
                "events": [{"buyer": ev.buyer, "price": render(ev.price), "amount": render(ev.amount),
                            "xi": [{"buyer": i, "seller": j, "value": render(v)} for (i, j), v in ev.xi.items()],
                            "demand_after": render(ev.demand_after)} for ev in rec.events],
                "delta_r": vec(rec.delta_r),
            }
            for rec in trace.records
        ],
    }


def _schedule_table(trace: Trace) -> str:
    lines = []
    for i, schedule in trace.clinch_schedule().items():
        cells = ", ".join(f"{render(a)}@l={l}" for l, a in schedule) or "-"
        lines.append(f"buyer {i}: {cells}")
    return "\n".join(lines)


def _summary(a, m) -> str:
    lines = []
    for b in m.real_buyers:
        lines.append(f"buyer {b.id}: goods {render(a.goods(m, b.id))}  payment {render(a.p.get(b.id, 0))}  "
                     f"utility {render(a.buyer_utility(m, b.id))}")
    for s in m.sellers:
        lines.append(f"seller {s.id}: sold {render(a.sold(m, s.id))}  revenue {render(a.r.get(s.id, 0))}  "
                     f"unsold {render(a.unsold.get(s.id, 0))}  utility {render(a.seller_utility(m, s.id))}")
    return "\n".join(lines)


def cmd_run(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    m = load_market(cfg.market)
    if cfg.mechanism == 2:
        a, trace = mechanism2(m, cfg.epsilon, cfg.rule)
    else:
        a, trace = mechanism1(m, cfg.epsilon, cfg.rule, cfg.revenue_policy)
    report = au.audit_run(m, cfg.epsilon, cfg.rule, cfg.mechanism, a, trace) if cfg.audit else None
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            json.dump(allocation_to_dict(a, m), fh, indent=2)
            fh.write("\n")
    if cfg.trace == "json":
        doc = {"allocation": allocation_to_dict(a), "trace": trace_to_dict(trace)}
        if report is not None:
            doc["audit"] = {"ok": report.ok,
                            "verdicts": [{"name": v.name, "ok": v.ok, "witness": v.witness} for v in report.verdicts],
                            "alpha": None if report.alpha is None else exact(report.alpha)}
        json.dump(doc, out, indent=2)
        out.write("\n")
    else:
        if cfg.trace == "table":
            print(render_table(trace) if trace.algorithm == 2 else _schedule_table(trace), file=out)
            print(file=out)
        print(_summary(a, m), file=out)
        if report is not None:
            print(file=out)
            print(report, file=out)
    return EXIT_OK if report is None or report.ok else EXIT_VIOLATION


def cmd_slot(allocation: str, seller: str, mode: str, out=None) -> int:
    out = out or sys.stdout
    with open(allocation, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MarketError(f"invalid JSON in {allocation}: {exc}") from None
    a, m = allocation_from_dict(data)
    if m is None:
        raise MarketError("allocation file does not embed its market")
    if seller not in m.seller:
        raise KeyError(f"unknown seller {seller!r}")
    s = m.seller[seller]
    wanted = ("page_based",) if mode == "page" else ("quality_based", "paged_quality")
    if s.family not in wanted:
        raise SlottingError(f"seller {seller} has family {s.family!r}; {mode} mode needs {' or '.join(wanted)}")
    buyers = [e[0] for e in m.seller_edges[seller] if not m.buyer[e[0]].is_virtual]
    w = {i: a.w.get((i, seller), Fraction(0)) for i in buyers}
    pages = page_oracles(s.family, s.params, buyers)
    if s.family == "page_based":
        sizes = s.params["slots"]
    else:
        sizes = s.params["pages"] if s.family == "paged_quality" else [s.params["qualities"]]
    split = per_page_split(w, pages) if len(pages) > 1 else {(i, 0): v for i, v in w.items()}
    for k, size in enumerate(sizes):
        q = {i: split[(i, k)] for i in buyers}
        dist = page_distribution(q, size) if mode == "page" else quality_decompose(q, size)
        print(f"page {k + 1}:", file=out)
        for assignment, prob in dist.support:
            if mode == "page":
                shown = ", ".join(sorted(str(i) for i in assignment)) or "(none)"
            else:
                shown = ", ".join(f"{i}->slot {slot + 1}" for i, slot in assignment) or "(none)"
            print(f"  {render(prob)}: {shown}", file=out)
    return EXIT_OK


def audit_suite(markets, suite: str, epsilon=1) -> List[str]:
    """Run the chosen checks on each market; returns failure descriptions."""
    failures = []
    for name, m in markets:
        verdicts = []
        if suite in ("equivalence", "all"):
            verdicts.append(au.check_equivalence(m, epsilon))
        if suite == "all":
            a, trace = mechanism2(m, epsilon)
            verdicts += [au.check_irb(a, m), au.check_irs(a, m), au.check_sbb(a), au.check_budgets(a, m),
                         au.check_unsold_rule(trace), au.check_demand_monotone(trace)]
        if suite in ("icb", "all"):
            verdicts.append(au.check_icb_empirical(m, epsilon))
        failures += [f"{name}: {v}" for v in verdicts if not v.ok]
    return failures


def cmd_audit(market: Optional[str], suite: str, seed: int, count: int, epsilon, out=None) -> int:
    out = out or sys.stdout
    if market:
        markets = [(market, load_market(market))]
    else:
        markets = [(f"seed {seed + k}", random_market(seed + k)) for k in range(count)]
    failures = audit_suite(markets, suite, epsilon)
    for line in failures:
        print(line, file=out)
    print(f"{suite}: {len(markets) - len({f.split(':')[0] for f in failures})}/{len(markets)} instances pass",
          file=out)
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_gen(seed: int, max_buyers: int, max_sellers: int, output: Optional[str], out=None) -> int:
    out = out or sys.stdout
    if max_buyers < 0 or max_sellers < 0:
        raise ValueError("size bounds must be nonnegative")
    text = json.dumps(market_to_dict(random_market(seed, max_buyers, max_sellers)), indent=2) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyclinch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a mechanism on a market file")
    run.add_argument("--market", required=True)
    run.add_argument("--mechanism", type=int, choices=(1, 2), default=2)
    run.add_argument("--epsilon", type=_rational, default=Fraction(1))
    run.add_argument("--rule", type=_parsed(ClinchRule.parse), default=ClinchRule(),
                     help="midpoint | ordered:<sellers> | random:<seed>")
    run.add_argument("--revenue-policy", type=_parsed(RevenuePolicy.parse), default=RevenuePolicy(),
                     help="from_mechanism2 | proportional | explicit:<r1,r2,...> (mechanism 1 only)")
    run.add_argument("--trace", choices=("table", "json"))
    run.add_argument("--audit", action="store_true")
    run.add_argument("--output", help="write the allocation (with its market) to this file")

    slot = sub.add_parser("slot", help="randomized slot assignment for one seller")
    slot.add_argument("--allocation", required=True)
    slot.add_argument("--seller", required=True)
    slot.add_argument("--mode", choices=("page", "quality"), required=True)

    aud = sub.add_parser("audit", help="run property checks on one market or seeded random markets")
    aud.add_argument("--market")
    aud.add_argument("--suite", choices=("icb", "equivalence", "all"), default="all")
    aud.add_argument("--seed", type=int, default=0)
    aud.add_argument("--count", type=int, default=10)
    aud.add_argument("--epsilon", type=_rational, default=Fraction(1))

    gen = sub.add_parser("gen", help="generate a seeded random market")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--max-buyers", type=int, default=3)
    gen.add_argument("--max-sellers", type=int, default=3)
    gen.add_argument("--output")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = RunConfig(args.market, args.mechanism, args.epsilon, args.rule, args.revenue_policy,
                            args.trace, args.audit, args.output)
            return cmd_run(cfg)
        if args.command == "slot":
            return cmd_slot(args.allocation, args.seller, args.mode)
        if args.command == "audit":
            return cmd_audit(args.market, args.suite, args.seed, args.count, args.epsilon)
        return cmd_gen(args.seed, args.max_buyers, args.max_sellers, args.output)
    except (OSError, KeyError, ValueError, RuntimeError) as exc:
        kind = {PreconditionError: "precondition error", RevenueError: "revenue error",
                SlottingError: "slotting error", KeyError: "lookup error",
                MarketSchemaError: "schema error", MarketError: "market error"}.get(type(exc), "error")
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"{kind}: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
