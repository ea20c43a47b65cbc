"""Ascending clinching auctions: the one-sided reduced run and the two-sided run.

Both runs raise one price clock per iteration, cycling over all buyers
(virtual buyers included).  In every iteration each buyer clinches the goods
it is guaranteed to get regardless of what the others still demand, pays its
current clock for them, and its demand is recomputed from the remaining
budget.  The run ends once every demand is zero.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from . import flow
from .clinching import ClinchPolytope, ClinchRule, build_clinch_polytope, clinch_total, max_clinch
from .extended import INF, XRational, is_inf, render, render_short, to_rational
from .market import (Allocation, Buyer, Edge, Market, MarketError, add_virtual_buyers,
                     reduce_to_one_sided, strip_virtual, virtual_id)


class PreconditionError(ValueError):
    pass


class RevenueError(ValueError):
    pass


def demand(buyer: Buyer, c: Fraction, p: Fraction, goods: Fraction = Fraction(0)) -> XRational:
    """Most goods the buyer can still afford at unit price ``c``.

    Zero once the clock reaches the bid.  With a hard budget this is
    (B - p) / c (infinite at c = 0); with a budget curve phi it is the largest
    z with p + c z <= phi(goods + z).
    """
    if c >= buyer.bid:
        return Fraction(0)
    curve = buyer.budget_curve
    if curve is None:
        if is_inf(buyer.budget) or c == 0:
            return INF
        return (buyer.budget - p) / c
    for x0, y0, slope, x1 in curve.segments():
        if x1 <= goods:
            continue
        start = max(x0, goods)
        slack = y0 + slope * (start - x0) - p - c * (start - goods)
        if slack < 0:
            return Fraction(0)
        if slope >= c:
            if is_inf(x1):
                return INF
            continue
        reach = start + slack / (c - slope)
        if is_inf(x1) or reach <= x1:
            return reach - goods
    raise AssertionError("unreachable")


def check_assumption(market: Market, epsilon: Fraction) -> None:
    """Every bid, virtual ones included, must be a multiple of epsilon."""
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    for b in market.buyers:
        if (b.bid / epsilon).denominator != 1:
            raise PreconditionError(f"bid {render(b.bid)} of buyer {b.id} is not a multiple of epsilon {render(epsilon)}")


def cycle_bound(market: Market, epsilon: Fraction) -> int:
    """Number of full clock cycles after which every demand is zero."""
    return sum(math.ceil(b.bid / epsilon) for b in market.buyers)


# ---------------------------------------------------------------------------
# traces


@dataclass
class ClinchEvent:
    iteration: int
    buyer: str
    price: Fraction
    amount: Fraction
    xi: Dict[Edge, Fraction] = field(default_factory=dict)
    demand_before: XRational = INF
    demand_after: XRational = INF


@dataclass
class IterationRecord:
    l: int
    owner: str
    c: Dict[str, Fraction]
    d: Dict[str, XRational]
    events: List[ClinchEvent] = field(default_factory=list)
    stock_before: Dict[str, Fraction] = field(default_factory=dict)
    stock_after: Dict[str, Fraction] = field(default_factory=dict)
    delta_r: Dict[str, Fraction] = field(default_factory=dict)

    def clinched(self) -> Dict[str, Fraction]:
        return {ev.buyer: ev.amount for ev in self.events}


@dataclass
class Trace:
    algorithm: int
    market: Market
    epsilon: Fraction
    rule: str = ""
    records: List[IterationRecord] = field(default_factory=list)

    def events(self):
        for rec in self.records:
            yield from rec.events

    def clinch_schedule(self) -> Dict[str, List[Tuple[int, Fraction]]]:
        """Per buyer, the (iteration, amount) pairs with a positive clinch."""
        out: Dict[str, List[Tuple[int, Fraction]]] = {b.id: [] for b in self.market.buyers}
        for ev in self.events():
            if ev.amount:
                out[ev.buyer].append((ev.iteration, ev.amount))
        return out

    def per_iteration_totals(self) -> List[Dict[str, Fraction]]:
        return [{i: a for i, a in rec.clinched().items() if a} for rec in self.records]

    def replay(self) -> Allocation:
        """Rebuild (w, p, r) on the preprocessed market from the clinch events."""
        w = {e: Fraction(0) for e in self.market.edges}
        p = {b.id: Fraction(0) for b in self.market.buyers}
        r = {s.id: Fraction(0) for s in self.market.sellers}
        for ev in self.events():
            p[ev.buyer] += ev.price * ev.amount
            for e, v in ev.xi.items():
                w[e] += v
                r[e[1]] += ev.price * v
        return Allocation(w, p, r)


# ---------------------------------------------------------------------------
# the one-sided run


def run_algorithm1(g, buyers: Sequence[Buyer], epsilon, market: Optional[Market] = None):
    """Clinching auction on the reduced oracle ``g`` over buyer ids.

    Every iteration all buyers clinch simultaneously against the same
    snapshot: buyer i gets g_wd(N) - g_wd(N - i).  Returns ``(y, pi, trace)``.
    """
    epsilon = to_rational(epsilon)
    ids = [b.id for b in buyers]
    if list(g.ground) != ids:
        raise ValueError("reduced oracle must be defined on the buyer ids in order")
    probe = market if market is not None else Market(buyers, [], [])
    check_assumption(probe, epsilon)
    by_id = {b.id: b for b in buyers}
    y = {i: Fraction(0) for i in ids}
    pi = {i: Fraction(0) for i in ids}
    c = {i: Fraction(0) for i in ids}
    d = {i: demand(by_id[i], c[i], pi[i], y[i]) for i in ids}
    trace = Trace(1, probe, epsilon)
    limit = (cycle_bound(probe, epsilon) + 1) * max(len(ids), 1)
    l, k = 0, 0
    while any(d[i] != 0 for i in ids):
        k += 1
        if k > limit:
            raise RuntimeError("auction did not terminate within the clock bound")
        owner = ids[l]
        rec = IterationRecord(k, owner, dict(c), dict(d))
        ctx = flow.OneSidedContext(g, y, d)
        everyone = ctx.value((1 << len(ids)) - 1)
        zeta = {i: everyone - ctx.value(((1 << len(ids)) - 1) & ~(1 << n)) for n, i in enumerate(ids)}
        for i in ids:
            y[i] += zeta[i]
            pi[i] += c[i] * zeta[i]
            if zeta[i]:
                rec.events.append(ClinchEvent(k, i, c[i], zeta[i], demand_before=d[i]))
        c[owner] += epsilon
        for i in ids:
            d[i] = demand(by_id[i], c[i], pi[i], y[i])
        for ev in rec.events:
            ev.demand_after = d[ev.buyer]
        trace.records.append(rec)
        l = (l + 1) % len(ids)
    return y, pi, trace


# ---------------------------------------------------------------------------
# the two-sided run


ClinchHook = Callable[[flow.RemnantContext, ClinchPolytope, Dict[Edge, Fraction], int], None]


def _remaining(market: Market, w: Mapping[Edge, Fraction]) -> Dict[str, Fraction]:
    out = {}
    for s in market.sellers:
        f = market.oracles[s.id]
        out[s.id] = f(f.ground) - sum((w[e] for e in market.seller_edges[s.id]), Fraction(0))
    return out


def run_algorithm2(market: Market, epsilon, rule: ClinchRule = ClinchRule(),
                   on_clinch: Optional[ClinchHook] = None):
    """Two-sided clinching auction on a market with virtual buyers.

    Returns ``(w, p, r, trace)``; revenues are credited at the clinching
    buyer's clock.
    """
    epsilon = to_rational(epsilon)
    check_assumption(market, epsilon)
    buyers = market.buyers
    ids = [b.id for b in buyers]
    w = {e: Fraction(0) for e in market.edges}
    p = {i: Fraction(0) for i in ids}
    r = {s.id: Fraction(0) for s in market.sellers}
    c = {i: Fraction(0) for i in ids}
    goods = {i: Fraction(0) for i in ids}
    d = {b.id: demand(b, c[b.id], p[b.id]) for b in buyers}
    rng = rule.rng() if rule.kind == "random" else random.Random(0)
    trace = Trace(2, market, epsilon, str(rule))
    limit = (cycle_bound(market, epsilon) + 1) * max(len(ids), 1)
    l, k = 0, 0
    while any(d[i] != 0 for i in ids):
        k += 1
        if k > limit:
            raise RuntimeError("auction did not terminate within the clock bound")
        owner = ids[l]
        rec = IterationRecord(k, owner, dict(c), dict(d), stock_before=_remaining(market, w))
        delta = {s.id: Fraction(0) for s in market.sellers}
        for b in buyers:
            i = b.id
            if d[i] == 0 or not market.buyer_edges[i]:
                continue
            ctx = flow.RemnantContext(market, w, d)
            if clinch_total(ctx, i) == 0 and on_clinch is None:
                continue
            cp = build_clinch_polytope(ctx, i)
            xi = max_clinch(cp, rule, rng)
            if on_clinch is not None:
                on_clinch(ctx, cp, xi, k)
            amount = sum(xi.values(), Fraction(0))
            if amount == 0:
                continue
            for e, v in xi.items():
                w[e] += v
                delta[e[1]] += c[i] * v
            goods[i] += amount
            p[i] += c[i] * amount
            before = d[i]
            d[i] = demand(b, c[i], p[i], goods[i])
            rec.events.append(ClinchEvent(k, i, c[i], amount, {e: v for e, v in xi.items() if v},
                                          before, d[i]))
        for j, v in delta.items():
            r[j] += v
        rec.delta_r = {j: v for j, v in delta.items() if v}
        rec.stock_after = _remaining(market, w)
        c[owner] += epsilon
        d[owner] = demand(market.buyer[owner], c[owner], p[owner], goods[owner])
        l = (l + 1) % len(ids)
        trace.records.append(rec)
    return w, p, r, trace


# ---------------------------------------------------------------------------
# mechanisms


def _preprocess(market: Market) -> Market:
    return market if market.has_virtual else add_virtual_buyers(market)


def mechanism2(market: Market, epsilon, rule: ClinchRule = ClinchRule(),
               on_clinch: Optional[ClinchHook] = None) -> Tuple[Allocation, Trace]:
    pre = _preprocess(market)
    w, p, r, trace = run_algorithm2(pre, epsilon, rule, on_clinch)
    return strip_virtual(Allocation(w, p, r), pre), trace


@dataclass(frozen=True)
class RevenuePolicy:
    """How mechanism 1 splits buyer payments among sellers.

    ``explicit`` values are the final (virtual-free) revenues in seller order.
    """

    kind: str = "from_mechanism2"
    values: Tuple[Fraction, ...] = ()

    def __post_init__(self):
        if self.kind not in ("from_mechanism2", "proportional", "explicit"):
            raise ValueError(f"unknown revenue policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "RevenuePolicy":
        kind, _, arg = text.strip().partition(":")
        if kind in ("from_mechanism2", "proportional") and not arg:
            return cls(kind)
        if kind == "explicit" and arg:
            return cls("explicit", tuple(to_rational(v) for v in arg.split(",")))
        raise ValueError(f"cannot parse revenue policy {text!r}")


def revenue_floors(pre: Market, y: Mapping[str, Fraction], p: Mapping[str, Fraction]) -> Dict[str, Fraction]:
    """Smallest pre-stripping revenue each seller may receive."""
    floors = {}
    for s in pre.sellers:
        vid = virtual_id(s.id)
        floors[s.id] = s.reserve * pre.supply(s.id) + p.get(vid, Fraction(0)) - s.reserve * y.get(vid, Fraction(0))
    return floors


def validate_revenue(pre: Market, y, p, r) -> None:
    floors = revenue_floors(pre, y, p)
    for j, floor in floors.items():
        if r.get(j, Fraction(0)) < floor:
            raise RevenueError(f"seller {j} gets {render(r.get(j, 0))}, below its floor {render(floor)}")
    if sum(r.values(), Fraction(0)) != sum(p.values(), Fraction(0)):
        raise RevenueError("revenues do not add up to the payments")


def mechanism1(market: Market, epsilon, rule: ClinchRule = ClinchRule(),
               revenue_policy: RevenuePolicy = RevenuePolicy()) -> Tuple[Allocation, Trace]:
    """Reduced one-sided run, flow recovery of transactions, revenue split."""
    epsilon = to_rational(epsilon)
    pre = _preprocess(market)
    g = reduce_to_one_sided(pre)
    y, pi, trace = run_algorithm1(g, pre.buyers, epsilon, pre)

    def choose(h):
        return max_clinch(ClinchPolytope("", h), rule, random.Random(rule.seed))

    w = flow.recover_transactions(pre, y, choose)
    p = dict(pi)
    if revenue_policy.kind == "from_mechanism2":
        _, _, r, _ = run_algorithm2(pre, epsilon, rule)
    elif revenue_policy.kind == "proportional":
        floors = revenue_floors(pre, y, p)
        surplus = sum(p.values(), Fraction(0)) - sum(floors.values(), Fraction(0))
        weights = {j: floors[j] + pre.supply(j) for j in floors}
        total = sum(weights.values(), Fraction(0))
        if total == 0:
            weights = {j: Fraction(1) for j in floors}
            total = Fraction(len(floors))
        r = {j: floors[j] + surplus * weights[j] / total for j in floors} if floors else {}
    else:
        if len(revenue_policy.values) != len(pre.sellers):
            raise RevenueError(f"expected {len(pre.sellers)} revenues, got {len(revenue_policy.values)}")
        r = {s.id: v + p.get(virtual_id(s.id), Fraction(0)) for s, v in zip(pre.sellers, revenue_policy.values)}
    validate_revenue(pre, y, p, r)
    return strip_virtual(Allocation(w, p, r), pre), trace


# ---------------------------------------------------------------------------
# tables


def render_table(trace: Trace) -> str:
    """Per-iteration table: clocks, demands and clinches of each buyer, stocks,
    revenue increments and the virtual buyer's clock for each seller."""
    m = trace.market
    real = [b.id for b in m.buyers if not b.is_virtual]
    sellers = [s.id for s in m.sellers]
    header = ["l"]
    for i in real:
        header += [f"c{i}", f"d{i}"] + [f"xi{i},{j}" for j in sellers if (i, j) in m.buyer_edges[i]]
    for j in sellers:
        header += [f"s~{j}", f"dr{j}"]
        if virtual_id(j) in m.buyer:
            header.append(f"c[{virtual_id(j)}]")
    rows = [header]
    for rec in trace.records:
        ev = {e.buyer: e for e in rec.events}
        row = [str(rec.l)]
        for i in real:
            dcell = render_short(rec.d[i])
            if i in ev:
                dcell += ", " + render_short(ev[i].demand_after)
            row += [render(rec.c[i]), dcell]
            for j in sellers:
                if (i, j) in m.buyer_edges[i]:
                    row.append(render(ev[i].xi.get((i, j), 0)) if i in ev else "")
        for j in sellers:
            s0, s1 = rec.stock_before.get(j), rec.stock_after.get(j)
            row.append(render(s0) if s0 == s1 else f"{render(s0)}, {render(s1)}")
            row.append(render(rec.delta_r[j]) if j in rec.delta_r else "")
            if virtual_id(j) in m.buyer:
                row.append(render(rec.c[virtual_id(j)]))
        rows.append(row)
    widths = [max(len(r[k]) for r in rows) for k in range(len(header))]
    lines = [" | ".join(cell.rjust(wd) for cell, wd in zip(r, widths)) for r in rows]
    lines.insert(1, "-+-".join("-" * wd for wd in widths))
    return "\n".join(lines)
