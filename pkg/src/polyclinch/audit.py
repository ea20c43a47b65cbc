"""Checks for the mechanism properties on concrete runs.

Every failed check carries a concrete witness.  Pareto optimality is checked
by a grid-resolution refuter: finding no dominating allocation on the grid is
evidence, not proof.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import submodular as sm
from .clinching import ClinchRule
from .extended import is_inf, render, to_rational
from .market import Allocation, Market, add_virtual_buyers, reduce_to_one_sided, strip_virtual, virtual_id
from .mechanisms import Trace, mechanism1, mechanism2, run_algorithm1, run_algorithm2


@dataclass
class Verdict:
    name: str
    ok: bool
    witness: Optional[str] = None

    def __bool__(self):
        return self.ok

    def __str__(self):
        return f"{self.name}: {'pass' if self.ok else 'FAIL'}" + ("" if self.ok else f" ({self.witness})")


@dataclass
class AuditReport:
    verdicts: List[Verdict] = field(default_factory=list)
    alpha: Optional[Fraction] = None

    @property
    def ok(self) -> bool:
        return all(v.ok for v in self.verdicts)

    def __str__(self):
        lines = [str(v) for v in self.verdicts]
        if self.alpha is not None:
            lines.append(f"envy-free alpha: {render(self.alpha)} ({float(self.alpha):.4f})")
        return "\n".join(lines)


def check_irb(a: Allocation, m: Market) -> Verdict:
    """Every real buyer ends with nonnegative utility at its true valuation."""
    for b in m.real_buyers:
        u = a.buyer_utility(m, b.id)
        if u < 0:
            return Verdict("IRb", False, f"buyer {b.id} has utility {render(u)}")
    return Verdict("IRb", True)


def check_irs(a: Allocation, m: Market) -> Verdict:
    """Revenue covers the reserve value of the goods sold."""
    for s in m.sellers:
        r, sold = a.r.get(s.id, Fraction(0)), a.sold(m, s.id)
        if r < s.reserve * sold:
            return Verdict("IRs", False, f"seller {s.id} earns {render(r)} < {render(s.reserve)} x {render(sold)}")
    return Verdict("IRs", True)


def check_sbb(a: Allocation) -> Verdict:
    paid, earned = sum(a.p.values(), Fraction(0)), sum(a.r.values(), Fraction(0))
    if paid != earned:
        return Verdict("SBB", False, f"payments {render(paid)} != revenues {render(earned)}")
    return Verdict("SBB", True)


def check_budgets(a: Allocation, m: Market) -> Verdict:
    for b in m.real_buyers:
        limit = b.budget_at(a.goods(m, b.id))
        if a.p.get(b.id, Fraction(0)) > limit:
            return Verdict("budget", False, f"buyer {b.id} pays {render(a.p[b.id])} > {render(limit)}")
    return Verdict("budget", True)


def check_feasible(a: Allocation, m: Market) -> Verdict:
    for s in m.sellers:
        f = m.base_oracles[s.id]
        x = {e: a.w.get(e, Fraction(0)) for e in f.ground}
        if any(v < 0 for v in x.values()) or not sm.member(f, x):
            return Verdict("feasible", False, f"transactions of seller {s.id} violate its constraint")
    return Verdict("feasible", True)


def truthful(m: Market) -> Market:
    """Copy of the market in which every buyer bids its valuation."""
    buyers = [replace(b, bid=b.value, valuation=b.value) for b in m.buyers]
    return Market(buyers, m.sellers, m.edges)


def buyer_outcomes(m: Market, epsilon) -> Dict[str, tuple]:
    """(goods, payment) per buyer from the reduced one-sided run."""
    pre = m if m.has_virtual else add_virtual_buyers(m)
    y, pi, _ = run_algorithm1(reduce_to_one_sided(pre), pre.buyers, epsilon, pre)
    return {b.id: (y[b.id], pi[b.id]) for b in pre.buyers}


def check_icb_empirical(m: Market, epsilon=1, grid: Optional[Callable[[Fraction], Sequence]] = None) -> Verdict:
    """No buyer gains by bidding anything on the deviation grid.

    Buyer outcomes do not depend on the clinching rule, so the cheaper
    one-sided run is used.  The default grid is every multiple of epsilon up
    to twice the true valuation.
    """
    epsilon = to_rational(epsilon)
    base = truthful(m)
    honest = buyer_outcomes(base, epsilon)
    for b in base.real_buyers:
        v = b.value
        goods, paid = honest[b.id]
        u_true = v * goods - paid
        bids = grid(v) if grid is not None else [k * epsilon for k in range(int(2 * v / epsilon) + 1)]
        for bid in bids:
            bid = to_rational(bid)
            if bid == v:
                continue
            buyers = [replace(x, bid=bid) if x.id == b.id else x for x in base.buyers]
            goods_d, paid_d = buyer_outcomes(Market(buyers, base.sellers, base.edges), epsilon)[b.id]
            u_dev = v * goods_d - paid_d
            if u_dev > u_true:
                return Verdict("ICb", False, f"buyer {b.id} gains {render(u_dev - u_true)} by bidding {render(bid)}")
    return Verdict("ICb", True)


def check_equivalence(m: Market, epsilon=1, rule: ClinchRule = ClinchRule()) -> Verdict:
    """Both runs give each buyer the same goods and payment, iteration by iteration."""
    pre = m if m.has_virtual else add_virtual_buyers(m)
    y, pi, t1 = run_algorithm1(reduce_to_one_sided(pre), pre.buyers, epsilon, pre)
    w, p, _, t2 = run_algorithm2(pre, epsilon, rule)
    for b in pre.buyers:
        goods = sum((w[e] for e in pre.buyer_edges[b.id]), Fraction(0))
        if goods != y[b.id] or p[b.id] != pi[b.id]:
            return Verdict("equivalence", False,
                           f"buyer {b.id}: ({render(goods)}, {render(p[b.id])}) vs ({render(y[b.id])}, {render(pi[b.id])})")
    s1, s2 = t1.per_iteration_totals(), t2.per_iteration_totals()
    if len(s1) != len(s2):
        return Verdict("equivalence", False, f"{len(s1)} vs {len(s2)} iterations")
    for k, (a, b) in enumerate(zip(s1, s2), start=1):
        if a != b:
            return Verdict("equivalence", False, f"iteration {k}: {a} vs {b}")
    return Verdict("equivalence", True)


def check_unsold_rule(trace: Trace) -> Verdict:
    """Real buyers never clinch a seller's goods while its virtual clock is below the reserve."""
    m = trace.market
    for rec in trace.records:
        for ev in rec.events:
            if m.buyer[ev.buyer].is_virtual:
                continue
            for (_, j), v in ev.xi.items():
                vid = virtual_id(j)
                if v and vid in rec.c and rec.c[vid] < m.seller[j].reserve:
                    return Verdict("reserve clock", False, f"buyer {ev.buyer} clinched from seller {j} in "
                                   f"iteration {rec.l} at virtual clock {render(rec.c[vid])}")
    return Verdict("reserve clock", True)


def check_demand_monotone(trace: Trace) -> Verdict:
    """No buyer's demand ever increases during the run."""
    last: Dict[str, object] = {}
    for rec in trace.records:
        for i, d in rec.d.items():
            if i in last and d > last[i]:
                return Verdict("demand monotone", False, f"buyer {i} demand rises to {render(d)} in iteration {rec.l}")
            last[i] = d
    return Verdict("demand monotone", True)


def check_replay(trace: Trace, a: Allocation) -> Verdict:
    """Replaying the clinch events reproduces the final allocation."""
    again = strip_virtual(trace.replay(), trace.market)
    if again.w != a.w or again.p != a.p or again.r != a.r:
        return Verdict("replay", False, "replayed allocation differs")
    return Verdict("replay", True)


def envy_alpha(trace: Trace, m: Optional[Market] = None) -> Fraction:
    """Largest alpha for which the run's revenue sharing is alpha-envy-free.

    For sellers j, j' the revenue of j must be at least alpha times the
    revenue j' collects from buyers adjacent to both, scaled by
    min(1, f_j(E_j) / f_j'(E_j',j)) where E_j',j are the edges of j' at
    buyers that trade with j.  Capped at 1.
    """
    market = trace.market
    m = m or market
    real_events = [ev for ev in trace.events() if not market.buyer[ev.buyer].is_virtual]
    revenue: Dict[tuple, Fraction] = {}
    w: Dict[tuple, Fraction] = {}
    for ev in real_events:
        for e, v in ev.xi.items():
            revenue[e] = revenue.get(e, Fraction(0)) + ev.price * v
            w[e] = w.get(e, Fraction(0)) + v
    neighbours = {s.id: {e[0] for e in market.seller_edges[s.id] if not market.buyer[e[0]].is_virtual}
                  for s in market.sellers}
    alpha = Fraction(1)
    for j, jp in itertools.permutations([s.id for s in market.sellers], 2):
        lhs = sum((v for e, v in revenue.items() if e[1] == j), Fraction(0))
        shared = neighbours[j] & neighbours[jp]
        rhs = sum((v for e, v in revenue.items() if e[1] == jp and e[0] in shared), Fraction(0))
        if rhs == 0:
            continue
        traders = {i for i in neighbours[j] if w.get((i, j), 0) > 0}
        f_jp = m.base_oracles[jp]
        cross = f_jp([e for e in f_jp.ground if e[0] in traders])
        scale = Fraction(1) if cross == 0 else min(Fraction(1), m.supply(j) / cross)
        alpha = min(alpha, lhs / (scale * rhs))
    return alpha


# ---------------------------------------------------------------------------
# Pareto refutation


def _grid_vectors(f: sm.SubmodularOracle, step: Fraction, limit: int):
    """All grid points of the polymatroid of f (coordinates in ``f.ground`` order)."""
    tops = [int(f([e]) / step) for e in f.ground]
    count = math.prod(t + 1 for t in tops)
    if count > limit:
        raise ValueError(f"grid of {count} points exceeds the limit {limit}")
    subsets = [(mask, f(f.subset_of(mask)) / step) for mask in range(1, 1 << len(f.ground))]
    for point in itertools.product(*(range(t + 1) for t in tops)):
        if all(sum(point[k] for k in range(len(point)) if mask >> k & 1) <= cap for mask, cap in subsets):
            yield point


def check_po_exhaustive(a: Allocation, m: Market, grid_step=Fraction(1, 8), limit: int = 200_000) -> Verdict:
    """Search the grid for an allocation every participant weakly prefers.

    For fixed transactions w' the best payments are p'_i = min(v_i W'_i - u_i, B_i)
    and the cheapest revenues r'_j = u_j - rho_j (f_j(E_j) - W'_j); a dominator
    exists iff sum p' >= sum r' with strict gain for someone.  The search runs
    a dynamic program over buyer totals, seller by seller.
    """
    step = to_rational(grid_step)
    buyers = list(m.real_buyers)
    index = {b.id: k for k, b in enumerate(buyers)}
    u_b = []
    for b in buyers:
        if a.p.get(b.id, Fraction(0)) > b.budget_at(a.goods(m, b.id)):
            return Verdict("PO", False, f"buyer {b.id} exceeds its budget, any budget-feasible allocation dominates")
        u_b.append(a.buyer_utility(m, b.id))
    u_s = {s.id: a.seller_utility(m, s.id) for s in m.sellers}
    if any(b.budget_curve is not None for b in buyers):
        raise ValueError("the Pareto refuter supports hard budgets only")
    tops = [sum((int(m.base_oracles[e[1]]([e]) / step) for e in m.buyer_edges[b.id]), 0) for b in buyers]
    shape = tuple(t + 1 for t in tops)
    scale = 1
    values = [b.value * step for b in buyers] + u_b + [s.reserve * step for s in m.sellers] + list(u_s.values())
    values += [b.budget for b in buyers if not is_inf(b.budget)]
    values += [s.reserve * m.supply(s.id) for s in m.sellers]
    for v in values:
        scale = math.lcm(scale, Fraction(v).denominator)
    big = np.int64(2) ** 60
    cost = np.full(shape, big, dtype=np.int64)
    cost[(0,) * len(buyers)] = 0
    for s in m.sellers:
        f = m.base_oracles[s.id]
        owners = [index[e[0]] for e in f.ground]
        rho = int(s.reserve * step * scale)
        nxt = np.full(shape, big, dtype=np.int64)
        for point in _grid_vectors(f, step, limit):
            shift = [0] * len(buyers)
            for k, units in zip(owners, point):
                shift[k] += units
            src = tuple(slice(0, n - sh) for n, sh in zip(shape, shift))
            dst = tuple(slice(sh, n) for n, sh in zip(shape, shift))
            np.minimum(nxt[dst], cost[src] + rho * sum(point), out=nxt[dst])
        cost = nxt
    grids = np.meshgrid(*[np.arange(n, dtype=np.int64) for n in shape], indexing="ij")
    pay = np.zeros(shape, dtype=np.int64)
    capped = np.zeros(shape, dtype=bool)
    for k, b in enumerate(buyers):
        willing = int(b.value * step * scale) * grids[k] - int(u_b[k] * scale)
        if is_inf(b.budget):
            pay += willing
        else:
            cap = int(b.budget * scale)
            pay += np.minimum(willing, cap)
            capped |= willing > cap
    const = sum(int((u_s[s.id] - s.reserve * m.supply(s.id)) * scale) for s in m.sellers)
    reachable = cost < big
    surplus = np.where(reachable, pay - cost - const, -big)
    winner = reachable & ((surplus > 0) | ((surplus == 0) & capped))
    if winner.any():
        at = tuple(int(x) for x in np.argwhere(winner)[0])
        totals = ", ".join(f"{b.id}: {render(n * step)}" for b, n in zip(buyers, at))
        return Verdict("PO", False, f"dominated by goods ({totals}) with surplus {render(Fraction(int(surplus[at]), scale))}")
    return Verdict("PO", True)


def audit_run(m: Market, epsilon=1, rule: ClinchRule = ClinchRule(), mechanism: int = 2,
              a: Optional[Allocation] = None, trace: Optional[Trace] = None) -> AuditReport:
    """Standard checks for one run (performed if ``a``/``trace`` are not given)."""
    if a is None or trace is None:
        a, trace = (mechanism2 if mechanism == 2 else mechanism1)(m, epsilon, rule)
    report = AuditReport()
    report.verdicts += [check_feasible(a, m), check_budgets(a, m), check_irb(a, m), check_irs(a, m), check_sbb(a)]
    if trace.algorithm == 2:
        report.verdicts += [check_unsold_rule(trace), check_demand_monotone(trace), check_replay(trace, a)]
        report.alpha = envy_alpha(trace, m)
    report.verdicts.append(check_equivalence(m, epsilon, rule))
    return report
