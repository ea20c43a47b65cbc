"""Remnant supply functions, polymatroidal max-flow and transaction recovery.

``f_wd`` evaluates the maximum of x(F) over the remnant supply polytope

    P_{w,d} = {x >= 0 : w + x in P, x(E_i) <= d_i for every buyer i}

through the closed form  min over X subset of N_F of f_w(E_X & F) + d(N_F - X),
where N_F is the set of buyers incident to F and f_w is the contraction of the
market's polymatroid by w.  ``f_wd_bruteforce`` solves the same maximum as an
explicit linear program and serves as an independent check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import submodular as sm
from .extended import INF, XRational, is_inf, xsum
from .lp import PackingLP, UnboundedError
from .market import Edge, Market

MAX_LP_EDGES = 12


class InfeasibleTransactionsError(ValueError):
    pass


def _subset_masks(mask: int):
    """All submasks of ``mask``, including 0 and ``mask`` itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


class RemnantContext:
    """Snapshot of transactions ``w`` and demands ``d`` on a market.

    Edge sets are handled internally as bitmasks over ``market.edges``.
    Evaluations are memoized per context, which is never mutated.
    """

    def __init__(self, market: Market, w: Mapping[Edge, Fraction], d: Mapping[str, XRational]):
        self.market = market
        self.w = {e: Fraction(w.get(e, 0)) for e in market.edges}
        self.d = {b.id: d.get(b.id, INF) for b in market.buyers}
        if any(v < 0 for v in self.d.values()):
            raise ValueError("demands must be nonnegative")
        self.bit = {e: 1 << k for k, e in enumerate(market.edges)}
        self.buyer_ids = [b.id for b in market.buyers]
        self.buyer_mask = {i: self._mask(market.buyer_edges[i]) for i in self.buyer_ids}
        self.full_mask = (1 << len(market.edges)) - 1
        self._sellers = []
        for s in market.sellers:
            f = market.oracles[s.id]
            ground = f.ground
            values = f.table()
            n = len(ground)
            for mask in range(1 << n):
                values[mask] -= sum((self.w[ground[k]] for k in range(n) if mask >> k & 1), Fraction(0))
            if min(values, default=0) < 0:
                raise sm.InfeasibleVectorError(f"transactions exceed the constraint of seller {s.id}")
            bits = [self.bit[e] for e in ground]
            self._sellers.append((bits, sm.superset_min(values, n)))
        self._memo: Dict[int, Fraction] = {}

    def _mask(self, edges: Iterable[Edge]) -> int:
        m = 0
        for e in edges:
            m |= self.bit[e]
        return m

    def edges_of(self, mask: int) -> List[Edge]:
        return [e for e in self.market.edges if mask & self.bit[e]]

    def f_w(self, mask: int) -> Fraction:
        """Contracted polymatroid value of an edge mask."""
        total = Fraction(0)
        for bits, table in self._sellers:
            local = 0
            for k, b in enumerate(bits):
                if mask & b:
                    local |= 1 << k
            total += table[local]
        return total

    def value(self, mask: int) -> Fraction:
        """f_wd of an edge mask."""
        if mask in self._memo:
            return self._memo[mask]
        incident = [i for i in self.buyer_ids if self.buyer_mask[i] & mask]
        best: XRational = INF
        for chosen in itertools.product((True, False), repeat=len(incident)):
            covered = 0
            outside: XRational = Fraction(0)
            for i, inside in zip(incident, chosen):
                if inside:
                    covered |= self.buyer_mask[i]
                else:
                    outside = xsum((outside, self.d[i]))
            if is_inf(outside) or outside >= best:
                continue
            val = self.f_w(covered & mask) + outside
            if val < best:
                best = val
        self._memo[mask] = best
        return best

    def buyers_mask(self, buyers: Iterable[str]) -> int:
        m = 0
        for i in buyers:
            m |= self.buyer_mask[i]
        return m


def f_wd(ctx: RemnantContext, F: Iterable[Edge]) -> Fraction:
    """Largest total increase x(F) available in the remnant supply polytope."""
    F = list(F)
    for e in F:
        if e not in ctx.bit:
            raise sm.GroundSetError(f"edge {e!r} is not in the market")
    return ctx.value(ctx._mask(F))


def remnant_lp(ctx: RemnantContext) -> PackingLP:
    """The remnant supply polytope as an explicit inequality system."""
    edges = ctx.market.edges
    if len(edges) > MAX_LP_EDGES:
        raise sm.GroundSetError(f"{len(edges)} edges exceed the LP limit of {MAX_LP_EDGES}")
    col = {e: k for k, e in enumerate(edges)}
    A, b = [], []
    for s in ctx.market.sellers:
        f = ctx.market.oracles[s.id]
        for r in range(1, len(f.ground) + 1):
            for F in itertools.combinations(f.ground, r):
                row = [0] * len(edges)
                for e in F:
                    row[col[e]] = 1
                A.append(row)
                b.append(f(F) - sum(ctx.w[e] for e in F))
    for i in ctx.buyer_ids:
        if not is_inf(ctx.d[i]) and ctx.market.buyer_edges[i]:
            A.append([1 if e[0] == i else 0 for e in edges])
            b.append(ctx.d[i])
    if not A:
        A, b = [[0] * len(edges)], [0]
    return PackingLP(A, b)


def f_wd_bruteforce(ctx: RemnantContext, F: Iterable[Edge]) -> Fraction:
    """f_wd by linear programming over the remnant supply polytope."""
    lp = ctx.__dict__.get("_lp")
    if lp is None:
        lp = ctx._lp = remnant_lp(ctx)
    F = set(F)
    stray = F.difference(ctx.bit)
    if stray:
        raise sm.GroundSetError(f"edges {sorted(stray)} are not in the market")
    if not ctx.market.edges:
        return Fraction(0)
    value, _ = lp.maximize([1 if e in F else 0 for e in ctx.market.edges])
    return value


# ---------------------------------------------------------------------------
# one-sided counterpart


class OneSidedContext:
    """Transactions ``y`` and demands ``d`` on a reduced oracle g over buyers."""

    def __init__(self, g: sm.SubmodularOracle, y: Mapping[str, Fraction], d: Mapping[str, XRational]):
        self.g = g
        self.buyers = list(g.ground)
        self.y = {i: Fraction(y.get(i, 0)) for i in self.buyers}
        self.d = {i: d.get(i, INF) for i in self.buyers}
        n = len(self.buyers)
        values = g.table()
        for mask in range(1 << n):
            values[mask] -= sum((self.y[self.buyers[k]] for k in range(n) if mask >> k & 1), Fraction(0))
        if min(values) < 0:
            raise sm.InfeasibleVectorError("y is outside the reduced polymatroid")
        self._gy = sm.superset_min(values, n)
        self._memo: Dict[int, Fraction] = {}

    def value(self, mask: int) -> Fraction:
        if mask in self._memo:
            return self._memo[mask]
        best: XRational = INF
        for Z in _subset_masks(mask):
            rest = xsum(self.d[self.buyers[k]] for k in range(len(self.buyers)) if (mask & ~Z) >> k & 1)
            if is_inf(rest):
                continue
            val = self._gy[Z] + rest
            if val < best:
                best = val
        self._memo[mask] = best
        return best


def g_wd(ctx: OneSidedContext, X: Iterable[str]) -> Fraction:
    """min over Z subset of X of g_y(Z) + d(X - Z)."""
    return ctx.value(ctx.g.mask_of(X))


# ---------------------------------------------------------------------------
# polymatroidal networks


@dataclass
class PolyNetwork:
    """Directed network with per-node polymatroids on leaving/entering arcs.

    ``out_oracles[v]`` / ``in_oracles[v]`` are oracles whose ground set is the
    tuple of arcs leaving / entering v.  A missing oracle means the node adds
    no constraint beyond arc capacities.
    """

    nodes: Sequence[Hashable]
    arcs: Sequence[Tuple[Hashable, Hashable]]
    source: Hashable
    sink: Hashable
    capacity: Mapping[Tuple[Hashable, Hashable], XRational] = field(default_factory=dict)
    out_oracles: Mapping[Hashable, sm.SubmodularOracle] = field(default_factory=dict)
    in_oracles: Mapping[Hashable, sm.SubmodularOracle] = field(default_factory=dict)

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        node_set = set(self.nodes)
        if self.source not in node_set or self.sink not in node_set:
            raise ValueError("source and sink must be nodes")
        if len(set(self.arcs)) != len(self.arcs):
            raise ValueError("duplicate arc")
        for a in self.arcs:
            if a[0] not in node_set or a[1] not in node_set:
                raise ValueError(f"arc {a} has an unknown endpoint")
            if self.capacity.get(a, INF) < 0:
                raise ValueError(f"arc {a} has negative capacity")
        for v, f in self.out_oracles.items():
            if set(f.ground) != set(self.leaving(v)):
                raise ValueError(f"out-oracle of {v!r} must be defined on its leaving arcs")
        for v, f in self.in_oracles.items():
            if set(f.ground) != set(self.entering(v)):
                raise ValueError(f"in-oracle of {v!r} must be defined on its entering arcs")

    def leaving(self, v) -> tuple:
        return tuple(a for a in self.arcs if a[0] == v)

    def entering(self, v) -> tuple:
        return tuple(a for a in self.arcs if a[1] == v)

    def node_rank(self, v, arcs: Iterable, outgoing: bool) -> XRational:
        """Rank of a set of arcs at v: the node oracle combined with arc capacities.

        The intersection of a polymatroid with a box is the polymatroid of
        F -> min over G subset of F of f(G) + c(F - G).
        """
        arcs = tuple(arcs)
        oracle = (self.out_oracles if outgoing else self.in_oracles).get(v)
        caps = [self.capacity.get(a, INF) for a in arcs]
        if oracle is None:
            return xsum(caps)
        best: XRational = INF
        for chosen in itertools.product((True, False), repeat=len(arcs)):
            G = [a for a, inside in zip(arcs, chosen) if inside]
            rest = xsum(c for c, inside in zip(caps, chosen) if not inside)
            val = oracle(G) + rest if not is_inf(rest) else INF
            if val < best:
                best = val
        return best


def max_flow(net: PolyNetwork) -> Tuple[XRational, Dict]:
    """Maximum flow value and an optimal arc flow, solved as an exact LP."""
    arcs = list(net.arcs)
    col = {a: k for k, a in enumerate(arcs)}
    A, b = [], []

    def add(row_arcs, coef, rhs):
        row = [0] * len(arcs)
        for a in row_arcs:
            row[col[a]] += coef
        A.append(row)
        b.append(rhs)

    for a in arcs:
        cap = net.capacity.get(a, INF)
        if not is_inf(cap):
            add([a], 1, cap)
    for side, oracles in ((True, net.out_oracles), (False, net.in_oracles)):
        for v, f in oracles.items():
            for r in range(1, len(f.ground) + 1):
                for F in itertools.combinations(f.ground, r):
                    val = f(F)
                    if not is_inf(val):
                        add(F, 1, val)
    for v in net.nodes:
        if v in (net.source, net.sink):
            continue
        row = [0] * len(arcs)
        for a in net.entering(v):
            row[col[a]] += 1
        for a in net.leaving(v):
            row[col[a]] -= 1
        if any(row):
            A.append(row)
            b.append(0)
            A.append([-x for x in row])
            b.append(0)
    objective = [0] * len(arcs)
    for a in net.leaving(net.source):
        objective[col[a]] += 1
    for a in net.entering(net.source):
        objective[col[a]] -= 1
    if not arcs:
        return Fraction(0), {}
    if not A:
        A, b = [[0] * len(arcs)], [0]
    try:
        value, x = PackingLP(A, b).maximize(objective)
    except UnboundedError:
        return INF, {}
    return value, dict(zip(arcs, x))


def min_cut_value(net: PolyNetwork) -> XRational:
    """Enumerate node sets U and bipartitions of the arcs leaving U."""
    others = [v for v in net.nodes if v not in (net.source, net.sink)]
    best: XRational = INF
    for r in range(len(others) + 1):
        for extra in itertools.combinations(others, r):
            U = {net.source, *extra}
            cut = [a for a in net.arcs if a[0] in U and a[1] not in U]
            for chosen in itertools.product((True, False), repeat=len(cut)):
                A = [a for a, inside in zip(cut, chosen) if inside]
                B = [a for a, inside in zip(cut, chosen) if not inside]
                heads = {a[1] for a in A}
                tails = {a[0] for a in B}
                total = xsum(net.node_rank(v, [a for a in A if a[1] == v], outgoing=False) for v in heads)
                total = xsum((total, xsum(net.node_rank(v, [a for a in B if a[0] == v], outgoing=True)
                                          for v in tails)))
                if total < best:
                    best = total
    return best


def transaction_network(market: Market, y: Mapping[str, Fraction]) -> PolyNetwork:
    """Source -> buyer copy -> buyer -> seller -> sink, copies capped at y_i."""
    src, snk = ("source",), ("sink",)
    copies = [("copy", b.id) for b in market.buyers]
    buyers = [("buyer", b.id) for b in market.buyers]
    sellers = [("seller", s.id) for s in market.sellers]
    arcs = [(src, c) for c in copies]
    arcs += [(("copy", b.id), ("buyer", b.id)) for b in market.buyers]
    arcs += [(("buyer", i), ("seller", j)) for i, j in market.edges]
    arcs += [(s, snk) for s in sellers]
    capacity = {(("copy", b.id), ("buyer", b.id)): Fraction(y.get(b.id, 0)) for b in market.buyers}
    in_oracles = {}
    for s in market.sellers:
        f = market.oracles[s.id]
        entering = tuple((("buyer", i), ("seller", j)) for i, j in f.ground)
        in_oracles[("seller", s.id)] = sm.SubmodularOracle(
            entering, lambda F, f=f: f([(a[0][1], a[1][1]) for a in F]), name=f"seller {s.id}")
    return PolyNetwork([src, snk] + copies + buyers + sellers, arcs, src, snk, capacity, {}, in_oracles)


def clinch_oracle(ctx: RemnantContext, i: str) -> sm.SubmodularOracle:
    """h(F) = f_wd(E_{N-i} + F) - f_wd(E_{N-i}) on the edges of buyer i."""
    others = ctx.full_mask & ~ctx.buyer_mask[i]
    base = ctx.value(others)
    return sm.SubmodularOracle(ctx.market.buyer_edges[i],
                               lambda F: ctx.value(others | ctx._mask(F)) - base,
                               name=f"clinch[{i}]")


def recover_transactions(market: Market, y: Mapping[str, Fraction],
                         choose: Optional[Callable[[sm.SubmodularOracle], Dict]] = None) -> Dict[Edge, Fraction]:
    """Split per-buyer totals y into edge transactions feasible for every seller.

    Buyers take, one after another, a greedy vertex of their clinching
    polytope under demands d = y.  When y lies in the reduced polymatroid each
    buyer's clinch equals y_i exactly and later buyers lose nothing, so the
    result has row sums y and stays inside every seller polymatroid.
    ``choose`` maps a clinching oracle to one of its base points (greedy in
    edge order by default).
    """
    y = {b.id: Fraction(y.get(b.id, 0)) for b in market.buyers}
    if any(v < 0 for v in y.values()):
        raise InfeasibleTransactionsError("negative transaction total")
    w: Dict[Edge, Fraction] = {e: Fraction(0) for e in market.edges}
    d: Dict[str, XRational] = dict(y)
    ctx = RemnantContext(market, w, d)
    if ctx.value(ctx.full_mask) != sum(y.values(), Fraction(0)):
        raise InfeasibleTransactionsError("totals are not jointly feasible for the sellers")
    for b in market.buyers:
        if y[b.id] == 0:
            continue
        h = clinch_oracle(ctx, b.id)
        xi = choose(h) if choose is not None else sm.greedy_base(h, h.ground)
        if sum(xi.values(), Fraction(0)) != y[b.id]:
            raise AssertionError(f"buyer {b.id} could not receive its total")
        for e, v in xi.items():
            w[e] += v
        d[b.id] = Fraction(0)
        ctx = RemnantContext(market, w, d)
    return w
