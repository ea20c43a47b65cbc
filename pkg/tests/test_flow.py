import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from polyclinch import submodular as sm
from polyclinch.extended import INF
from polyclinch.flow import (InfeasibleTransactionsError, OneSidedContext, PolyNetwork, RemnantContext,
                             clinch_oracle, f_wd, f_wd_bruteforce, g_wd, max_flow, min_cut_value,
                             recover_transactions, transaction_network)
from polyclinch.mechanisms import run_algorithm2
from polyclinch.market import Buyer, Market, Seller, add_virtual_buyers, random_market, reduce_to_one_sided

from strategies import random_context


@pytest.fixture(scope="module")
def pre(table_market):
    return add_virtual_buyers(table_market)


def test_first_clinch_of_worked_instance(pre):
    d = {"1": Fraction(12), "2": Fraction(11), "virtual:1": Fraction(0), "virtual:2": Fraction(0)}
    ctx = RemnantContext(pre, {}, d)
    E = list(pre.edges)
    rest = [e for e in E if e[0] != "1"]
    assert f_wd(ctx, E) - f_wd(ctx, rest) == 4
    assert f_wd(ctx, E) == f_wd_bruteforce(ctx, E) == 15


def test_empty_set_has_no_remnant(pre):
    assert f_wd(RemnantContext(pre, {}, {}), []) == 0


def test_unlimited_demands_give_contraction(pre):
    w = {("1", "1"): Fraction(2), ("2", "2"): Fraction(3)}
    ctx = RemnantContext(pre, w, {})
    for r in range(len(pre.edges) + 1):
        for F in itertools.combinations(pre.edges, r):
            assert f_wd(ctx, F) == ctx.f_w(ctx._mask(F))


def test_base_point_leaves_nothing(pre):
    w = {("1", "1"): Fraction(7), ("2", "2"): Fraction(8)}
    ctx = RemnantContext(pre, w, {b.id: Fraction(5) for b in pre.buyers})
    assert f_wd(ctx, pre.edges) == 0 == f_wd_bruteforce(ctx, pre.edges)


def test_infeasible_transactions_rejected(pre):
    with pytest.raises(sm.InfeasibleVectorError):
        RemnantContext(pre, {("1", "1"): Fraction(8)}, {})


def test_unknown_edge(pre):
    with pytest.raises(sm.GroundSetError):
        f_wd(RemnantContext(pre, {}, {}), [("9", "9")])


@given(st.integers(0, 10**6))
def test_formula_matches_linear_program(seed):
    ctx = random_context(seed, max_edges=6)
    for r in range(len(ctx.market.edges) + 1):
        for F in itertools.combinations(ctx.market.edges, r):
            assert f_wd(ctx, F) == f_wd_bruteforce(ctx, F)


def auction_states(seed):
    """Every remnant context seen by the clinch hook during one run."""
    states = []
    market = random_market(seed)
    run_algorithm2(add_virtual_buyers(market), 1, on_clinch=lambda ctx, cp, xi, k: states.append(ctx))
    return states


@given(st.integers(0, 10**6))
def test_one_sided_matches_two_sided_along_runs(seed):
    for ctx in auction_states(seed):
        m = ctx.market
        g = reduce_to_one_sided(m)
        y = {b.id: sum((ctx.w[e] for e in m.buyer_edges[b.id]), Fraction(0)) for b in m.buyers}
        one = OneSidedContext(g, y, ctx.d)
        ids = [b.id for b in m.buyers]
        for r in range(len(ids) + 1):
            for X in itertools.combinations(ids, r):
                assert g_wd(one, X) == f_wd(ctx, [e for i in X for e in m.buyer_edges[i]])


def test_edge_contraction_can_undercut_buyer_contraction():
    """Off the auction path the two sides may differ: the edge form is never larger."""
    for seed in range(20):
        ctx = random_context(seed)
        m = ctx.market
        y = {b.id: sum((ctx.w[e] for e in m.buyer_edges[b.id]), Fraction(0)) for b in m.buyers}
        one = OneSidedContext(reduce_to_one_sided(m), y, ctx.d)
        for b in m.buyers:
            assert f_wd(ctx, m.buyer_edges[b.id]) <= g_wd(one, [b.id])


@given(st.integers(0, 10**6))
def test_monotone_in_edges(seed):
    ctx = random_context(seed, max_edges=7)
    n = len(ctx.market.edges)
    for mask in range(1 << n):
        for k in range(n):
            assert ctx.value(mask) <= ctx.value(mask | 1 << k)


@given(st.integers(0, 10**6))
def test_clinch_oracle_is_polymatroid_rank(seed):
    ctx = random_context(seed)
    for b in ctx.market.buyers:
        assert sm.verify_submodular(clinch_oracle(ctx, b.id)).ok


@given(st.integers(0, 10**6))
def test_remnant_in_buyers_is_submodular(seed):
    ctx = random_context(seed)
    m = ctx.market
    ids = [b.id for b in m.buyers]
    for i in ids:
        for r in range(len(m.buyer_edges[i]) + 1):
            for F in itertools.combinations(m.buyer_edges[i], r):
                drop = set(m.buyer_edges[i]) - set(F)
                oracle = sm.SubmodularOracle(
                    ids, lambda X: f_wd(ctx, [e for j in X for e in m.buyer_edges[j] if e not in drop]))
                assert sm.verify_submodular(oracle).ok


def test_zero_capacity_network():
    net = PolyNetwork(["s", "a", "t"], [("s", "a"), ("a", "t")], "s", "t", {("s", "a"): Fraction(0)})
    assert max_flow(net)[0] == 0 == min_cut_value(net)


def test_unbounded_network():
    net = PolyNetwork(["s", "t"], [("s", "t")], "s", "t")
    assert max_flow(net)[0] == INF == min_cut_value(net)


def test_seller_rank_as_flow():
    nodes = ["s", "1", "2", "a", "t"]
    arcs = [("s", "1"), ("s", "2"), ("1", "a"), ("2", "a"), ("a", "t")]
    caps = {("a", "t"): Fraction(5), ("s", "1"): Fraction(4), ("s", "2"): Fraction(4)}
    net = PolyNetwork(nodes, arcs, "s", "t", caps)
    assert max_flow(net)[0] == 5 == min_cut_value(net)


def random_network(seed):
    rng = random.Random(seed)
    inner = [f"v{k}" for k in range(rng.randint(1, 3))]
    nodes = ["s", *inner, "t"]
    arcs = [(a, b) for a in ["s", *inner] for b in [*inner, "t"] if a != b and rng.random() < 0.7]
    caps = {a: Fraction(rng.randint(0, 6)) for a in arcs if rng.random() < 0.8}
    in_oracles = {}
    for v in [*inner, "t"]:
        entering = tuple(a for a in arcs if a[1] == v)
        if entering and rng.random() < 0.5:
            in_oracles[v] = sm.stock(entering, rng.randint(0, 6))
    out_oracles = {}
    for v in ["s", *inner]:
        leaving = tuple(a for a in arcs if a[0] == v)
        if leaving and rng.random() < 0.5:
            out_oracles[v] = sm.quality_based(leaving, [rng.randint(0, 4) for _ in leaving])
    return PolyNetwork(nodes, arcs, "s", "t", caps, out_oracles, in_oracles)


@pytest.mark.parametrize("seed", range(100))
def test_max_flow_equals_min_cut(seed):
    net = random_network(seed)
    assert max_flow(net)[0] == min_cut_value(net)


def test_worked_recovery(pre):
    y = {"1": Fraction(6), "2": Fraction(9), "virtual:1": Fraction(0), "virtual:2": Fraction(0)}
    w = recover_transactions(pre, y)
    assert w[("1", "1")] + w[("1", "2")] == 6 and w[("2", "1")] + w[("2", "2")] == 9
    assert w[("1", "1")] + w[("2", "1")] == 7 and w[("1", "2")] + w[("2", "2")] == 8
    assert max_flow(transaction_network(pre, y))[0] == 15


def test_single_seller_recovery():
    m = Market([Buyer("1", 1), Buyer("2", 1)], [Seller("a", 0, "stock", {"amount": 5})], [("1", "a"), ("2", "a")])
    assert recover_transactions(m, {"1": Fraction(2), "2": Fraction(3)}) == {("1", "a"): 2, ("2", "a"): 3}


def test_infeasible_totals(pre):
    with pytest.raises(InfeasibleTransactionsError):
        recover_transactions(pre, {"1": Fraction(16)})
    with pytest.raises(InfeasibleTransactionsError):
        recover_transactions(pre, {"1": Fraction(-1)})


@given(st.integers(0, 10**6))
def test_recovered_transactions_are_feasible(seed):
    ctx = random_context(seed)
    m = ctx.market
    y = {b.id: sum((ctx.w[e] for e in m.buyer_edges[b.id]), Fraction(0)) for b in m.buyers}
    w = recover_transactions(m, y)
    for b in m.buyers:
        assert sum((w[e] for e in m.buyer_edges[b.id]), Fraction(0)) == y[b.id]
    for s in m.sellers:
        f = m.oracles[s.id]
        assert sm.member(f, {e: w[e] for e in f.ground})
