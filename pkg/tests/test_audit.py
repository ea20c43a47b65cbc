from dataclasses import replace
from fractions import Fraction

import pytest

from polyclinch import audit as au
from polyclinch.clinching import ClinchRule
from polyclinch.market import Allocation, Buyer, Market, Seller, envy_market
from polyclinch.mechanisms import Trace, mechanism2

F = Fraction


def test_standard_checks_pass_on_worked_run(table_run, table_market):
    a, trace = table_run
    report = au.audit_run(table_market, 1, a=a, trace=trace)
    assert report.ok, str(report)
    assert [a.buyer_utility(table_market, i) for i in "12"] == [10, 16]


def test_zero_allocation_is_individually_rational(table_market):
    empty = Allocation({e: F(0) for e in table_market.edges}, {}, {})
    assert au.check_irb(empty, table_market) and au.check_irs(empty, table_market) and au.check_sbb(empty)


def test_overcharged_buyer_is_flagged(table_run, table_market):
    a, _ = table_run
    bad = Allocation(a.w, {**a.p, "1": F(19)}, a.r)
    verdict = au.check_irb(bad, table_market)
    assert not verdict and "buyer 1" in verdict.witness
    assert not au.check_sbb(bad)


def test_underpaid_seller_is_flagged(table_run, table_market):
    a, _ = table_run
    verdict = au.check_irs(Allocation(a.w, a.p, {**a.r, "1": F(0)}), table_market)
    assert not verdict and "seller 1" in verdict.witness


def test_zero_reserve_is_always_individually_rational():
    m = Market([Buyer("1", 2)], [Seller("1", 0, "stock", {"amount": 3})], [("1", "1")])
    assert au.check_irs(Allocation({("1", "1"): F(3)}, {}, {"1": F(0)}), m)


def test_budget_violation(table_run, table_market):
    a, _ = table_run
    assert not au.check_budgets(Allocation(a.w, {**a.p, "1": F(13)}, a.r), table_market)


def test_truthful_bidding_is_optimal_on_small_grid(table_market):
    assert au.check_icb_empirical(table_market, 1, grid=lambda v: range(7))
    assert au.check_icb_empirical(table_market, 1, grid=lambda v: [v])


def test_profitable_deviation_is_reported(monkeypatch):
    m = Market([Buyer("1", 4, 4, valuation=4)], [Seller("1", 0, "stock", {"amount": 1})], [("1", "1")])

    def first_price(market, epsilon):
        bid = market.buyer["1"].bid
        return {"1": (F(1), bid)} if bid > 0 else {"1": (F(0), F(0))}

    monkeypatch.setattr(au, "buyer_outcomes", first_price)
    verdict = au.check_icb_empirical(m, 1)
    assert not verdict and "bidding 1" in verdict.witness


def test_pareto_refuter(table_run, table_market):
    a, _ = table_run
    assert au.check_po_exhaustive(a, table_market, F(1, 8))
    corrupted = Allocation({**a.w, ("1", "1"): F(0)}, a.p, a.r, a.unsold)
    verdict = au.check_po_exhaustive(corrupted, table_market, F(1, 8))
    assert not verdict and "dominated" in verdict.witness


def test_pareto_on_lone_buyer():
    m = Market([Buyer("1", 3, 5)], [Seller("1", 1, "stock", {"amount": 2})], [("1", "1")])
    a, _ = mechanism2(m, 1)
    assert au.check_po_exhaustive(a, m, F(1, 8))


def test_pareto_rejects_budget_curves():
    from polyclinch.market import BudgetCurve
    m = Market([Buyer("1", 3, budget_curve=BudgetCurve(((0, 2),)))], [Seller("1", 1, "stock", {"amount": 2})],
               [("1", "1")])
    with pytest.raises(ValueError):
        au.check_po_exhaustive(Allocation({("1", "1"): F(0)}, {}, {}), m)


def test_equivalence(table_market):
    assert au.check_equivalence(table_market, 1)
    assert au.check_equivalence(Market([Buyer("1", 1)], [Seller("1", 0, "stock", {"amount": 1})], []), 1)


@pytest.mark.parametrize("order, alpha", [(("1", "2"), F(2, 3)), (("2", "1"), F(8, 11))])
def test_envy_alpha_for_ordered_rules(table_market, order, alpha):
    _, trace = mechanism2(table_market, 1, ClinchRule("ordered", order))
    assert au.envy_alpha(trace, table_market) == alpha


def test_envy_alpha_for_midpoint(table_run, table_market):
    _, trace = table_run
    # r_1 / (min(1, s_1 / s_2) * r_2) with both buyers trading with both sellers
    expected = F(35, 4) / (F(7, 8) * F(41, 4))
    assert au.envy_alpha(trace, table_market) == expected == F(40, 41)


def test_envy_alpha_single_seller():
    m = Market([Buyer("1", 2), Buyer("2", 2)], [Seller("1", 0, "stock", {"amount": 2})], [("1", "1"), ("2", "1")])
    _, trace = mechanism2(m, 1)
    assert au.envy_alpha(trace, m) == 1


def test_envy_alpha_on_small_instance():
    m = envy_market()
    _, trace = mechanism2(m, 1)
    assert au.envy_alpha(trace, m) <= 1


def test_trace_checks_catch_tampering(table_run):
    _, trace = table_run
    assert au.check_unsold_rule(trace) and au.check_demand_monotone(trace)
    def copied():
        return Trace(trace.algorithm, trace.market, trace.epsilon, trace.rule,
                     [replace(rec, c=dict(rec.c), d=dict(rec.d)) for rec in trace.records])

    early = copied()
    early.records[4].c["virtual:1"] = F(0)
    assert not au.check_unsold_rule(early)
    rising = copied()
    rising.records[6].d["1"] = F(50)
    assert not au.check_demand_monotone(rising)


def test_replay(table_run):
    a, trace = table_run
    assert au.check_replay(trace, a)
    assert not au.check_replay(trace, Allocation(a.w, {**a.p, "1": F(0)}, a.r))
