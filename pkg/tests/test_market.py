import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from polyclinch import submodular as sm
from polyclinch.extended import INF
from polyclinch.market import (Allocation, BudgetCurve, Buyer, Market, MarketError, MarketSchemaError, Seller,
                               add_virtual_buyers, allocation_from_dict, allocation_to_dict, load_market,
                               market_from_dict, market_to_dict, random_market, reduce_to_one_sided,
                               save_allocation, load_allocation, strip_virtual, virtual_id)


def example_dict():
    return {
        "buyers": [{"id": "1", "bid": 3, "budget": 12}, {"id": "2", "bid": 3, "budget": 11}],
        "sellers": [{"id": "1", "reserve": 1, "constraint": {"family": "stock", "params": {"amount": 7}}},
                    {"id": "2", "reserve": 1, "constraint": {"family": "stock", "params": {"amount": 8}}}],
        "edges": [["1", "1"], ["1", "2"], ["2", "1"], ["2", "2"]],
    }


def test_load_example(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(example_dict()))
    m = load_market(path)
    assert (len(m.buyers), len(m.sellers), len(m.edges)) == (2, 2, 4)


def test_roundtrip(table_market):
    again = market_from_dict(json.loads(json.dumps(market_to_dict(table_market))))
    assert market_to_dict(again) == market_to_dict(table_market)


def test_duplicate_edge_is_schema_error():
    data = example_dict()
    data["edges"].append(["1", "1"])
    with pytest.raises(MarketSchemaError):
        market_from_dict(data)


def test_non_concave_curve_is_schema_error():
    data = example_dict()
    data["buyers"][0].pop("budget")
    data["buyers"][0]["budget_curve"] = {"points": [[0, 0], [1, 1], [2, 5]]}
    with pytest.raises(MarketSchemaError) as err:
        market_from_dict(data)
    assert "$.buyers[0]" in str(err.value)


def test_schema_error_reports_path():
    data = example_dict()
    data["buyers"][0]["bid"] = "three"
    with pytest.raises(MarketSchemaError) as err:
        market_from_dict(data)
    assert "$.buyers[0].bid" in str(err.value)


def test_invalid_family_rejected():
    data = example_dict()
    data["sellers"][0]["constraint"]["family"] = "magic"
    with pytest.raises(MarketSchemaError):
        market_from_dict(data)


def test_negative_bid_rejected():
    with pytest.raises(MarketError):
        Buyer("1", -1)


def test_budget_curve_evaluation():
    curve = BudgetCurve(((0, 2), (4, 6)), final_slope=Fraction(1, 2))
    assert curve(0) == 0
    assert curve(2) == 4
    assert curve(8) == 8
    assert curve.supremum == INF
    assert BudgetCurve(((0, 5),)).supremum == 5


def test_virtual_buyers(table_market):
    pre = add_virtual_buyers(table_market)
    assert [b.id for b in pre.buyers] == ["1", "2", "virtual:1", "virtual:2"]
    f = pre.oracles["1"]
    assert f([("virtual:1", "1")]) == 7
    assert f(f.ground) == 7
    assert add_virtual_buyers(Market([Buyer("1", 1)], [], [])).buyers == (Buyer("1", 1),)


def test_reduced_oracle(table_market):
    g = reduce_to_one_sided(add_virtual_buyers(table_market))
    assert g(g.ground) == 15
    assert g(["virtual:1"]) == 7 and g(["virtual:2"]) == 8
    assert g(["1"]) == 15
    assert g([]) == 0
    assert sm.verify_submodular(g).ok


def test_strip_virtual_moves_virtual_purchases_to_unsold(table_market):
    pre = add_virtual_buyers(table_market)
    w = {e: Fraction(0) for e in pre.edges}
    w[("1", "1")] = Fraction(5)
    w[("virtual:1", "1")] = Fraction(2)
    a = Allocation(w, {"1": Fraction(10), "virtual:1": Fraction(2)}, {"1": Fraction(12), "2": Fraction(0)})
    out = strip_virtual(a, pre)
    assert out.unsold["1"] == 2
    assert out.r["1"] == 10
    assert sum(out.p.values()) - sum(out.r.values()) == sum(a.p.values()) - sum(a.r.values())


def test_strip_without_virtual_payments_keeps_revenue(table_market):
    pre = add_virtual_buyers(table_market)
    a = Allocation({e: Fraction(0) for e in pre.edges}, {}, {"1": Fraction(3), "2": Fraction(1)})
    assert strip_virtual(a, pre).r == {"1": 3, "2": 1}


def test_allocation_roundtrip(tmp_path, table_run, table_market):
    a, _ = table_run
    path = tmp_path / "a.json"
    save_allocation(a, path, table_market)
    again, m = load_allocation(path)
    assert again.w == a.w and again.p == a.p and again.r == a.r and again.unsold == a.unsold
    assert market_to_dict(m) == market_to_dict(table_market)
    assert allocation_from_dict(allocation_to_dict(a))[1] is None


def test_random_market_empty_and_deterministic():
    empty = random_market(0, 0, 0)
    assert not empty.buyers and not empty.sellers
    assert market_to_dict(random_market(42)) == market_to_dict(random_market(42))


def test_unknown_edge_endpoint():
    with pytest.raises(MarketError):
        Market([Buyer("1", 1)], [Seller("1", 0, "stock", {"amount": 1})], [("1", "2")])


@given(st.integers(0, 10_000))
def test_extended_oracles_are_submodular(seed):
    pre = add_virtual_buyers(random_market(seed, families=("stock", "page_based", "quality_based")))
    for s in pre.sellers:
        assert sm.verify_submodular(pre.oracles[s.id]).ok
    assert all(virtual_id(s.id) in pre.buyer for s in pre.sellers)
