import json
from fractions import Fraction

import pytest

from polyclinch.cli import main
from polyclinch.market import (Buyer, Market, Seller, load_allocation, load_market, market_to_dict,
                               save_market)


@pytest.fixture
def market_file(tmp_path, table_market):
    path = tmp_path / "market.json"
    save_market(table_market, path)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_prints_table(capsys, market_file):
    code, out, _ = run(capsys, "run", "--market", market_file, "--trace", "table")
    assert code == 0
    assert "12, 8" in out and "7/8" in out
    assert "buyer 1: goods 6  payment 8  utility 10" in out
    assert "seller 2: sold 8  revenue 41/4" in out


def test_run_with_audit(capsys, market_file):
    code, out, _ = run(capsys, "run", "--market", market_file, "--audit")
    assert code == 0
    assert "SBB: pass" in out and "envy-free alpha: 40/41" in out


def test_run_json_and_output_file(capsys, market_file, tmp_path):
    target = tmp_path / "alloc.json"
    code, out, _ = run(capsys, "run", "--market", market_file, "--trace", "json", "--audit", "--output", str(target))
    assert code == 0
    doc = json.loads(out)
    assert doc["audit"]["ok"] is True
    assert doc["allocation"]["p"]["1"]["value"] == "8"
    assert len(doc["trace"]["iterations"]) == 10
    a, m = load_allocation(target)
    assert a.r == {"1": Fraction(35, 4), "2": Fraction(41, 4)} and m is not None


def test_run_is_deterministic(capsys, market_file):
    first = run(capsys, "run", "--market", market_file, "--trace", "json", "--rule", "random:3")
    second = run(capsys, "run", "--market", market_file, "--trace", "json", "--rule", "random:3")
    assert first == second


def test_mechanism1_policies(capsys, market_file):
    code, out, _ = run(capsys, "run", "--market", market_file, "--mechanism", "1", "--trace", "table",
                       "--revenue-policy", "explicit:9,10")
    assert code == 0 and "buyer 1: 4@l=5, 2@l=7" in out and "revenue 9" in out
    code, _, err = run(capsys, "run", "--market", market_file, "--mechanism", "1", "--revenue-policy", "explicit:6,13")
    assert code == 2 and "floor" in err


def test_precondition_error(capsys, market_file):
    code, _, err = run(capsys, "run", "--market", market_file, "--epsilon", "0.3")
    assert code == 2 and "precondition error" in err


def test_bad_rule_is_usage_error(capsys, market_file):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--market", market_file, "--rule", "fair"])
    assert exc.value.code == 2


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "run", "--market", str(tmp_path / "none.json"))
    assert code == 2 and "error" in err


def test_schema_error(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"buyers": [{"id": "1", "bid": "x"}], "sellers": [], "edges": []}))
    code, _, err = run(capsys, "run", "--market", str(path))
    assert code == 2 and "$.buyers[0].bid" in err


@pytest.fixture
def paged_allocation(tmp_path, capsys):
    m = Market([Buyer("1", 4, 10), Buyer("2", 3), Buyer("3", 2, 6)],
               [Seller("A", 1, "page_based", {"slots": [1, 2]}),
                Seller("B", 0, "paged_quality", {"pages": [[3, 1], [2]]})],
               [(i, j) for i in "123" for j in "AB"])
    market_path, alloc_path = tmp_path / "m.json", tmp_path / "a.json"
    save_market(m, market_path)
    assert main(["run", "--market", str(market_path), "--output", str(alloc_path)]) == 0
    capsys.readouterr()
    return str(alloc_path)


def test_slot_page(capsys, paged_allocation):
    code, out, _ = run(capsys, "slot", "--allocation", paged_allocation, "--seller", "A", "--mode", "page")
    assert code == 0 and "page 1:" in out and "page 2:" in out


def test_slot_quality(capsys, paged_allocation):
    code, out, _ = run(capsys, "slot", "--allocation", paged_allocation, "--seller", "B", "--mode", "quality")
    assert code == 0 and "slot 1" in out


def test_slot_errors(capsys, paged_allocation, tmp_path):
    assert run(capsys, "slot", "--allocation", paged_allocation, "--seller", "Z", "--mode", "page")[0] == 2
    assert run(capsys, "slot", "--allocation", paged_allocation, "--seller", "A", "--mode", "quality")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"w": []}')
    code, _, err = run(capsys, "slot", "--allocation", str(bad), "--seller", "A", "--mode", "page")
    assert code == 2 and "schema error" in err


def test_gen(capsys, tmp_path):
    target = tmp_path / "g.json"
    assert main(["gen", "--seed", "42", "--output", str(target)]) == 0
    m = load_market(target)
    assert 1 <= len(m.buyers) <= 3 and 1 <= len(m.sellers) <= 3
    first = run(capsys, "gen", "--seed", "42")[1]
    assert first == run(capsys, "gen", "--seed", "42")[1] == target.read_text()
    empty = json.loads(run(capsys, "gen", "--max-buyers", "0", "--max-sellers", "0")[1])
    assert empty == {"buyers": [], "sellers": [], "edges": []}


def test_audit_command(capsys, market_file):
    code, out, _ = run(capsys, "audit", "--market", market_file, "--suite", "all")
    assert code == 0 and "1/1 instances pass" in out
    code, out, _ = run(capsys, "audit", "--suite", "equivalence", "--seed", "7", "--count", "5")
    assert code == 0 and "5/5" in out


def test_module_entry_point(market_file):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "polyclinch", "run", "--market", market_file],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "buyer 2: goods 9" in proc.stdout
    assert market_to_dict(load_market(market_file))["edges"][0] == ["1", "1"]
