"""Two-sided market data model, preprocessing and JSON ingestion.

Buyers and sellers are identified by strings; an edge is the pair
``(buyer_id, seller_id)``.  Each seller carries a constraint description (a family
name plus parameters) from which its submodular oracle on E_j is built.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import jsonschema

from . import submodular as sm
from .extended import INF, XRational, is_inf, render, to_float, to_rational

VIRTUAL_PREFIX = "virtual:"

Edge = Tuple[str, str]


class MarketError(ValueError):
    pass


class MarketSchemaError(MarketError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class BudgetCurve:
    """Concave nondecreasing piecewise-linear budget phi with phi(0) = 0.

    ``points`` are breakpoints ``(x, phi(x))`` with increasing x starting at
    x = 0; the value given at 0 is the right limit phi(0+), so a hard budget
    B is ``BudgetCurve(((0, B),))``.  Beyond the last breakpoint phi grows
    with ``final_slope``.
    """

    points: Tuple[Tuple[Fraction, Fraction], ...]
    final_slope: Fraction = Fraction(0)

    def __post_init__(self):
        pts = tuple((Fraction(to_rational(x)), Fraction(to_rational(y))) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "final_slope", Fraction(to_rational(self.final_slope)))
        if not pts or pts[0][0] != 0:
            raise MarketError("budget curve must start at x = 0")
        if pts[0][1] < 0:
            raise MarketError("budget curve must be nonnegative")
        slopes = []
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x1 <= x0:
                raise MarketError("budget curve breakpoints must be strictly increasing")
            slopes.append((y1 - y0) / (x1 - x0))
        slopes.append(self.final_slope)
        if any(s < 0 for s in slopes):
            raise MarketError("budget curve must be nondecreasing")
        if any(b > a for a, b in zip(slopes, slopes[1:])):
            raise MarketError("budget curve must be concave")

    def segments(self):
        """Yield ``(x_start, phi(x_start), slope, x_end)``; the last has x_end = inf."""
        pts = self.points
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            yield x0, y0, (y1 - y0) / (x1 - x0), x1
        yield pts[-1][0], pts[-1][1], self.final_slope, INF

    def __call__(self, x) -> Fraction:
        if x == 0:
            return Fraction(0)
        for x0, y0, slope, x1 in self.segments():
            if x <= x1:
                return y0 + slope * (x - x0)
        raise AssertionError("unreachable")

    @property
    def supremum(self) -> XRational:
        return INF if self.final_slope > 0 else self.points[-1][1]


# ---------------------------------------------------------------------------
# participants


@dataclass(frozen=True)
class Buyer:
    id: str
    bid: Fraction
    budget: XRational = INF
    valuation: Optional[Fraction] = None
    budget_curve: Optional[BudgetCurve] = None
    is_virtual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "bid", to_rational(self.bid))
        object.__setattr__(self, "budget", to_rational(self.budget))
        if self.valuation is not None:
            object.__setattr__(self, "valuation", to_rational(self.valuation))
        if is_inf(self.bid) or self.bid < 0:
            raise MarketError(f"buyer {self.id}: bid must be a finite nonnegative rational")
        if self.budget < 0:
            raise MarketError(f"buyer {self.id}: budget must be nonnegative")
        if self.valuation is not None and (is_inf(self.valuation) or self.valuation < 0):
            raise MarketError(f"buyer {self.id}: valuation must be finite and nonnegative")
        if self.budget_curve is not None:
            object.__setattr__(self, "budget", self.budget_curve.supremum)

    @property
    def value(self) -> Fraction:
        """True unit valuation, defaulting to the bid."""
        return self.bid if self.valuation is None else self.valuation

    def budget_at(self, goods) -> XRational:
        """Spending limit after receiving ``goods`` units."""
        if self.budget_curve is not None:
            return self.budget_curve(goods)
        return self.budget


@dataclass(frozen=True)
class Seller:
    id: str
    reserve: Fraction
    family: str = "stock"
    params: Mapping = field(default_factory=dict)
    oracle: Optional[sm.SubmodularOracle] = None

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "reserve", to_rational(self.reserve))
        if is_inf(self.reserve) or self.reserve < 0:
            raise MarketError(f"seller {self.id}: reserve must be a finite nonnegative rational")
        if self.oracle is None and self.family not in FAMILIES:
            raise MarketError(f"seller {self.id}: unknown constraint family {self.family!r}")


def _capacity_oracle(ground, params):
    caps = params["caps"]
    return sm.capacity({e: caps[e[0]] for e in ground})


FAMILIES = {
    "stock": lambda ground, p: sm.stock(ground, p["amount"]),
    "page_based": lambda ground, p: sm.page_based(ground, p["slots"]),
    "quality_based": lambda ground, p: sm.quality_based(ground, p["qualities"]),
    "paged_quality": lambda ground, p: sm.paged_quality(ground, p["pages"]),
    "capacity": _capacity_oracle,
}


def virtual_id(seller_id: str) -> str:
    return VIRTUAL_PREFIX + seller_id


class Market:
    """Bipartite market; immutable after construction."""

    def __init__(self, buyers: Sequence[Buyer], sellers: Sequence[Seller], edges: Sequence[Edge]):
        self.buyers: Tuple[Buyer, ...] = tuple(buyers)
        self.sellers: Tuple[Seller, ...] = tuple(sellers)
        self.edges: Tuple[Edge, ...] = tuple((str(i), str(j)) for i, j in edges)
        self.buyer = {b.id: b for b in self.buyers}
        self.seller = {s.id: s for s in self.sellers}
        if len(self.buyer) != len(self.buyers):
            raise MarketError("buyer ids must be unique")
        if len(self.seller) != len(self.sellers):
            raise MarketError("seller ids must be unique")
        if len(set(self.edges)) != len(self.edges):
            raise MarketError("duplicate edge")
        self.buyer_edges: Dict[str, Tuple[Edge, ...]] = {b.id: () for b in self.buyers}
        self.seller_edges: Dict[str, Tuple[Edge, ...]] = {s.id: () for s in self.sellers}
        for e in self.edges:
            i, j = e
            if i not in self.buyer or j not in self.seller:
                raise MarketError(f"edge {e} references an unknown buyer or seller")
            self.buyer_edges[i] += (e,)
            self.seller_edges[j] += (e,)
        self.oracles: Dict[str, sm.SubmodularOracle] = {}
        self.base_oracles: Dict[str, sm.SubmodularOracle] = {}
        for s in self.sellers:
            vid = virtual_id(s.id)
            real = tuple(e for e in self.seller_edges[s.id] if e[0] != vid)
            base = s.oracle if s.oracle is not None else FAMILIES[s.family](real, s.params)
            if set(base.ground) != set(real):
                raise MarketError(f"seller {s.id}: oracle ground set differs from its edges")
            self.base_oracles[s.id] = base
            virtual = (vid, s.id)
            if vid in self.buyer:
                if virtual not in self.seller_edges[s.id] or len(self.buyer_edges[vid]) != 1:
                    raise MarketError(f"virtual buyer {vid} must have exactly the edge to {s.id}")
                self.oracles[s.id] = sm.virtual_extended(base, virtual)
            else:
                self.oracles[s.id] = base
        self._full = None

    def __repr__(self):
        return f"Market(n={len(self.buyers)}, m={len(self.sellers)}, |E|={len(self.edges)})"

    @property
    def has_virtual(self) -> bool:
        return any(b.is_virtual for b in self.buyers)

    @property
    def real_buyers(self) -> Tuple[Buyer, ...]:
        return tuple(b for b in self.buyers if not b.is_virtual)

    def full_oracle(self) -> sm.DirectSum:
        """Direct sum of all seller oracles on E."""
        if self._full is None:
            self._full = sm.direct_sum([self.oracles[s.id] for s in self.sellers])
        return self._full

    def supply(self, seller_id: str) -> Fraction:
        """f_j(E_j) on the seller's real edges."""
        base = self.base_oracles[seller_id]
        return base(base.ground)


@dataclass
class Allocation:
    """Transactions ``w`` on edges, payments ``p`` and revenues ``r``."""

    w: Dict[Edge, Fraction]
    p: Dict[str, Fraction]
    r: Dict[str, Fraction]
    unsold: Dict[str, Fraction] = field(default_factory=dict)

    def goods(self, market: Market, buyer_id: str) -> Fraction:
        return sum((self.w.get(e, Fraction(0)) for e in market.buyer_edges[buyer_id]), Fraction(0))

    def sold(self, market: Market, seller_id: str) -> Fraction:
        return sum((self.w.get(e, Fraction(0)) for e in market.seller_edges[seller_id]
                    if not market.buyer[e[0]].is_virtual), Fraction(0))

    def buyer_utility(self, market: Market, buyer_id: str) -> Fraction:
        return market.buyer[buyer_id].value * self.goods(market, buyer_id) - self.p.get(buyer_id, Fraction(0))

    def seller_utility(self, market: Market, seller_id: str) -> Fraction:
        s = market.seller[seller_id]
        return self.r.get(seller_id, Fraction(0)) + s.reserve * (market.supply(seller_id) - self.sold(market, seller_id))


# ---------------------------------------------------------------------------
# preprocessing


def add_virtual_buyers(market: Market) -> Market:
    """Give every seller a virtual buyer bidding its reserve with unlimited budget."""
    if market.has_virtual:
        raise MarketError("market already has virtual buyers")
    virtual = [Buyer(virtual_id(s.id), s.reserve, INF, valuation=s.reserve, is_virtual=True)
               for s in market.sellers]
    edges = list(market.edges) + [(virtual_id(s.id), s.id) for s in market.sellers]
    return Market(list(market.buyers) + virtual, market.sellers, edges)


def reduce_to_one_sided(market: Market) -> sm.SubmodularOracle:
    """g(X) = f(E_X) on the buyer set."""
    f = market.full_oracle()
    return sm.SubmodularOracle(
        [b.id for b in market.buyers],
        lambda X: f([e for i in X for e in market.buyer_edges[i]]),
        name="reduced",
    )


def strip_virtual(allocation: Allocation, market: Market) -> Allocation:
    """Turn virtual purchases into unsold stock and net them out of revenue."""
    w = {e: v for e, v in allocation.w.items() if not market.buyer[e[0]].is_virtual}
    p = {i: v for i, v in allocation.p.items() if not market.buyer[i].is_virtual}
    r = dict(allocation.r)
    unsold = {}
    for s in market.sellers:
        vid = virtual_id(s.id)
        if vid not in market.buyer:
            continue
        r[s.id] = r.get(s.id, Fraction(0)) - allocation.p.get(vid, Fraction(0))
        unsold[s.id] = allocation.w.get((vid, s.id), Fraction(0))
        if r[s.id] < 0:
            raise MarketError(f"seller {s.id} ends with negative revenue {r[s.id]}")
    return Allocation(w, p, r, unsold)


# ---------------------------------------------------------------------------
# JSON files

_NUM = {"type": ["string", "number"]}
MARKET_SCHEMA = {
    "type": "object",
    "required": ["buyers", "sellers", "edges"],
    "properties": {
        "buyers": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "bid"],
            "properties": {
                "id": {"type": ["string", "integer"]},
                "bid": _NUM,
                "budget": _NUM,
                "valuation": _NUM,
                "budget_curve": {
                    "type": "object",
                    "required": ["points"],
                    "properties": {
                        "points": {"type": "array", "minItems": 1,
                                   "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUM}},
                        "final_slope": _NUM,
                    },
                },
            },
        }},
        "sellers": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "reserve", "constraint"],
            "properties": {
                "id": {"type": ["string", "integer"]},
                "reserve": _NUM,
                "constraint": {
                    "type": "object",
                    "required": ["family"],
                    "properties": {"family": {"enum": sorted(FAMILIES)}, "params": {"type": "object"}},
                },
            },
        }},
        "edges": {"type": "array", "items": {
            "type": "array", "minItems": 2, "maxItems": 2, "items": {"type": ["string", "integer"]}}},
    },
}


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _num(value, path):
    try:
        return to_rational(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise MarketSchemaError(path, f"not a rational: {value!r}") from exc


def market_from_dict(data: Mapping) -> Market:
    try:
        jsonschema.validate(data, MARKET_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise MarketSchemaError(_path(exc.absolute_path), exc.message) from None
    buyers = []
    for k, b in enumerate(data["buyers"]):
        here = f"$.buyers[{k}]"
        try:
            curve = None
            if "budget_curve" in b:
                bc = b["budget_curve"]
                curve = BudgetCurve(
                    tuple((_num(x, f"{here}.budget_curve"), _num(y, f"{here}.budget_curve"))
                          for x, y in bc["points"]),
                    _num(bc.get("final_slope", 0), f"{here}.budget_curve.final_slope"))
            buyers.append(Buyer(
                b["id"], _num(b["bid"], f"{here}.bid"),
                _num(b.get("budget", "inf"), f"{here}.budget"),
                None if "valuation" not in b else _num(b["valuation"], f"{here}.valuation"),
                curve))
        except MarketError as exc:
            if isinstance(exc, MarketSchemaError):
                raise
            raise MarketSchemaError(here, str(exc)) from None
    sellers = []
    for k, s in enumerate(data["sellers"]):
        here = f"$.sellers[{k}]"
        try:
            sellers.append(Seller(s["id"], _num(s["reserve"], f"{here}.reserve"),
                                  s["constraint"]["family"], dict(s["constraint"].get("params", {}))))
        except MarketError as exc:
            raise MarketSchemaError(here, str(exc)) from None
    try:
        return Market(buyers, sellers, [tuple(e) for e in data["edges"]])
    except (MarketError, KeyError, TypeError, ValueError) as exc:
        raise MarketSchemaError("$", f"{type(exc).__name__}: {exc}") from None


def _params_to_json(params):
    if isinstance(params, Mapping):
        return {str(k): _params_to_json(v) for k, v in params.items()}
    if isinstance(params, (list, tuple)):
        return [_params_to_json(v) for v in params]
    if isinstance(params, Fraction):
        return render(params)
    return params


def market_to_dict(market: Market) -> dict:
    if market.has_virtual:
        raise MarketError("serialize the market before adding virtual buyers")
    buyers = []
    for b in market.buyers:
        entry = {"id": b.id, "bid": render(b.bid)}
        if b.budget_curve is not None:
            entry["budget_curve"] = {
                "points": [[render(x), render(y)] for x, y in b.budget_curve.points],
                "final_slope": render(b.budget_curve.final_slope),
            }
        else:
            entry["budget"] = render(b.budget)
        if b.valuation is not None:
            entry["valuation"] = render(b.valuation)
        buyers.append(entry)
    sellers = []
    for s in market.sellers:
        if s.oracle is not None:
            raise MarketError(f"seller {s.id} uses a custom oracle that cannot be serialized")
        sellers.append({"id": s.id, "reserve": render(s.reserve),
                        "constraint": {"family": s.family, "params": _params_to_json(s.params)}})
    return {"buyers": buyers, "sellers": sellers, "edges": [list(e) for e in market.edges]}


def load_market(path) -> Market:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MarketSchemaError("$", f"invalid JSON: {exc}") from None
    return market_from_dict(data)


def save_market(market: Market, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(market_to_dict(market), fh, indent=2)
        fh.write("\n")


def exact(x) -> dict:
    """A rational as ``{"value": "p/q", "decimal": float}``."""
    return {"value": render(x), "decimal": to_float(x)}


def allocation_to_dict(allocation: Allocation, market: Optional[Market] = None) -> dict:
    out = {
        "w": [{"buyer": i, "seller": j, **exact(v)} for (i, j), v in allocation.w.items()],
        "p": {i: exact(v) for i, v in allocation.p.items()},
        "r": {j: exact(v) for j, v in allocation.r.items()},
        "unsold": {j: exact(v) for j, v in allocation.unsold.items()},
    }
    if market is not None:
        out["market"] = market_to_dict(market)
    return out


def _read_exact(entry, path):
    if not isinstance(entry, Mapping) or "value" not in entry:
        raise MarketSchemaError(path, "expected an object with a 'value' field")
    return _num(entry["value"], f"{path}.value")


def allocation_from_dict(data: Mapping) -> Tuple[Allocation, Optional[Market]]:
    if not isinstance(data, Mapping):
        raise MarketSchemaError("$", "allocation must be an object")
    for key in ("w", "p", "r"):
        if key not in data:
            raise MarketSchemaError("$", f"missing field {key!r}")
    w = {}
    for k, entry in enumerate(data["w"]):
        try:
            edge = (str(entry["buyer"]), str(entry["seller"]))
        except (KeyError, TypeError):
            raise MarketSchemaError(f"$.w[{k}]", "expected buyer and seller fields") from None
        w[edge] = _read_exact(entry, f"$.w[{k}]")
    p = {str(i): _read_exact(v, f"$.p.{i}") for i, v in data["p"].items()}
    r = {str(j): _read_exact(v, f"$.r.{j}") for j, v in data["r"].items()}
    unsold = {str(j): _read_exact(v, f"$.unsold.{j}") for j, v in data.get("unsold", {}).items()}
    market = market_from_dict(data["market"]) if "market" in data else None
    return Allocation(w, p, r, unsold), market


def save_allocation(allocation: Allocation, path, market: Optional[Market] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(allocation_to_dict(allocation, market), fh, indent=2)
        fh.write("\n")


def load_allocation(path) -> Tuple[Allocation, Optional[Market]]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MarketSchemaError("$", f"invalid JSON: {exc}") from None
    return allocation_from_dict(data)


# ---------------------------------------------------------------------------
# instances


def example_market() -> Market:
    """Two buyers, two stock sellers: B=(12,11), bids 3, reserves 1, stocks (7,8)."""
    buyers = [Buyer("1", 3, 12, valuation=3), Buyer("2", 3, 11, valuation=3)]
    sellers = [Seller("1", 1, "stock", {"amount": 7}), Seller("2", 1, "stock", {"amount": 8})]
    edges = [("1", "1"), ("1", "2"), ("2", "1"), ("2", "2")]
    return Market(buyers, sellers, edges)


def envy_market() -> Market:
    """Unit stocks at reserve 0; buyer 2 only reaches seller 2."""
    buyers = [Buyer("1", 2, 1, valuation=2), Buyer("2", 1, INF, valuation=1)]
    sellers = [Seller("1", 0, "stock", {"amount": 1}), Seller("2", 0, "stock", {"amount": 1})]
    edges = [("1", "1"), ("1", "2"), ("2", "2")]
    return Market(buyers, sellers, edges)


def random_market(seed: int, max_buyers: int = 3, max_sellers: int = 3, max_value: int = 8,
                  families: Sequence[str] = ("stock",), min_value: int = 1) -> Market:
    """Seeded random market with integer parameters in ``[min_value, max_value]``.

    Bids and reserves are integers, so every instance satisfies the
    bids-are-multiples-of-epsilon precondition for epsilon = 1.
    """
    rng = random.Random(seed)
    n = rng.randint(1, max_buyers) if max_buyers > 0 else 0
    m = rng.randint(1, max_sellers) if max_sellers > 0 else 0
    buyers = []
    for i in range(1, n + 1):
        bid = rng.randint(min_value, max_value)
        buyers.append(Buyer(str(i), bid, rng.randint(min_value, max_value), valuation=bid))
    edges = []
    for i in range(1, n + 1):
        if m == 0:
            break
        linked = rng.sample(range(1, m + 1), rng.randint(1, m))
        edges.extend((str(i), str(j)) for j in sorted(linked))
    edges.sort(key=lambda e: (int(e[0]), int(e[1])))
    sellers = []
    for j in range(1, m + 1):
        family = rng.choice(list(families))
        degree = sum(1 for e in edges if e[1] == str(j))
        if family == "stock":
            params = {"amount": rng.randint(min_value, max_value)}
        elif family == "page_based":
            params = {"slots": [rng.randint(1, max(1, degree)) for _ in range(rng.randint(1, 2))]}
        elif family == "quality_based":
            params = {"qualities": [rng.randint(1, max_value) for _ in range(max(1, degree))]}
        else:
            raise MarketError(f"random_market does not generate family {family!r}")
        sellers.append(Seller(str(j), rng.randint(0, max_value // 2), family, params))
    return Market(buyers, sellers, edges)
