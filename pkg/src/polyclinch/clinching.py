"""Clinching polytopes and rules for picking a maximal clinching vector."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Tuple

from . import submodular as sm
from .flow import RemnantContext, clinch_oracle
from .market import Edge

EXACT_MIDPOINT_LIMIT = 12
MIDPOINT_SAMPLES = 720


@dataclass(frozen=True)
class ClinchPolytope:
    """Polymatroid of clinch vectors for one buyer under a (w, d) snapshot."""

    buyer: str
    h: sm.SubmodularOracle

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return self.h.ground

    def total(self) -> Fraction:
        return self.h(self.h.ground)


def build_clinch_polytope(ctx: RemnantContext, i: str) -> ClinchPolytope:
    if i not in ctx.buyer_mask:
        raise KeyError(f"unknown buyer {i!r}")
    return ClinchPolytope(i, clinch_oracle(ctx, i))


def clinch_total(ctx: RemnantContext, i: str) -> Fraction:
    """Amount buyer i clinches now, whatever maximal vector is chosen."""
    full = ctx.full_mask
    return ctx.value(full) - ctx.value(full & ~ctx.buyer_mask[i])


@dataclass(frozen=True)
class ClinchRule:
    """``midpoint``, ``ordered`` with a seller priority list, or ``random`` with a seed."""

    kind: str = "midpoint"
    order: Tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("midpoint", "ordered", "random"):
            raise ValueError(f"unknown clinch rule {self.kind!r}")

    def __str__(self):
        if self.kind == "ordered":
            return "ordered:" + ",".join(self.order)
        if self.kind == "random":
            return f"random:{self.seed}"
        return "midpoint"

    @classmethod
    def parse(cls, text: str) -> "ClinchRule":
        """Parse ``midpoint``, ``ordered:<sellers,...>`` or ``random:<seed>``."""
        kind, _, arg = text.strip().partition(":")
        if kind == "midpoint" and not arg:
            return cls("midpoint")
        if kind == "ordered" and arg:
            return cls("ordered", tuple(s.strip() for s in arg.split(",") if s.strip()))
        if kind == "random" and arg:
            try:
                return cls("random", seed=int(arg))
            except ValueError:
                raise ValueError(f"random rule needs an integer seed, got {arg!r}") from None
        raise ValueError(f"cannot parse clinch rule {text!r}")

    def rng(self) -> random.Random:
        return random.Random(self.seed)


def shapley_point(h: sm.SubmodularOracle) -> Dict:
    """Average of the greedy vertices over all element orderings."""
    ground = h.ground
    n = len(ground)
    weights = [Fraction(math.factorial(k) * math.factorial(n - k - 1), math.factorial(n)) for k in range(n)]
    table = h.table()
    x = {}
    for k, e in enumerate(ground):
        bit = 1 << k
        total = Fraction(0)
        for mask in range(1 << n):
            if not mask & bit:
                total += weights[bin(mask).count("1")] * (table[mask | bit] - table[mask])
        x[e] = total
    return x


def sampled_midpoint(h: sm.SubmodularOracle, samples: int = MIDPOINT_SAMPLES, seed: int = 0) -> Dict:
    """Average of greedy vertices over a seeded sample of orderings."""
    rng = random.Random(seed)
    acc = {e: Fraction(0) for e in h.ground}
    order = list(h.ground)
    for _ in range(samples):
        rng.shuffle(order)
        for e, v in sm.greedy_base(h, order).items():
            acc[e] += v
    return {e: v / samples for e, v in acc.items()}


def max_clinch(cp: ClinchPolytope, rule: ClinchRule, rng: Optional[random.Random] = None) -> Dict[Edge, Fraction]:
    """A base point of the clinching polytope chosen by ``rule``.

    ``rng`` supplies the orderings for the random rule; pass one generator per
    auction run so consecutive clinches draw different orders.
    """
    h = cp.h
    if not h.ground:
        return {}
    if cp.total() == 0:
        return {e: Fraction(0) for e in h.ground}
    if len(h.ground) == 1:
        return {h.ground[0]: cp.total()}
    if rule.kind == "midpoint":
        if len(h.ground) <= EXACT_MIDPOINT_LIMIT:
            return shapley_point(h)
        return sampled_midpoint(h, seed=rule.seed)
    if rule.kind == "ordered":
        rank = {s: k for k, s in enumerate(rule.order)}
        order = sorted(h.ground, key=lambda e: (rank.get(e[1], len(rank)), h.index[e]))
        return sm.greedy_base(h, order)
    order = list(h.ground)
    (rng or rule.rng()).shuffle(order)
    return sm.greedy_base(h, order)


def all_greedy_vertices(h: sm.SubmodularOracle):
    """Greedy vertices for every ordering (small grounds only)."""
    return [sm.greedy_base(h, order) for order in itertools.permutations(h.ground)]
