"""Turning fractional ad transactions into randomized slot assignments."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Hashable, List, Mapping, Sequence, Tuple

from . import submodular as sm
from .extended import to_rational
from .flow import InfeasibleTransactionsError, recover_transactions
from .market import Buyer, Market, Seller

MAX_DECOMPOSE = 16


class SlottingError(ValueError):
    pass


@dataclass
class SlotDistribution:
    """Probability distribution over assignments.

    Page mode: an assignment is a frozenset of buyers shown on the page.
    Quality mode: an assignment is a tuple of ``(buyer, slot)`` pairs with
    slots numbered from 0 in decreasing quality.
    """

    support: List[Tuple[object, Fraction]] = field(default_factory=list)
    iterations: int = 0

    def total(self) -> Fraction:
        return sum((p for _, p in self.support), Fraction(0))

    def page_marginals(self) -> Dict[Hashable, Fraction]:
        out: Dict[Hashable, Fraction] = {}
        for X, p in self.support:
            for i in X:
                out[i] = out.get(i, Fraction(0)) + p
        return out

    def quality_marginals(self, betas: Sequence) -> Dict[Hashable, Fraction]:
        betas = sorted((to_rational(b) for b in betas), reverse=True)
        out: Dict[Hashable, Fraction] = {}
        for assignment, p in self.support:
            for i, slot in assignment:
                out[i] = out.get(i, Fraction(0)) + p * betas[slot]
        return out


def page_distribution(q: Mapping[Hashable, object], t: int, pad: bool = True) -> SlotDistribution:
    """Distribution over t-subsets whose inclusion probabilities equal q.

    With ``pad`` a total below t is topped up with dummy buyers (each at most
    1), which are removed from the reported subsets.
    """
    t = int(t)
    if t < 0:
        raise SlottingError("slot count must be nonnegative")
    q = {i: Fraction(to_rational(v)) for i, v in q.items()}
    if any(v < 0 or v > 1 for v in q.values()):
        raise SlottingError("every q_i must lie in [0, 1]")
    total = sum(q.values(), Fraction(0))
    if total > t or (total < t and not pad):
        raise SlottingError(f"q sums to {total}, expected {t}")
    real = list(q)
    work = dict(q)
    gap, k = t - total, 0
    while gap > 0:
        dummy = ("dummy", k)
        work[dummy] = min(gap, Fraction(1))
        gap -= work[dummy]
        k += 1
    while len(work) < t:
        work[("dummy", k)] = Fraction(0)
        k += 1
    position = {i: n for n, i in enumerate(work)}
    dist = SlotDistribution()
    used = Fraction(0)
    while any(work.values()):
        dist.iterations += 1
        order = sorted(work, key=lambda i: (-work[i], position[i]))
        chosen, rest = order[:t], order[t:]
        gamma = min([work[i] for i in chosen] + [1 - used - work[i] for i in rest])
        if gamma <= 0:
            raise AssertionError("no progress in subset construction")
        for i in chosen:
            work[i] -= gamma
        used += gamma
        dist.support.append((frozenset(i for i in chosen if i in q), gamma))
    if used != 1 and t > 0:
        raise AssertionError("probabilities do not sum to one")
    if t == 0:
        dist.support.append((frozenset(), Fraction(1)))
    return dist


def quality_decompose(w: Mapping[Hashable, object], betas: Sequence) -> SlotDistribution:
    """Write w as a convex combination of slot assignments with qualities ``betas``.

    Each step takes the extreme point that ranks buyers by remaining value
    and removes the largest multiple that keeps the rest feasible for the
    remaining probability mass.
    """
    w = {i: Fraction(to_rational(v)) for i, v in w.items()}
    betas = sorted((Fraction(to_rational(b)) for b in betas), reverse=True)
    keys = list(w)
    if len(keys) > MAX_DECOMPOSE:
        raise SlottingError(f"at most {MAX_DECOMPOSE} buyers are supported")
    if any(v < 0 for v in w.values()):
        raise SlottingError("transactions must be nonnegative")
    prefix = list(itertools.accumulate(betas, initial=Fraction(0)))

    def f(size):
        return prefix[min(size, len(betas))]

    subsets = [frozenset(c) for r in range(1, len(keys) + 1) for c in itertools.combinations(keys, r)]
    for F in subsets:
        if sum(w[i] for i in F) > f(len(F)):
            raise SlottingError("transactions violate the slot-quality constraint")
    position = {i: n for n, i in enumerate(keys)}
    rest = dict(w)
    mass = Fraction(1)
    dist = SlotDistribution()
    while mass > 0:
        dist.iterations += 1
        if dist.iterations > len(keys) + 2:
            raise AssertionError("decomposition did not terminate")
        order = sorted(keys, key=lambda i: (-rest[i], position[i]))
        positive = [i for i in order if rest[i] > 0][:len(betas)]
        xi = {i: Fraction(0) for i in keys}
        for slot, i in enumerate(positive):
            xi[i] = betas[slot]
        gamma = mass
        for i in keys:
            if xi[i] > 0:
                gamma = min(gamma, rest[i] / xi[i])
        for F in subsets:
            gap = f(len(F)) - sum(xi[i] for i in F)
            if gap > 0:
                gamma = min(gamma, (mass * f(len(F)) - sum(rest[i] for i in F)) / gap)
        if gamma <= 0:
            raise AssertionError("no progress in decomposition")
        assignment = tuple((i, slot) for slot, i in enumerate(positive) if betas[slot] > 0)
        dist.support.append((assignment, gamma))
        for i in keys:
            rest[i] -= gamma * xi[i]
        mass -= gamma
    if any(rest.values()):
        raise AssertionError("decomposition left a residual")
    return dist


def page_oracles(family: str, params: Mapping, ground: Sequence) -> List[sm.SubmodularOracle]:
    """Per-page oracles whose sum is the seller's constraint."""
    if family == "paged_quality":
        return [sm.quality_based(ground, page) for page in params["pages"]]
    if family == "page_based":
        return [sm.page_based(ground, [t]) for t in params["slots"]]
    if family == "quality_based":
        return [sm.quality_based(ground, params["qualities"])]
    raise SlottingError(f"family {family!r} has no page structure")


def per_page_split(w: Mapping[Hashable, object], pages: Sequence[sm.SubmodularOracle]) -> Dict[Tuple[Hashable, int], Fraction]:
    """Split each buyer's total over pages so every page stays feasible.

    ``pages`` are oracles on the keys of ``w``; their sum is the seller's
    constraint.  Pages act as sellers of an auxiliary market and the split is
    recovered with the same greedy flow construction used for transactions.
    """
    w = {i: Fraction(to_rational(v)) for i, v in w.items()}
    keys = list(w)
    for f in pages:
        if set(f.ground) != set(keys):
            raise SlottingError("every page oracle must be defined on the buyers of w")
    names = {i: str(n) for n, i in enumerate(keys)}
    back = {v: k for k, v in names.items()}
    buyers = [Buyer(names[i], 0) for i in keys]
    sellers = []
    for k, f in enumerate(pages):
        ground = tuple((names[i], str(k)) for i in keys)
        sellers.append(Seller(str(k), 0, oracle=sm.SubmodularOracle(
            ground, lambda F, f=f: f([back[e[0]] for e in F]), name=f"page {k}")))
    edges = [(names[i], str(k)) for i in keys for k in range(len(pages))]
    market = Market(buyers, sellers, edges)
    try:
        split = recover_transactions(market, {names[i]: v for i, v in w.items()})
    except InfeasibleTransactionsError as exc:
        raise SlottingError(f"transactions are infeasible for the pages: {exc}") from None
    return {(back[i], int(k)): v for (i, k), v in split.items()}
