"""Monotone submodular set functions, their polymatroids and the usual operations.

An oracle is evaluated on subsets of an ordered ground set.  Values are exact
``Fraction`` objects.  Vectors over a ground set are plain ``dict`` objects
mapping element -> Fraction; a missing key means zero.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .extended import INF, is_inf, to_rational

MAX_ENUMERATION = 20


class GroundSetError(ValueError):
    pass


class InfeasibleVectorError(ValueError):
    pass


def ground_set(elements: Iterable[Hashable]) -> tuple:
    """Validate and freeze an ordered ground set."""
    elements = tuple(elements)
    if len(set(elements)) != len(elements):
        raise GroundSetError("ground set elements must be distinct")
    return elements


class SubmodularOracle:
    """Value oracle for a set function on an ordered ground set.

    ``fn`` receives a ``frozenset`` already checked to lie inside the ground
    set.  Results are memoized; the cache is shared between threads and
    guarded by a lock.
    """

    def __init__(self, ground: Iterable[Hashable], fn: Callable[[frozenset], Fraction],
                 name: str = "oracle", memoize: bool = True):
        self.ground = ground_set(ground)
        self.index = {e: k for k, e in enumerate(self.ground)}
        self._fn = fn
        self.name = name
        self._memo: Optional[dict] = {} if memoize else None
        self._lock = threading.Lock()

    def __repr__(self):
        return f"<{self.name} on {len(self.ground)} elements>"

    def __call__(self, F: Iterable[Hashable] = ()) -> Fraction:
        F = frozenset(F)
        if self._memo is not None:
            with self._lock:
                if F in self._memo:
                    return self._memo[F]
        stray = [e for e in F if e not in self.index]
        if stray:
            raise GroundSetError(f"elements {stray!r} are outside the ground set of {self.name}")
        value = self._fn(F)
        if self._memo is not None:
            with self._lock:
                self._memo[F] = value
        return value

    eval = __call__

    def mask_of(self, F: Iterable[Hashable]) -> int:
        m = 0
        for e in F:
            m |= 1 << self.index[e]
        return m

    def subset_of(self, mask: int) -> frozenset:
        return frozenset(e for k, e in enumerate(self.ground) if mask >> k & 1)

    def table(self) -> list:
        """All values indexed by bitmask over ``ground`` order."""
        n = len(self.ground)
        if n > MAX_ENUMERATION:
            raise GroundSetError(f"ground set of size {n} is too large to tabulate")
        return [self(self.subset_of(mask)) for mask in range(1 << n)]


class DirectSum(SubmodularOracle):
    """f(F) = sum_j f_j(F & E_j) for oracles on pairwise disjoint grounds."""

    def __init__(self, components: Sequence[SubmodularOracle], name: str = "direct sum"):
        seen = set()
        for comp in components:
            overlap = seen.intersection(comp.ground)
            if overlap:
                raise GroundSetError(f"component grounds overlap on {sorted(map(repr, overlap))}")
            seen.update(comp.ground)
        self.components = tuple(components)
        owner = {e: comp for comp in self.components for e in comp.ground}
        ground = [e for comp in self.components for e in comp.ground]

        def fn(F):
            parts: dict = {}
            for e in F:
                parts.setdefault(id(owner[e]), (owner[e], []))[1].append(e)
            return sum((comp(part) for comp, part in parts.values()), Fraction(0))

        super().__init__(ground, fn, name=name)


def direct_sum(oracles: Sequence[SubmodularOracle]) -> DirectSum:
    return DirectSum(oracles)


# ---------------------------------------------------------------------------
# built-in families


def stock(ground, amount) -> SubmodularOracle:
    """A seller with ``amount`` units shared freely by every edge."""
    s = to_rational(amount)
    if is_inf(s) or s < 0:
        raise ValueError("stock must be a finite nonnegative rational")
    return SubmodularOracle(ground, lambda F: s if F else Fraction(0), name=f"stock({s})")


def page_based(ground, slots) -> SubmodularOracle:
    """Pages with ``slots[k]`` ad slots each; one slot per buyer per page."""
    slots = [int(t) for t in slots]
    if any(t < 0 for t in slots):
        raise ValueError("slot counts must be nonnegative")
    return SubmodularOracle(ground, lambda F: Fraction(sum(min(t, len(F)) for t in slots)),
                            name=f"page_based({slots})")


def _sorted_qualities(qualities) -> list:
    betas = [to_rational(b) for b in qualities]
    if any(is_inf(b) or b < 0 for b in betas):
        raise ValueError("qualities must be finite and nonnegative")
    return sorted(betas, reverse=True)


def quality_based(ground, qualities) -> SubmodularOracle:
    """Slots of quality beta_1 >= beta_2 >= ...; a set can fill its |F| best slots."""
    betas = _sorted_qualities(qualities)
    prefix = list(itertools.accumulate(betas, initial=Fraction(0)))
    return SubmodularOracle(ground, lambda F: prefix[min(len(F), len(betas))],
                            name=f"quality_based({[str(b) for b in betas]})")


def paged_quality(ground, pages) -> SubmodularOracle:
    """Sum over pages of quality-based functions (one quality list per page)."""
    prefixes = [list(itertools.accumulate(_sorted_qualities(p), initial=Fraction(0))) for p in pages]
    return SubmodularOracle(
        ground,
        lambda F: sum((pre[min(len(F), len(pre) - 1)] for pre in prefixes), Fraction(0)),
        name=f"paged_quality({len(prefixes)} pages)",
    )


def capacity(caps: Mapping) -> SubmodularOracle:
    """Modular function F -> sum of per-element capacities (infinite allowed)."""
    caps = {e: to_rational(c) for e, c in caps.items()}

    def fn(F):
        total = Fraction(0)
        for e in F:
            if is_inf(caps[e]):
                return INF
            total += caps[e]
        return total

    return SubmodularOracle(list(caps), fn, name="capacity")


def virtual_extended(f: SubmodularOracle, virtual_element) -> SubmodularOracle:
    """Add an element that alone exhausts the whole of f(E_j) (unsold stock)."""
    full = f(f.ground)
    ground = list(f.ground) + [virtual_element]

    def fn(F):
        if virtual_element in F:
            return full
        return f(F)

    return SubmodularOracle(ground, fn, name=f"virtual({f.name})")


# ---------------------------------------------------------------------------
# checks and polymatroid operations


@dataclass
class SubmodularityReport:
    normalized: bool
    monotone: bool
    submodular: bool
    witness: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.normalized and self.monotone and self.submodular


def _integer_table(values):
    """Scale a list of fractions to a common denominator as a numpy array."""
    den = 1
    for v in values:
        den = np.lcm(den, Fraction(v).denominator)
        if den > 2 ** 40:
            break
    ints = [int(Fraction(v) * den) for v in values]
    if den <= 2 ** 40 and max(map(abs, ints), default=0) < 2 ** 60:
        return np.array(ints, dtype=np.int64)
    return np.array([Fraction(v) for v in values], dtype=object)


def verify_submodular(f: SubmodularOracle, max_size: int = MAX_ENUMERATION) -> SubmodularityReport:
    """Exhaustively check normalization, monotonicity and submodularity."""
    n = len(f.ground)
    if n > max_size:
        raise GroundSetError(f"ground set of size {n} exceeds the enumeration limit {max_size}")
    values = f.table()
    if any(is_inf(v) for v in values):
        raise ValueError("verify_submodular needs a finite-valued oracle")
    vals = _integer_table(values)
    masks = np.arange(1 << n)
    report = SubmodularityReport(normalized=values[0] == 0, monotone=True, submodular=True)
    if not report.normalized:
        report.witness = f"f(∅) = {values[0]}"
    for a in range(n):
        abit = 1 << a
        without_a = masks[(masks & abit) == 0]
        bad = vals[without_a | abit] < vals[without_a]
        if report.monotone and bad.any():
            S = int(without_a[np.argmax(bad)])
            report.monotone = False
            report.witness = report.witness or (
                f"f(S+{f.ground[a]!r}) < f(S) for S={sorted(map(repr, f.subset_of(S)))}")
        for b in range(a + 1, n):
            bbit = 1 << b
            base = masks[(masks & (abit | bbit)) == 0]
            lhs = vals[base | abit] + vals[base | bbit]
            rhs = vals[base] + vals[base | abit | bbit]
            bad = lhs < rhs
            if bad.any():
                S = int(base[np.argmax(bad)])
                report.submodular = False
                report.witness = report.witness or (
                    f"f(S+a)+f(S+b) < f(S)+f(S+a+b) for S={sorted(map(repr, f.subset_of(S)))}, "
                    f"a={f.ground[a]!r}, b={f.ground[b]!r}")
                break
    return report


def _check_vector(f: SubmodularOracle, x: Mapping) -> None:
    for e, v in x.items():
        if e not in f.index:
            raise GroundSetError(f"vector entry {e!r} is outside the ground set")
        if v < 0:
            raise ValueError(f"vector entry {e!r} is negative ({v})")


def member(f: SubmodularOracle, x: Mapping) -> bool:
    """True iff x(F) <= f(F) for every F, i.e. x lies in the polymatroid of f."""
    _check_vector(f, x)
    if isinstance(f, DirectSum):
        return all(member(comp, {e: x[e] for e in comp.ground if e in x}) for comp in f.components)
    n = len(f.ground)
    if n > MAX_ENUMERATION:
        raise GroundSetError(f"ground set of size {n} is too large for exhaustive membership")
    xs = [Fraction(x.get(e, 0)) for e in f.ground]
    for mask in range(1, 1 << n):
        total = sum(xs[k] for k in range(n) if mask >> k & 1)
        if total > f(f.subset_of(mask)):
            return False
    return True


def greedy_base(f: SubmodularOracle, order: Sequence[Hashable]) -> dict:
    """Greedy vertex of the base polytope for the given element order."""
    if sorted(map(f.index.__getitem__, order)) != list(range(len(f.ground))):
        raise GroundSetError("order must be a permutation of the ground set")
    x = {}
    prefix: list = []
    prev = f(())
    for e in order:
        prefix.append(e)
        cur = f(prefix)
        x[e] = cur - prev
        prev = cur
    return x


def contract(f: SubmodularOracle, w: Mapping, check: bool = True) -> SubmodularOracle:
    """Contraction by a feasible vector: F -> min over F' ⊇ F of f(F') - w(F')."""
    if check and not member(f, w):
        raise InfeasibleVectorError("contraction vector is not in the polymatroid")
    w = {e: Fraction(w.get(e, 0)) for e in f.ground}
    ground = f.ground

    def fn(F):
        rest = [e for e in ground if e not in F]
        base = f(F) - sum(w[e] for e in F)
        best = base
        for r in range(1, len(rest) + 1):
            for extra in itertools.combinations(rest, r):
                val = f(F.union(extra)) - sum(w[e] for e in F) - sum(w[e] for e in extra)
                if val < best:
                    best = val
        return best

    return SubmodularOracle(ground, fn, name=f"contract({f.name})")


def superset_min(values: list, n: int) -> list:
    """g[S] = min over T ⊇ S of values[T] (bitmask indexed, O(n 2^n))."""
    g = list(values)
    for k in range(n):
        bit = 1 << k
        for mask in range(1 << n):
            if not mask & bit and g[mask | bit] < g[mask]:
                g[mask] = g[mask | bit]
    return g
