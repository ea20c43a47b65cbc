"""Exact primal simplex for small packing-style linear programs.

Solves ``max c.x  s.t.  A x <= b, x >= 0`` with ``b >= 0`` so the origin is a
feasible starting basis.  Arithmetic runs on ``gmpy2.mpq`` and results come
back as ``Fraction``.  The tableau is kept between calls, so re-solving with a
new objective starts from the previous optimal basis.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from gmpy2 import mpq


class UnboundedError(ArithmeticError):
    pass


def _frac(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


class PackingLP:
    """Tableau for ``A x <= b`` (``b >= 0``) supporting repeated maximization."""

    def __init__(self, A: Sequence[Sequence], b: Sequence):
        self.n = len(A[0]) if A else 0
        self.m = len(A)
        width = self.n + self.m
        self.rows = []
        for k, (row, rhs) in enumerate(zip(A, b)):
            if rhs < 0:
                raise ValueError("right-hand sides must be nonnegative")
            if len(row) != self.n:
                raise ValueError("ragged constraint matrix")
            full = [mpq(a) for a in row] + [mpq(0)] * self.m + [mpq(rhs)]
            full[self.n + k] = mpq(1)
            self.rows.append(full)
        self.basis = [self.n + k for k in range(self.m)]
        self.width = width

    def _pivot(self, r: int, col: int, zrow: list) -> None:
        prow = self.rows[r]
        piv = prow[col]
        if piv != 1:
            prow = [a / piv for a in prow]
            self.rows[r] = prow
        nz = [j for j, a in enumerate(prow) if a]
        for k, row in enumerate(self.rows):
            if k != r and row[col]:
                factor = row[col]
                for j in nz:
                    row[j] -= factor * prow[j]
        if zrow[col]:
            factor = zrow[col]
            for j in nz:
                zrow[j] -= factor * prow[j]
        self.basis[r] = col

    def maximize(self, c: Sequence) -> tuple:
        """Return ``(value, x)`` for the objective ``c`` (length ``n``)."""
        cost = [mpq(v) for v in c] + [mpq(0)] * self.m
        # reduced-cost row: -c + c_B * T, last entry holds the objective value
        zrow = [-v for v in cost] + [mpq(0)]
        for r, bv in enumerate(self.basis):
            cb = cost[bv]
            if cb:
                for j, a in enumerate(self.rows[r]):
                    if a:
                        zrow[j] += cb * a
        while True:
            col = next((j for j in range(self.width) if zrow[j] < 0), None)
            if col is None:
                break
            best = None
            for r, row in enumerate(self.rows):
                a = row[col]
                if a > 0:
                    ratio = row[-1] / a
                    key = (ratio, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                raise UnboundedError("objective is unbounded")
            self._pivot(best[1], col, zrow)
        x = [Fraction(0)] * self.n
        for r, bv in enumerate(self.basis):
            if bv < self.n:
                x[bv] = _frac(self.rows[r][-1])
        return _frac(zrow[-1]), x
