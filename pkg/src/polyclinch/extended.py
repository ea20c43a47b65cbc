"""Extended rationals: exact ``Fraction`` values plus a single infinity.

Infinity is ``math.inf``.  Mixing it with fractions in ``+``, ``-`` (finite
subtrahend), ``min`` and comparisons already saturates correctly, so the
helpers here only cover the cases Python gets wrong or refuses (``0 * inf``,
division by zero, parsing and rendering).
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

INF = math.inf

XRational = Union[Fraction, float]


def is_inf(x) -> bool:
    return isinstance(x, float) and math.isinf(x) and x > 0


def to_rational(value) -> XRational:
    """Parse ints, fractions, ``"p/q"``, decimal strings and ``"inf"``.

    Floats are accepted only when they are exactly representable and are
    converted through their decimal string so ``0.3`` means 3/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if math.isinf(value):
            if value < 0:
                raise ValueError("negative infinity is not allowed")
            return INF
        if math.isnan(value):
            raise ValueError("NaN is not a rational")
        return Fraction(repr(value))
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf", "∞"):
            return INF
        return Fraction(text)
    raise TypeError(f"cannot interpret {value!r} as a rational")


def xmul(a: XRational, b: XRational) -> XRational:
    """Product with the convention 0 * inf = 0."""
    if a == 0 or b == 0:
        return Fraction(0)
    return a * b


def xdiv(a: XRational, b: XRational) -> XRational:
    """Quotient where x / 0 = inf for x >= 0 (a free good has unbounded demand)."""
    if b == 0:
        return INF
    if is_inf(a):
        return INF
    return Fraction(a) / Fraction(b)


def xsum(values) -> XRational:
    total: XRational = Fraction(0)
    for v in values:
        if is_inf(v):
            return INF
        total += v
    return total


def render(x: XRational) -> str:
    """Canonical text form: ``"inf"``, ``"7"`` or ``"7/8"``."""
    if is_inf(x):
        return "inf"
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def render_short(x: XRational) -> str:
    return "∞" if is_inf(x) else render(x)


def to_float(x: XRational) -> float:
    return INF if is_inf(x) else float(x)
