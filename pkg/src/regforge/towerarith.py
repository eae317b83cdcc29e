"""Tower-type integers: T, W, phi, T^phi and the trap-level schedule.

Values that fit below a bit limit are kept as plain ints.  Larger values are
kept as a tower form ``exp2^height(top)``, where ``exp2(x) = 2**x``.  A tower
form may also carry an exclusive upper top, in which case the value is only
known to lie in ``[exp2^h(top), exp2^h(top_hi))``.  Comparisons and
floor-log-log are exact when the bracket allows it and raise otherwise.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction

BIT_LIMIT = 1 << 20


class UnrepresentableError(ArithmeticError):
    """A quantity cannot be pinned down exactly in the available forms."""


class AmbiguousComparison(UnrepresentableError):
    pass


class ScheduleError(ValueError):
    pass


def _materialize(height, top, limit):
    # exp2^height(top) as an int, or None once a step would pass the bit limit
    while height > 0:
        if top >= limit:
            return None
        top = 1 << top
        height -= 1
    return top


def _cmp_tower(a, x, b, y):
    """Compare exp2^a(x) with exp2^b(y) exactly. Returns -1, 0 or 1."""
    sign = 1
    if a < b:
        a, x, b, y = b, y, a, x
        sign = -1
    k = a - b
    z = x
    while k > 0:
        # exp2^k(z) >= 2^z > y as soon as z reaches the bit length of y
        if z >= y.bit_length():
            return sign
        z = 1 << z
        k -= 1
    return sign * ((z > y) - (z < y))


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class TowerNum:
    """Exact int (height 0) or tower form exp2^height(top).

    With ``top_hi`` set, the value lies in [exp2^h(top), exp2^h(top_hi)).
    """

    height: int
    top: int
    top_hi: int | None = None

    @classmethod
    def exact(cls, value):
        if value < 0:
            raise ValueError("TowerNum holds nonnegative integers only")
        return cls(0, int(value))

    @classmethod
    def tower(cls, height, top, top_hi=None, limit=BIT_LIMIT):
        """Build a tower form, collapsing to an exact int when it fits."""
        if height < 0 or top < 0:
            raise ValueError("height and top must be nonnegative")
        if top_hi is None:
            v = _materialize(height, top, limit)
            if v is not None:
                return cls(0, v)
            return cls(height, top)
        if height == 0:
            raise ValueError("a bracketed form needs height >= 1")
        if top_hi <= top:
            raise ValueError("empty bracket")
        return cls(height, top, top_hi)

    @property
    def is_exact(self):
        return self.height == 0

    @property
    def is_sharp(self):
        return self.top_hi is None

    @property
    def value(self):
        if self.height:
            raise UnrepresentableError(f"{self!r} exceeds the materialization limit")
        return self.top

    def lower(self):
        return (self.height, self.top)

    def upper(self):
        # exclusive upper bound as (height, top); None when sharp
        return None if self.top_hi is None else (self.height, self.top_hi)

    def compare(self, other):
        other = _coerce(other)
        if self.is_sharp and other.is_sharp:
            return _cmp_tower(self.height, self.top, other.height, other.top)
        lo_a, up_a = self.lower(), self.upper()
        lo_b, up_b = other.lower(), other.upper()
        if up_a is not None:
            if _cmp_tower(*up_a, *lo_b) <= 0:
                return -1
        elif _cmp_tower(*lo_a, *lo_b) < 0:
            return -1
        if up_b is not None:
            if _cmp_tower(*up_b, *lo_a) <= 0:
                return 1
        elif _cmp_tower(*lo_b, *lo_a) < 0:
            return 1
        raise AmbiguousComparison(f"cannot order {self!r} and {other!r}")

    def __eq__(self, other):
        try:
            return self.compare(other) == 0
        except TypeError:
            return NotImplemented

    def __lt__(self, other):
        return self.compare(other) < 0

    def __hash__(self):
        return hash((self.height, self.top, self.top_hi))

    def __repr__(self):
        if self.height == 0:
            v = self.top
            return f"TowerNum({v})" if v.bit_length() <= 64 else f"TowerNum(<{v.bit_length()} bits>)"
        t = _short(self.top)
        if self.top_hi is None:
            return f"TowerNum(exp2^{self.height}({t}))"
        return f"TowerNum(exp2^{self.height}([{t}, {_short(self.top_hi)})))"


def _short(v):
    return str(v) if v.bit_length() <= 64 else f"<{v.bit_length()}-bit int>"


def _coerce(v):
    if isinstance(v, TowerNum):
        return v
    if isinstance(v, int):
        return TowerNum.exact(v)
    raise TypeError(f"cannot compare TowerNum with {type(v).__name__}")


def phi(m):
    """phi(m) = 2^ceil(m/16)."""
    if m < 0:
        raise ValueError("phi needs m >= 0")
    return 1 << -(-m // 16)


def tower(x, limit=BIT_LIMIT):
    """T(0) = 1, T(x) = 2^T(x-1)."""
    if x < 0:
        raise ValueError("tower needs x >= 0")
    return TowerNum.tower(x, 1, limit=limit)


def wowzer(x, limit=BIT_LIMIT):
    """W(0) = 1, W(x) = T(W(x-1)).  Heights must stay plain ints."""
    if x < 0:
        raise ValueError("wowzer needs x >= 0")
    w = TowerNum.exact(1)
    for step in range(1, x + 1):
        if not w.is_exact:
            raise UnrepresentableError(
                f"W({step}) has a tower height of W({step - 1}), which is not materializable")
        w = tower(w.value, limit=limit)
    return w


def _t_phi_step(v, limit):
    """One step m -> m * phi(m) on a TowerNum."""
    if v.is_exact:
        m = v.value
        c = -(-m // 16)
        if m.bit_length() + c <= limit:
            return TowerNum.exact(m << c)
        e = m.bit_length() - 1
        if m == 1 << e:
            return TowerNum.tower(1, e + c, limit=limit)
        return TowerNum.tower(1, e + c, e + c + 1, limit=limit)
    h, lo, hi = v.height, v.top, v.top_hi
    # log2 m' = log2 m + ceil(m/16), so log2 log2 m' lies in [log2 m - 4, log2 m - 3)
    if h == 1:
        if hi is None:
            return TowerNum(2, lo - 4, lo - 3)
        return TowerNum(2, lo - 4, hi - 3)
    if lo < 3:
        raise UnrepresentableError("tower form top too small to bracket the next step")
    # exp2^{h-1}(lo) - 4 >= exp2^{h-1}(lo - 1) once lo >= 3
    return TowerNum(h + 1, lo - 1, lo if hi is None else hi)


def t_phi(x, limit=BIT_LIMIT):
    """T^phi(0) = 1, T^phi(x) = T^phi(x-1) * phi(T^phi(x-1))."""
    if x < 0:
        raise ValueError("t_phi needs x >= 0")
    v = TowerNum.exact(1)
    for _ in range(x):
        v = _t_phi_step(v, limit)
    return v


def floor_loglog(v):
    """floor(log2 log2 v), exact or raising when the form cannot decide it."""
    v = _coerce(v)
    if v.is_exact:
        if v.value < 2:
            raise ValueError("log log needs a value >= 2")
        a = v.value.bit_length() - 1
        return TowerNum.exact(a.bit_length() - 1)
    h, lo, hi = v.height, v.top, v.top_hi
    if h == 1:
        if hi is None:
            if lo < 1:
                raise ValueError("log log needs a value >= 2")
            return TowerNum.exact(lo.bit_length() - 1)
        a, b = lo.bit_length() - 1, (hi - 1).bit_length() - 1
        if a != b:
            raise AmbiguousComparison(f"floor log log of {v!r} lies in [{a}, {b}]")
        return TowerNum.exact(a)
    if hi is None:
        return TowerNum.tower(h - 2, lo)
    if h == 2 and hi == lo + 1:
        return TowerNum.exact(lo)
    raise AmbiguousComparison(f"floor log log of {v!r} is not determined by its bracket")


def loglog_lower_bound(v):
    """A TowerNum that is <= floor(log2 log2 v), exact where possible."""
    try:
        return floor_loglog(v)
    except AmbiguousComparison:
        pass
    if v.height == 1:
        return TowerNum.exact(v.top.bit_length() - 1)
    return TowerNum.tower(v.height - 2, v.top)


@dataclass(frozen=True)
class TrapSchedule:
    levels: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.levels) != len(self.weights):
            raise ValueError("levels and weights differ in length")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ScheduleError("trap levels must be strictly increasing")
        for g, w in enumerate(self.weights, start=1):
            if w != Fraction(1, 4 ** g):
                raise ValueError(f"weight {g} must be 4^-{g}")

    @property
    def count(self):
        return len(self.levels)

    def total_weight(self):
        return sum(self.weights, Fraction(0))


def trap_schedule(w1, count, limit=BIT_LIMIT):
    """Levels w(1)=w1, w(x+1)=floor(log log T^phi(w(x))) with weights 4^-g."""
    if w1 < 1 or count < 1:
        raise ValueError("trap_schedule needs w1 >= 1 and count >= 1")
    levels = [w1]
    for step in range(2, count + 1):
        prev = levels[-1]
        try:
            nxt = floor_loglog(t_phi(prev, limit=limit))
        except UnrepresentableError as exc:
            raise UnrepresentableError(f"schedule step w({step}) is unrepresentable: {exc}") from exc
        if not nxt.is_exact:
            raise UnrepresentableError(f"schedule step w({step}) = {nxt!r} is not materializable")
        if nxt.value <= prev:
            raise ScheduleError(
                f"schedule not increasing at step w({step}): {nxt.value} <= w({step - 1}) = {prev}")
        levels.append(nxt.value)
    weights = tuple(Fraction(1, 4 ** g) for g in range(1, count + 1))
    return TrapSchedule(tuple(levels), weights)
