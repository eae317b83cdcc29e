"""Convex decomposition over uniform k-subset vectors, trap quadratic forms,
and the trap verifier.

Everything here is exact: rationals are ``Fraction`` and edge counts are ints.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .seeding import make_rng


class DecompositionError(ValueError):
    pass


class TrapGenerationError(RuntimeError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


def _frac_vec(x):
    return [v if isinstance(v, Fraction) else Fraction(v) for v in x]


@dataclass(frozen=True)
class ConvexDecomposition:
    """terms: (coefficient, support) pairs; support is a sorted k-tuple."""

    terms: tuple
    k: int
    n: int

    def reconstruct(self):
        out = [Fraction(0)] * self.n
        for a, S in self.terms:
            share = a / self.k
            for i in S:
                out[i] += share
        return out

    def validate(self, x):
        x = _frac_vec(x)
        if sum((a for a, _ in self.terms), Fraction(0)) != 1:
            raise DecompositionError("coefficients do not sum to 1")
        for a, S in self.terms:
            if a < 0 or len(S) != self.k or len(set(S)) != self.k:
                raise DecompositionError(f"bad term ({a}, {S})")
        if self.reconstruct() != x:
            raise DecompositionError("reconstruction differs from input")
        return True


def decompose(x, k):
    """Write x in [0,1/k]^n with sum 1 as a convex combination of v_S, |S| = k.

    Greedy peel on y = k x with remaining mass w: take S as the k largest
    entries (entries equal to w first, then by value, ties to lower index),
    remove a = min(min_S y, w - max_{not S} y, w) from S and from w.
    """
    x = _frac_vec(x)
    n = len(x)
    if not 1 <= k <= n:
        raise DecompositionError(f"need 1 <= k <= n, got k={k}, n={n}")
    cap = Fraction(1, k)
    for i, v in enumerate(x):
        if v < 0 or v > cap:
            raise DecompositionError(f"x[{i}] = {v} is outside [0, 1/{k}]")
    if sum(x, Fraction(0)) != 1:
        raise DecompositionError(f"entries sum to {sum(x, Fraction(0))}, not 1")
    y = [k * v for v in x]
    w = Fraction(1)
    terms = []
    while w > 0:
        forced = [i for i in range(n) if y[i] == w]
        if len(forced) > k:
            raise DecompositionError("more than k entries at the cap; input inconsistent")
        rest = sorted((i for i in range(n) if y[i] != w), key=lambda i: (-y[i], i))
        S = sorted(forced + rest[:k - len(forced)])
        inside = set(S)
        a = min(min(y[i] for i in S), w)
        outside = [y[i] for i in range(n) if i not in inside]
        if outside:
            a = min(a, w - max(outside))
        if a <= 0:
            raise DecompositionError("greedy step made no progress")
        for i in S:
            y[i] -= a
        w -= a
        terms.append((a, tuple(S)))
        if len(terms) > 2 * n:
            raise DecompositionError("term count exceeded 2n")
    return ConvexDecomposition(tuple(terms), k, n)


# ---------------------------------------------------------------- trap checks

@dataclass(frozen=True)
class TrapOverrides:
    """Desk-scale replacements for the trap constants.

    Condition 1 uses sets of size ``c1_size`` (default ceil(sqrt(m)/4)) and
    quality ``c1_quality``.  Condition 2 ranges k over [k_min, k_max] (default
    k_max = floor(log2 m)), uses |R| = k**p and the bound
    (c2_quality or 1/k^2) + slack.
    """

    condition1: bool = True
    condition2: bool = True
    c1_size: int | None = None
    c1_quality: Fraction = Fraction(1, 4)
    k_min: int = 2
    k_max: int | None = None
    p: int = 2
    c2_quality: Fraction | None = None
    slack: Fraction = Fraction(0)

    def k_range(self, m):
        hi = self.k_max if self.k_max is not None else m.bit_length() - 1
        return range(self.k_min, hi + 1)

    def c2_bound(self, k):
        base = self.c2_quality if self.c2_quality is not None else Fraction(1, k * k)
        return Fraction(base) + Fraction(self.slack)

    def to_dict(self):
        d = asdict(self)
        return {key: (str(v) if isinstance(v, Fraction) else v) for key, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        for key in ("c1_quality", "c2_quality", "slack"):
            if kw.get(key) is not None:
                kw[key] = Fraction(kw[key])
        return cls(**kw)


def _ceil_sqrt_over_4(m):
    # smallest s with 4s >= sqrt(m), i.e. 16 s^2 >= m
    s = max(1, math.isqrt(m) // 4)
    while 16 * s * s < m:
        s += 1
    while s > 1 and 16 * (s - 1) ** 2 >= m:
        s -= 1
    return s


def condition1_size(m):
    """ceil(sqrt(m)/4) computed exactly."""
    return _ceil_sqrt_over_4(m)


@dataclass
class TrapVerification:
    m: int
    condition1: bool
    condition2: bool
    c1_worst: dict | None
    c2_worst: dict | None
    c1_cases: int
    c2_cases: int
    mode: str
    trials: int | None
    seed: int | None
    overrides: dict = field(default_factory=dict)
    c1_checked: bool = True
    c2_checked: bool = True

    @property
    def passed(self):
        return self.condition1 and self.condition2

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _subset_indicators(m, size, subsets=None):
    if subsets is None:
        subsets = list(combinations(range(m), size))
    ind = np.zeros((len(subsets), m), dtype=np.int64)
    for r, S in enumerate(subsets):
        ind[r, list(S)] = 1
    return subsets, ind


def _block_scan(Q, left, right, rr, bound, chunk=4096):
    """Max over (R, R') of |e(R,R') - rr/2| and whether all are within bound*rr.

    left/right are (subsets, indicator) pairs.  Returns (worst_excess, info).
    """
    ls, li = left
    rs, ri = right
    QR = Q.astype(np.int64) @ ri.T  # m x |right|
    best = None
    for start in range(0, len(ls), chunk):
        E = li[start:start + chunk] @ QR  # e(R, R') for the chunk
        dev = np.abs(2 * E - rr)  # twice the deviation
        idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
        val = int(dev[idx])
        if best is None or val > best[0]:
            best = (val, ls[start + idx[0]], rs[idx[1]], int(E[idx]))
    dev2, R, R2, e = best
    excess = Fraction(dev2, 2) - bound * rr
    return excess, {"R": list(R), "R2": list(R2), "e": e, "bound": str(bound * rr),
                    "deviation": str(Fraction(dev2, 2))}


def _random_subsets(rng, pool, size, count):
    """count random size-subsets of pool as a (count, size) sorted index array."""
    pool = np.asarray(pool, dtype=np.int64)
    picks = np.argsort(rng.random((count, pool.size)), axis=1)[:, :size]
    return np.sort(pool[picks], axis=1)


def _indicator_rows(m, idx):
    ind = np.zeros((idx.shape[0], m), dtype=np.int64)
    np.put_along_axis(ind, idx, 1, axis=1)
    return ind


def _sampled_scan(Q, m, left_idx, right_idx, rr, bound):
    li, ri = _indicator_rows(m, left_idx), _indicator_rows(m, right_idx)
    E = ((li @ Q.astype(np.int64)) * ri).sum(axis=1)
    dev = np.abs(2 * E - rr)
    t = int(np.argmax(dev))
    excess = Fraction(int(dev[t]), 2) - bound * rr
    info = {"R": left_idx[t].tolist(), "R2": right_idx[t].tolist(), "e": int(E[t]),
            "bound": str(bound * rr), "deviation": str(Fraction(int(dev[t]), 2))}
    return excess, info


def verify_trap(Q, canonical_orders=None, overrides=None, budget=10 ** 7, seed=0, trials=None):
    """Check both trap conditions on the adjacency matrix Q.

    canonical_orders lists the orders of the coarser canonical partitions
    (each dividing m); condition 2 is checked for each of them.  A condition
    is enumerated exhaustively when its case count is within ``budget``,
    otherwise ``trials`` random cases (default ``budget``) are drawn.
    """
    Q = np.asarray(Q)
    m = Q.shape[0]
    if Q.shape != (m, m) or np.any(Q != Q.T) or np.any(np.diag(Q) != 0) or np.any((Q != 0) & (Q != 1)):
        raise ValueError("Q must be a symmetric 0/1 matrix with zero diagonal")
    ov = overrides or TrapOverrides()
    rng = make_rng(seed, "verify_trap")
    sampled = False
    ntrials = trials if trials is not None else min(budget, 10 ** 5)

    c1_ok, c1_worst, c1_cases = True, None, 0
    if ov.condition1:
        s = ov.c1_size if ov.c1_size is not None else condition1_size(m)
        if s > m:
            raise ValueError(f"condition-1 set size {s} exceeds m={m}")
        c = math.comb(m, s)
        total = c * (c + 1) // 2
        bound = Fraction(ov.c1_quality)
        if c * c <= budget:
            left = _subset_indicators(m, s)
            excess, info = _block_scan(Q, left, left, s * s, bound)
            c1_cases = total
        else:
            sampled = True
            left = _random_subsets(rng, range(m), s, ntrials)
            right = _random_subsets(rng, range(m), s, ntrials)
            excess, info = _sampled_scan(Q, m, left, right, s * s, bound)
            c1_cases = ntrials
        c1_ok = excess <= 0
        c1_worst = dict(info, size=s, excess=str(excess))

    c2_ok, c2_worst, c2_cases = True, None, 0
    if ov.condition2 and canonical_orders:
        worst_excess = None
        plan = []
        for mb in sorted(set(int(o) for o in canonical_orders)):
            if mb >= m:
                continue
            if m % mb:
                raise ValueError(f"canonical order {mb} does not divide m={m}")
            u = m // mb
            for k in ov.k_range(m):
                r = k ** ov.p
                r2 = -(-u // k)
                if r > u or r2 > u:
                    continue
                plan.append((mb, u, k, r, r2, math.comb(u, r) * math.comb(u, r2) * mb * mb))
        total = sum(p[-1] for p in plan)
        exhaustive = total <= budget
        sampled = sampled or (not exhaustive and total > 0)
        for mb, u, k, r, r2, cases in plan:
            bound = ov.c2_bound(k)
            if exhaustive:
                left_sub = _subset_indicators(u, r)[0]
                right_sub = _subset_indicators(u, r2)[0]
            for i in range(mb):
                Ui = range(i * u, (i + 1) * u)
                for j in range(mb):
                    Uj = range(j * u, (j + 1) * u)
                    if exhaustive:
                        ls = [tuple(i * u + t for t in S) for S in left_sub]
                        rs = [tuple(j * u + t for t in S) for S in right_sub]
                        left = _subset_indicators(m, r, ls)
                        right = _subset_indicators(m, r2, rs)
                        excess, info = _block_scan(Q, left, right, r * r2, bound)
                        c2_cases += len(ls) * len(rs)
                    else:
                        share = max(1, ntrials * cases // max(total, 1) // (mb * mb))
                        ls = _random_subsets(rng, Ui, r, share)
                        rs = _random_subsets(rng, Uj, r2, share)
                        excess, info = _sampled_scan(Q, m, ls, rs, r * r2, bound)
                        c2_cases += share
                    if worst_excess is None or excess > worst_excess:
                        worst_excess = excess
                        c2_worst = dict(info, coarse_order=mb, i=i, j=j, k=k, excess=str(excess))
        c2_ok = worst_excess is None or worst_excess <= 0

    return TrapVerification(
        m=m, condition1=c1_ok, condition2=c2_ok, c1_worst=c1_worst, c2_worst=c2_worst,
        c1_cases=c1_cases, c2_cases=c2_cases, mode="sampled" if sampled else "exhaustive",
        trials=ntrials if sampled else None, seed=seed if sampled else None,
        overrides=ov.to_dict(), c1_checked=ov.condition1,
        c2_checked=bool(ov.condition2 and canonical_orders))


@dataclass
class TrapSpec:
    """A trap graph on m_b cluster-vertices with its weight and status."""

    graph: np.ndarray
    level: int | None = None
    weight: Fraction | None = None
    verification: TrapVerification | None = None

    def __post_init__(self):
        g = np.asarray(self.graph).astype(bool)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or np.any(g != g.T) or np.any(np.diag(g)):
            raise ValueError("trap graph must be simple and undirected")
        self.graph = g

    @property
    def m(self):
        return self.graph.shape[0]

    @property
    def verified(self):
        return self.verification is not None and self.verification.passed

    def edges(self):
        iu, ju = np.nonzero(np.triu(self.graph, 1))
        return list(zip(iu.tolist(), ju.tolist()))

    def to_dict(self):
        return {"level": self.level, "weight": None if self.weight is None else str(self.weight),
                "m": self.m, "edges": [list(e) for e in self.edges()],
                "verification": None if self.verification is None else self.verification.to_dict()}

    @classmethod
    def from_dict(cls, d):
        g = np.zeros((d["m"], d["m"]), dtype=bool)
        for u, v in d["edges"]:
            g[u, v] = g[v, u] = True
        ver = d.get("verification")
        if ver is not None:
            ver = {k: v for k, v in ver.items() if k != "passed"}
            ver = TrapVerification(**ver)
        w = d.get("weight")
        return cls(g, d.get("level"), None if w is None else Fraction(w), ver)


def random_graph(m, rng):
    """G(m, 1/2) adjacency as a bool matrix."""
    upper = np.triu(rng.integers(0, 2, size=(m, m)).astype(bool), 1)
    return upper | upper.T


def generate_trap(m_b, canonical_orders=None, seed=0, overrides=None, retries=16,
                  budget=10 ** 7, level=None, weight=None):
    """Draw G(m_b, 1/2) until verify_trap passes, within ``retries`` draws."""
    if m_b < 4:
        raise ValueError(f"generate_trap needs m_b >= 4 (got {m_b}); smaller traps are degenerate")
    rng = make_rng(seed, "trap", m_b)
    best = None
    for attempt in range(retries):
        Q = random_graph(m_b, rng)
        ver = verify_trap(Q, canonical_orders, overrides, budget=budget, seed=seed)
        if ver.passed:
            return TrapSpec(Q, level, weight, ver)
        score = _failure_score(ver)
        if best is None or score < best[0]:
            best = (score, ver)
    raise TrapGenerationError(
        f"no trap on {m_b} vertices passed verification in {retries} draws", best[1])


def _failure_score(ver):
    s = Fraction(0)
    for w in (ver.c1_worst, ver.c2_worst):
        if w is not None:
            s = max(s, Fraction(w["excess"]))
    return s


# ------------------------------------------------------------ quadratic forms

@dataclass
class QuadformReport:
    value: Fraction
    sums: tuple
    form: str
    applicable: bool
    reason: str
    holds: bool | None
    deviation: Fraction | None = None
    bound: Fraction | None = None
    trap_verified: bool | None = None

    @property
    def violated(self):
        return bool(self.applicable and self.trap_verified and self.holds is False)


def _bilinear(Q, x, y):
    nz_x = [i for i, v in enumerate(x) if v]
    nz_y = [j for j, v in enumerate(y) if v]
    total = Fraction(0)
    for i in nz_x:
        row = Q[i]
        acc = Fraction(0)
        for j in nz_y:
            if row[j]:
                acc += y[j]
        total += x[i] * acc
    return total


def quadform_bounds(Q, x, y, *, quality=Fraction(1, 4), size=None, clusters=None, i=None,
                    j=None, delta=None, k=None, overrides=None, trap_verified=None):
    """Evaluate x^T Q y exactly and test the applicable trap inequality.

    Without ``clusters`` this is the condition-1 form: sum x = sum y = g with
    g >= sqrt(m)/2 (and g >= the condition-1 set size) gives
    |x^T Q y - g^2/2| <= quality * g^2.

    With ``clusters`` (index lists X_1..X_m of the coarse partition) and
    ``delta`` the four hypotheses of the condition-2 form are checked as
    stated, with bound 2 delta^2 g1 g2.  With ``k`` instead of ``delta`` the
    desk profile from ``overrides`` is used: max x_p <= g1 / k^p,
    max y_p <= g2 / ceil(h/k), bound (1/k^2 + slack) g1 g2.
    """
    Q = np.asarray(Q)
    m = Q.shape[0]
    x, y = _frac_vec(x), _frac_vec(y)
    if len(x) != m or len(y) != m or Q.shape != (m, m):
        raise ValueError("dimension mismatch between Q, x and y")
    for vec in (x, y):
        if any(v < 0 or v > 1 for v in vec):
            raise ValueError("x and y must lie in [0,1]^m")
    value = _bilinear(Q, x, y)
    g1, g2 = sum(x, Fraction(0)), sum(y, Fraction(0))

    if clusters is None:
        s = size if size is not None else condition1_size(m)
        if g1 != g2:
            return QuadformReport(value, (g1, g2), "condition1", False, "sum x != sum y", None,
                                  trap_verified=trap_verified)
        g = g1
        if 4 * g * g < m:
            return QuadformReport(value, (g,), "condition1", False, "g < sqrt(m)/2", None,
                                  trap_verified=trap_verified)
        if g < s:
            return QuadformReport(value, (g,), "condition1", False, "g below condition-1 set size", None,
                                  trap_verified=trap_verified)
        dev = abs(value - g * g / 2)
        bound = Fraction(quality) * g * g
        return QuadformReport(value, (g,), "condition1", True, "ok", dev <= bound, dev, bound,
                              trap_verified)

    Xi, Xj = set(clusters[i]), set(clusters[j])
    h = len(clusters[j])
    form = "condition2"
    if any(v and p not in Xi for p, v in enumerate(x)) or any(v and p not in Xj for p, v in enumerate(y)):
        return QuadformReport(value, (g1, g2), form, False, "support outside X_i / X_j", None,
                              trap_verified=trap_verified)
    if g1 == 0 or g2 == 0:
        return QuadformReport(value, (g1, g2), form, False, "zero vector", None,
                              trap_verified=trap_verified)
    if delta is not None:
        delta = Fraction(delta)
        # 1/log2(m) < delta  <=>  m > 2^(1/delta)
        if not (delta < Fraction(1, 200) and delta > 0 and _log2_exceeds(m, 1 / delta)):
            return QuadformReport(value, (g1, g2), form, False, "needs 1/log(m) < delta < 1/200",
                                  None, trap_verified=trap_verified)
        if any(v >= delta ** 6 * g1 for v in x):
            return QuadformReport(value, (g1, g2), form, False, "x_p / sum x >= delta^6", None,
                                  trap_verified=trap_verified)
        if not g2 > 2 * delta * h:
            return QuadformReport(value, (g1, g2), form, False, "sum y <= 2 delta h", None,
                                  trap_verified=trap_verified)
        bound = 2 * delta * delta * g1 * g2
    else:
        if k is None:
            raise ValueError("condition-2 form needs delta or k")
        ov = overrides or TrapOverrides()
        if k not in ov.k_range(m):
            return QuadformReport(value, (g1, g2), form, False, "k outside the profile range", None,
                                  trap_verified=trap_verified)
        if any(v * k ** ov.p > g1 for v in x):
            return QuadformReport(value, (g1, g2), form, False, "x_p > sum x / k^p", None,
                                  trap_verified=trap_verified)
        if any(v * -(-h // k) > g2 for v in y):
            return QuadformReport(value, (g1, g2), form, False, "y_p > sum y / ceil(h/k)", None,
                                  trap_verified=trap_verified)
        bound = ov.c2_bound(k) * g1 * g2
    dev = abs(value - g1 * g2 / 2)
    return QuadformReport(value, (g1, g2), form, True, "ok", dev <= bound, dev, bound, trap_verified)


def _log2_exceeds(m, t):
    """log2(m) > t for a positive rational t, exactly."""
    # m > 2^t  <=>  m^q > 2^p for t = p/q
    t = Fraction(t)
    return m ** t.denominator > 2 ** t.numerator
