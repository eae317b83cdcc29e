"""Constructive regularity refinement and the iterated (eps, f) process."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator

from .partitions import Partition, beta_refines, canonical_partition
from .regcheck import check_ef_regular, check_partition, class_sums
from .seeding import derive_seed


def _F(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def potential(Gw, Z):
    """Mean-square density index: sum over ordered class pairs, diagonal
    included, of |Z_i||Z_j|/n^2 * d(Z_i, Z_j)^2.  Lies in [0, 1]."""
    S = class_sums(Gw, Z)
    s = Z.class_size
    tot = sum(int(x) * int(x) for x in S.flat)
    return Fraction(tot, Z.k * Z.k * s ** 4 * Gw.den * Gw.den)


def default_f(x):
    return Fraction(1, x)


# ---------------------------------------------------------------- refining

@dataclass
class RefinePass:
    k: int
    irregular: int
    potential: Fraction
    gain: Fraction | None = None


@dataclass
class RefineResult:
    partition: Partition
    passes: list
    stop_reason: str
    exchanged_fraction: Fraction
    regular: bool
    report: object = None

    def to_dict(self):
        return {"k": self.partition.k, "stop_reason": self.stop_reason, "regular": self.regular,
                "exchanged_fraction": str(self.exchanged_fraction),
                "passes": [{"k": p.k, "irregular": p.irregular, "potential": str(p.potential),
                            "gain": None if p.gain is None else str(p.gain)} for p in self.passes]}


def _venn(Z, sets):
    """Split each class by membership in the given vertex sets."""
    key = np.zeros(Z.n, dtype=np.int64)
    for bit, S in enumerate(sets):
        key[np.asarray(S, dtype=np.int64)] |= 1 << bit
    pieces = []
    for c in Z.classes:
        ks = key[c]
        for val in np.unique(ks):
            pieces.append(c[ks == val])
    return pieces


def _rebalance(pieces, n, unit, max_classes):
    """Cut pieces into equal classes.  Chunks of the gcd size keep an exact
    refinement; if that yields too many classes, pieces are cut at a coarser
    size and the leftovers are pooled (the pooled vertices are reported)."""
    g = 0
    for p in pieces:
        g = math.gcd(g, len(p))
    if n // g <= max_classes:
        return [p[t:t + g] for p in pieces for t in range(0, len(p), g)], 0
    size = unit
    while n % size or n // size > max_classes:
        size += unit
    out, pool = [], []
    for p in pieces:
        full = len(p) // size * size
        out += [p[t:t + size] for t in range(0, full, size)]
        pool.append(p[full:])
    pool = np.sort(np.concatenate(pool)) if pool else np.zeros(0, dtype=np.int64)
    out += [pool[t:t + size] for t in range(0, len(pool), size)]
    return out, len(pool)


def szemeredi_refine(Gw, start, gamma, mode="heuristic", max_pairs=4, budget=16, seed=0,
                     threads=1, max_classes=None):
    """Refine ``start`` until at most gamma k^2 irregular pairs are found.

    Each pass takes witnesses from the (up to) ``max_pairs`` irregular pairs
    with the largest deviation, splits classes by the witness sets, and cuts
    the pieces back to equal classes.
    """
    gamma = _F(gamma)
    unit = Gw.atom_size
    if max_classes is None:
        max_classes = Gw.n // unit
    Z = start
    passes = []
    exchanged = 0
    reason = "budget"
    rep = None
    for step in range(budget + 1):
        rep = check_partition(Gw, Z, gamma, mode=mode, threads=threads, seed=derive_seed(seed, "refine", step))
        pot = potential(Gw, Z)
        gain = None if not passes else pot - passes[-1].potential
        passes.append(RefinePass(Z.k, rep.irregular_count, pot, gain))
        if rep.regular:
            reason = "regular"
            break
        if step == budget:
            break
        bad = sorted(rep.irregular_pairs, key=lambda t: (-t[2].witness["deviation"], t[0], t[1]))
        sets = []
        for _, _, v in bad[:max_pairs]:
            sets += [v.witness["A"], v.witness["B"]]
        pieces = _venn(Z, sets)
        classes, moved = _rebalance(pieces, Z.n, unit, max_classes)
        exchanged += moved
        newZ = Partition(Z.n, classes)
        if newZ.k == Z.k:
            reason = "stalled"
            break
        Z = newZ
    return RefineResult(Z, passes, reason, Fraction(exchanged, Gw.n), bool(rep.regular), rep)


# ------------------------------------------------------------ iterating

@dataclass
class IterationStep:
    index: int
    k_A: int
    k_B: int
    f_value: Fraction
    cond1: bool
    cond2: bool
    good_fraction: Fraction
    potential_A: Fraction
    potential_B: Fraction
    refine: RefineResult
    traps_between: list          # trap levels b with B refining P_b and A not
    small_traps: list            # trap levels b with k_A^2 <= m_b

    def row(self):
        return {"step": self.index, "k_A": self.k_A, "k_B": self.k_B, "f_value": str(self.f_value),
                "cond1": self.cond1, "cond2": self.cond2, "good_fraction": str(self.good_fraction),
                "potential_A": str(self.potential_A), "potential_B": str(self.potential_B),
                "refine_passes": len(self.refine.passes), "refine_stop": self.refine.stop_reason,
                "traps_between": " ".join(map(str, self.traps_between))}

    def to_dict(self):
        d = self.row()
        d["traps_between"] = self.traps_between
        d["small_traps"] = self.small_traps
        d["refine"] = self.refine.to_dict()
        return d


@dataclass
class IterationTrace:
    eps: Fraction
    steps: list = field(default_factory=list)
    stop_reason: str = ""
    trap_beta: Fraction = Fraction(1, 8)

    @property
    def potentials(self):
        out = []
        for s in self.steps:
            out += [p.potential for p in s.refine.passes]
        return out

    def to_dict(self):
        return {"eps": str(self.eps), "stop_reason": self.stop_reason,
                "trap_beta": str(self.trap_beta), "steps": [s.to_dict() for s in self.steps]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        cols = ["step", "k_A", "k_B", "f_value", "cond1", "cond2", "good_fraction",
                "potential_A", "potential_B", "refine_passes", "refine_stop", "traps_between"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for s in self.steps:
            w.writerow(s.row())
        return buf.getvalue()


def initial_order(Gw, eps):
    """Smallest order >= ceil(1/eps) that gives atom-aligned equal classes."""
    k = max(1, math.ceil(1 / _F(eps)))
    units = Gw.n // Gw.atom_size
    while units % k:
        k += 1
        if k > units:
            raise ValueError("no atom-aligned order at least 1/eps")
    return k


def traps_between(Gw, A, B, beta):
    out = []
    for t in getattr(Gw, "traps", ()):
        P = canonical_partition(Gw.n, Gw.orders[t.level])
        if beta_refines(B, P, beta)[0] and not beta_refines(A, P, beta)[0]:
            out.append(t.level)
    return out


def afks_iterate(Gw, eps, f=None, budget=6, mode="heuristic", refine_budget=16, max_pairs=4,
                 seed=0, threads=1, trap_beta=Fraction(1, 8), start=None):
    """A_1 = canonical intervals of order about 1/eps; B_i refines A_i to an
    f(|A_i|)-regular partition; stop once the pair is (eps, f)-regular,
    otherwise continue with A_{i+1} = B_i."""
    eps = _F(eps)
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    f = f or default_f
    A = start if start is not None else canonical_partition(Gw.n, initial_order(Gw, eps))
    trace = IterationTrace(eps, trap_beta=_F(trap_beta))
    for i in range(1, budget + 1):
        fv = _F(f(A.k))
        res = szemeredi_refine(Gw, A, fv, mode=mode, max_pairs=max_pairs, budget=refine_budget,
                               seed=derive_seed(seed, "iterate", i), threads=threads)
        B = res.partition
        ef = check_ef_regular(Gw, A, B, eps, fv, cond1=False)
        step = IterationStep(
            i, A.k, B.k, fv, res.regular, ef.cond2, ef.good_fraction,
            potential(Gw, A), potential(Gw, B), res,
            traps_between(Gw, A, B, trace.trap_beta),
            [t.level for t in getattr(Gw, "traps", ()) if A.k ** 2 <= Gw.orders[t.level]])
        trace.steps.append(step)
        if step.cond1 and step.cond2:
            trace.stop_reason = "ef_regular"
            return trace
        if B.k == A.k and not step.cond1:
            trace.stop_reason = "refine_failed"
            return trace
        A = B
    trace.stop_reason = "budget"
    return trace


# ------------------------------------------------------ estimator wrappers

class SzemerediRefiner(BaseEstimator):
    """fit(graph, start=None) sets partition_ and result_."""

    def __init__(self, gamma=Fraction(1, 4), mode="heuristic", max_pairs=4, budget=16, seed=0, threads=1):
        self.gamma = gamma
        self.mode = mode
        self.max_pairs = max_pairs
        self.budget = budget
        self.seed = seed
        self.threads = threads

    def fit(self, X, y=None, start=None):
        start = start if start is not None else canonical_partition(X.n, 1)
        self.result_ = szemeredi_refine(X, start, self.gamma, self.mode, self.max_pairs,
                                        self.budget, self.seed, self.threads)
        self.partition_ = self.result_.partition
        return self

    def transform(self, X):
        return self.partition_.class_of


class StrongRegularityIterator(BaseEstimator):
    """fit(graph) runs the iterated process and sets trace_."""

    def __init__(self, eps=Fraction(1, 8), f=None, budget=6, mode="heuristic", refine_budget=16,
                 max_pairs=4, seed=0, threads=1, trap_beta=Fraction(1, 8)):
        self.eps = eps
        self.f = f
        self.budget = budget
        self.mode = mode
        self.refine_budget = refine_budget
        self.max_pairs = max_pairs
        self.seed = seed
        self.threads = threads
        self.trap_beta = trap_beta

    def fit(self, X, y=None):
        self.trace_ = afks_iterate(X, self.eps, self.f, self.budget, self.mode, self.refine_budget,
                                   self.max_pairs, self.seed, self.threads, self.trap_beta)
        return self
