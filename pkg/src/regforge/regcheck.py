"""gamma-regularity of pairs and partitions, (eps, f)-regularity, bad pairs.

Graphs are anything exposing ``num`` (atom x atom integer weights), ``den``,
``atom_size``, ``atom_count``, ``n`` and ``counts(vertices)``: both
BlockWeightedGraph and SampledGraph qualify.  All verdicts are decided in
exact integer arithmetic.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .seeding import make_rng


class CapExceeded(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def _F(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def floor_size(gamma, size):
    """ceil(gamma * size): the smallest admissible subset size."""
    return max(0, math.ceil(_F(gamma) * size))


@dataclass
class RegularityVerdict:
    regular: bool
    mode: str
    gamma: Fraction
    d_pair: Fraction
    witness: dict | None = None

    def to_dict(self):
        w = None
        if self.witness is not None:
            w = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in self.witness.items()}
        return {"regular": self.regular, "mode": self.mode, "gamma": str(self.gamma),
                "d_pair": str(self.d_pair), "witness": w}


def _group(Gw, verts):
    """(atoms, counts, vertices-by-atom) for a vertex collection."""
    verts = np.asarray(sorted(set(int(v) for v in verts)), dtype=np.int64)
    atoms_of = verts // Gw.atom_size
    atoms, counts = np.unique(atoms_of, return_counts=True)
    by_atom = [verts[atoms_of == a] for a in atoms]
    return atoms, counts.astype(np.int64), by_atom


def _sum(mat, ca, cb):
    return int(np.asarray(ca, dtype=object) @ mat.astype(object) @ np.asarray(cb, dtype=object))


def pair_density(Gw, A, B):
    ca, cb = Gw.counts(A), Gw.counts(B)
    return Fraction(_sum(Gw.num, ca, cb), int(ca.sum()) * int(cb.sum()) * Gw.den)


def _materialize(by_atom, x):
    """Vertex set taking the first x[t] vertices of each atom group."""
    parts = [g[:c] for g, c in zip(by_atom, x) if c]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _witness(Gw, A1, B1, d_pair, gamma, sizeA, sizeB):
    d_sub = pair_density(Gw, A1, B1)
    ok = (len(A1) >= floor_size(gamma, sizeA) and len(B1) >= floor_size(gamma, sizeB)
          and abs(d_sub - d_pair) > gamma and len(A1) > 0 and len(B1) > 0)
    if not ok:
        return None
    return {"A": sorted(int(v) for v in A1), "B": sorted(int(v) for v in B1),
            "atoms_A": sorted(set(int(v) // Gw.atom_size for v in A1)),
            "atoms_B": sorted(set(int(v) // Gw.atom_size for v in B1)),
            "d_sub": d_sub, "d_pair": d_pair, "deviation": abs(d_sub - d_pair)}


def validate_witness(Gw, A, B, gamma, witness):
    """Recompute a witness from scratch; True iff it proves irregularity."""
    gamma = _F(gamma)
    A, B = set(int(v) for v in A), set(int(v) for v in B)
    A1, B1 = set(witness["A"]), set(witness["B"])
    if not A1 <= A or not B1 <= B or not A1 or not B1:
        return False
    if len(A1) < floor_size(gamma, len(A)) or len(B1) < floor_size(gamma, len(B)):
        return False
    return abs(pair_density(Gw, A1, B1) - pair_density(Gw, A, B)) > gamma


def _constant_block(Gw, atomsA, atomsB):
    blk = Gw.num[np.ix_(atomsA, atomsB)]
    return blk.size == 0 or bool(np.all(blk == blk.flat[0]))


def check_pair(Gw, A, B, gamma, mode="exact", cap=14, restarts=32, seed=0):
    """Decide whether (A, B) is gamma-regular.

    exact: every admissible A' is enumerated as a per-atom count vector on the
    side with fewer configurations (at most 2**cap of them); for each A' and
    each size q the extremal B' is the top or bottom q vertices by weight to
    A', which makes the search complete.

    heuristic: greedy extremal rows/columns plus random restarts.  An
    irregular verdict always carries a revalidated witness; a regular verdict
    proves nothing.
    """
    gamma = _F(gamma)
    A = sorted(set(int(v) for v in A))
    B = sorted(set(int(v) for v in B))
    if not A or not B:
        raise ValueError("check_pair needs nonempty A and B")
    if set(A) & set(B):
        raise ValueError("check_pair needs disjoint A and B")
    if mode not in ("exact", "heuristic"):
        raise ValueError(f"unknown mode {mode!r}")
    d = pair_density(Gw, A, B)
    atA, cA, gA = _group(Gw, A)
    atB, cB, gB = _group(Gw, B)
    if gamma >= 1 or _constant_block(Gw, atA, atB):
        return RegularityVerdict(True, mode, gamma, d)
    if mode == "exact":
        confA = math.prod(int(c) + 1 for c in cA)
        confB = math.prod(int(c) + 1 for c in cB)
        if min(confA, confB) > 2 ** cap:
            raise CapExceeded(f"exact mode needs at most 2^{cap} configurations on one side "
                              f"(have {confA} and {confB})")
        if confA <= confB:
            w = _exact_search(Gw, A, B, atA, cA, gA, atB, cB, gB, d, gamma)
        else:
            w = _exact_search(Gw, B, A, atB, cB, gB, atA, cA, gA, d, gamma)
            if w is not None:
                w = _swap(w)
        return RegularityVerdict(w is None, "exact", gamma, d, w)
    if mode == "heuristic":
        w = _heuristic_search(Gw, A, B, atA, cA, gA, atB, cB, gB, d, gamma, restarts, seed)
        return RegularityVerdict(w is None, "heuristic", gamma, d, w)
    raise ValueError(f"unknown mode {mode!r}")


def _swap(w):
    w = dict(w)
    w["A"], w["B"] = w["B"], w["A"]
    w["atoms_A"], w["atoms_B"] = w["atoms_B"], w["atoms_A"]
    return w


def _exact_search(Gw, A, B, atA, cA, gA, atB, cB, gB, d, gamma, batch=4096):
    nA, nB = len(A), len(B)
    pmin, qmin = max(1, floor_size(gamma, nA)), max(1, floor_size(gamma, nB))
    W = Gw.num[np.ix_(atA, atB)].astype(np.int64)
    den = Gw.den
    # integer thresholds: S > hi[p, q] or S < lo[p, q] means |S/(p q den) - d| > gamma
    qs = np.arange(nB + 1)
    hi = np.empty((nA + 1, nB + 1), dtype=object)
    lo = np.empty((nA + 1, nB + 1), dtype=object)
    for p in range(nA + 1):
        for q in range(nB + 1):
            t = p * q * den
            hi[p, q] = math.floor((d + gamma) * t)
            lo[p, q] = math.ceil((d - gamma) * t)
    big = nA * nB * den * max(1, int(W.max(initial=0)))
    dtype = np.int64 if big < 2 ** 62 else object
    hi_arr, lo_arr = hi.astype(dtype), lo.astype(dtype)
    ranges = [range(int(c) + 1) for c in cA]
    best = None
    configs = product(*ranges)
    while True:
        chunk = [c for _, c in zip(range(batch), configs)]
        if not chunk:
            break
        X = np.asarray(chunk, dtype=np.int64).reshape(len(chunk), len(cA))
        p = X.sum(axis=1)
        keep = p >= pmin
        if not np.any(keep):
            continue
        X, p = X[keep], p[keep]
        R = (X @ W).astype(dtype)  # weight of each B-atom vertex to A'
        Rv = np.repeat(R, cB, axis=1)  # per B vertex
        Rs = -np.sort(-Rv, axis=1) if dtype is np.int64 else np.array([sorted(r, reverse=True) for r in Rv], dtype=object)
        top = np.concatenate([np.zeros((len(X), 1), dtype=dtype), np.cumsum(Rs, axis=1)], axis=1)
        total = top[:, -1:]
        bottom = total - top[:, ::-1]  # bottom[:, q] = sum of the q smallest
        qsel = qs[qmin:]
        T = top[:, qmin:]
        Bt = bottom[:, qmin:]
        H = hi_arr[p][:, qmin:]
        L = lo_arr[p][:, qmin:]
        viol = (T > H) | (Bt < L)
        if not np.any(viol):
            continue
        # rank violations by float deviation, settle near-ties exactly
        pq = (p[:, None] * qsel[None, :] * den).astype(np.float64)
        fd = float(d)
        devT = np.where(T > H, np.abs(T.astype(np.float64) / pq - fd), -1.0)
        devB = np.where(Bt < L, np.abs(Bt.astype(np.float64) / pq - fd), -1.0)
        top_dev = max(devT.max(), devB.max())
        if best is not None and top_dev < float(best[0][0]) - 1e-9:
            continue
        for devs, Sm, upper in ((devT, T, True), (devB, Bt, False)):
            rows, cols = np.nonzero(devs >= top_dev - 1e-9)
            for r, cidx in zip(rows.tolist(), cols.tolist()):
                q = int(qsel[cidx])
                pp = int(p[r])
                dev = abs(Fraction(int(Sm[r, cidx]), pp * q * den) - d)
                if dev <= gamma:
                    continue
                key = (dev, pp, q, upper)
                if best is None or key > best[0]:
                    best = (key, X[r].copy(), upper, R[r].copy())
    if best is None:
        return None
    (_, pp, q, _), x, upper, rrow = best
    A1 = _materialize(gA, x)
    # B': the q vertices of B with the largest (or smallest) weight to A'
    order = sorted(range(len(atB)), key=lambda t: (-int(rrow[t]) if upper else int(rrow[t]), t))
    take, chosen = q, []
    for t in order:
        if take == 0:
            break
        k = min(take, int(cB[t]))
        chosen.append(gB[t][:k])
        take -= k
    B1 = np.concatenate(chosen)
    w = _witness(Gw, A1, B1, d, gamma, nA, nB)
    assert w is not None, "exact search produced an invalid witness"
    return w


def _pick_units(scores, counts, groups, need, largest, rng=None):
    """Whole atoms in score order until at least ``need`` vertices are taken."""
    idx = np.arange(len(scores))
    if rng is not None:
        order = rng.permutation(idx)
    else:
        key = -scores if largest else scores
        order = np.lexsort((idx, key))
    x = np.zeros(len(scores), dtype=np.int64)
    got = 0
    for t in order:
        if got >= need:
            break
        x[t] = counts[t]
        got += int(counts[t])
    return x


def _heuristic_search(Gw, A, B, atA, cA, gA, atB, cB, gB, d, gamma, restarts, seed):
    nA, nB = len(A), len(B)
    pmin, qmin = max(1, floor_size(gamma, nA)), max(1, floor_size(gamma, nB))
    W = Gw.num[np.ix_(atA, atB)].astype(np.float64)
    rng = make_rng(seed, "heuristic")
    best = None

    def consider(x, y):
        nonlocal best
        p, q = int(x.sum()), int(y.sum())
        if p < pmin or q < qmin:
            return
        val = float(x @ W @ y) / (p * q * Gw.den)
        dev = abs(val - float(d))
        if best is None or dev > best[0]:
            best = (dev, x.copy(), y.copy())

    starts = []
    for largest in (True, False):
        rows = W @ cB  # each A atom against all of B
        starts.append((_pick_units(rows, cA, gA, pmin, largest), largest))
    for _ in range(restarts):
        starts.append((_pick_units(np.zeros(len(cA)), cA, gA, pmin, True, rng), bool(rng.integers(0, 2))))
    for x, largest in starts:
        for _ in range(3):
            cols = x @ W
            y = _pick_units(cols, cB, gB, qmin, largest)
            consider(x, y)
            rows = W @ y
            x = _pick_units(rows, cA, gA, pmin, largest)
            consider(x, y)
    if best is None:
        return None
    _, x, y = best
    A1, B1 = _materialize(gA, x), _materialize(gB, y)
    return _witness(Gw, A1, B1, d, gamma, nA, nB)


# ---------------------------------------------------------------- partitions

@dataclass
class PartitionReport:
    regular: bool
    k: int
    gamma: Fraction
    irregular_pairs: list = field(default_factory=list)  # (i, j, verdict)
    checked_pairs: int = 0

    @property
    def irregular_count(self):
        return len(self.irregular_pairs)

    def to_dict(self):
        return {"regular": self.regular, "k": self.k, "gamma": str(self.gamma),
                "checked_pairs": self.checked_pairs, "irregular_count": self.irregular_count,
                "irregular_pairs": [{"i": i, "j": j, "verdict": v.to_dict()} for i, j, v in self.irregular_pairs]}


def check_alignment(Gw, Z):
    """Each class must be a union of whole atoms (trivial for sampled graphs)."""
    if Gw.atom_size == 1:
        return
    for i, c in enumerate(Z.classes):
        cnt = Gw.counts(c)
        if np.any((cnt != 0) & (cnt != Gw.atom_size)):
            raise AlignmentError(f"class {i} splits an atom")


def check_partition(Gw, Z, gamma, mode="heuristic", threads=1, seed=0, cap=14, restarts=32):
    """Count irregular unordered class pairs; regular iff count <= gamma k^2."""
    gamma = _F(gamma)
    if Z.n != Gw.n:
        raise ValueError("partition universe does not match the graph")
    check_alignment(Gw, Z)
    k = Z.k
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]

    def run(ij):
        i, j = ij
        return check_pair(Gw, Z.classes[i], Z.classes[j], gamma, mode=mode, cap=cap,
                          restarts=restarts, seed=_pair_seed(seed, i, j))

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            verdicts = list(ex.map(run, pairs))
    else:
        verdicts = [run(ij) for ij in pairs]
    bad = [(i, j, v) for (i, j), v in zip(pairs, verdicts) if not v.regular]
    return PartitionReport(len(bad) <= gamma * k * k, k, gamma, bad, len(pairs))


def _pair_seed(seed, i, j):
    return int(make_rng(seed, "pair", i, j).integers(0, 2 ** 63 - 1))


# ------------------------------------------------------------ (eps, f) check

@dataclass
class GoodPairReport:
    pair: tuple
    deviant_count: int
    ell: int
    good: bool
    d_pair: Fraction

    def to_dict(self):
        return {"i": self.pair[0], "j": self.pair[1], "deviant_count": self.deviant_count,
                "ell": self.ell, "good": self.good, "d_pair": str(self.d_pair)}


@dataclass
class EFReport:
    cond1: bool
    cond2: bool
    good_count: int
    pair_count: int
    eps: Fraction
    f_value: Fraction
    reports: list
    partition_report: PartitionReport | None = None

    @property
    def good_fraction(self):
        return Fraction(self.good_count, self.pair_count) if self.pair_count else Fraction(1)

    def to_dict(self):
        return {"cond1": self.cond1, "cond2": self.cond2, "good_count": self.good_count,
                "pair_count": self.pair_count, "good_fraction": str(self.good_fraction),
                "eps": str(self.eps), "f_value": str(self.f_value),
                "reports": [r.to_dict() for r in self.reports],
                "partition": None if self.partition_report is None else self.partition_report.to_dict()}


def class_sums(Gw, Z):
    """k x k integer matrix of total weight between classes (times den)."""
    C = np.stack([Gw.counts(c) for c in Z.classes]).astype(object)
    return C @ Gw.num.astype(object) @ C.T


def subpair_densities(Gw, A, B):
    """For each coarse pair (i, j), i < j: the ell x ell exact sub-densities,
    with the coarse density.  B must refine A exactly."""
    parent = B.parent_map(A)
    subs = [np.flatnonzero(parent == i) for i in range(A.k)]
    ell = len(subs[0])
    if any(len(s) != ell for s in subs):
        raise ValueError("refinement is not uniform")
    S = class_sums(Gw, B)
    u, v = B.class_size, A.class_size
    out = {}
    for i in range(A.k):
        for j in range(i + 1, A.k):
            blk = S[np.ix_(subs[i], subs[j])]
            dpair = Fraction(int(blk.sum()), v * v * Gw.den)
            dens = [[Fraction(int(x), u * u * Gw.den) for x in row] for row in blk]
            out[(i, j)] = (dpair, dens, subs[i], subs[j])
    return out, ell


def check_ef_regular(Gw, A, B, eps, f_value, mode="heuristic", threads=1, seed=0, cond1=True):
    """cond1: B is f_value-regular; cond2: at least (1-eps) C(k,2) coarse pairs
    are good, a pair being good when at most eps ell^2 of its sub-pairs deviate
    from the pair density by eps or more."""
    eps, f_value = _F(eps), _F(f_value)
    if not B.refines(A):
        raise ValueError("B must refine A")
    check_alignment(Gw, B)
    table, ell = subpair_densities(Gw, A, B)
    reports = []
    for (i, j), (dpair, dens, _, _) in table.items():
        dev = sum(1 for row in dens for x in row if abs(x - dpair) >= eps)
        reports.append(GoodPairReport((i, j), dev, ell, dev <= eps * ell * ell, dpair))
    k = A.k
    pairs = k * (k - 1) // 2
    good = sum(r.good for r in reports)
    cond2 = good >= (1 - eps) * pairs
    prep = None
    c1 = None
    if cond1:
        prep = check_partition(Gw, B, f_value, mode=mode, threads=threads, seed=seed)
        c1 = prep.regular
    return EFReport(c1, cond2, good, pairs, eps, f_value, reports, prep)


@dataclass
class BadPairWitness:
    C1: list
    C2: list
    gap: Fraction
    method: str

    def to_dict(self):
        return {"C1": [list(t) for t in self.C1], "C2": [list(t) for t in self.C2],
                "gap": str(self.gap), "method": self.method}


def bad_pair_witness(Gw, V_i, V_j, subclasses_i, subclasses_j, eps):
    """Two families of sub-pairs, each of size >= eps ell^2, whose densities
    differ by at least 2 eps across the families; None if no such pair exists.

    The sub-pair densities are sorted; the widest gap of at least 2 eps with
    enough pairs on both sides is used when one exists.  Otherwise the
    ceil(eps ell^2) lowest pairs are set against every pair at least 2 eps
    above them, which finds a witness whenever one exists.
    """
    eps = _F(eps)
    ell = len(subclasses_i)
    if len(subclasses_j) != ell:
        raise ValueError("both sides need ell subclasses")
    dens = []
    for a, U in enumerate(subclasses_i):
        for b, U2 in enumerate(subclasses_j):
            dens.append((pair_density(Gw, U, U2), (a, b)))
    dens.sort(key=lambda t: (t[0], t[1]))
    N = len(dens)
    c = max(1, math.ceil(eps * ell * ell))
    if 2 * c > N:
        return None
    vals = [v for v, _ in dens]
    best = None
    for t in range(c, N - c + 1):
        gap = vals[t] - vals[t - 1]
        if gap >= 2 * eps and (best is None or gap > best[0]):
            best = (gap, t)
    if best is not None:
        gap, t = best
        return BadPairWitness([p for _, p in dens[t:]], [p for _, p in dens[:t]], gap, "gap-cut")
    low = vals[c - 1]
    high = [p for v, p in dens if v >= low + 2 * eps]
    if len(high) >= c:
        C1 = high
        gap = min(v for v, _ in dens if v >= low + 2 * eps) - low
        return BadPairWitness(C1, [p for _, p in dens[:c]], gap, "extremal")
    return None


def validate_bad_pair(Gw, subclasses_i, subclasses_j, eps, wit):
    """Pairwise recheck of a bad-pair witness."""
    eps = _F(eps)
    ell = len(subclasses_i)
    need = eps * ell * ell
    if len(wit.C1) < need or len(wit.C2) < need or set(wit.C1) & set(wit.C2):
        return False
    d1 = [pair_density(Gw, subclasses_i[a], subclasses_j[b]) for a, b in wit.C1]
    d2 = [pair_density(Gw, subclasses_i[a], subclasses_j[b]) for a, b in wit.C2]
    return all(abs(x - y) >= 2 * eps for x in d1 for y in d2)
