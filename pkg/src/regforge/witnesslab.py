"""Witness extraction on the hard graph: useful classes, helpful pairs,
peeling through trap levels, irregularity witnesses with a per-source
density breakdown, and a checker for the balanced-vector inequality."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .hardgraph import Source, density_counts
from .partitions import container, verify_balanced, _check_beta


def _F(x):
    return x if isinstance(x, Fraction) else Fraction(x)


# ------------------------------------------------------------ useful classes

@dataclass
class UsefulReport:
    labels: list            # per fine class: container index in Pb or None
    useful: list            # per fine class: bool
    coarse_useless: list    # per coarse class: useless subclass count (None without A)
    coarse_useful: list     # per coarse class: bool (None without A)

    def to_dict(self):
        return {"labels": self.labels, "useful": self.useful,
                "coarse_useless": self.coarse_useless, "coarse_useful": self.coarse_useful}


def classify_useful(B, Pb, beta, A=None, threshold=None):
    """A fine class is useful when it is beta-contained in a class of Pb.

    With the coarse partition A, a coarse class is useful when fewer than
    threshold * ell of its subclasses are useless.  The default threshold is
    sqrt(beta), compared exactly by squaring.
    """
    beta = _check_beta(beta)
    labels = [container(c, Pb, beta) for c in B.classes]
    useful = [lab is not None for lab in labels]
    cu = cuf = None
    if A is not None:
        parent = B.parent_map(A)
        ell = B.k // A.k
        cu = [0] * A.k
        for t, ok in enumerate(useful):
            if not ok:
                cu[int(parent[t])] += 1
        if threshold is None:
            cuf = [c * c < beta * ell * ell for c in cu]
        else:
            cuf = [c < _F(threshold) * ell for c in cu]
    return UsefulReport(labels, useful, cu, cuf)


# ------------------------------------------------------------ helpful pairs

@dataclass
class HelpfulPairCert:
    t: int
    u: int
    i: int                  # container of Z_t in P_{r-1}
    j: int                  # container of Z_u in P_{r-1}
    level: int
    split_a: int            # |Z_t & A_{i,j}|
    split_b: int            # |Z_t & B_{i,j}|
    size_t: int
    beta: Fraction

    def to_dict(self):
        d = dict(self.__dict__)
        d["beta"] = str(self.beta)
        return d


def helpful_pairs(Gw, Z, r, beta):
    """Certificates for every ordered class pair (Z_t, Z_u), t != u, with
    Z_t, Z_u beta-contained in level-(r-1) clusters X_i, X_j and Z_t split
    at least beta^2 |Z_t| on both sides of (A_{i,j}, B_{i,j})."""
    beta = _F(beta)
    if not (0 < beta < Fraction(1, 2)):
        raise ValueError("beta must lie in (0, 1/2)")
    if r not in Gw.sides:
        raise KeyError(f"no stored splits for level {r}")
    P = Gw.partition(r - 1)
    conts = [container(c, P, beta) for c in Z.classes]
    in_a_cache = {}
    certs = []
    for t, zt in enumerate(Z.classes):
        i = conts[t]
        if i is None:
            continue
        for u, _ in enumerate(Z.classes):
            j = conts[u]
            if u == t or j is None:
                continue
            if (i, j) not in in_a_cache:
                a_set, _b = Gw.split_sets(r, i, j)
                mark = np.zeros(Gw.n, dtype=bool)
                mark[a_set] = True
                x_mark = P.class_of == i
                in_a_cache[(i, j)] = (mark, x_mark)
            mark, x_mark = in_a_cache[(i, j)]
            sa = int(mark[zt].sum())
            sb = int((x_mark[zt] & ~mark[zt]).sum())
            if min(sa, sb) >= beta * beta * len(zt):
                certs.append(HelpfulPairCert(t, u, i, j, r, sa, sb, len(zt), beta))
    return certs


def validate_cert(Gw, Z, cert):
    """Recount a certificate from scratch."""
    P = Gw.partition(cert.level - 1)
    zt, zu = set(Z.classes[cert.t].tolist()), set(Z.classes[cert.u].tolist())
    xi, xj = set(P.classes[cert.i].tolist()), set(P.classes[cert.j].tolist())
    b = cert.beta
    if len(zt & xi) < (1 - b) * len(zt) or len(zu & xj) < (1 - b) * len(zu):
        return False
    a_set, b_set = Gw.split_sets(cert.level, cert.i, cert.j)
    sa, sb = len(zt & set(a_set.tolist())), len(zt & set(b_set.tolist()))
    return (sa, sb) == (cert.split_a, cert.split_b) and min(sa, sb) >= b * b * len(zt)


# ------------------------------------------------------------------ peeling

@dataclass
class PeelStage:
    level: int
    cluster: int | None     # None means the set is spread at this level
    size: int


@dataclass
class PeelTrace:
    start: list
    stages: list
    final: list
    delta: Fraction

    @property
    def descents(self):
        return sum(1 for s in self.stages if s.cluster is not None)

    def to_dict(self):
        return {"start_size": len(self.start), "final": self.final, "delta": str(self.delta),
                "stages": [{"level": s.level, "cluster": s.cluster, "size": s.size} for s in self.stages]}


def peel(A, trap_partitions, delta, levels=None):
    """Descend through the partitions in order, keeping the lowest-index
    cluster holding at least delta^6 of the current set; stop at the first
    partition where no cluster does."""
    delta = _F(delta)
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    cur = np.asarray(sorted(set(int(v) for v in A)), dtype=np.int64)
    if cur.size == 0:
        raise ValueError("peel needs a nonempty set")
    start = cur.tolist()
    levels = list(levels) if levels is not None else list(range(len(trap_partitions)))
    thr = delta ** 6
    stages = []
    for lev, P in zip(levels, trap_partitions):
        counts = np.bincount(P.class_of[cur], minlength=P.k)
        hit = np.flatnonzero(counts >= thr * cur.size)
        if hit.size == 0:
            stages.append(PeelStage(lev, None, int(cur.size)))
            break
        c = int(hit[0])
        cur = cur[P.class_of[cur] == c]
        stages.append(PeelStage(lev, c, int(cur.size)))
    return PeelTrace(start, stages, cur.tolist(), delta)


def validate_peel(trace, trap_partitions):
    """Recheck the stage growth ratios, the final size bound, and that the
    final set is spread or contained at every partition (exhaustive)."""
    thr = trace.delta ** 6
    prev = len(trace.start)
    cur = set(trace.start)
    for s, P in zip(trace.stages, trap_partitions):
        if s.cluster is None:
            if any(len(cur & set(c.tolist())) >= thr * len(cur) for c in P.classes):
                return False
            break
        cur = cur & set(P.classes[s.cluster].tolist())
        if len(cur) != s.size or len(cur) < thr * prev:
            return False
        prev = len(cur)
    if sorted(cur) != trace.final:
        return False
    if len(trace.final) < thr ** trace.descents * len(trace.start):
        return False
    fin = set(trace.final)
    for P in trap_partitions:
        shares = [len(fin & set(c.tolist())) for c in P.classes]
        contained = max(shares) == len(fin)
        spread = all(x < thr * len(fin) for x in shares)
        if not (contained or spread):
            return False
    return True


# ---------------------------------------------------- irregularity witness

@dataclass
class WitnessReport:
    cert: HelpfulPairCert
    witness: dict | None
    W_side: str
    sizes: dict
    densities: dict
    breakdown: dict         # source -> (d(A', W), d(B', W), difference)
    g_discrepancy: Fraction
    delta: Fraction
    gamma: Fraction
    flags: dict
    peel_a: PeelTrace
    peel_b: PeelTrace

    @property
    def found(self):
        return self.witness is not None

    def to_dict(self):
        return {"cert": self.cert.to_dict(), "found": self.found, "W_side": self.W_side,
                "witness": None if self.witness is None else
                {k: (str(v) if isinstance(v, Fraction) else v) for k, v in self.witness.items()},
                "sizes": self.sizes,
                "densities": {k: str(v) for k, v in self.densities.items()},
                "breakdown": {k: [str(x) for x in v] for k, v in self.breakdown.items()},
                "g_discrepancy": str(self.g_discrepancy), "delta": str(self.delta),
                "gamma": str(self.gamma), "flags": self.flags,
                "peel_a": self.peel_a.to_dict(), "peel_b": self.peel_b.to_dict()}


def trap_levels_below(Gw, r):
    """Trapped levels strictly finer than P_{r-1}, in increasing order,
    with their ledger sources."""
    out = []
    for g, t in enumerate(Gw.traps, start=1):
        if t.level >= r:
            out.append((t.level, Source("trap", g), t.weight))
    return sorted(out)


def irregularity_witness(Gw, Z, cert, delta=None, gamma=None):
    """Build A', B' by peeling Z_t & A_{i,j} and Z_t & B_{i,j}, pick W_u on
    the larger side of Z_u, and report a witness when (A', W_u) or (B', W_u)
    deviates from d(Z_t, Z_u) by more than gamma with both size floors met."""
    r = cert.level
    if delta is None:
        delta = Gw.params.level_weight(r) if Gw.params is not None else None
    if delta is None:
        raise ValueError("delta is required when the graph carries no params")
    delta = _F(delta)
    gamma = _F(gamma if gamma is not None else delta / 4)
    zt = Z.classes[cert.t]
    zu = Z.classes[cert.u]
    a_ij, b_ij = Gw.split_sets(r, cert.i, cert.j)
    a_ji, b_ji = Gw.split_sets(r, cert.j, cert.i)
    A = np.intersect1d(zt, a_ij)
    B = np.intersect1d(zt, b_ij)
    wa, wb = np.intersect1d(zu, a_ji), np.intersect1d(zu, b_ji)
    if len(wa) >= len(wb):
        W, side = wa, "A"
    else:
        W, side = wb, "B"
    tl = trap_levels_below(Gw, r)
    parts = [Gw.partition(b) for b, _, _ in tl]
    levels = [b for b, _, _ in tl]
    pa = peel(A, parts, delta, levels)
    pb = peel(B, parts, delta, levels)
    A1 = np.asarray(pa.final, dtype=np.int64)
    B1 = np.asarray(pb.final, dtype=np.int64)
    ca, cb, cw = Gw.counts(A1), Gw.counts(B1), Gw.counts(W)
    breakdown = {}
    g_a = g_b = Fraction(0)
    for src in sorted(Gw.ledger, key=lambda s: (s.kind, s.index)):
        da = density_counts(Gw, ca, cw, src)
        db = density_counts(Gw, cb, cw, src)
        breakdown[str(src)] = (da, db, da - db)
        if src.kind == "gowers":
            g_a += da
            g_b += db
    dA = density_counts(Gw, ca, cw)
    dB = density_counts(Gw, cb, cw)
    dZ = density_counts(Gw, Gw.counts(zt), Gw.counts(zu))
    floors = {"A'": len(A1) >= gamma * len(zt), "B'": len(B1) >= gamma * len(zt),
              "W": len(W) >= gamma * len(zu)}
    witness = None
    if floors["W"]:
        for name, S1, dv in (("A'", A1, dA), ("B'", B1, dB)):
            if floors[name] and abs(dv - dZ) > gamma:
                if witness is None or abs(dv - dZ) > witness["deviation"]:
                    witness = {"side": name, "A": S1.tolist(), "B": W.tolist(),
                               "atoms_A": sorted(set((S1 // Gw.atom_size).tolist())),
                               "atoms_B": sorted(set((W // Gw.atom_size).tolist())),
                               "d_sub": dv, "d_pair": dZ, "deviation": abs(dv - dZ)}
    flags = _claim_flags(Gw, tl, breakdown, pa, pb, delta, g_a - g_b)
    sizes = {"Z_t": len(zt), "Z_u": len(zu), "A": len(A), "B": len(B),
             "A'": len(A1), "B'": len(B1), "W": len(W)}
    dens = {"d(A',W)": dA, "d(B',W)": dB, "d(Z_t,Z_u)": dZ}
    return WitnessReport(cert, witness, side, sizes, dens, breakdown, abs(g_a - g_b),
                         delta, gamma, flags, pa, pb)


def _claim_flags(Gw, tl, breakdown, pa, pb, delta, gdiff):
    """Which case-analysis conditions the ledger data satisfies."""
    flags = {"g_discrepancy_ge_2_3_delta": abs(gdiff) >= Fraction(2, 3) * delta}
    ell_u = None
    for pos, (b, src, alpha) in enumerate(tl):
        diff = breakdown.get(str(src), (0, 0, Fraction(0)))[2]
        if abs(diff) > 4 * delta * delta:
            ell_u = pos
            break
    flags["trap_discrepancy_level"] = None if ell_u is None else tl[ell_u][0]
    flags["no_trap_exceeds_4_delta_sq"] = ell_u is None
    if ell_u is not None:
        b, src, alpha = tl[ell_u]
        P = Gw.partition(b)
        out = {}
        for name, tr, key in (("A'", pa, 0), ("B'", pb, 1)):
            fin = np.asarray(tr.final, dtype=np.int64)
            contained = np.unique(P.class_of[fin]).size == 1
            dl = breakdown[str(src)][key]
            out[name] = (not contained) and abs(dl - alpha / 2) > 2 * delta * delta
        flags["spread_and_off_half"] = out
    return flags


def witness_sweep(Gw, Z, r, beta, delta=None, gamma=None, threads=1):
    """Run irregularity_witness over every helpful certificate at level r."""
    certs = helpful_pairs(Gw, Z, r, beta)

    def one(c):
        return irregularity_witness(Gw, Z, c, delta, gamma)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, certs))
    return [one(c) for c in certs]


# ------------------------------------------------- balanced-vector checker

@dataclass
class BalancedVectorReport:
    applicable: bool
    count: int
    holds: bool
    reasons: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def check_balanced_vector_lemma(fam, lam, zeta, eta, xi):
    """Count bipartitions on which both sides carry more than xi of lambda.

    Applicable when (1-eta)(1-4 xi) > 1 - zeta + zeta^2, max(lambda) < 1-zeta
    and the family is verified balanced; then holds iff count >= eta m.
    """
    lam = [_F(x) for x in lam]
    zeta, eta, xi = _F(zeta), _F(eta), _F(xi)
    if len(lam) != fam.M:
        raise ValueError("lambda must have one entry per ground element")
    if any(x < 0 for x in lam) or sum(lam) != 1:
        raise ValueError("lambda must be a probability vector")
    reasons = []
    if not (1 - eta) * (1 - 4 * xi) > 1 - zeta + zeta * zeta:
        reasons.append("parameter inequality fails")
    if not max(lam) < 1 - zeta:
        reasons.append("max entry too large")
    if not verify_balanced(fam)[0]:
        reasons.append("family not balanced")
    count = 0
    for a in fam.a_masks:
        sa = sum(lam[t] for t in range(fam.M) if a >> t & 1)
        if min(sa, 1 - sa) > xi:
            count += 1
    applicable = not reasons
    holds = applicable and count >= eta * fam.m
    return BalancedVectorReport(applicable, count, holds, reasons)
