"""The weighted graphs G and H over the atoms of the finest canonical partition.

Weights are stored as integer numerators over one common denominator, so
every density is an exact rational.  The ledger keeps one numerator matrix
per source (a Gowers level or a trap), and the sources sum to the weights.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .convexdecomp import TrapOverrides, TrapSpec, generate_trap, random_graph, verify_trap
from .partitions import BalancedFamily, canonical_partition, generate_balanced
from .seeding import make_rng
from .towerarith import t_phi


class BuildError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Source:
    kind: str  # "gowers" or "trap"
    index: int

    def __str__(self):
        return f"{self.kind}:{self.index}"

    @classmethod
    def parse(cls, text):
        kind, idx = text.split(":")
        if kind not in ("gowers", "trap"):
            raise ValueError(f"unknown ledger source {text!r}")
        return cls(kind, int(idx))


def GowersLevel(r):
    return Source("gowers", r)


def Trap(g):
    return Source("trap", g)


@dataclass(frozen=True)
class ConstructionParams:
    levels: int
    base_weight: Fraction = Fraction(1, 64)
    trap_levels: tuple = ()
    seed: int = 0
    atom_size: int = 1
    include_diagonal: bool = True
    max_atoms: int = 4096
    verify_traps: bool = True
    require_verified_traps: bool = False
    trap_overrides: TrapOverrides | None = None

    def __post_init__(self):
        object.__setattr__(self, "base_weight", Fraction(self.base_weight))
        object.__setattr__(self, "trap_levels", tuple(int(b) for b in self.trap_levels))
        if self.levels < 0:
            raise BuildError("levels must be >= 0")
        if not 0 <= self.base_weight <= 1:
            raise BuildError("base_weight must lie in [0, 1]")
        tl = self.trap_levels
        if any(b <= a for a, b in zip(tl, tl[1:])):
            raise BuildError("trap levels must be strictly increasing")
        if any(not 1 <= b <= self.levels for b in tl):
            raise BuildError(f"trap levels must lie in 1..{self.levels}")
        if self.atom_size < 1:
            raise BuildError("atom_size must be >= 1")

    def level_weight(self, r):
        return self.base_weight / 4 ** r

    def trap_weight(self, g):
        return Fraction(1, 4 ** g)

    def to_dict(self):
        return {"levels": self.levels, "base_weight": str(self.base_weight),
                "trap_levels": list(self.trap_levels), "seed": self.seed,
                "atom_size": self.atom_size, "include_diagonal": self.include_diagonal,
                "max_atoms": self.max_atoms, "verify_traps": self.verify_traps,
                "require_verified_traps": self.require_verified_traps,
                "trap_overrides": None if self.trap_overrides is None else self.trap_overrides.to_dict()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["base_weight"] = Fraction(d.get("base_weight", "1/64"))
        d["trap_levels"] = tuple(d.get("trap_levels", ()))
        ov = d.get("trap_overrides")
        d["trap_overrides"] = None if ov is None else TrapOverrides.from_dict(ov)
        return cls(**d)


def canonical_orders(levels):
    """m_0..m_levels as ints; raises if one is not materializable."""
    out = []
    for r in range(levels + 1):
        v = t_phi(r)
        if not v.is_exact:
            raise BuildError(f"m_{r} is not materializable")
        out.append(v.value)
    return tuple(out)


def _lcm(*vals):
    out = 1
    for v in vals:
        out = out * v // math.gcd(out, v)
    return out


class BlockWeightedGraph:
    """Atom-block weighted graph with exact weights and a provenance ledger.

    ``num`` holds weight numerators over ``den``; ``ledger`` maps each
    Source to its own numerator matrix.  ``sides[r]`` keeps the level-r
    splits: ``sides[r][i, j, t]`` is True when subcluster t of X_i lies in
    A'_{i,j}.  ``families[r][i]`` is the balanced family drawn for X_i.
    """

    def __init__(self, num, den, atom_size, orders, ledger, sides=None, families=None,
                 traps=(), params=None):
        num = np.asarray(num, dtype=np.int64)
        m = num.shape[0]
        if num.shape != (m, m) or np.any(num != num.T):
            raise BuildError("weight matrix must be square and symmetric")
        if np.any(num < 0) or np.any(num > den):
            raise BuildError("weights must lie in [0, 1]")
        self.num = num
        self.num.setflags(write=False)
        self.den = int(den)
        self.atom_size = int(atom_size)
        self.orders = tuple(orders) if orders else (m,)
        if self.orders[-1] != m:
            raise BuildError("finest canonical order must equal the atom count")
        self.ledger = dict(ledger)
        self.sides = dict(sides or {})
        self.families = dict(families or {})
        self.traps = tuple(traps)
        self.params = params

    # basic shape
    @property
    def atom_count(self):
        return self.num.shape[0]

    @property
    def n(self):
        return self.atom_count * self.atom_size

    @property
    def levels(self):
        return len(self.orders) - 1

    def atom_of(self, v):
        return np.asarray(v) // self.atom_size

    def weight(self, u, v):
        """Weight of atom pair (u, v) as a Fraction."""
        return Fraction(int(self.num[u, v]), self.den)

    def weights(self):
        return [[Fraction(int(a), self.den) for a in row] for row in self.num]

    def counts(self, vertices):
        """Per-atom multiplicities of a vertex collection."""
        v = np.asarray(sorted(set(int(t) for t in vertices)), dtype=np.int64)
        if v.size and (v[0] < 0 or v[-1] >= self.n):
            raise ValueError("vertex out of range")
        return np.bincount(v // self.atom_size, minlength=self.atom_count).astype(np.int64)

    def partition(self, r):
        """Canonical partition P_r of the vertex universe."""
        return canonical_partition(self.n, self.orders[r])

    def cluster_of_atom(self, r):
        """Index of the level-r cluster containing each atom."""
        per = self.atom_count // self.orders[r]
        return np.arange(self.atom_count) // per

    def split_sets(self, r, i, j):
        """(A_{i,j}, B_{i,j}) at level r as sorted vertex arrays."""
        if r not in self.sides:
            raise KeyError(f"no stored splits for level {r}")
        side = self.sides[r]
        mr1, mr = self.orders[r - 1], self.orders[r]
        M = mr // mr1
        per = self.atom_count // mr
        sub = np.arange(M)
        a_sub = sub[side[i, j]]
        b_sub = sub[~side[i, j]]

        def expand(subs):
            atoms = [(i * M + t) * per + q for t in subs.tolist() for q in range(per)]
            return np.asarray(sorted(a * self.atom_size + s for a in atoms for s in range(self.atom_size)),
                              dtype=np.int64)
        return expand(a_sub), expand(b_sub)

    def source_matrix(self, src):
        return self.ledger.get(src, np.zeros_like(self.num))

    def ledger_total(self):
        total = np.zeros_like(self.num)
        for mat in self.ledger.values():
            total = total + mat
        return total

    def __repr__(self):
        return (f"BlockWeightedGraph(atoms={self.atom_count}, atom_size={self.atom_size}, "
                f"levels={self.levels}, traps={len(self.traps)})")


def _pair_sum(mat, ca, cb):
    big = int(ca.sum()) * int(cb.sum()) * int(mat.max(initial=0))
    if big < 2 ** 62:
        return int(ca @ mat @ cb)
    return int(ca.astype(object) @ mat.astype(object) @ cb.astype(object))


def density(Gw, A, B, source=None):
    """Exact weighted density d(A, B) of two vertex collections.

    With ``source`` the density counts only that ledger source.  Use
    density_counts to pass per-atom multiplicities directly.
    """
    ca, cb = Gw.counts(A), Gw.counts(B)
    return density_counts(Gw, ca, cb, source)


def density_counts(Gw, ca, cb, source=None):
    ca = np.asarray(ca, dtype=np.int64)
    cb = np.asarray(cb, dtype=np.int64)
    na, nb = int(ca.sum()), int(cb.sum())
    if na == 0 or nb == 0:
        raise ValueError("density needs nonempty sides")
    if np.any(ca > Gw.atom_size) or np.any(cb > Gw.atom_size) or np.any(ca < 0) or np.any(cb < 0):
        raise ValueError("per-atom counts must lie in [0, atom_size]")
    mat = Gw.num if source is None else Gw.source_matrix(source)
    return Fraction(_pair_sum(mat, ca, cb), na * nb * Gw.den)


def build_g(params):
    """The Gowers-style graph G: R levels of balanced-split increments."""
    R = params.levels
    orders = canonical_orders(R)
    m = orders[-1]
    if m > params.max_atoms:
        raise BuildError(f"{m} atoms exceed the budget of {params.max_atoms}")
    den = _lcm(params.base_weight.denominator * 4 ** R, 4 ** len(params.trap_levels), 1)
    num = np.zeros((m, m), dtype=np.int64)
    ledger, sides, families = {}, {}, {}
    for r in range(1, R + 1):
        mr1, mr = orders[r - 1], orders[r]
        M = mr // mr1
        fams = [generate_balanced(mr1, seed=_derive(params.seed, "construction", r, i)) for i in range(mr1)]
        side = np.zeros((mr1, mr1, M), dtype=bool)
        for i, fam in enumerate(fams):
            if fam.M != M:
                raise BuildError(f"family for level {r} has ground set {fam.M}, expected {M}")
            side[i] = fam.sides()
        per = m // mr
        sub = np.arange(m) // per  # level-r cluster of each atom
        ia, ta = sub // M, sub % M
        s1 = side[ia[:, None], ia[None, :], ta[:, None]]
        hit = s1 == s1.T
        if not params.include_diagonal:
            hit &= ia[:, None] != ia[None, :]
        step = params.level_weight(r) * den
        assert step.denominator == 1
        mat = hit.astype(np.int64) * int(step)
        ledger[GowersLevel(r)] = mat
        num = num + mat
        sides[r] = side
        families[r] = fams
    return BlockWeightedGraph(num, den, params.atom_size, orders, ledger, sides, families, (), params)


def _derive(seed, *names):
    # integer seed for a named substream, stable across runs
    return int(make_rng(seed, *names).integers(0, 2 ** 63 - 1))


def _rescaled(Gw, den):
    f = den // Gw.den
    assert f * Gw.den == den
    return Gw.num * f, {s: mat * f for s, mat in Gw.ledger.items()}


def place_traps(G, params, traps):
    """H = G plus, for the g-th trap at level b, 4^-g on every atom pair whose
    level-b clusters are adjacent in the trap graph."""
    traps = list(traps)
    levels = [t.level for t in traps]
    if any(b not in params.trap_levels for b in levels):
        raise BuildError(f"trap levels {levels} not among params.trap_levels {params.trap_levels}")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise BuildError("traps must be given in increasing level order")
    den = _lcm(G.den, 4 ** len(traps))
    num, ledger = _rescaled(G, den)
    placed = []
    for g, trap in enumerate(traps, start=1):
        b = trap.level
        mb = G.orders[b]
        if trap.m != mb:
            raise BuildError(f"trap {g} has {trap.m} vertices, level {b} has {mb} clusters")
        alpha = params.trap_weight(g)
        if trap.weight is not None and trap.weight != alpha:
            raise BuildError(f"trap {g} carries weight {trap.weight}, expected {alpha}")
        cl = G.cluster_of_atom(b)
        hit = trap.graph[cl[:, None], cl[None, :]]
        mat = hit.astype(np.int64) * int(alpha * den)
        ledger[Trap(g)] = mat
        num = num + mat
        placed.append(TrapSpec(trap.graph, b, alpha, trap.verification))
    if np.any(num > den):
        raise BuildError("a cell exceeds weight 1")
    return BlockWeightedGraph(num, den, G.atom_size, G.orders, ledger, G.sides, G.families,
                              tuple(placed), params)


def make_traps(params, orders=None):
    """Trap graphs for params.trap_levels, drawn from the 'traps' substream.

    With require_verified_traps the generator redraws until verify_trap
    passes; otherwise each G(m_b, 1/2) draw is kept and its verification
    (if requested) is recorded as data.
    """
    orders = orders or canonical_orders(params.levels)
    out = []
    for g, b in enumerate(params.trap_levels, start=1):
        mb = orders[b]
        seed = _derive(params.seed, "traps", g)
        if params.require_verified_traps:
            spec = generate_trap(mb, orders[:b], seed=seed, overrides=params.trap_overrides,
                                 level=b, weight=params.trap_weight(g))
        else:
            Q = random_graph(mb, make_rng(seed, "draw"))
            ver = (verify_trap(Q, orders[:b], params.trap_overrides, seed=seed, trials=4096)
                   if params.verify_traps else None)
            spec = TrapSpec(Q, b, params.trap_weight(g), ver)
        out.append(spec)
    return out


def build_h(params, traps=None):
    G = build_g(params)
    if traps is None:
        traps = make_traps(params, G.orders)
    return place_traps(G, params, traps)


# ----------------------------------------------------------------- sampling

class SampledGraph:
    """Unweighted graph on n vertices; atoms are single vertices here."""

    def __init__(self, adj, source_atom_size=1):
        adj = np.asarray(adj).astype(bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or np.any(adj != adj.T) or np.any(np.diag(adj)):
            raise ValueError("adjacency must be symmetric with an empty diagonal")
        self.adj = adj
        self.num = adj.astype(np.int64)
        self.num.setflags(write=False)
        self.den = 1
        self.atom_size = 1
        self.source_atom_size = int(source_atom_size)
        self.ledger = {}

    @property
    def n(self):
        return self.adj.shape[0]

    @property
    def atom_count(self):
        return self.n

    def atom_of(self, v):
        return np.asarray(v)

    def counts(self, vertices):
        c = np.zeros(self.n, dtype=np.int64)
        c[np.asarray(list(vertices), dtype=np.int64)] = 1
        return c

    def edge_count(self):
        return int(np.triu(self.adj, 1).sum())

    def edges(self):
        iu, ju = np.nonzero(np.triu(self.adj, 1))
        return list(zip(iu.tolist(), ju.tolist()))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["u", "v"])
        w.writerows(self.edges())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, n):
        adj = np.zeros((n, n), dtype=bool)
        rows = csv.reader(io.StringIO(text))
        header = next(rows, None)
        if header != ["u", "v"]:
            raise ValueError("edge list must start with header 'u,v'")
        for u, v in rows:
            adj[int(u), int(v)] = adj[int(v), int(u)] = True
        return cls(adj)


def sample_unweighted(Gw, n, seed=0):
    """Each vertex pair is an edge independently with its cell's weight."""
    m = Gw.atom_count
    if n % m:
        raise BuildError(f"n={n} must be a multiple of the atom count {m}")
    s = n // m
    probs = Gw.num.astype(np.float64) / Gw.den
    rng = make_rng(seed, "sampling")
    adj = np.zeros((n, n), dtype=bool)
    atom = np.arange(n) // s
    for u in range(n - 1):
        p = probs[atom[u], atom[u + 1:]]
        adj[u, u + 1:] = rng.random(n - u - 1) < p
    adj |= adj.T
    return SampledGraph(adj, source_atom_size=s)


# ------------------------------------------------------------------- dumps

def graph_to_dict(Gw):
    fams = {str(r): [f.to_dict() for f in fl] for r, fl in Gw.families.items()}
    return {
        "m_s": Gw.atom_count,
        "atom_size": Gw.atom_size,
        "canonical_orders": list(Gw.orders),
        "params": None if Gw.params is None else Gw.params.to_dict(),
        "denominator": Gw.den,
        "weights": [[str(Fraction(int(a), Gw.den)) for a in row] for row in Gw.num],
        "families": fams,
        "traps": [t.to_dict() for t in Gw.traps],
    }


def dump_graph(Gw, path):
    Path(path).write_text(json.dumps(graph_to_dict(Gw), indent=1) + "\n")


def load_graph(path):
    """Rebuild a graph from its JSON dump; the ledger is recomputed from the
    stored families and traps and must reproduce the stored weights."""
    d = json.loads(Path(path).read_text())
    return graph_from_dict(d)


def graph_from_dict(d):
    weights = [[Fraction(x) for x in row] for row in d["weights"]]
    den = int(d["denominator"])
    num = np.array([[int(w * den) for w in row] for row in weights], dtype=np.int64)
    params = None if d.get("params") is None else ConstructionParams.from_dict(d["params"])
    orders = tuple(d["canonical_orders"])
    m = d["m_s"]
    ledger, sides, families = {}, {}, {}
    for rs, fl in d.get("families", {}).items():
        r = int(rs)
        fams = [BalancedFamily.from_dict(f) for f in fl]
        families[r] = fams
        mr1, mr = orders[r - 1], orders[r]
        side = np.stack([f.sides() for f in fams]) if fams else np.zeros((0, 0, 0), bool)
        sides[r] = side
        M = mr // mr1
        per = m // mr
        sub = np.arange(m) // per
        ia, ta = sub // M, sub % M
        s1 = side[ia[:, None], ia[None, :], ta[:, None]]
        hit = s1 == s1.T
        if params is not None and not params.include_diagonal:
            hit &= ia[:, None] != ia[None, :]
        step = (params.level_weight(r) if params else None)
        if step is None:
            raise BuildError("graph dump without params cannot rebuild its ledger")
        ledger[GowersLevel(r)] = hit.astype(np.int64) * int(step * den)
    traps = [TrapSpec.from_dict(t) for t in d.get("traps", [])]
    Gtmp = BlockWeightedGraph(np.zeros((m, m), np.int64), den, d["atom_size"], orders, {}, sides, families)
    for g, trap in enumerate(traps, start=1):
        cl = Gtmp.cluster_of_atom(trap.level)
        ledger[Trap(g)] = trap.graph[cl[:, None], cl[None, :]].astype(np.int64) * int(trap.weight * den)
    out = BlockWeightedGraph(num, den, d["atom_size"], orders, ledger, sides, families, traps, params)
    if ledger and not np.array_equal(out.ledger_total(), num):
        raise BuildError("stored weights disagree with the ledger rebuilt from families and traps")
    return out


def ledger_to_csv(Gw):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "source", "amount"])
    for src in sorted(Gw.ledger):
        mat = Gw.ledger[src]
        iu, ju = np.nonzero(mat)
        for a, b in zip(iu.tolist(), ju.tolist()):
            w.writerow([a, b, str(src), str(Fraction(int(mat[a, b]), Gw.den))])
    return buf.getvalue()


def ledger_from_csv(text, atom_count):
    """Per-source Fraction dicts {(i, j): amount} from a ledger CSV."""
    rows = csv.reader(io.StringIO(text))
    if next(rows, None) != ["i", "j", "source", "amount"]:
        raise ValueError("ledger CSV must start with header 'i,j,source,amount'")
    out = {}
    for i, j, src, amt in rows:
        out.setdefault(Source.parse(src), {})[(int(i), int(j))] = Fraction(amt)
    return out
