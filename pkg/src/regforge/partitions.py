"""Equal-class partitions, beta-containment and balanced bipartition families."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .seeding import make_rng
from .towerarith import phi


class PartitionError(ValueError):
    pass


class BalancedGenerationError(RuntimeError):
    def __init__(self, msg, worst=None):
        super().__init__(msg)
        self.worst = worst


def _as_fraction(x):
    return x if isinstance(x, Fraction) else Fraction(x)


class Partition:
    """Partition of ``range(n)`` into classes of equal size.

    Classes are kept in the order given.  ``class_of[v]`` is the index of the
    class holding ``v``.
    """

    def __init__(self, n, classes):
        classes = tuple(np.asarray(sorted(int(v) for v in c), dtype=np.int64) for c in classes)
        if not classes:
            raise PartitionError("a partition needs at least one class")
        size = len(classes[0])
        if size == 0 or any(len(c) != size for c in classes):
            raise PartitionError("classes must be nonempty and of equal size")
        class_of = np.full(n, -1, dtype=np.int64)
        for i, c in enumerate(classes):
            if c.size and (c[0] < 0 or c[-1] >= n):
                raise PartitionError(f"class {i} has vertices outside range({n})")
            if np.any(class_of[c] != -1) or np.unique(c).size != c.size:
                raise PartitionError(f"class {i} overlaps an earlier class")
            class_of[c] = i
        if np.any(class_of < 0):
            raise PartitionError("classes do not cover the universe")
        self.n = int(n)
        self.classes = classes
        self.class_of = class_of
        self.class_of.setflags(write=False)

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels, dtype=np.int64)
        order = []
        seen = {}
        for lab in labels.tolist():
            if lab not in seen:
                seen[lab] = len(order)
                order.append(lab)
        classes = [np.flatnonzero(labels == lab) for lab in order]
        return cls(len(labels), classes)

    @property
    def k(self):
        return len(self.classes)

    @property
    def class_size(self):
        return len(self.classes[0])

    def __len__(self):
        return self.k

    def __iter__(self):
        return iter(self.classes)

    def __getitem__(self, i):
        return self.classes[i]

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n == other.n and self.k == other.k and all(
            np.array_equal(a, b) for a, b in zip(self.classes, other.classes))

    def __repr__(self):
        return f"Partition(n={self.n}, k={self.k})"

    def mask(self, i):
        """Class i as an int bitset."""
        m = 0
        for v in self.classes[i].tolist():
            m |= 1 << v
        return m

    def refines(self, other):
        """True iff every class lies inside a single class of ``other``."""
        if self.n != other.n:
            raise PartitionError("universe mismatch")
        return all(np.unique(other.class_of[c]).size == 1 for c in self.classes)

    def parent_map(self, coarse):
        """For an exact refinement, the coarse class index of each class."""
        if not self.refines(coarse):
            raise PartitionError("not a refinement")
        return np.array([coarse.class_of[c[0]] for c in self.classes], dtype=np.int64)

    def to_text(self):
        lines = [f"n={self.n} k={self.k}"]
        lines += [" ".join(str(v) for v in c.tolist()) for c in self.classes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise PartitionError("empty partition file")
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        try:
            n, k = int(head["n"]), int(head["k"])
        except (KeyError, ValueError) as exc:
            raise PartitionError("header must read 'n=<n> k=<k>'") from exc
        classes = [[int(t) for t in ln.split()] for ln in lines[1:]]
        if len(classes) != k:
            raise PartitionError(f"header says k={k} but file has {len(classes)} classes")
        return cls(n, classes)

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def canonical_partition(n, m_r):
    """Split range(n) into m_r consecutive intervals of equal length."""
    if m_r < 1 or n % m_r:
        raise PartitionError(f"canonical partition needs m_r dividing n (got n={n}, m_r={m_r})")
    size = n // m_r
    return Partition(n, [range(i * size, (i + 1) * size) for i in range(m_r)])


def _check_beta(beta):
    beta = _as_fraction(beta)
    if beta < 0 or beta >= Fraction(1, 2):
        raise PartitionError(f"beta must lie in [0, 1/2), got {beta}")
    return beta


def _as_set(Z):
    if isinstance(Z, int):
        return {i for i in range(Z.bit_length()) if Z >> i & 1}
    return set(int(v) for v in Z)


def beta_contains(Z, X, beta):
    """Z is beta-contained in X: |Z & X| >= (1 - beta)|Z|."""
    beta = _check_beta(beta)
    Z, X = _as_set(Z), _as_set(X)
    if not Z:
        raise PartitionError("Z must be nonempty")
    return len(Z & X) >= (1 - beta) * len(Z)


def container(Z, P, beta):
    """Index of the class of P that beta-contains Z, or None."""
    beta = _check_beta(beta)
    Z = np.asarray(sorted(_as_set(Z)), dtype=np.int64)
    if Z.size == 0:
        raise PartitionError("Z must be nonempty")
    counts = np.bincount(P.class_of[Z], minlength=P.k)
    i = int(np.argmax(counts))
    return i if counts[i] >= (1 - beta) * Z.size else None


def beta_refines(Z, P, beta):
    """(Z beta-refines P, fraction of Z's classes that are beta-contained)."""
    beta = _check_beta(beta)
    if Z.n != P.n:
        raise PartitionError("universe mismatch")
    hits = 0
    for c in Z.classes:
        counts = np.bincount(P.class_of[c], minlength=P.k)
        if counts.max() >= (1 - beta) * c.size:
            hits += 1
    frac = Fraction(hits, Z.k)
    return hits >= (1 - beta) * Z.k, frac


@dataclass(frozen=True)
class BalancedFamily:
    """m bipartitions (A_j, B_j) of range(M); A_j stored as an int bitset."""

    m: int
    M: int
    a_masks: tuple
    verified: bool = field(default=False, compare=False)

    def __post_init__(self):
        if len(self.a_masks) != self.m:
            raise ValueError("need exactly m bipartitions")
        full = (1 << self.M) - 1
        if any(a & ~full for a in self.a_masks):
            raise ValueError("A_j must be a subset of range(M)")

    @property
    def pairs(self):
        full = (1 << self.M) - 1
        return tuple((_as_set(a), _as_set(full ^ a)) for a in self.a_masks)

    def sides(self):
        """m x M boolean array, True where element t lies in A_j."""
        out = np.zeros((self.m, self.M), dtype=bool)
        for j, a in enumerate(self.a_masks):
            for t in range(self.M):
                out[j, t] = bool(a >> t & 1)
        return out

    def to_dict(self):
        return {"m": self.m, "M": self.M, "verified": self.verified,
                "A": [sorted(_as_set(a)) for a in self.a_masks]}

    @classmethod
    def from_dict(cls, d):
        masks = tuple(sum(1 << t for t in a) for a in d["A"])
        return cls(int(d["m"]), int(d["M"]), masks, bool(d.get("verified", False)))


def cooccurrence(fam):
    """M x M matrix counting bipartitions that put t and t' on the same side."""
    s = np.where(fam.sides(), 1, -1).astype(np.int64)
    return (fam.m + s.T @ s) // 2


def verify_balanced(fam):
    """Check every pair co-occurs at most 3m/4 times; also return the worst pair."""
    if fam.M < 2:
        return True, None
    co = cooccurrence(fam)
    iu, ju = np.triu_indices(fam.M, k=1)
    vals = co[iu, ju]
    w = int(np.argmax(vals))
    worst = (int(iu[w]), int(ju[w]), int(vals[w]))
    return 4 * worst[2] <= 3 * fam.m, worst


def generate_balanced(m, seed=0, retries=64):
    """Balanced family of m bipartitions of range(phi(m))."""
    if m < 1:
        raise ValueError("generate_balanced needs m >= 1")
    M = phi(m)
    if m <= 16:
        fam = BalancedFamily(m, M, (1,) * m)
        ok, _ = verify_balanced(fam)
        assert ok
        return BalancedFamily(m, M, fam.a_masks, verified=True)
    rng = make_rng(seed, "balanced", m)
    worst = None
    weights = 1 << np.arange(M, dtype=object)
    for _ in range(retries):
        bits = rng.integers(0, 2, size=(m, M))
        masks = tuple(int(np.dot(row.astype(object), weights)) for row in bits)
        fam = BalancedFamily(m, M, masks)
        ok, w = verify_balanced(fam)
        if ok:
            return BalancedFamily(m, M, masks, verified=True)
        if worst is None or w[2] < worst[2]:
            worst = w
    raise BalancedGenerationError(
        f"no balanced family for m={m} in {retries} draws; best worst pair {worst}", worst)
