"""Shared brute-force oracles.  Deliberately naive and independent of the
package internals."""
import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from regforge.convexdecomp import condition1_size


def vertex_weights(Gw):
    """Full n x n Fraction matrix expanded from the atom blocks."""
    n, h = Gw.n, Gw.atom_size
    return [[Fraction(int(Gw.num[u // h, v // h]), Gw.den) for v in range(n)] for u in range(n)]


def naive_density(Wv, A, B):
    A, B = list(A), list(B)
    return sum((Wv[a][b] for a in A for b in B), Fraction(0)) / (len(A) * len(B))


def naive_irregular(Wv, A, B, gamma):
    """Definition-level enumeration over all subset pairs meeting the floors."""
    A, B = list(A), list(B)
    d = naive_density(Wv, A, B)
    pa = max(1, -(-gamma * len(A) // 1))
    pb = max(1, -(-gamma * len(B) // 1))
    subsA = [S for r in range(int(pa), len(A) + 1) for S in itertools.combinations(A, r)]
    subsB = [S for r in range(int(pb), len(B) + 1) for S in itertools.combinations(B, r)]
    for S in subsA:
        for T in subsB:
            if abs(naive_density(Wv, S, T) - d) > gamma:
                return True
    return False


def recount_balanced(fam):
    """Bit-by-bit co-occurrence recount over all pairs."""
    worst = 0
    for a, b in itertools.combinations(range(fam.M), 2):
        same = sum(1 for mask in fam.a_masks if ((mask >> a) & 1) == ((mask >> b) & 1))
        worst = max(worst, same)
    return 4 * worst <= 3 * fam.m, worst


def random_valid_x(rnd, n, k):
    """Random x in [0, 1/k]^n with sum exactly 1."""
    cap = Fraction(1, k)
    x = [Fraction(0)] * n
    left = Fraction(1)
    order = list(range(n))
    rnd.shuffle(order)
    for pos, i in enumerate(order):
        rest = n - pos - 1
        lo = max(Fraction(0), left - rest * cap)
        hi = min(cap, left)
        v = lo + (hi - lo) * Fraction(rnd.randint(0, 12), 12)
        x[i] = v
        left -= v
    x[order[-1]] += left
    return x


def lp_feasible(x, k):
    n = len(x)
    supports = list(itertools.combinations(range(n), k))
    A = np.zeros((n + 1, len(supports)))
    for c, S in enumerate(supports):
        A[list(S), c] = 1.0 / k
        A[n, c] = 1.0
    b = np.array([float(v) for v in x] + [1.0])
    res = linprog(np.zeros(len(supports)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    return res.status == 0


def naive_verify(Q, orders, ov):
    m = len(Q)
    e = lambda R, R2: sum(int(Q[a][b]) for a in R for b in R2)
    c1 = True
    if ov.condition1:
        s = ov.c1_size or condition1_size(m)
        subs = list(itertools.combinations(range(m), s))
        for R in subs:
            for R2 in subs:
                if abs(e(R, R2) - Fraction(s * s, 2)) > Fraction(ov.c1_quality) * s * s:
                    c1 = False
    c2 = True
    for mb in orders if ov.condition2 else ():
        if mb >= m:
            continue
        u = m // mb
        for k in ov.k_range(m):
            r, r2 = k ** ov.p, -(-u // k)
            if r > u or r2 > u:
                continue
            for i in range(mb):
                for j in range(mb):
                    for R in itertools.combinations(range(i * u, i * u + u), r):
                        for R2 in itertools.combinations(range(j * u, j * u + u), r2):
                            if abs(e(R, R2) - Fraction(r * r2, 2)) > ov.c2_bound(k) * r * r2:
                                c2 = False
    return c1, c2


class MatrixGraph:
    """Minimal graph view over an explicit integer matrix (atoms = vertices)."""

    def __init__(self, num, den):
        self.num = np.asarray(num, dtype=np.int64)
        self.den = den
        self.atom_size = 1

    @property
    def n(self):
        return self.num.shape[0]

    @property
    def atom_count(self):
        return self.n

    def counts(self, vertices):
        return np.bincount(np.asarray(list(vertices), dtype=np.int64), minlength=self.n).astype(np.int64)


@pytest.fixture
def matrix_graph():
    return MatrixGraph


# acceptance criteria verdicts, printed in the terminal summary
ACCEPTANCE = {}


def record(criterion, part, ok, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'}{' (' + d + ')' if d else ''}"
                           for name, good, d in parts)
        terminalreporter.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'}  {detail}")
