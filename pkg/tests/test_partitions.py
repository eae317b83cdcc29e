import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import recount_balanced
from regforge.partitions import (BalancedFamily, BalancedGenerationError, Partition, PartitionError,
                                 beta_contains, beta_refines, canonical_partition, container,
                                 generate_balanced, verify_balanced)


def random_partition(rng, n, k):
    perm = rng.permutation(n)
    s = n // k
    return Partition(n, [perm[i * s:(i + 1) * s] for i in range(k)])


def test_canonical_partition_intervals():
    P = canonical_partition(32, 4)
    assert [c.tolist() for c in P.classes] == [list(range(i * 8, i * 8 + 8)) for i in range(4)]
    assert all(len(c) == 1 for c in canonical_partition(8, 8).classes)
    with pytest.raises(PartitionError, match="divid"):
        canonical_partition(10, 4)


def test_canonical_refinement_chain():
    for a, b in [(1, 2), (2, 8), (4, 16), (8, 128)]:
        assert canonical_partition(256, b).refines(canonical_partition(256, a))
    assert not canonical_partition(12, 3).refines(canonical_partition(12, 4))


def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition(4, [[0, 1], [2]])
    with pytest.raises(PartitionError):
        Partition(4, [[0, 1], [1, 2]])
    with pytest.raises(PartitionError):
        Partition(5, [[0, 1], [2, 3]])


def test_partition_text_roundtrip(tmp_path):
    P = random_partition(np.random.default_rng(0), 24, 6)
    text = P.to_text()
    assert text.startswith("n=24 k=6\n")
    assert Partition.from_text(text) == P
    P.save(tmp_path / "p.txt")
    assert Partition.load(tmp_path / "p.txt") == P


def test_beta_contains_examples():
    Z = set(range(10))
    X = set(range(9)) | {50}
    assert beta_contains(Z, X, Fraction(1, 10))
    assert not beta_contains(Z, set(range(8)), Fraction(1, 10))
    assert beta_contains(Z, set(range(20)), Fraction(0))
    with pytest.raises(PartitionError):
        beta_contains(Z, X, Fraction(1, 2))


def test_beta_refines_examples():
    P = canonical_partition(16, 4)
    assert beta_refines(canonical_partition(16, 8), P, 0) == (True, Fraction(1))
    assert beta_refines(P, P, Fraction(1, 10)) == (True, Fraction(1))


def test_beta_refines_matches_recount():
    rng = np.random.default_rng(3)
    beta = Fraction(1, 10)
    for _ in range(20):
        Z = random_partition(rng, 64, 8)
        P = random_partition(rng, 64, 4)
        hits = 0
        for c in Z.classes:
            zs = set(c.tolist())
            if any(len(zs & set(x.tolist())) >= (1 - beta) * len(zs) for x in P.classes):
                hits += 1
        assert beta_refines(Z, P, beta) == (hits >= (1 - beta) * Z.k, Fraction(hits, Z.k))


@given(st.integers(0, 2 ** 16 - 1), st.sampled_from([Fraction(0), Fraction(1, 10), Fraction(1, 3), Fraction(49, 100)]))
def test_at_most_one_container(zbits, beta):
    if zbits == 0:
        return
    Z = [v for v in range(16) if zbits >> v & 1]
    P = canonical_partition(16, 4)
    holders = [i for i, c in enumerate(P.classes) if beta_contains(Z, c, beta)]
    assert len(holders) <= 1
    assert container(Z, P, beta) == (holders[0] if holders else None)


def test_small_m_family_is_deterministic():
    fam = generate_balanced(8)
    assert fam.M == 2 and fam.m == 8
    assert [sorted(a) for a, _ in fam.pairs] == [[0]] * 8
    ok, worst = verify_balanced(fam)
    assert ok and worst[2] == 0


@pytest.mark.parametrize("m", [17, 32])
def test_random_family_verified(m):
    fam = generate_balanced(m, seed=11)
    assert fam.M == 4 and fam.verified
    ok, worst = recount_balanced(fam)
    assert ok and worst <= 3 * m // 4
    assert verify_balanced(fam)[0]


def test_identical_partitions_fail():
    fam = BalancedFamily(5, 4, (0b0011,) * 5)
    ok, worst = verify_balanced(fam)
    assert not ok and worst[2] == 5


def test_empty_family_vacuous():
    assert verify_balanced(BalancedFamily(0, 4, ()))[0]


def test_verify_matches_recount_on_random_families():
    rnd = random.Random(7)
    for _ in range(100):
        M = rnd.randint(2, 8)
        m = rnd.randint(1, 64)
        fam = BalancedFamily(m, M, tuple(rnd.randrange(0, 1 << M) for _ in range(m)))
        ok, worst = verify_balanced(fam)
        ok2, w2 = recount_balanced(fam)
        assert ok == ok2 and worst[2] == w2


def test_generation_budget_error():
    with pytest.raises(BalancedGenerationError) as info:
        generate_balanced(17, seed=0, retries=0)
    assert info.value.worst is None


def test_family_dict_roundtrip():
    fam = generate_balanced(20, seed=3)
    assert BalancedFamily.from_dict(fam.to_dict()) == fam
