import csv
import io
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from conftest import MatrixGraph, naive_density, vertex_weights
from regforge.afksloop import (SzemerediRefiner, StrongRegularityIterator, afks_iterate,
                               initial_order, potential, szemeredi_refine)
from regforge.hardgraph import ConstructionParams, build_g
from regforge.partitions import Partition, canonical_partition


def naive_potential(Gw, Z):
    Wv = vertex_weights(Gw)
    n = Gw.n
    tot = Fraction(0)
    for X in Z.classes:
        for Y in Z.classes:
            tot += Fraction(len(X) * len(Y), n * n) * naive_density(Wv, X, Y) ** 2
    return tot


def const_graph(n, c, den=8):
    return MatrixGraph(np.full((n, n), c), den)


def test_potential_constant_graph():
    G = const_graph(12, 3)
    for k in (1, 2, 3, 12):
        assert potential(G, canonical_partition(12, k)) == Fraction(9, 64)


def test_potential_single_class_is_squared_density():
    rng = np.random.default_rng(1)
    M = rng.integers(0, 9, size=(10, 10))
    M = np.triu(M) + np.triu(M, 1).T
    G = MatrixGraph(M, 8)
    Wv = vertex_weights(G)
    d = naive_density(Wv, range(10), range(10))
    assert potential(G, canonical_partition(10, 1)) == d * d


def _random_split(rng, Z, parts):
    out = []
    for c in Z.classes:
        c = rng.permutation(c)
        out += np.array_split(c, parts)
    return Partition(Z.n, out)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=100, deadline=None)
def test_potential_monotone_under_refinement(seed):
    rng = np.random.default_rng(seed)
    M = rng.integers(0, 5, size=(12, 12))
    M = np.triu(M) + np.triu(M, 1).T
    G = MatrixGraph(M, 4)
    Z = Partition(12, np.array_split(rng.permutation(12), 2))
    Z1 = _random_split(rng, Z, 2)
    Z2 = _random_split(rng, Z1, 3)
    p0, p1, p2 = (potential(G, X) for X in (Z, Z1, Z2))
    assert p0 == naive_potential(G, Z)
    assert p0 <= p1 <= p2 <= 1


def test_refine_constant_graph_returns_start():
    G = const_graph(16, 5)
    start = canonical_partition(16, 4)
    res = szemeredi_refine(G, start, Fraction(1, 8))
    assert res.stop_reason == "regular" and res.partition == start and len(res.passes) == 1


def test_refine_gamma_one_returns_start():
    G = build_g(ConstructionParams(levels=2, atom_size=2))
    start = canonical_partition(G.n, 1)
    res = szemeredi_refine(G, start, Fraction(1))
    assert res.regular and res.partition == start


def test_refine_builds_on_g():
    G = build_g(ConstructionParams(levels=2, atom_size=4, seed=3))
    gamma = G.params.level_weight(2) / 4
    res = szemeredi_refine(G, G.partition(1), gamma, budget=8)
    assert res.partition.k > G.partition(1).k
    pots = [p.potential for p in res.passes]
    assert pots == sorted(pots)
    assert res.exchanged_fraction == 0
    json.dumps(res.to_dict())


def test_refine_is_deterministic():
    G = build_g(ConstructionParams(levels=2, atom_size=4, seed=3))
    a = szemeredi_refine(G, canonical_partition(G.n, 1), Fraction(1, 4), budget=4, seed=5)
    b = szemeredi_refine(G, canonical_partition(G.n, 1), Fraction(1, 4), budget=4, seed=5)
    assert a.partition == b.partition and a.to_dict() == b.to_dict()


def test_initial_order():
    G = build_g(ConstructionParams(levels=2, atom_size=2))
    assert initial_order(G, Fraction(1, 4)) == 4
    assert initial_order(G, Fraction(1, 3)) == 4
    with pytest.raises(ValueError):
        afks_iterate(G, Fraction(0))


def test_iterate_constant_graph_stops_first_step():
    G = const_graph(16, 2)
    tr = afks_iterate(G, Fraction(1, 4))
    assert tr.stop_reason == "ef_regular" and len(tr.steps) == 1
    st0 = tr.steps[0]
    assert st0.cond1 and st0.cond2 and st0.k_A == st0.k_B == 4


def test_iterate_trace_serialisation():
    G = build_g(ConstructionParams(levels=2, atom_size=4, seed=1))
    tr = afks_iterate(G, Fraction(1, 2), budget=2, refine_budget=3)
    d = json.loads(tr.to_json())
    assert d["stop_reason"] == tr.stop_reason and len(d["steps"]) == len(tr.steps)
    rows = list(csv.DictReader(io.StringIO(tr.to_csv())))
    assert [int(r["step"]) for r in rows] == list(range(1, len(tr.steps) + 1))
    assert tr.potentials == sorted(tr.potentials)


def test_estimators():
    G = build_g(ConstructionParams(levels=2, atom_size=4, seed=1))
    est = SzemerediRefiner(gamma=Fraction(1, 4), budget=3)
    assert clone(est).get_params()["budget"] == 3
    assert est.fit(G) is est
    assert est.transform(G).shape == (G.n,)
    it = StrongRegularityIterator(eps=Fraction(1, 2), budget=1, refine_budget=2)
    assert it.set_params(seed=4).fit(G).trace_.steps
