import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gerbelab.cech import (Cochain, CochainError, NerveError, build_nerve, coboundary, coboundary_witness,
                           enumerate_witnesses, random_cochain)

EDGES = list(itertools.combinations(range(4), 2))
TRIANGLES = list(itertools.combinations(range(4), 3))


@pytest.fixture
def sphere():
    """Boundary of a tetrahedron: the nerve of a good 4-set cover of S^2."""
    return build_nerve(4, EDGES, TRIANGLES)


@pytest.fixture
def solid():
    return build_nerve(4, EDGES, TRIANGLES, [(0, 1, 2, 3)])


def test_counts(sphere, solid):
    assert [sphere.count(k) for k in range(4)] == [4, 6, 4, 0]
    assert solid.count(3) == 1


def test_malformed_nerves():
    with pytest.raises(NerveError):
        build_nerve(3, [(0, 1)], [(0, 1, 2)])
    with pytest.raises(NerveError):
        build_nerve(2, [(0, 5)])
    with pytest.raises(NerveError):
        build_nerve(3, [(0, 0)])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0, 1]))
def test_delta_squared_vanishes(seed, degree):
    nerve = build_nerve(4, EDGES, TRIANGLES, [(0, 1, 2, 3)])
    rng = np.random.default_rng(seed)
    for m in (2, 3, 7):
        c = random_cochain(nerve, degree, rng, m)
        assert coboundary(coboundary(c)).is_zero()


def test_sphere_classes_by_parity(sphere):
    # each edge lies on two triangles, so coboundaries have even total: the
    # class of a 2-cochain on the tetrahedron boundary is its parity
    for bits in itertools.product([0, 1], repeat=4):
        c = Cochain(sphere, 2, np.array(bits))
        w = coboundary_witness(c)
        found = enumerate_witnesses(c)
        if sum(bits) % 2:
            assert w is None and found == []
        else:
            assert w is not None and coboundary(w) == c
            # witnesses form a coset of the 1-cocycles, of size 2^(6 - 3)
            assert len(found) == 8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_witness_agrees_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 5
    edges = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.8]
    es = set(edges)
    tris = [t for t in itertools.combinations(range(n), 3)
            if all(f in es for f in itertools.combinations(t, 2)) and rng.random() < 0.7]
    nerve = build_nerve(n, edges, tris)
    if nerve.count(2) == 0:
        return
    c = coboundary(random_cochain(nerve, 1, rng)) if rng.random() < 0.5 else random_cochain(nerve, 2, rng)
    w = coboundary_witness(c)
    assert (w is None) == (len(enumerate_witnesses(c)) == 0)


def test_non_cocycle_rejected(solid):
    c = Cochain.from_dict(solid, 2, {(0, 1, 2): 1})
    with pytest.raises(CochainError):
        coboundary_witness(c)


def test_cochain_validation(sphere):
    with pytest.raises(CochainError):
        Cochain(sphere, 2, np.zeros(3))
    with pytest.raises(CochainError):
        Cochain.from_dict(sphere, 1, {(0, 1, 2): 1})
    a = Cochain.from_dict(sphere, 2, {(0, 1, 2): 1})
    assert (a + a).is_zero()
    with pytest.raises(CochainError):
        a + Cochain.zero(sphere, 2, 3)
