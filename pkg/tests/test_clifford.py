import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gerbelab import clifford as cl


def word_product(a, b):
    """Sign and blade of e_a e_b by bubble-sorting the generator word (e_k^2 = -1)."""
    word = list(a) + list(b)
    sign = 1
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            if word[i] > word[i + 1]:
                word[i], word[i + 1] = word[i + 1], word[i]
                sign = -sign
                changed = True
    out = []
    for k in word:
        if out and out[-1] == k:
            out.pop()
            sign = -sign
        else:
            out.append(k)
    return sign, tuple(out)


def blades(n):
    return [b for r in range(n + 1) for b in itertools.combinations(range(1, n + 1), r)]


@pytest.mark.parametrize("n", range(1, 7))
def test_blade_products_match_word_oracle(n):
    for a in blades(n):
        ea = cl.CliffordElement.from_blades(n, {a: 1.0})
        for b in blades(n):
            sign, c = word_product(a, b)
            got = ea * cl.CliffordElement.from_blades(n, {b: 1.0})
            assert got == cl.CliffordElement.from_blades(n, {c: float(sign)})


def test_generators_square_to_minus_one_and_anticommute():
    n = 4
    for k in range(1, n + 1):
        ek = cl.generator(n, k)
        assert ek * ek == cl.scalar(n, -1.0)
        for l in range(k + 1, n + 1):
            el = cl.generator(n, l)
            assert (ek * el + el * ek).allclose(cl.scalar(n, 0.0), 0.0)


def elements(n):
    return st.lists(st.floats(-3, 3, allow_nan=False), min_size=1 << n, max_size=1 << n).map(
        lambda c: cl.CliffordElement(n, np.array(c)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(elements(n), elements(n), elements(n))))
def test_associativity(abc):
    a, b, c = abc
    assert ((a * b) * c).allclose(a * (b * c), 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(elements(n), elements(n))))
def test_left_and_right_matrices(ab):
    a, b = ab
    assert np.allclose(cl.left_matrix(a) @ b.coeffs, (a * b).coeffs)
    assert np.allclose(cl.right_matrix(b) @ a.coeffs, (a * b).coeffs)


def test_reverse_is_anti_automorphism():
    rng = np.random.default_rng(3)
    a = cl.CliffordElement(4, rng.normal(size=16))
    b = cl.CliffordElement(4, rng.normal(size=16))
    assert cl.reverse(a * b).allclose(cl.reverse(b) * cl.reverse(a), 1e-12)


def test_bad_input_rejected():
    with pytest.raises(cl.CliffordError):
        cl.CliffordElement(3, np.zeros(4))
    with pytest.raises(cl.CliffordError):
        cl.generator(3, 1) * cl.generator(2, 1)
    with pytest.raises(cl.CliffordError):
        cl.SpinElement(cl.generator(3, 1))
    with pytest.raises(cl.CliffordError):
        cl.lift_rotation(np.diag([1.0, 1.0, -1.0]))


def _rotation3(axis, angle):
    from scipy.spatial.transform import Rotation

    return Rotation.from_rotvec(np.asarray(axis) / np.linalg.norm(axis) * angle).as_matrix()


@settings(max_examples=50, deadline=None)
@given(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 1)), st.floats(-math.pi, math.pi))
def test_two_lifts_reproduce_rotation(axis, angle):
    r = _rotation3(axis, angle)
    g, h = cl.lift_rotation(r)
    assert (g.value + h.value).allclose(cl.scalar(3, 0.0), 1e-15)
    assert np.max(np.abs(cl.adjoint_matrix(g) - r)) < 1e-12
    assert np.max(np.abs(cl.adjoint_matrix(h) - r)) < 1e-12


def test_rotation_loop_lifts_to_minus_one():
    rots = [_rotation3([0.2, -0.4, 1.0], t) for t in np.linspace(0, 2 * np.pi, 241)]
    path = cl.lift_path(rots)
    assert path[0].value.allclose(cl.scalar(3, 1.0), 1e-12)
    assert path[-1].value.allclose(cl.scalar(3, -1.0), 1e-12)
    twice = cl.lift_path(rots + rots[1:])
    assert twice[-1].value.allclose(cl.scalar(3, 1.0), 1e-12)


def test_planar_lift_half_angle():
    theta = 1.1
    r = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    g, _ = cl.lift_rotation(r)
    assert np.allclose(g.value.coeffs, [math.cos(theta / 2), 0, 0, math.sin(theta / 2)])
    assert np.allclose(cl.adjoint_matrix(g), r)


def test_higher_dimensional_lift_from_generator():
    from scipy.linalg import expm

    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 5))
    a = 0.4 * (a - a.T)
    g, h = cl.lift_rotation(expm(a), generator_matrix=a)
    assert np.max(np.abs(cl.adjoint_matrix(g) - expm(a))) < 1e-12
    with pytest.raises(cl.CliffordError):
        cl.lift_rotation(expm(a))
