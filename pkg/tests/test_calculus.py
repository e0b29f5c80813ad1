import dataclasses

import numpy as np
import pytest

from gerbelab import clifford as cl
from gerbelab import experiments as ex
from gerbelab.calculus import (CalculusError, ConnectionData, SymbolUnavailable, chern, chern_number,
                               curvature, dirac_expression, elliptic, laplacian_expression,
                               principal_symbol, sobolev_inner, spin_connection, validate_connection)
from gerbelab.datasets import s2_round_dataset, t2_dataset


def _gens(n):
    return [cl.left_matrix(cl.generator(n, k)) for k in range(1, n + 1)]


def _zero_connection(ds):
    return ConnectionData(ds.cover, [None] * len(ds.cover.charts), ds.rank)


# -- compatibility on overlaps ----------------------------------------------

def test_zero_connection_with_constant_chain(example):
    ds = example("t2_flat")
    rep = validate_connection(_zero_connection(ds), ds.transitions)
    assert rep.passed and rep.max_residual < 1e-12


def test_twisted_torus_connection_passes(example):
    ds = example("t2_twisted_d1")
    rep = validate_connection(ds.connection, ds.transitions)
    assert rep.passed, rep.failures


def test_zero_connection_fails_on_twisted_chain(example):
    ds = example("t2_twisted_d1")
    rep = validate_connection(_zero_connection(ds), ds.transitions, C=0.1)
    assert not rep.passed
    assert "incompatible on overlap" in rep.failures[0]


def test_residual_is_first_order_in_h():
    res = []
    for n, ov in ((20, 2), (40, 4), (80, 8)):
        ds = t2_dataset(1, n=n, overlap=ov)
        res.append(validate_connection(ds.connection, ds.transitions).max_residual)
    ratios = [res[0] / res[1], res[1] / res[2]]
    assert all(1.8 < r < 2.2 for r in ratios), res


def test_round_sphere_frame_chain_is_exact(example):
    ds = example("s2_round")
    rep = validate_connection(ds.fiber_connection_data(), ds.total_chain())
    assert rep.max_residual < 1e-12


def test_monopole_grids_do_not_align(example):
    ds = example("s2_monopole")
    with pytest.raises(CalculusError, match="grids not aligned"):
        validate_connection(ds.connection, ds.transitions)


def test_foreign_chain_rejected(example):
    a, b = example("t2_flat"), example("t2_twisted_d1")
    with pytest.raises(CalculusError, match="different covers"):
        validate_connection(a.connection, b.transitions)


# -- curvature and Chern forms ---------------------------------------------

def test_zero_connection_has_zero_curvature(example):
    ds = example("t2_flat")
    om = curvature(_zero_connection(ds))
    assert max(np.max(np.abs(v)) for v in om.values) == 0.0
    ch = chern(om)
    assert ch.character_scalar == ds.rank
    part = next(iter(ds.partitions.values()))
    assert abs(chern_number(ch, part)) < 1e-14


def test_monopole_chern_number(example):
    ds = example("s2_monopole")
    c1 = ex.chern_integral(ds)
    assert abs(c1 - 1.0) < 1e-3


@pytest.mark.parametrize("d", [-2, -1, 1, 2])
def test_torus_chern_number_is_degree(example, d):
    c1 = ex.chern_integral(example(f"t2_twisted_d{d}"))
    assert abs(c1 - d) < 1e-3


def test_chern_forms_conjugation_invariant(example):
    ds = example("s2_round")
    om = curvature(ds.fiber_connection_data())
    rng = np.random.default_rng(3)
    u = rng.normal(size=(ds.total_dim,) * 2) + 1j * rng.normal(size=(ds.total_dim,) * 2)
    a, b = chern(om, max_k=1), chern(om.conjugate(u), max_k=1)
    for c in range(len(ds.cover.charts)):
        assert np.max(np.abs(a.forms[1][c] - b.forms[1][c])) < 1e-12


# -- spin connection --------------------------------------------------------

def test_spin_connection_of_zero_is_zero(example):
    ds = example("s2_round")
    lc = ConnectionData(ds.cover, [np.zeros_like(v) for v in ds.levi_civita.values], 2, "levi_civita")
    phi = spin_connection(lc, ds.fiber.generators)
    assert all(np.max(np.abs(v)) == 0.0 for v in phi.values)


def test_spin_connection_planar_rotation(example):
    ds = example("s2_round")
    a = 0.7
    E = _gens(2)
    lc_vals = []
    for ch in ds.cover.charts:
        w = np.zeros((ch.size, 2, 2, 2))
        w[:, 0, 0, 1], w[:, 0, 1, 0] = a, -a
        lc_vals.append(w)
    phi = spin_connection(ConnectionData(ds.cover, lc_vals, 2, "levi_civita"), E)
    want = -0.5 * a * E[0] @ E[1]
    assert np.max(np.abs(phi.values[0][:, 0] - want)) < 1e-14
    assert np.max(np.abs(phi.values[0][:, 1])) == 0.0


def test_spin_connection_rejects_symmetric_part(example):
    ds = example("s2_round")
    bad = [v.copy() for v in ds.levi_civita.values]
    bad[0][:, :, 0, 0] += 1.0
    with pytest.raises(CalculusError, match="not antisymmetric"):
        spin_connection(ConnectionData(ds.cover, bad, 2, "levi_civita"), ds.fiber.generators)


def _doubled(ds):
    lc = ConnectionData(ds.cover, [2.0 * v for v in ds.levi_civita.values], 2, "levi_civita")
    return dataclasses.replace(ds, levi_civita=lc, _cache={})


def test_quarter_normalization_passes_lichnerowicz():
    quarter, half = [], []
    for n in (32, 64):
        ds = s2_round_dataset(n=n, overlap=n // 16)
        quarter.append(ex.lichnerowicz(ds, band=n // 8))
        half.append(ex.lichnerowicz(_doubled(ds), band=n // 8))
    assert quarter[0] / quarter[1] > 1.8
    assert quarter[1] < 0.05
    # the wrong normalization leaves an O(1) residual that does not shrink
    assert min(half) > 0.5 and half[0] / half[1] < 1.2


# -- principal symbols ------------------------------------------------------

def test_laplacian_symbol():
    expr = laplacian_expression(2, 3)
    xi = np.array([0.6, -0.8]) * 1.7
    s = principal_symbol(expr, 0, xi)
    assert s.order == 2
    assert np.allclose(s.sigma, -np.dot(xi, xi) * np.eye(3), atol=1e-14)
    assert elliptic(expr)[0]


def test_dirac_symbol_squares_to_norm():
    E = _gens(3)
    expr = dirac_expression(E)
    rng = np.random.default_rng(1)
    for _ in range(5):
        xi = rng.normal(size=3)
        s = principal_symbol(expr, 0, xi).sigma
        assert np.allclose(s, 1j * np.einsum("k,kab->ab", xi, np.asarray(E)), atol=1e-14)
        assert np.allclose(s @ s, np.dot(xi, xi) * np.eye(len(s)), atol=1e-12)
    ok, smin = elliptic(expr)
    assert ok and abs(smin - 1.0) < 1e-12


def test_symbol_homogeneity():
    expr = dirac_expression(_gens(2))
    xi = np.array([0.3, 1.1])
    for lam in (0.5, 3.0):
        a = principal_symbol(expr, 0, lam * xi).sigma
        b = principal_symbol(expr, 0, xi).sigma
        assert np.allclose(a, lam * b, atol=1e-14)


def test_lower_order_terms_do_not_enter_symbol():
    E = _gens(2)
    phi = np.ones((1, 2, 4, 4))
    a = principal_symbol(dirac_expression(E), 0, np.array([1.0, 2.0])).sigma
    b = principal_symbol(dirac_expression(E, phi=phi), 0, np.array([1.0, 2.0])).sigma
    assert np.array_equal(a, b)


def test_degenerate_first_order_operator_not_elliptic():
    from gerbelab.calculus import DifferentialExpression

    expr = DifferentialExpression(1, 2, {(1,): np.diag([1.0, 0.0])})
    ok, smin = elliptic(expr)
    assert not ok and smin == 0.0


def test_matrix_only_operator_has_no_symbol():
    with pytest.raises(SymbolUnavailable, match="symbol unavailable"):
        principal_symbol(np.eye(4), 0, np.array([1.0]))


def test_sobolev_inner(example):
    ds = example("t2_flat")
    L = ds.laplacian()
    gram = ds.dirac_operator().gram
    rng = np.random.default_rng(0)
    u = rng.normal(size=L.shape[0])
    assert sobolev_inner(u, u, L, gram, 0) == pytest.approx(np.sum(gram * u * u))
    # s = 1 adds the (non-negative) Dirichlet energy
    assert sobolev_inner(u, u, L, gram, 1).real >= sobolev_inner(u, u, L, gram, 0).real
    with pytest.raises(CalculusError):
        sobolev_inner(u, u, L, gram, -1)
