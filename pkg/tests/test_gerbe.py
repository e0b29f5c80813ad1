import numpy as np
import pytest

from gerbelab.cech import spin_obstruction
from gerbelab.datasets import LIFTINGS, square_map_spec
from gerbelab.gerbe import (Band, GerbeError, TransitionFamily, VectorialGerbe, clifford_gerbe,
                            embed_in_trivial, invariant_subbundle, lifting_gerbe, validate_gerbe)


def test_tetra_nerve(example):
    ds = example("s2_clutched")
    assert [ds.cover.nerve.count(k) for k in range(4)] == [4, 6, 4, 0]
    assert all(ov.n_components == 1 for ov in ds.cover.overlaps.values())


@pytest.mark.parametrize("name, expected", [("s2_clutched", "nontrivial"), ("s2_tangent", "trivial")])
def test_clifford_gerbe_class(example, name, expected):
    ds = example(name)
    assert validate_gerbe(ds.gerbe()).passed      # the SO(n) chain itself
    cg = clifford_gerbe(ds.frames)
    rep = validate_gerbe(cg)
    assert rep.passed
    assert rep.cocycle_class == expected
    # the same cocycle read directly from the Spin lifts
    assert spin_obstruction(ds.cover, cg.spin_lifts) == rep.cocycle


def test_antiperiodic_circle_chain_is_a_cocycle(example):
    rep = validate_gerbe(example("s1_antiperiodic").gerbe())
    assert rep.passed and rep.cocycle_class == "trivial"


def test_band_violation_reported(example):
    ds = example("s2_tangent")
    vals = {k: v.copy() for k, v in ds.frames.values.items()}
    theta = 0.3
    vals[(0, 1)] = vals[(0, 1)] @ np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    broken = TransitionFamily(ds.cover, 2, vals, "broken")
    rep = validate_gerbe(VectorialGerbe(ds.cover, broken, Band.trivial(2)))
    assert not rep.passed
    assert rep.failures and rep.cocycle_class == "unknown"


def test_band_must_have_declared_order():
    with pytest.raises(GerbeError):
        Band(np.diag([1.0, 1j]), 2)


@pytest.mark.parametrize("name, expected", [("t2_square_lift_d1", "nontrivial"), ("t2_square_lift_d2", "trivial")])
def test_square_lifting_gerbe(example, name, expected):
    ds = example(name)
    g = ds.gerbe()
    assert np.allclose(g.band.generator, np.diag([-1.0, 1.0]))
    rep = validate_gerbe(g)
    assert rep.passed and rep.cocycle_class == expected


def test_lifting_square_must_commute(example):
    ds = example("t2_square_lift_d1")
    spec = square_map_spec(ds.transitions)
    spec.f_matrix = np.array([[1.0, 0.0]])
    with pytest.raises(GerbeError, match="commuting square"):
        lifting_gerbe(spec)


def test_invariant_subbundle_recovers_tangent_chain(example):
    ds = example("s2_invariant")
    g = ds.gerbe()
    assert validate_gerbe(g).passed
    sub = invariant_subbundle(g)
    assert sub.rank == 2
    assert sub.cocycle_residual < 1e-12
    # the fixed space is the R^2 summand, on which r acts by the base rotation
    for key, v in sub.transitions.values.items():
        assert np.max(np.abs(v - ds.transitions.values[key])) < 1e-12


def test_sign_band_has_no_fixed_vectors(example):
    cg = clifford_gerbe(example("s2_clutched").frames)
    assert invariant_subbundle(cg).rank == 0


def test_embedding_in_trivial_bundle(example):
    ds = example("s2_clutched")
    part = ds.partitions["caps"]
    for gerbe in (ds.gerbe(), clifford_gerbe(ds.frames)):
        d = gerbe.fiber_dim
        for chart in range(4):
            emb = embed_in_trivial(gerbe, chart, part)
            assert emb.matrices.shape[1:] == (4 * d, d)
            assert emb.min_singular_value > 0.99
            left = emb.project() @ emb.matrices
            assert np.max(np.abs(left - np.eye(d))) < 1e-12


def test_lifting_registry():
    assert set(LIFTINGS) == {"square_map", "spin_even_plus_vector"}
