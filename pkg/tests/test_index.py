import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from gerbelab import experiments as ex
from gerbelab.index import IndexError_, graded_index, overlap_dirac, spectrum

TORI = {-2: "t2_twisted_d-2", -1: "t2_twisted_d-1", 0: "t2_flat", 1: "t2_twisted_d1", 2: "t2_twisted_d2"}


def _overlap(ds):
    D = ds.dirac_operator(wilson=0.0)
    Dov, a = overlap_dirac(D, ex.overlap_wilson(ds), mass=ds.dirac.overlap_mass, spacing=ex._spacing(ds))
    s = np.sqrt(D.gram)
    G = (sp.diags(s) @ D.grading @ sp.diags(1.0 / s)).toarray()
    return Dov, G, a


def test_zero_operator():
    assert spectrum(np.zeros((5, 5))).kernel_dim == 5
    for p, q in ((3, 2), (1, 4), (5, 0)):
        r = graded_index(np.zeros((5, 5)), np.diag([1.0] * p + [-1.0] * q))
        assert r.index == p - q and r.spectral.kernel_dim == 5


def test_grading_must_square_to_one():
    with pytest.raises(IndexError_, match="square"):
        graded_index(np.zeros((2, 2)), np.diag([1.0, 2.0]))


def test_grading_must_anticommute():
    with pytest.raises(IndexError_, match="anticommuting"):
        graded_index(np.eye(2), np.diag([1.0, -1.0]))


def test_circle_kernels(example):
    per = spectrum(example("s1_periodic").dirac_operator())
    anti = spectrum(example("s1_antiperiodic").dirac_operator())
    assert per.kernel_dim == 1 and anti.kernel_dim == 0
    assert abs(anti.gap - 0.5) < 1e-3


@pytest.mark.parametrize("d", sorted(TORI))
def test_torus_index_is_degree(example, d):
    ds = example(TORI[d])
    r = ex.overlap_index(ds)
    assert r.mode == "ginsparg_wilson" and not r.inconclusive
    assert r.index == d
    if d:
        assert abs(ex.chern_integral(ds) - r.index) < 1e-3


def test_index_additive_and_odd_in_grading(example):
    A, GA, a = _overlap(example("t2_twisted_d1"))
    B, GB, b = _overlap(example("t2_twisted_d-2"))
    assert a == b
    total = graded_index(sla.block_diag(A, B), sla.block_diag(GA, GB), gw_spacing=a)
    assert total.index == 1 + (-2)
    assert graded_index(A, -GA, gw_spacing=a).index == -1


def test_vanishing_on_round_sphere(example):
    r = ex.vanishing(example("s2_round"))
    assert r.hypothesis_met and r.passed
    assert r.spectral.kernel_dim == 0 and r.spectral.gap >= 0.8


def test_smaller_sphere_has_larger_gap(example):
    big = ex.vanishing(example("s2_round")).spectral.gap
    small = ex.vanishing(example("s2_half_radius")).spectral.gap
    assert small > big
    assert small == pytest.approx(2 * big, rel=1e-6)


def test_vanishing_hypothesis_not_met_on_flat_torus(example):
    r = ex.vanishing(example("t2_flat"))
    assert not r.hypothesis_met
    assert r.spectral.kernel_dim > 0
    assert "hypothesis not met" in r.notes[0]


def test_graded_index_of_round_sphere(example):
    ds = example("s2_round")
    r = graded_index(ds.dirac_operator())
    assert r.index == 0 and r.spectral.kernel_dim == 0


def test_symbol_invariance_small(example):
    r = ex.symbol_invariance(example("t2_twisted_d1"), count=3, norm=0.3, seed=1)
    assert r.indices == [1] * 4 and r.consistent
    assert not any(r.inconclusive)


def test_pairing(example):
    ds = example("t2_twisted_d2")
    rep = ex.pairing(ds, 2)
    assert rep.status == "compared" and rep.error < 1e-3
    assert ex.pairing(example("s2_round"), 0).status == "t(M) unknown"


def test_threshold_cluster_flagged():
    r = spectrum(np.diag([1.0, 1e-6 - 1e-16, 1e-6 + 1e-16]))
    assert r.kernel_dim == 1 and r.cluster_warning
    assert not spectrum(np.diag([1.0, 0.0, 0.5])).cluster_warning


def test_absolute_threshold():
    r = spectrum(np.diag([10.0, 1e-4]), threshold=1e-3, relative=False)
    assert r.kernel_dim == 1 and r.relative_threshold is None
