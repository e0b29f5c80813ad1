import numpy as np
import pytest
import scipy.sparse as sp

from gerbelab import clifford as cl
from gerbelab import experiments as ex
from gerbelab.index import spectrum
from gerbelab.operators import assemble_dirac, equivariance_check, lichnerowicz_residual


def test_unsymmetrized_dirac_integrates_by_parts(example):
    ds = example("s2_round_coarse")
    D = assemble_dirac(ds.space(), ds.generators(), ds.fiber_connection(), symmetrize=False,
                       grading=ds.grading())
    s, t = ex.band_probes(ds)
    lhs, rhs = D.inner(D.matrix @ s, t), D.inner(s, D.matrix @ t)
    # E_k^* = -E_k and d_k^* = -d_k, so E_k d_k is formally self-adjoint
    assert abs(lhs - rhs) < 1e-6 * abs(lhs)


def test_symmetrized_dirac_is_self_adjoint(example):
    D = example("s2_round_coarse").dirac_operator()
    assert D.self_adjointness_residual() < 1e-10


def test_equivariance_under_scalars(example):
    D = example("s2_round_coarse").dirac_operator()
    assert equivariance_check(D, 1.0) == 0.0
    assert equivariance_check(D, -1.0) == 0.0


def test_right_spin_action_commutes(example):
    ds = example("s2_round_coarse")
    D = ds.dirac_operator()
    a = 0.4
    g = cl.CliffordElement(2, np.array([np.cos(a), 0.0, 0.0, np.sin(a)]))
    assert equivariance_check(D, ds._lift(cl.right_matrix(g))) < 1e-10
    # left multiplication does not commute with the generators
    assert equivariance_check(D, ds._lift(cl.left_matrix(g))) > 1.0


def test_circle_spectra(example):
    per = np.sort(np.abs(spectrum(example("s1_periodic").dirac_operator()).values))
    anti = np.sort(np.abs(spectrum(example("s1_antiperiodic").dirac_operator()).values))
    want_per = np.array([0] + [k for k in range(1, 6) for _ in range(2)], dtype=float)
    want_anti = np.array([k + 0.5 for k in range(5) for _ in range(2)])
    assert np.max(np.abs(per[:11] - want_per)) < 1e-3
    assert np.max(np.abs(anti[:10] - want_anti)) < 1e-3


def test_flat_torus_kernel_is_constant_sections(example):
    ds = example("t2_flat")
    rep = spectrum(ds.dirac_operator())
    assert rep.kernel_dim == ds.total_dim == 2


def test_spectrum_symmetric_about_zero(example):
    ds = example("t2_flat")
    v = np.sort(spectrum(ds.dirac_operator(wilson=0.0)).values)
    assert np.max(np.abs(v + v[::-1])) < 1e-10


def test_flat_lichnerowicz_exact(example):
    assert ex.lichnerowicz(example("t2_flat"), probes=False) < 1e-8


def test_round_sphere_lichnerowicz_converges():
    from gerbelab.datasets import s2_round_dataset

    r = [ex.lichnerowicz(s2_round_dataset(n=n, overlap=n // 16), band=n // 8) for n in (32, 64)]
    assert r[0] / r[1] >= 1.8


def test_order_zero_perturbation_breaks_lichnerowicz(example):
    ds = example("t2_flat")
    D = ds.dirac_operator(wilson=0.0)
    eps = 0.05
    V = sp.kron(sp.identity(D.space.size), -1j * eps * ds.generators()[0])
    s = np.zeros(D.space.size)
    base = lichnerowicz_residual(D, ds.nabla(), s)
    bumped = lichnerowicz_residual(D.with_matrix(D.matrix + V), ds.nabla(), s)
    assert base < 1e-8 and bumped > eps


def test_equivariance_accepts_fiber_matrix(example):
    ds = example("t2_flat")
    D = ds.dirac_operator()
    assert equivariance_check(D, np.eye(D.space.fiber_dim)) == 0.0
    with pytest.raises(Exception):
        equivariance_check(D, np.eye(3))
