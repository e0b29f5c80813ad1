import numpy as np
import pytest

from gerbelab.cover import Cover, Overlap, grid_chart
from gerbelab.datasets import spin_even_plus_vector_spec, square_map_spec, tangent_frames
from gerbelab.gerbe import Band, TransitionFamily, VectorialGerbe
from gerbelab.sections import (DefectReport, FormalSection, GlobalSection, PartitionOfUnity, SectionError,
                               check_global_section, construct_bump_section, defect_cocycle,
                               formal_inner_product, inner_product, project_to_base)


def identity_chain(cover, d=1, name="trivial"):
    vals = {k: np.broadcast_to(np.eye(d), (ov.size, d, d)).copy() for k, ov in cover.overlaps.items()}
    return TransitionFamily(cover, d, vals, name)


def test_constant_section_on_periodic_circle(example):
    ds = example("s1_periodic")
    out = check_global_section(ds.transitions, ds.sections["constant"])
    assert isinstance(out, GlobalSection)


def test_constant_rejected_on_antiperiodic_circle(example):
    ds = example("s1_antiperiodic")
    v = 0.7
    out = check_global_section(ds.transitions, [np.full((c.size, 1), v) for c in ds.cover.charts])
    assert isinstance(out, DefectReport)
    assert out.max_defect == pytest.approx(2 * v, abs=1e-15)


def test_half_angle_section_accepted(example):
    ds = example("s1_antiperiodic")
    out = check_global_section(ds.transitions, ds.sections["half_angle"], tol=1e-10)
    assert isinstance(out, GlobalSection)
    both = out + out.scale(-2.5)
    assert isinstance(check_global_section(ds.transitions, both.values, tol=1e-10), GlobalSection)


def test_missing_chart_data_rejected(example):
    ds = example("s1_antiperiodic")
    with pytest.raises(SectionError):
        check_global_section(ds.transitions, ds.sections["half_angle"][:1])


def test_bump_section_in_private_region(example):
    ds = example("s1_antiperiodic")
    s = construct_bump_section(ds.transitions, 0)
    assert np.all(s.values[1] == 0)
    assert np.max(np.abs(s.values[0])) > 0.5
    assert isinstance(check_global_section(ds.transitions, s.values), GlobalSection)


def test_bump_section_single_chart():
    ch = grid_chart("U", [16], [0.1], [0.0])
    cover = Cover([ch], {})
    s = construct_bump_section(identity_chain(cover), 0)
    assert np.max(s.values[0]) > 0


def test_no_private_region():
    a = grid_chart("A", [8], [0.1], [0.0])
    b = grid_chart("B", [8], [0.1], [0.0])
    idx = np.arange(8)
    cover = Cover([a, b], {(0, 1): Overlap(0, 1, idx, idx, np.zeros(8, dtype=int))})
    with pytest.raises(SectionError, match="no private region"):
        construct_bump_section(identity_chain(cover), 0)


def test_single_chart_quadrature():
    n = 256
    ch = grid_chart("U", [n], [1.0 / n], [0.0])
    cover = Cover([ch], {})
    chain = identity_chain(cover)
    gerbe = VectorialGerbe(cover, chain, Band.trivial(1))
    s = GlobalSection(chain.name, [np.ones((n, 1))])
    part = PartitionOfUnity({0: np.ones(n)})
    assert abs(inner_product(s, s, part, gerbe) - 1.0) <= 1e-6
    zero = s.scale(0.0)
    assert inner_product(zero, zero, part, gerbe) == 0.0


def test_inner_product_independent_of_partition(example):
    ds = example("s1_antiperiodic")
    s = check_global_section(ds.transitions, ds.sections["half_angle"])
    g = ds.gerbe()
    vals = [inner_product(s, s, p, g) for p in ds.partitions.values()]
    assert len(vals) == 2
    assert abs(vals[0] - vals[1]) < 1e-9
    # the integral of cos^2(theta/2) over the circle is pi
    assert vals[0] == pytest.approx(np.pi, abs=1e-9)


def test_inner_product_chain_mismatch(example):
    ds = example("s1_antiperiodic")
    s = check_global_section(ds.transitions, ds.sections["half_angle"])
    t = GlobalSection("other", s.values)
    with pytest.raises(SectionError):
        inner_product(s, t, ds.partitions["smooth"], ds.gerbe())


def test_partitions_subordinate(example):
    for name in ("s1_antiperiodic", "t2_twisted_d1", "s2_round", "s2_clutched"):
        ds = example(name)
        for p in ds.partitions.values():
            assert p.check_subordinate(ds.cover) < 1e-12


def test_partition_with_edge_weight_rejected(example):
    ds = example("s1_antiperiodic")
    w = {c: np.full(ch.size, 0.5) for c, ch in enumerate(ds.cover.charts)}
    with pytest.raises(SectionError):
        PartitionOfUnity(w).check_subordinate(ds.cover)


def test_formal_sections_block_orthogonal(example):
    ds = example("s1_antiperiodic")
    cover = ds.cover
    spin = check_global_section(ds.transitions, ds.sections["half_angle"])
    triv_chain = identity_chain(cover)
    u = GlobalSection(triv_chain.name, [np.ones((c.size, 1)) for c in cover.charts])
    t = u.scale(2.0)
    gerbes = {ds.transitions.name: ds.gerbe(),
              triv_chain.name: VectorialGerbe(cover, triv_chain, Band.trivial(1))}
    part = ds.partitions["smooth"]
    S, T, U = FormalSection.of(spin), FormalSection.of(t), FormalSection.of(u)
    assert formal_inner_product(S, T, part, gerbes) == 0.0
    assert formal_inner_product(S, S, part, gerbes) == inner_product(spin, spin, part, gerbes[spin.chain])
    assert formal_inner_product(S + U, T, part, gerbes) == inner_product(u, t, part, gerbes[u.chain])


def test_projection_recovers_tangent_field(example):
    ds = example("s2_invariant")
    spec = spin_even_plus_vector_spec(ds.transitions)
    chain = ds.gerbe().transitions
    fr = tangent_frames(ds.cover)
    a = np.array([0.3, -0.5, 0.8])
    base = []
    for c, ch in enumerate(ds.cover.charts):
        x = ch.coords
        field = np.cross(x, a)       # a rotation field, tangent everywhere
        base.append(np.einsum("pai,pa->pi", fr[c], field))
    lifted = [np.column_stack([np.zeros((b.shape[0], 2)), b]) for b in base]
    s = check_global_section(chain, lifted)
    assert isinstance(s, GlobalSection)
    out = project_to_base(s, spec)
    assert isinstance(out, GlobalSection)
    for got, want in zip(out.values, base):
        assert np.max(np.abs(got - want)) < 1e-9
    zero = project_to_base(s.scale(0.0), spec)
    assert all(np.all(v == 0) for v in zero.values)


def test_defect_cocycle_identity_on_noise(example):
    ds = example("t2_square_lift_d1")
    chain = ds.gerbe().transitions
    spec = square_map_spec(ds.transitions)
    rng = np.random.default_rng(5)
    # noise in the kernel of f: first coordinate only
    vals = [np.column_stack([rng.normal(size=c.size) + 1j * rng.normal(size=c.size), np.zeros(c.size)])
            for c in ds.cover.charts]
    dc = defect_cocycle(chain, vals, spec)
    assert dc.identity_residual <= 1e-12
    assert dc.base_residual <= 1e-12


def test_defect_cocycle_vanishes_on_global_sections(example):
    ds = example("s1_antiperiodic")
    dc = defect_cocycle(ds.transitions, ds.sections["half_angle"])
    assert max(np.max(np.abs(v)) for v in dc.s_ij.values()) < 1e-12
    assert dc.max_norm() < 1e-12


def test_no_compatible_lift_on_torus(example):
    ds = example("t2_square_lift_d1")
    chain = ds.gerbe().transitions
    vals = ds.sections["lift_attempt"]
    assert isinstance(check_global_section(chain, vals), DefectReport)
    dc = defect_cocycle(chain, vals, square_map_spec(ds.transitions))
    assert dc.max_norm() > 1.0
    assert dc.identity_residual <= 1e-12


def test_defect_cocycle_needs_gluing_base(example):
    ds = example("t2_square_lift_d1")
    chain = ds.gerbe().transitions
    vals = [np.column_stack([np.zeros(c.size), np.ones(c.size)]).astype(complex) for c in ds.cover.charts]
    with pytest.raises(SectionError, match="do not glue"):
        defect_cocycle(chain, vals, square_map_spec(ds.transitions))
