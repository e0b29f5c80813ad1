"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line; conftest prints them in the terminal
summary.  ``python tests/test_acceptance.py`` runs the same checks standalone.
"""

import itertools
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from gerbelab import clifford as cl
from gerbelab import experiments as ex
from gerbelab.cech import coboundary_witness, enumerate_witnesses
from gerbelab.datasets import EXAMPLES, s2_round_dataset, square_map_spec
from gerbelab.gerbe import Band, TransitionFamily, VectorialGerbe, clifford_gerbe, validate_gerbe
from gerbelab.index import spectrum
from gerbelab.sections import (FormalSection, GlobalSection, check_global_section, defect_cocycle,
                               formal_inner_product, inner_product)

DATA = Path(__file__).resolve().parents[1] / "datasets"
RESULTS: dict[int, str] = {}

# tolerances pinned from the acceptance criteria
CLIFFORD_MAX_N = 6
CLIFFORD_SECONDS = 5.0
ROTATION_TOL = 1e-12
W2_SECONDS = 1.0
W2_MAX_CANDIDATES = 2**6
PARTITION_TOL = 1e-9
DEFECT_TOL = 1e-12
CIRCLE_SAMPLES = 256
CIRCLE_GAP, CIRCLE_GAP_TOL = 0.5, 1e-3
FLAT_LICH_TOL = 1e-8
LICH_RATIO = 1.8
LICH_SECONDS = 60.0
SPHERE_GAP_MIN = 0.8
CHERN_TOL = 1e-3
PERTURBATIONS, PERTURBATION_NORM = 10, 0.3
MIN_GAP = 1e-2


def _record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def _word_product(a, b):
    word, sign = list(a) + list(b), 1
    for i in range(len(word)):
        for j in range(len(word) - 1 - i):
            if word[j] > word[j + 1]:
                word[j], word[j + 1] = word[j + 1], word[j]
                sign = -sign
    out = []
    for k in word:
        if out and out[-1] == k:
            out.pop()
            sign = -sign
        else:
            out.append(k)
    return sign, tuple(out)


def test_criterion_1_clifford_tables():
    t0 = time.perf_counter()
    bad = 0
    for n in range(1, CLIFFORD_MAX_N + 1):
        blades = [b for r in range(n + 1) for b in itertools.combinations(range(1, n + 1), r)]
        for a in blades:
            ea = cl.CliffordElement.from_blades(n, {a: 1.0})
            for b in blades:
                sign, c = _word_product(a, b)
                got = ea * cl.CliffordElement.from_blades(n, {b: 1.0})
                bad += got != cl.CliffordElement.from_blades(n, {c: float(sign)})
        # associativity on all generator triples, exact
        gens = [cl.generator(n, k) for k in range(1, n + 1)]
        for x, y, z in itertools.product(gens, repeat=3):
            bad += (x * y) * z != x * (y * z)
    dt = time.perf_counter() - t0
    _record(1, bad == 0 and dt < CLIFFORD_SECONDS,
            f"{bad} blade/associativity mismatches for n<={CLIFFORD_MAX_N}, {dt:.2f} s")


def test_criterion_2_double_cover():
    from scipy.spatial.transform import Rotation

    axis = np.array([0.2, -0.4, 1.0]) / np.linalg.norm([0.2, -0.4, 1.0])
    loop = [Rotation.from_rotvec(axis * t).as_matrix() for t in np.linspace(0, 2 * np.pi, 241)]
    end = cl.lift_path(loop)[-1].value
    ends_at_minus_one = end.allclose(cl.scalar(3, -1.0), ROTATION_TOL)
    worst, opposite = 0.0, True
    for r in Rotation.random(50, random_state=1).as_matrix():
        lifts = cl.lift_rotation(r)
        opposite &= len(lifts) == 2 and (lifts[0].value + lifts[1].value).allclose(cl.scalar(3, 0.0), 1e-15)
        worst = max(worst, *(np.max(np.abs(cl.adjoint_matrix(g) - r)) for g in lifts))
    _record(2, ends_at_minus_one and opposite and worst < ROTATION_TOL,
            f"loop ends at {end.coeffs[0]:+.12f}, adjoint residual {worst:.2e}, two opposite lifts: {opposite}")


def test_criterion_3_w2_detection(example):
    clutched, tangent = example("s2_clutched"), example("s2_tangent")
    t0 = time.perf_counter()
    classes, agree = [], True
    for ds in (clutched, tangent):
        rep = validate_gerbe(clifford_gerbe(ds.frames))
        assert 2 ** ds.cover.nerve.count(1) <= W2_MAX_CANDIDATES
        w = coboundary_witness(rep.cocycle)
        found = enumerate_witnesses(rep.cocycle)
        agree &= (w is None) == (not found)
        classes.append(rep.cocycle_class)
    dt = time.perf_counter() - t0
    _record(3, classes == ["nontrivial", "trivial"] and agree and dt < W2_SECONDS,
            f"clutched {classes[0]}, tangent {classes[1]}, solver agrees with enumeration: {agree}, {dt:.2f} s")


def test_criterion_4_sections(example):
    ds = example("s1_antiperiodic")
    s = check_global_section(ds.transitions, ds.sections["half_angle"])
    g = ds.gerbe()
    vals = [inner_product(s, s, p, g) for p in ds.partitions.values()]
    spread = abs(vals[0] - vals[1])

    sq = example("t2_square_lift_d1")
    rng = np.random.default_rng(7)
    resid = 0.0
    for _ in range(5):
        noise = [np.column_stack([rng.normal(size=c.size) + 1j * rng.normal(size=c.size), np.zeros(c.size)])
                 for c in sq.cover.charts]
        dc = defect_cocycle(sq.gerbe().transitions, noise, square_map_spec(sq.transitions))
        resid = max(resid, dc.identity_residual)

    eye = {k: np.ones((ov.size, 1, 1)) for k, ov in ds.cover.overlaps.items()}
    triv = TransitionFamily(ds.cover, 1, eye, "trivial")
    u = GlobalSection(triv.name, [np.ones((c.size, 1)) for c in ds.cover.charts])
    gerbes = {ds.transitions.name: g, triv.name: VectorialGerbe(ds.cover, triv, Band.trivial(1))}
    cross = formal_inner_product(FormalSection.of(s), FormalSection.of(u), ds.partitions["smooth"], gerbes)
    _record(4, len(vals) == 2 and spread < PARTITION_TOL and resid <= DEFECT_TOL and cross == 0.0,
            f"partition spread {spread:.2e}, defect identity {resid:.2e}, cross-chain product {cross}")


def test_criterion_5_circle(example):
    per, anti = example("s1_periodic"), example("s1_antiperiodic")
    sizes = (per.space().size, anti.space().size)
    kp = spectrum(per.dirac_operator()).kernel_dim
    ra = spectrum(anti.dirac_operator())
    ok = (sizes == (CIRCLE_SAMPLES,) * 2 and kp == 1 and ra.kernel_dim == 0
          and abs(ra.gap - CIRCLE_GAP) < CIRCLE_GAP_TOL)
    _record(5, ok, f"{sizes[0]} samples, kernels {kp}/{ra.kernel_dim}, antiperiodic gap {ra.gap:.6f}")


def test_criterion_6_lichnerowicz(example):
    t0 = time.perf_counter()
    flat = ex.lichnerowicz(example("t2_flat"), probes=False)
    r = [ex.lichnerowicz(s2_round_dataset(n=n, overlap=n // 16), band=n // 8) for n in (32, 64)]
    dt = time.perf_counter() - t0
    ratio = r[0] / r[1]
    _record(6, flat < FLAT_LICH_TOL and ratio >= LICH_RATIO and dt < LICH_SECONDS,
            f"flat residual {flat:.2e}, sphere {r[0]:.4f} -> {r[1]:.4f} (ratio {ratio:.2f}), {dt:.1f} s")


def test_criterion_7_vanishing(example):
    ds = example("s2_round")
    v = ex.vanishing(ds)
    n = ds.cover.charts[0].shape
    ok = v.hypothesis_met and v.spectral.kernel_dim == 0 and v.spectral.gap >= SPHERE_GAP_MIN
    _record(7, ok, f"{n[0]}x{n[1]} per chart, kernel {v.spectral.kernel_dim}, gap {v.spectral.gap:.4f}")


def test_criterion_8_index(example):
    names = {-2: "t2_twisted_d-2", -1: "t2_twisted_d-1", 0: "t2_flat", 1: "t2_twisted_d1", 2: "t2_twisted_d2"}
    parts, ok = [], True
    for d, name in names.items():
        ds = example(name)
        r = ex.overlap_index(ds)
        c1 = ex.chern_integral(ds)
        c1 = 0.0 if c1 is None else c1
        ok &= r.index == d and not r.inconclusive and abs(c1 - r.index) < CHERN_TOL
        parts.append(f"d={d}: {r.index} ({c1:+.5f})")
    _record(8, ok, "index (Chern) " + ", ".join(parts))


def test_criterion_9_symbol_invariance(example):
    r = ex.symbol_invariance(example("t2_twisted_d1"), count=PERTURBATIONS, norm=PERTURBATION_NORM, seed=0)
    perturbed = r.indices[1:]
    ok = (len(perturbed) == PERTURBATIONS and all(i == 1 for i in r.indices) and not any(r.inconclusive)
          and min(r.gaps) > MIN_GAP)
    _record(9, ok, f"indices {r.indices}, min gap {min(r.gaps):.3f}")


def test_criterion_10_determinism():
    env = dict(os.environ)
    files = sorted(DATA.glob("*.json"))
    differ = []
    for f in files:
        outs = [subprocess.run([sys.executable, "-m", "gerbelab.cli", "all", str(f)], env=env,
                               capture_output=True, check=False).stdout for _ in range(2)]
        if outs[0] != outs[1] or not outs[0]:
            differ.append(f.stem)
    _record(10, not differ and len(files) == len(EXAMPLES),
            f"{len(files)} datasets run twice with 'all', differing: {differ or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
