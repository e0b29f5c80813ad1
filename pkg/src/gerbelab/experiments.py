"""Dataset-level experiment drivers shared by the CLI and the tests."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .calculus import chern, chern_number, curvature
from .index import (IndexResult, InvarianceResult, PairingReport, VanishingResult, graded_index,
                    harmonic_vanishing_experiment, index_pairing_report, overlap_dirac,
                    symbol_invariance_experiment)
from .model import Dataset, DiracSpec
from .operators import lichnerowicz_residual, pointwise_operator


def _spacing(ds: Dataset) -> float:
    return float(max(max(ch.spacing) for ch in ds.cover.charts if ch.is_grid))


def overlap_wilson(ds: Dataset):
    """Symmetrized covariant Laplacian times r h / 2, the Hermitian even Wilson term."""
    D = ds.dirac_operator(wilson=0.0)
    spec = ds.dirac or DiracSpec()
    L = ds.laplacian()
    G, Gi = sp.diags(D.gram), sp.diags(1.0 / D.gram)
    return 0.5 * (L + Gi @ L.conj().T @ G) * (0.5 * spec.overlap_wilson * _spacing(ds))


def overlap_index(ds: Dataset, perturbation=None, threshold: float = 1e-6) -> IndexResult:
    """Graded index of the Ginsparg-Wilson overlap operator built on ``ds``."""
    D = ds.dirac_operator(wilson=0.0)
    if D.grading is None:
        raise ValueError(f"dataset {ds.name} declares no grading")
    spec = ds.dirac or DiracSpec()
    Dov, a = overlap_dirac(D, overlap_wilson(ds), mass=spec.overlap_mass, spacing=_spacing(ds),
                           perturbation=perturbation)
    s = np.sqrt(D.gram)
    return graded_index(Dov, sp.diags(s) @ D.grading @ sp.diags(1.0 / s), gw_spacing=a,
                        threshold=threshold)


def odd_potential(ds: Dataset, norm: float, rng: np.random.Generator) -> sp.csr_matrix:
    """Random pointwise potential sum_k c_k(x) (-i e_k), sup norm exactly ``norm``.

    It acts on the Clifford factor only, so it commutes with the chain, and
    it is Hermitian and odd for the grading.  Pointwise operators coincide
    with their symmetric form.
    """
    gens = ds.generators()
    if not gens:
        raise ValueError(f"dataset {ds.name} has no Clifford generators")
    space = ds.space()
    herm = np.array([-1j * e for e in gens])
    c = rng.normal(size=(space.size, len(gens)))
    c *= (rng.uniform(size=space.size) / np.linalg.norm(c, axis=1))[:, None]
    c *= norm / np.max(np.linalg.norm(c, axis=1))
    blocks = np.einsum("pk,kab->pab", c, herm)
    # owner-frame values; pointwise_operator expects per-chart blocks
    per_chart = []
    for ci, ch in enumerate(ds.cover.charts):
        per_chart.append(blocks[space.global_of[ci]])
    return pointwise_operator(space, per_chart)


def symbol_invariance(ds: Dataset, count: int = 10, norm: float = 0.3, seed: int = 0,
                      extra_norms: tuple[float, ...] = (), threshold: float = 1e-6) -> InvarianceResult:
    rng = np.random.default_rng(seed)
    perts = [None] + [odd_potential(ds, norm, rng) for _ in range(count)]
    perts += [odd_potential(ds, x, rng) for x in extra_norms]
    return symbol_invariance_experiment(lambda V: overlap_index(ds, V, threshold), perts, threshold)


def chern_integral(ds: Dataset, partition: str | None = None) -> float | None:
    if ds.connection is None:
        return None
    ch = chern(curvature(ds.connection), max_k=1)
    part = ds.partitions[partition or sorted(ds.partitions)[0]]
    return float(np.real(chern_number(ch, part)))


def pairing(ds: Dataset, index: int | None) -> PairingReport:
    return index_pairing_report(index, chern_integral(ds) if ds.flat else None, ds.flat)


def vanishing(ds: Dataset, threshold: float = 1e-6) -> VanishingResult:
    s = ds.scalar_curvature_global()
    if s is None:
        s = np.zeros(ds.space().size)
    return harmonic_vanishing_experiment(ds.dirac_operator(), s, bound=ds.tolerances.get("friedrich_bound"),
                                         threshold=threshold)


def band_probes(ds: Dataset, count: int = 2) -> list[np.ndarray]:
    """Smooth test spinors on a (rho, theta) band chart pair.

    sech^2(rho) times a half-angle profile in theta, so they respect the
    antiperiodic spin chain and decay towards the unmatched band edges.
    """
    space = ds.space()
    d = ds.total_dim
    w = np.linspace(1.0, -0.5, d) + 0.3 * np.cos(np.arange(d))
    out = []
    for v in np.eye(d)[:count]:
        per = []
        for ch in ds.cover.charts:
            rho, th = ch.coords[:, 0], ch.coords[:, 1]
            f = 1.0 / np.cosh(rho) ** 2
            per.append(f[:, None] * (np.cos(th / 2)[:, None] * v + np.sin(th / 2)[:, None] * w))
        out.append(space.to_global(per))
    return out


def lichnerowicz(ds: Dataset, band: int | None = None, probes: bool = True) -> float:
    """|| D^2 - nabla* nabla - s/4 || without the Wilson term.

    ``band`` excludes rows near unmatched chart edges; with ``probes`` the
    residual is measured on smooth test spinors instead of matrix rows.
    """
    D = ds.dirac_operator(wilson=0.0)
    s = ds.scalar_curvature_global()
    if s is None:
        s = np.zeros(ds.space().size)
    exclude = None if band is None else ds.space().boundary_band(band)
    return lichnerowicz_residual(D, ds.nabla(), s, exclude=exclude,
                                 probes=band_probes(ds) if probes else None)
