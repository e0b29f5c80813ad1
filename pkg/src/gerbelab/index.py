"""Kernel dimensions, graded indices and the index experiments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operators import DiscreteOperator

__all__ = [
    "IndexError_",
    "SpectralReport",
    "IndexResult",
    "kernel_dim",
    "spectrum",
    "graded_index",
    "overlap_dirac",
    "harmonic_vanishing_experiment",
    "symbol_invariance_experiment",
    "index_pairing_report",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 4096
EPS = np.finfo(float).eps


class IndexError_(ValueError):
    pass


@dataclass
class SpectralReport:
    values: np.ndarray          # sorted; eigenvalues if self-adjoint, else singular values
    kind: str
    kernel_dim: int
    threshold: float            # absolute cutoff actually used
    relative_threshold: float | None
    gap: float | None
    scale: float                # largest |value| (estimated for partial spectra)
    partial: bool = False
    cluster_warning: bool = False
    kernel_basis: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "kernel_dim": self.kernel_dim,
            "threshold": self.threshold,
            "relative_threshold": self.relative_threshold,
            "gap": self.gap,
            "scale": self.scale,
            "partial": self.partial,
            "cluster_warning": self.cluster_warning,
            "values": [float(v) for v in self.values],
        }


def _cutoff(values_abs: np.ndarray, threshold: float, relative: bool, scale: float):
    # a zero operator has no scale; fall back to the absolute cut
    cut = threshold * scale if relative and scale > 0 else threshold
    below = values_abs < cut
    kdim = int(np.count_nonzero(below))
    above = values_abs[~below]
    gap = float(above.min()) if above.size else None
    # two values straddling the cut within 10 machine epsilons
    cluster = False
    if kdim and above.size:
        lo = values_abs[below].max()
        hi = above.min()
        cluster = bool(hi - lo <= 10 * EPS * max(1.0, hi))
    return cut, kdim, gap, cluster


def _is_self_adjoint(op: DiscreteOperator, tol: float = 1e-10) -> bool:
    r = op.self_adjointness_residual()
    scale = float(np.max(np.abs(op.matrix.data))) if op.matrix.nnz else 1.0
    return r <= tol * max(1.0, scale)


def spectrum(op: DiscreteOperator | np.ndarray | sp.spmatrix, *, threshold: float = 1e-6,
             relative: bool = True, k: int = 24, want_basis: bool = False) -> SpectralReport:
    """Sorted spectrum and kernel count.

    Self-adjoint operators (for the quadrature Gram) give eigenvalues, others
    singular values of the Gram-symmetrized matrix.  Above ``DENSE_LIMIT``
    unknowns only the ``k`` values closest to 0 are computed by shift-invert
    and the report is flagged partial.
    """
    if isinstance(op, DiscreteOperator):
        A = op.symmetric_form()
        selfadj = _is_self_adjoint(op)
    else:
        A = op if sp.issparse(op) else np.atleast_2d(np.asarray(op))
        if sp.issparse(A):
            diff = (A - A.conj().T).tocoo()
            selfadj = A.shape[0] == A.shape[1] and (diff.nnz == 0 or np.max(np.abs(diff.data)) <= 1e-12)
        else:
            selfadj = A.shape[0] == A.shape[1] and np.allclose(A, A.conj().T, atol=1e-12)
    n = A.shape[0]
    basis = None
    if n <= DENSE_LIMIT:
        M = A.toarray() if sp.issparse(A) else np.asarray(A)
        if selfadj:
            vals, vecs = np.linalg.eigh(M)
            kind = "eigenvalues"
            absv = np.abs(vals)
        else:
            u, vals, vh = np.linalg.svd(M)
            vals = vals[::-1]
            vecs = vh.conj().T[:, ::-1]
            kind = "singular_values"
            absv = vals
        scale = float(absv.max()) if absv.size else 0.0
        cut, kdim, gap, cluster = _cutoff(absv, threshold, relative, scale)
        if want_basis:
            basis = vecs[:, absv < cut]
        order = np.argsort(vals, kind="stable")
        return SpectralReport(vals[order], kind, kdim, cut, threshold if relative else None, gap,
                              scale, False, cluster, basis)
    A = sp.csc_matrix(A)
    if selfadj:
        kind = "eigenvalues"
        scale = float(abs(spla.eigsh(A, k=1, which="LM", return_eigenvectors=False, v0=np.ones(n))[0]))
        vals, vecs = spla.eigsh(A, k=min(k, n - 2), sigma=0.0, which="LM", v0=np.ones(n))
        vals = np.real(vals)
        absv = np.abs(vals)
    else:
        kind = "singular_values"
        AhA = (A.conj().T @ A).tocsc()
        scale = float(np.sqrt(spla.eigsh(AhA, k=1, which="LM", return_eigenvectors=False, v0=np.ones(n))[0]))
        ev, vecs = spla.eigsh(AhA, k=min(k, n - 2), sigma=0.0, which="LM", v0=np.ones(n))
        vals = np.sqrt(np.clip(np.real(ev), 0, None))
        absv = vals
    cut, kdim, gap, cluster = _cutoff(absv, threshold, relative, scale)
    if kdim == absv.size:
        # every computed value is below the cut: the kernel may be larger
        cluster = True
    if want_basis:
        basis = vecs[:, absv < cut]
    return SpectralReport(np.sort(vals), kind, kdim, cut, threshold if relative else None, gap,
                          scale, True, cluster, basis)


def kernel_dim(op, threshold: float = 1e-6, relative: bool = True) -> SpectralReport:
    return spectrum(op, threshold=threshold, relative=relative)


# -- graded index ----------------------------------------------------------------

@dataclass
class IndexResult:
    index: int
    kernel_plus: int
    kernel_minus: int
    spectral: SpectralReport
    anticommutation_residual: float
    mode: str
    inconclusive: bool = False
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "kernel_plus": self.kernel_plus,
            "kernel_minus": self.kernel_minus,
            "kernel_dim": self.spectral.kernel_dim,
            "gap": self.spectral.gap,
            "threshold": self.spectral.threshold,
            "anticommutation_residual": self.anticommutation_residual,
            "mode": self.mode,
            "inconclusive": self.inconclusive,
            "notes": list(self.notes),
        }


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def _maxabs(m) -> float:
    if sp.issparse(m):
        m = m.tocoo()
        return float(np.max(np.abs(m.data))) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if np.size(m) else 0.0


def graded_index(D, grading=None, *, threshold: float = 1e-6, relative: bool = True,
                 gw_spacing: float | None = None, tol: float = 1e-8) -> IndexResult:
    """dim ker D restricted to Gamma = +1 minus the Gamma = -1 part.

    ``D`` is a DiscreteOperator (Gram-aware) or a plain matrix with the
    identity Gram.  The grading must square to the identity and either
    anticommute with D (``gw_spacing`` None) or satisfy the Ginsparg-Wilson
    relation Gamma D + D Gamma = a D Gamma D with ``a = gw_spacing``.  In both
    cases ker D is Gamma-invariant and the index is the trace of Gamma on it.
    """
    if isinstance(D, DiscreteOperator):
        G = grading if grading is not None else D.grading
        s = np.sqrt(D.gram)
        A = D.symmetric_form()
        Gm = sp.diags(s) @ G @ sp.diags(1.0 / s) if G is not None else None
    else:
        A, Gm = D, grading
    if Gm is None:
        raise IndexError_("graded index needs a grading operator")
    n = A.shape[0]
    if n <= DENSE_LIMIT or gw_spacing is not None:
        A, Gm = _dense(A), _dense(Gm)
        I = np.eye(n)
    else:
        A, Gm = sp.csr_matrix(A), sp.csr_matrix(Gm)
        I = sp.identity(n, format="csr")
    sq = _maxabs(Gm @ Gm - I)
    if sq > tol:
        raise IndexError_(f"grading does not square to the identity (residual {sq:.3g})")
    if gw_spacing is None:
        res = _maxabs(Gm @ A + A @ Gm)
        mode = "anticommuting"
    else:
        res = _maxabs(Gm @ A + A @ Gm - gw_spacing * (A @ Gm @ A))
        mode = "ginsparg_wilson"
    if res > tol * max(1.0, _maxabs(A)):
        raise IndexError_(f"grading fails the {mode} relation (residual {res:.3g})")
    rep = spectrum(A, threshold=threshold, relative=relative, want_basis=True)
    V = rep.kernel_basis
    if V is None or V.shape[1] == 0:
        return IndexResult(0, 0, 0, rep, res, mode, rep.cluster_warning)
    # Gamma restricted to the (invariant) kernel; eigenvalues are +-1
    gk = V.conj().T @ Gm @ V
    gk = 0.5 * (gk + gk.conj().T)
    ev = np.linalg.eigvalsh(gk)
    notes = []
    off = float(np.max(np.abs(np.abs(ev) - 1.0)))
    inconclusive = rep.cluster_warning
    if off > 1e-6:
        notes.append(f"kernel not grading-invariant (|eig|-1 up to {off:.3g})")
        inconclusive = True
    plus = int(np.count_nonzero(ev > 0))
    minus = int(np.count_nonzero(ev < 0))
    return IndexResult(plus - minus, plus, minus, rep, res, mode, inconclusive, notes)


def overlap_dirac(D: DiscreteOperator, wilson: DiscreteOperator | sp.spmatrix, *, mass: float = 1.0,
                  spacing: float, perturbation=None) -> tuple[np.ndarray, float]:
    """Overlap operator built from a self-adjoint Dirac D.

    With X = -i D (anti-Hermitian, odd for the grading) and the Hermitian,
    even Wilson term W, the kernel A = X + W - mass/a gives the unitary
    V = A (A* A)^(-1/2) and D_ov = (1 + V) / a, which obeys the
    Ginsparg-Wilson relation with parameter a.  Returns the dense
    Gram-symmetric D_ov and a.  ``perturbation`` (Hermitian, grading-odd,
    in symmetric-form coordinates) is added to D first.
    """
    s = np.sqrt(D.gram)
    Dsym = _dense(D.symmetric_form())
    if perturbation is not None:
        Dsym = Dsym + _dense(perturbation)
    X = -1j * Dsym
    Wm = wilson.symmetric_form() if isinstance(wilson, DiscreteOperator) else \
        sp.diags(s) @ wilson @ sp.diags(1.0 / s)
    A = X + _dense(Wm) - (mass / spacing) * np.eye(X.shape[0])
    w, U = np.linalg.eigh(A.conj().T @ A)
    if w.min() <= 1e-12 * w.max():
        raise IndexError_("overlap kernel operator is singular; change the mass")
    inv_sqrt = (U / np.sqrt(w)) @ U.conj().T
    V = A @ inv_sqrt
    return (np.eye(X.shape[0]) + V) / spacing, spacing


# -- experiments -------------------------------------------------------------------

@dataclass
class VanishingResult:
    spectral: SpectralReport
    hypothesis_met: bool
    kernel_vanishes: bool
    bound: float | None
    passed: bool
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "hypothesis_met": self.hypothesis_met,
            "kernel_vanishes": self.kernel_vanishes,
            "kernel_dim": self.spectral.kernel_dim,
            "gap": self.spectral.gap,
            "bound": self.bound,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def harmonic_vanishing_experiment(D: DiscreteOperator, scalar_curvature: np.ndarray, *,
                                  bound: float | None = None, slack: float = 0.2,
                                  threshold: float = 1e-6) -> VanishingResult:
    """Kernel and gap of D on a manifold where s > 0 is hoped for.

    If min s <= 0 the hypothesis is reported as not met and the kernel is
    recorded without a verdict.  Otherwise kernel 0 is required and, when a
    bound is given, gap >= bound - slack.
    """
    rep = spectrum(D, threshold=threshold)
    smin = float(np.min(scalar_curvature))
    met = smin > 0
    vanish = rep.kernel_dim == 0
    notes = []
    if not met:
        notes.append("hypothesis not met: scalar curvature is not positive")
        return VanishingResult(rep, False, vanish, bound, True, notes)
    ok = vanish
    if bound is not None and rep.gap is not None and rep.gap < bound - slack:
        ok = False
        notes.append(f"gap {rep.gap:.4g} below bound {bound:.4g} - slack {slack:.3g}")
    if not vanish:
        notes.append(f"kernel dimension {rep.kernel_dim} on a positive-curvature dataset")
    return VanishingResult(rep, True, vanish, bound, ok, notes)


def odd_perturbation(grading: np.ndarray, norm: float, rng: np.random.Generator) -> np.ndarray:
    """Random Hermitian matrix anticommuting with the grading, of operator norm ``norm``."""
    n = grading.shape[0]
    P = 0.5 * (np.eye(n) + grading)
    Q = 0.5 * (np.eye(n) - grading)
    B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = P @ B @ Q
    H = H + H.conj().T
    return H * (norm / np.linalg.norm(H, 2))


@dataclass
class InvarianceResult:
    indices: list[int]
    inconclusive: list[bool]
    gaps: list[float | None]
    consistent: bool

    def as_dict(self) -> dict:
        return {"indices": list(self.indices), "inconclusive": list(self.inconclusive),
                "gaps": list(self.gaps), "consistent": self.consistent}


def symbol_invariance_experiment(build, perturbations: Sequence[np.ndarray | None],
                                 threshold: float = 1e-6) -> InvarianceResult:
    """Graded index of ``build(V)`` for each order-0 perturbation V.

    ``build`` maps a perturbation (dense, acting on the symmetric-form
    unknowns, or None) to an IndexResult.  Runs whose kernel sits in a
    cluster at the threshold, or whose kernel is not grading-invariant, are
    flagged inconclusive rather than failed.
    """
    idx, inc, gaps = [], [], []
    for V in perturbations:
        r = build(V)
        idx.append(int(r.index))
        inc.append(bool(r.inconclusive))
        gaps.append(r.spectral.gap)
    conclusive = [i for i, f in zip(idx, inc) if not f]
    return InvarianceResult(idx, inc, gaps, len(set(conclusive)) <= 1)


@dataclass
class PairingReport:
    index: int | None
    integral: float | None
    error: float | None
    status: str

    def as_dict(self) -> dict:
        return {"index": self.index, "integral": self.integral, "error": self.error, "status": self.status}


def index_pairing_report(index: int | None, chern_integral: complex | None, flat: bool) -> PairingReport:
    """Compare a graded index with the quadrature of ch wedge t, t = 1 on flat data."""
    if not flat:
        return PairingReport(index, None, None, "t(M) unknown")
    if chern_integral is None:
        return PairingReport(index, None, None, "no curvature data")
    val = float(np.real(chern_integral))
    err = None if index is None else abs(val - index)
    return PairingReport(index, val, err, "compared")
