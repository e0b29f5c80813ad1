"""Discrete operators on chart-sampled sections of a transition chain.

Unknowns are the samples of the manifold, each stored once in the frame of
its *owner*, the lowest-index chart containing it.  A chart-local operator
(built on the chart's own grid) reaches the global unknowns through the
prolongation ``s_c(p) = T s_owner`` where T is the chain transition.  Each
global row is evaluated in the lowest-index chart where the sample's full
stencil is available and transported back to the owner frame.  Rows whose
stencil is incomplete in every chart (manifold boundary) drop the missing
neighbours, i.e. zero extension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .cover import Cover
from .gerbe import TransitionFamily

__all__ = [
    "SampleSpace",
    "DiscreteOperator",
    "OperatorError",
    "centered_difference",
    "block_diag_field",
    "compact_laplacian",
    "assemble",
    "assemble_dirac",
    "assemble_nabla",
    "connection_laplacian",
    "lichnerowicz_residual",
    "equivariance_check",
    "pointwise_operator",
]


class OperatorError(ValueError):
    pass


@dataclass(eq=False)
class SampleSpace:
    """Global sample indexing for a chain over a cover."""

    chain: TransitionFamily
    global_of: list[np.ndarray] = field(default_factory=list)   # per chart: global id of each sample
    transport: list[np.ndarray] = field(default_factory=list)   # per chart: T with s_c = T s_owner
    owner: np.ndarray = None       # (N,) owner chart per global sample
    owner_local: np.ndarray = None  # (N,) local index in owner chart
    row_chart: np.ndarray = None
    row_local: np.ndarray = None

    def __post_init__(self):
        cover = self.chain.cover
        d = self.chain.fiber_dim
        dtype = complex if self.chain.is_complex else float
        # charts in order; a sample already seen through a lower chart b
        # inherits b's global id and composes the transport g_cb T_b
        gid = 0
        own_c, own_l = [], []
        for c, ch in enumerate(cover.charts):
            g = -np.ones(ch.size, dtype=np.int64)
            T = np.broadcast_to(np.eye(d, dtype=dtype), (ch.size, d, d)).copy()
            for b in range(c):
                if not cover.has_overlap(c, b):
                    continue
                lc, lb, pids = cover.matching(c, b)
                take = g[lc] < 0
                g[lc[take]] = self.global_of[b][lb[take]]
                T[lc[take]] = np.einsum("pab,pbc->pac", self.chain.at(c, b)[pids[take]],
                                        self.transport[b][lb[take]])
            mine = np.flatnonzero(g < 0)
            g[mine] = gid + np.arange(mine.size)
            gid += mine.size
            own_c.append(np.full(mine.size, c))
            own_l.append(mine)
            self.global_of.append(g)
            self.transport.append(T)
        self.owner = np.concatenate(own_c)
        self.owner_local = np.concatenate(own_l)
        # row chart: lowest chart where the radius-1 stencil is complete
        rc = -np.ones(self.size, dtype=np.int64)
        rl = -np.ones(self.size, dtype=np.int64)
        for c, ch in enumerate(cover.charts):
            interior = _interior_mask(ch)
            g = self.global_of[c]
            pick = interior & (rc[g] < 0)
            rc[g[pick]] = c
            rl[g[pick]] = np.flatnonzero(pick)
        miss = rc < 0
        rc[miss] = self.owner[miss]
        rl[miss] = self.owner_local[miss]
        self.row_chart, self.row_local = rc, rl

    @property
    def size(self) -> int:
        return self.owner.size

    @property
    def fiber_dim(self) -> int:
        return self.chain.fiber_dim

    @property
    def cover(self) -> Cover:
        return self.chain.cover

    @property
    def dtype(self):
        return complex if self.chain.is_complex else float

    def prolongation(self, c: int) -> sp.csr_matrix:
        d = self.fiber_dim
        n_c = self.cover.charts[c].size
        T = self.transport[c]
        g = self.global_of[c]
        rows = (np.arange(n_c)[:, None, None] * d + np.arange(d)[None, :, None]).repeat(d, axis=2)
        cols = (g[:, None, None] * d + np.arange(d)[None, None, :]).repeat(d, axis=1)
        return sp.csr_matrix((T.ravel(), (rows.ravel(), cols.ravel())), shape=(n_c * d, self.size * d))

    def restriction(self, c: int) -> sp.csr_matrix:
        """Rows of chart c assigned to it, transported into owner frames."""
        d = self.fiber_dim
        n_c = self.cover.charts[c].size
        gsel = np.flatnonzero(self.row_chart == c)
        loc = self.row_local[gsel]
        Tinv = np.linalg.inv(self.transport[c][loc]) if gsel.size else np.zeros((0, d, d))
        rows = (gsel[:, None, None] * d + np.arange(d)[None, :, None]).repeat(d, axis=2)
        cols = (loc[:, None, None] * d + np.arange(d)[None, None, :]).repeat(d, axis=1)
        return sp.csr_matrix((Tinv.ravel(), (rows.ravel(), cols.ravel())), shape=(self.size * d, n_c * d))

    def weights(self) -> np.ndarray:
        """Quadrature weight of each global sample (owner chart volume)."""
        vol = np.array([self.cover.charts[c].volume[l] for c, l in zip(self.owner, self.owner_local)])
        return vol

    def gram_diag(self, fiber_gram: np.ndarray | None = None) -> np.ndarray:
        d = self.fiber_dim
        w = self.weights()
        if fiber_gram is not None and not np.allclose(fiber_gram, np.diag(np.diag(fiber_gram))):
            raise OperatorError("only diagonal fiber metrics are supported in assembly")
        fg = np.ones(d) if fiber_gram is None else np.real(np.diag(fiber_gram))
        return (w[:, None] * fg[None, :]).ravel()

    def to_global(self, per_chart: Sequence[np.ndarray]) -> np.ndarray:
        """Owner-frame global vector from per-chart samples (owners' values)."""
        d = self.fiber_dim
        out = np.zeros((self.size, d), dtype=np.result_type(self.dtype, *[np.asarray(v).dtype for v in per_chart]))
        for c in range(len(self.cover.charts)):
            mine = self.owner == c
            out[mine] = np.asarray(per_chart[c]).reshape(-1, d)[self.owner_local[mine]]
        return out.ravel()

    def to_charts(self, vec: np.ndarray) -> list[np.ndarray]:
        d = self.fiber_dim
        v = np.asarray(vec).reshape(self.size, d)
        return [np.einsum("pab,pb->pa", self.transport[c], v[self.global_of[c]])
                for c in range(len(self.cover.charts))]

    def boundary_band(self, width: int) -> np.ndarray:
        """Global samples within ``width`` grid steps of an unmatched chart edge."""
        mask = np.zeros(self.size, dtype=bool)
        for c, ch in enumerate(self.cover.charts):
            if not ch.is_grid:
                continue
            idx = ch.grid_index(np.arange(ch.size))
            near = np.zeros(ch.size, dtype=bool)
            for a, n in enumerate(ch.shape):
                near |= (idx[a] < width) | (idx[a] >= n - width)
            g = self.global_of[c]
            # only the samples whose row is evaluated here and are near an edge
            # of every chart containing them count as boundary
            mask[g[near]] = True
        keep = np.zeros(self.size, dtype=bool)
        for c, ch in enumerate(self.cover.charts):
            if not ch.is_grid:
                continue
            idx = ch.grid_index(np.arange(ch.size))
            inner = np.ones(ch.size, dtype=bool)
            for a, n in enumerate(ch.shape):
                inner &= (idx[a] >= width) & (idx[a] < n - width)
            keep[self.global_of[c][inner]] = True
        return mask & ~keep


def _interior_mask(chart) -> np.ndarray:
    if not chart.is_grid:
        return np.zeros(chart.size, dtype=bool)
    idx = chart.grid_index(np.arange(chart.size))
    ok = np.ones(chart.size, dtype=bool)
    for a, n in enumerate(chart.shape):
        if n > 1:
            ok &= (idx[a] > 0) & (idx[a] < n - 1)
    return ok


def centered_difference(chart, axis: int, d: int) -> sp.csr_matrix:
    """(s[p+1] - s[p-1]) / 2h along ``axis``; off-grid neighbours dropped."""
    h = chart.spacing[axis]
    n = chart.size
    mats = []
    for step, coef in ((1, 0.5 / h), (-1, -0.5 / h)):
        nb = chart.shift(axis, step)
        ok = nb >= 0
        mats.append(sp.csr_matrix((np.full(ok.sum(), coef), (np.flatnonzero(ok), nb[ok])), shape=(n, n)))
    return sp.kron(mats[0] + mats[1], sp.identity(d), format="csr")


def block_diag_field(values: np.ndarray) -> sp.csr_matrix:
    """Block-diagonal matrix from per-sample (npts, d, d) blocks."""
    return sp.block_diag(list(values), format="csr") if values.shape[0] else sp.csr_matrix((0, 0))


def _blockdiag(values: np.ndarray) -> sp.csr_matrix:
    n, d, _ = values.shape
    rows = (np.arange(n)[:, None, None] * d + np.arange(d)[None, :, None]).repeat(d, axis=2)
    cols = (np.arange(n)[:, None, None] * d + np.arange(d)[None, None, :]).repeat(d, axis=1)
    return sp.csr_matrix((values.ravel(), (rows.ravel(), cols.ravel())), shape=(n * d, n * d))


def compact_laplacian(chart, conn: np.ndarray | None, d: int) -> sp.csr_matrix:
    """Covariant 3-point Laplacian sum_a (T+ s[p+1] - 2 s + T- s[p-1]) / h_a^2.

    The edge transport is expm(h w_mid) with w_mid the average of the
    connection component at both ends, so a covariantly constant section is
    annihilated up to O(h^2).
    """
    n = chart.size
    dtype = complex if conn is not None and np.iscomplexobj(conn) else float
    total = sp.csr_matrix((n * d, n * d), dtype=dtype)
    for a in range(len(chart.shape)):
        h = chart.spacing[a]
        for step in (1, -1):
            nb = chart.shift(a, step)
            ok = np.flatnonzero(nb >= 0)
            if conn is None:
                T = np.broadcast_to(np.eye(d), (ok.size, d, d))
            else:
                wm = 0.5 * (conn[ok, a] + conn[nb[ok], a])
                T = np.array([expm(step * h * w) for w in wm]).reshape(-1, d, d)
            rows = (ok[:, None, None] * d + np.arange(d)[None, :, None]).repeat(d, axis=2)
            cols = (nb[ok][:, None, None] * d + np.arange(d)[None, None, :]).repeat(d, axis=1)
            total = total + sp.csr_matrix((T.ravel() / h**2, (rows.ravel(), cols.ravel())), shape=(n * d, n * d))
        # the -2/h^2 centre term is applied on every sample, neighbours or not
        total = total - sp.identity(n * d, format="csr") * (2.0 / h**2)
    return total.tocsr()


def assemble(space: SampleSpace, local_ops: Sequence[sp.spmatrix | None]) -> sp.csr_matrix:
    """Global matrix from chart-local operators (None: chart contributes no rows)."""
    N = space.size * space.fiber_dim
    total = sp.csr_matrix((N, N), dtype=complex if space.chain.is_complex else float)
    for c, op in enumerate(local_ops):
        if op is None:
            continue
        R = space.restriction(c)
        if R.nnz == 0:
            continue
        total = total + R @ op @ space.prolongation(c)
    return total.tocsr()


@dataclass(eq=False)
class DiscreteOperator:
    matrix: sp.csr_matrix
    space: SampleSpace
    gram: np.ndarray
    order: int = 1
    grading: sp.csr_matrix | None = None
    expression: Any = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def symmetric_form(self) -> sp.csr_matrix:
        """G^(1/2) A G^(-1/2), Hermitian when A is self-adjoint for the Gram."""
        s = np.sqrt(self.gram)
        return (sp.diags(s) @ self.matrix @ sp.diags(1.0 / s)).tocsr()

    def adjoint(self) -> sp.csr_matrix:
        g = self.gram
        return (sp.diags(1.0 / g) @ self.matrix.conj().T @ sp.diags(g)).tocsr()

    def self_adjointness_residual(self) -> float:
        diff = (self.matrix - self.adjoint()).tocoo()
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def with_matrix(self, m: sp.spmatrix, **meta) -> "DiscreteOperator":
        return DiscreteOperator(m.tocsr(), self.space, self.gram, self.order, self.grading,
                                self.expression, {**self.meta, **meta})

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(self.gram * np.conj(u) * v))

    def triplets(self) -> list[list]:
        """Sparse (row, col, value) listing; complex values as [re, im]."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        out = []
        for k in order:
            v = coo.data[k]
            val = [float(np.real(v)), float(np.imag(v))] if np.iscomplexobj(coo.data) else float(v)
            out.append([int(coo.row[k]), int(coo.col[k]), val])
        return out


def pointwise_operator(space: SampleSpace, per_chart_blocks: Sequence[np.ndarray]) -> sp.csr_matrix:
    """Global block-diagonal operator from per-chart (npts, d, d) blocks (chart frames)."""
    return assemble(space, [_blockdiag(b) for b in per_chart_blocks])


def _scale_op(chart, d):
    return sp.kron(sp.diags(chart.scale()), sp.identity(d), format="csr")


def assemble_nabla(space: SampleSpace, conn: Sequence[np.ndarray | None]) -> list[sp.csr_matrix]:
    """Frame components of the covariant derivative, e_k = scale * d/dx_k.

    ``conn[c]`` has shape (npts, n, d, d): the connection component along each
    coordinate axis in chart c (None for a flat trivial connection).
    """
    cover = space.cover
    d = space.fiber_dim
    n = cover.charts[0].dim
    out = []
    for k in range(n):
        local = []
        for c, ch in enumerate(cover.charts):
            op = centered_difference(ch, k, d)
            if conn[c] is not None:
                op = op + _blockdiag(np.ascontiguousarray(conn[c][:, k]))
            local.append(_scale_op(ch, d) @ op)
        out.append(assemble(space, local))
    return out


def assemble_dirac(space: SampleSpace, generators: Sequence[np.ndarray],
                   conn: Sequence[np.ndarray | None], *, wilson: float = 0.0,
                   wilson_mass: np.ndarray | None = None, symmetrize: bool = True,
                   fiber_gram: np.ndarray | None = None, grading: np.ndarray | None = None,
                   expression=None) -> DiscreteOperator:
    """D = sum_k E_k scale (d_k + phi_k), with centered differences.

    ``generators`` are the fiber matrices of e_1..e_n (left Clifford
    multiplication).  They need not commute with the chain, so each is applied
    inside the row chart.  With ``symmetrize`` the operator is replaced by its
    self-adjoint part (D + D*)/2 for the quadrature Gram, an O(h^2) change on
    smooth sections that makes the spectrum real.

    ``wilson`` adds ``wilson * (h/2) * M * (-Laplacian)`` after
    symmetrization, with the compact covariant Laplacian and a constant fiber
    matrix M (default identity) that must commute with the chain.  It lifts
    lattice doublers at O(h) cost on smooth sections.  A Hermitian M that
    anticommutes with every E_k keeps D self-adjoint with a paired spectrum;
    an anti-Hermitian M (e.g. M = E_1 in rank one) gives a normal operator
    whose singular values are the meaningful spectrum.
    """
    cover = space.cover
    d = space.fiber_dim
    n = cover.charts[0].dim
    if len(generators) != n:
        raise OperatorError(f"need {n} Clifford generators, got {len(generators)}")
    for c, w in enumerate(conn):
        if w is not None and w.shape != (cover.charts[c].size, n, d, d):
            raise OperatorError(f"connection on chart {cover.charts[c].id} has shape {w.shape}, "
                                f"expected {(cover.charts[c].size, n, d, d)}")
    E = [np.asarray(e) for e in generators]
    local = []
    for c, ch in enumerate(cover.charts):
        op = None
        for k in range(n):
            dk = centered_difference(ch, k, d)
            if conn[c] is not None:
                dk = dk + _blockdiag(np.ascontiguousarray(conn[c][:, k]))
            term = sp.kron(sp.identity(ch.size), E[k], format="csr") @ _scale_op(ch, d) @ dk
            op = term if op is None else op + term
        local.append(op)
    D = assemble(space, local)
    gram = space.gram_diag(fiber_gram)
    op = DiscreteOperator(D.tocsr(), space, gram, order=1, expression=expression,
                          meta={"wilson": float(wilson)})
    if symmetrize:
        op = op.with_matrix(0.5 * (op.matrix + op.adjoint()), symmetrized=True)
    if wilson:
        M = np.eye(d) if wilson_mass is None else np.asarray(wilson_mass)
        _check_commutes(space, M)
        hbar = float(np.mean(cover.charts[0].spacing))
        lap = []
        for c, ch in enumerate(cover.charts):
            sc2 = sp.kron(sp.diags(ch.scale() ** 2), sp.identity(d), format="csr")
            lap.append(-sc2 @ compact_laplacian(ch, conn[c], d))
        W = op.with_matrix(assemble(space, lap))
        W = 0.5 * (W.matrix + W.adjoint())
        mass = sp.kron(sp.identity(space.size), M, format="csr")
        op = op.with_matrix(op.matrix + 0.5 * wilson * hbar * (mass @ W))
    if grading is not None:
        op.grading = sp.kron(sp.identity(space.size), np.asarray(grading), format="csr")
    return op


def _check_commutes(space, M, tol=1e-10):
    for key, g in space.chain.values.items():
        r = np.max(np.abs(np.einsum("ab,pbc->pac", M, g) - np.einsum("pab,bc->pac", g, M)), initial=0.0)
        if r > tol:
            raise OperatorError(f"Wilson mass matrix does not commute with the chain on "
                                f"{space.cover.pair_name(*key)} (residual {r:.3g})")


def connection_laplacian(nabla: Sequence[sp.spmatrix], gram: np.ndarray) -> sp.csr_matrix:
    """nabla* nabla = G^-1 sum_k nabla_k^H G nabla_k (positive semidefinite)."""
    G = sp.diags(gram)
    Ginv = sp.diags(1.0 / gram)
    total = None
    for nk in nabla:
        term = nk.conj().T @ G @ nk
        total = term if total is None else total + term
    return (Ginv @ total).tocsr()


def lichnerowicz_residual(D: DiscreteOperator, nabla: Sequence[sp.spmatrix],
                          scalar_curvature: np.ndarray, exclude: np.ndarray | None = None,
                          probes: Sequence[np.ndarray] | None = None) -> float:
    """|| D^2 - nabla* nabla - s/4 || over rows outside the excluded band.

    Without probes this is the max absolute row sum of the residual matrix.
    With probes (smooth sections as global vectors) it is the max over probes
    of the sup-norm of the residual applied to the probe, relative to the
    probe's sup-norm.
    """
    d = D.space.fiber_dim
    s = np.repeat(np.asarray(scalar_curvature, dtype=float), d)
    R = (D.matrix @ D.matrix - connection_laplacian(nabla, D.gram) - 0.25 * sp.diags(s)).tocsr()
    keep = np.ones(D.space.size, dtype=bool) if exclude is None else ~exclude
    rows = np.repeat(keep, d)
    if probes is None:
        absR = abs(R)
        rs = np.asarray(absR.sum(axis=1)).ravel()
        return float(np.max(rs[rows])) if rows.any() else 0.0
    worst = 0.0
    for u in probes:
        r = R @ u
        worst = max(worst, float(np.max(np.abs(r[rows])) / np.max(np.abs(u))))
    return worst


def equivariance_check(D: DiscreteOperator, g: sp.spmatrix | np.ndarray) -> float:
    """max |(g D - D g)_{ab}| for a global automorphism g."""
    if not sp.issparse(g):
        g = np.asarray(g)
        if g.ndim == 0:
            g = g * sp.identity(D.shape[0], format="csr")
        elif g.shape == (D.space.fiber_dim, D.space.fiber_dim):
            g = sp.kron(sp.identity(D.space.size), g, format="csr")
        else:
            g = sp.csr_matrix(g)
    comm = (g @ D.matrix - D.matrix @ g).tocoo()
    return float(np.max(np.abs(comm.data))) if comm.nnz else 0.0
