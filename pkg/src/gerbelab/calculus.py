"""Connections, curvature, Chern forms, spin connections and principal symbols.

Connection coefficients are stored per chart as ``(npts, n, d, d)`` arrays:
``w[p, a]`` is the fiber endomorphism paired with dx_a, so that
``nabla s = ds + w s``.  With ``s_i = g_ij s_j`` the gauge rule reads
``w_j = g^-1 w_i g + g^-1 dg`` once w_i is pulled back to chart-j
coordinates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cover import Cover
from .gerbe import TransitionFamily

__all__ = [
    "CalculusError",
    "SymbolUnavailable",
    "ConnectionData",
    "CurvatureData",
    "ConnectionReport",
    "ChernData",
    "SymbolSample",
    "DifferentialExpression",
    "validate_connection",
    "curvature",
    "chern",
    "chern_number",
    "spin_connection",
    "grid_derivative",
    "principal_symbol",
    "elliptic",
    "dirac_expression",
    "laplacian_expression",
    "sobolev_inner",
]


class CalculusError(ValueError):
    pass


class SymbolUnavailable(CalculusError):
    pass


@dataclass(eq=False)
class ConnectionData:
    cover: Cover
    values: list[np.ndarray | None]      # per chart (npts, n, d, d); None means zero
    fiber_dim: int
    kind: str = "fiber"                  # or "levi_civita": (npts, n, n, n) frame matrices

    def __post_init__(self):
        n = self.cover.charts[0].dim
        for c, (ch, w) in enumerate(zip(self.cover.charts, self.values)):
            if w is None:
                continue
            want = (ch.size, n, self.fiber_dim, self.fiber_dim)
            if w.shape != want:
                raise CalculusError(f"connection on chart {ch.id}: shape {w.shape}, expected {want}")
        if self.kind not in ("fiber", "levi_civita"):
            raise CalculusError(f"unknown connection kind {self.kind!r}")

    def at(self, c: int) -> np.ndarray:
        ch = self.cover.charts[c]
        w = self.values[c]
        if w is None:
            return np.zeros((ch.size, ch.dim, self.fiber_dim, self.fiber_dim))
        return w

    @property
    def spacing(self) -> list[tuple[float, ...] | None]:
        return [ch.spacing for ch in self.cover.charts]


@dataclass(eq=False)
class CurvatureData:
    """Per chart (npts, n, n, d, d), antisymmetric in the two form indices."""

    cover: Cover
    values: list[np.ndarray]

    @property
    def fiber_dim(self) -> int:
        return self.values[0].shape[-1]

    def conjugate(self, u: np.ndarray) -> "CurvatureData":
        """Pointwise u Omega u^-1 for a constant invertible u."""
        ui = np.linalg.inv(u)
        return CurvatureData(self.cover, [np.einsum("ab,...bc,cd->...ad", u, om, ui) for om in self.values])


@dataclass
class ConnectionReport:
    passed: bool
    max_residual: float
    tolerance: float
    per_overlap: dict[str, float]
    failures: list[str]


# -- finite differences on grid charts --------------------------------------

def grid_derivative(chart, values: np.ndarray, axis: int, mask: np.ndarray | None = None) -> np.ndarray:
    """Centered difference of per-sample arrays along a grid axis.

    Where a neighbour is missing (off-grid or outside ``mask``) the one-sided
    difference is used; samples with neither neighbour get 0.
    """
    if not chart.is_grid:
        raise CalculusError(f"chart {chart.id} has no grid; derivatives need grid charts")
    h = chart.spacing[axis]
    ok = np.ones(chart.size, dtype=bool) if mask is None else mask
    up = chart.shift(axis, 1)
    dn = chart.shift(axis, -1)
    has_up = (up >= 0) & ok[np.maximum(up, 0)]
    has_dn = (dn >= 0) & ok[np.maximum(dn, 0)]
    v = np.asarray(values)
    out = np.zeros_like(v)
    both = has_up & has_dn
    out[both] = (v[up[both]] - v[dn[both]]) / (2 * h)
    fwd = has_up & ~has_dn
    out[fwd] = (v[up[fwd]] - v[fwd]) / h
    bwd = has_dn & ~has_up
    out[bwd] = (v[bwd] - v[dn[bwd]]) / h
    return out


def validate_connection(conn: ConnectionData, chain: TransitionFamily, C: float = 10.0,
                        atol: float = 1e-8) -> ConnectionReport:
    """Check w_j = g^-1 (J^T w_i) g + g^-1 dg at every matched sample.

    ``J = dx_i/dx_j`` pulls chart-i components back to chart-j coordinates.
    dg is differenced in chart-j coordinates along the overlap samples.
    """
    cover = conn.cover
    if chain.cover is not cover:
        raise CalculusError("connection and chain live on different covers")
    if conn.kind != "fiber" or chain.fiber_dim != conn.fiber_dim:
        raise CalculusError("connection does not act on the chain's fiber")
    per, fails = {}, []
    worst = 0.0
    hmax = max(max(ch.spacing) for ch in cover.charts if ch.is_grid)
    tol = C * hmax + atol
    for (i, j) in sorted(cover.overlaps):
        li, lj, pids = cover.matching(i, j)
        chj = cover.charts[j]
        if not chj.is_grid:
            raise CalculusError(f"chart {chj.id} has no grid; cannot difference transitions")
        g = chain.at(i, j)
        ginv = chain.at(j, i)
        J = cover.jacobian(i, j)
        wi = conn.at(i)[li]                         # (m, n, d, d)
        wj = conn.at(j)[lj]
        pulled = np.einsum("mba,mbxy->maxy", J, wi)  # sum_b dx_i^b/dx_j^a w_i,b
        full = np.zeros((chj.size,) + g.shape[1:], dtype=g.dtype)
        full[lj] = g
        mask = np.zeros(chj.size, dtype=bool)
        mask[lj] = True
        for a in range(chj.dim):
            up, dn = chj.shift(a, 1)[lj], chj.shift(a, -1)[lj]
            lonely = ~(((up >= 0) & mask[np.maximum(up, 0)]) | ((dn >= 0) & mask[np.maximum(dn, 0)]))
            if np.any(lonely):
                raise CalculusError(
                    f"grids not aligned on overlap {cover.pair_name(i, j)}: matched sample "
                    f"{int(lj[lonely][0])} of chart {chj.id} has no matched neighbour along axis {a}")
        dg =np.stack([grid_derivative(chj, full, a, mask)[lj] for a in range(chj.dim)], axis=1)
        expect = (np.einsum("mxy,mayz,mzw->maxw", ginv, pulled, g)
                  + np.einsum("mxy,mayz->maxz", ginv, dg))
        r = float(np.max(np.abs(expect - wj))) if len(lj) else 0.0
        per[cover.pair_name(i, j)] = r
        worst = max(worst, r)
        if r > tol:
            fails.append(f"connection incompatible on overlap {cover.pair_name(i, j)}: "
                         f"residual {r:.3g} > {tol:.3g}")
    return ConnectionReport(not fails, worst, tol, per, fails)


def curvature(conn: ConnectionData) -> CurvatureData:
    """Omega_ab = d_a w_b - d_b w_a + [w_a, w_b] by centered differences."""
    out = []
    for c, ch in enumerate(conn.cover.charts):
        w = conn.at(c)
        n = ch.dim
        d = conn.fiber_dim
        dw = np.stack([grid_derivative(ch, w, a) for a in range(n)], axis=1)  # (p, a, b, d, d)
        om = np.zeros((ch.size, n, n, d, d), dtype=np.result_type(w, float))
        for a in range(n):
            for b in range(n):
                if a == b:
                    continue
                om[:, a, b] = dw[:, a, b] - dw[:, b, a] + w[:, a] @ w[:, b] - w[:, b] @ w[:, a]
        out.append(om)
    return CurvatureData(conn.cover, out)


# -- Chern forms ---------------------------------------------------------------

def _perm_sign(p) -> int:
    p = list(p)
    s = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


def _wedge_trace_power(om: np.ndarray, k: int) -> np.ndarray:
    """Full antisymmetric tensor of Tr(Omega^k), Omega a matrix-valued 2-form.

    Omega = (1/2) sum_ab Omega_ab dx_a ^ dx_b, so the component of the 2k-form
    on dx_I (I sorted) is the antisymmetrized product with weight 1/2^k.
    """
    npts, n = om.shape[0], om.shape[1]
    deg = 2 * k
    out = np.zeros((npts,) + (n,) * deg, dtype=complex)
    if deg > n:
        return out
    for I in itertools.combinations(range(n), deg):
        acc = np.zeros(npts, dtype=complex)
        for perm in itertools.permutations(range(deg)):
            idx = [I[q] for q in perm]
            prod = om[:, idx[0], idx[1]]
            for t in range(1, k):
                prod = prod @ om[:, idx[2 * t], idx[2 * t + 1]]
            acc += _perm_sign(perm) * np.trace(prod, axis1=-2, axis2=-1)
        acc /= 2**k
        for perm in itertools.permutations(range(deg)):
            out[(slice(None),) + tuple(I[q] for q in perm)] = _perm_sign(perm) * acc
    return out


@dataclass(eq=False)
class ChernData:
    """Chern forms c_2k = Tr[(i Omega / 2 pi)^k] as per-chart antisymmetric tensors.

    ``forms[k][c]`` has shape (npts,) + (n,)*2k; the component on
    dx_I for sorted I is ``forms[k][c][(p,) + I]``.  ``character[c]`` is the
    top-degree part of Tr exp(i Omega / 2 pi) together with the scalar part.
    """

    cover: Cover
    forms: dict[int, list[np.ndarray]]
    character_scalar: float
    overlap_residual: dict[int, float] = field(default_factory=dict)

    def top_density(self, c: int) -> np.ndarray:
        n = self.cover.charts[c].dim
        if n % 2:
            raise CalculusError("top-degree Chern density needs an even dimension")
        k = n // 2
        return self.forms[k][c][(slice(None),) + tuple(range(n))]


def chern(curv: CurvatureData, max_k: int | None = None) -> ChernData:
    cover = curv.cover
    n = cover.charts[0].dim
    d = curv.fiber_dim
    ks = range(1, (n // 2 if max_k is None else max_k) + 1)
    forms = {}
    for k in ks:
        forms[k] = [_wedge_trace_power((1j / (2 * np.pi)) * om.astype(complex), k) for om in curv.values]
    data = ChernData(cover, forms, float(d))
    for k in ks:
        data.overlap_residual[k] = _form_overlap_residual(cover, forms[k], 2 * k)
    return data


def _form_overlap_residual(cover: Cover, form: list[np.ndarray], deg: int) -> float:
    worst = 0.0
    for (i, j) in cover.overlaps:
        li, lj, _ = cover.matching(i, j)
        J = cover.jacobian(i, j)
        f = form[i][li]
        for _ in range(deg):
            # contract the leading form index with J, rotating it to the back
            f = np.einsum("mb...,mba->m...a", f, J)
        # each contraction consumes axis 1 and appends the pulled index last,
        # so after deg steps the index order is restored
        worst = max(worst, float(np.max(np.abs(f - form[j][lj]), initial=0.0)))
    return worst


def chern_number(ch: ChernData, partition) -> complex:
    """Integral of the top Chern density with a partition of unity.

    Uses the coordinate cell measure of each grid chart: a differential form
    integrates against dx, not the Riemannian volume.
    """
    total = 0.0 + 0.0j
    for c, chart in enumerate(ch.cover.charts):
        f = np.asarray(partition.weights[c])
        total += np.sum(f * ch.top_density(c)) * chart.cell_measure
    return complex(total)


def spin_connection(lc: ConnectionData, generators: Sequence[np.ndarray]) -> ConnectionData:
    """phi_a = -(1/4) sum_{k,l} w_a[k,l] E_k E_l from Levi-Civita frame forms.

    ``lc.values[c]`` has shape (npts, n, n, n): direction a, then the
    antisymmetric n x n so(n) matrix.  ``generators`` are the fiber matrices
    of e_1..e_n.
    """
    if lc.kind != "levi_civita":
        raise CalculusError("spin_connection expects Levi-Civita frame data")
    E = np.asarray(generators)
    n = E.shape[0]
    d = E.shape[-1]
    EE = np.einsum("kab,lbc->klac", E, E)
    out = []
    for c, w in enumerate(lc.values):
        ch = lc.cover.charts[c]
        if w is None:
            out.append(None)
            continue
        if w.shape != (ch.size, ch.dim, n, n):
            raise CalculusError(f"Levi-Civita data on chart {ch.id} has shape {w.shape}")
        asym = float(np.max(np.abs(w + np.swapaxes(w, -1, -2)), initial=0.0))
        if asym > 1e-12:
            raise CalculusError(f"Levi-Civita data on chart {ch.id} is not antisymmetric "
                                f"(residual {asym:.3g})")
        out.append(-0.25 * np.einsum("pakl,klxy->paxy", w, EE))
    return ConnectionData(lc.cover, out, d, "fiber")


# -- principal symbols -------------------------------------------------------

@dataclass
class SymbolSample:
    x: int
    xi: np.ndarray
    sigma: np.ndarray
    order: int


@dataclass(eq=False)
class DifferentialExpression:
    """sum_alpha c_alpha(x) d^alpha with sampled matrix coefficients.

    ``terms`` maps a multi-index (tuple of derivative counts per axis) to a
    coefficient array of shape (npts, d, d) or a constant (d, d).
    """

    dim: int
    fiber_dim: int
    terms: dict[tuple[int, ...], np.ndarray]
    npts: int = 1

    @property
    def order(self) -> int:
        return max(sum(a) for a in self.terms)

    def coefficient(self, alpha, x: int) -> np.ndarray:
        c = np.asarray(self.terms[alpha])
        return c if c.ndim == 2 else c[x]


def principal_symbol(expr, x: int, xi: np.ndarray) -> SymbolSample:
    """sigma(x, xi) = sum_{|alpha| = m} c_alpha(x) (i xi)^alpha."""
    if not isinstance(expr, DifferentialExpression):
        raise SymbolUnavailable("symbol unavailable: operator was supplied only as a matrix")
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (expr.dim,):
        raise CalculusError(f"covector has shape {xi.shape}, expected ({expr.dim},)")
    m = expr.order
    sig = np.zeros((expr.fiber_dim, expr.fiber_dim), dtype=complex)
    for alpha in expr.terms:
        if sum(alpha) != m:
            continue
        mono = np.prod([(1j * xi[a]) ** alpha[a] for a in range(expr.dim)])
        sig = sig + expr.coefficient(alpha, x) * mono
    return SymbolSample(x, xi, sig, m)


def _unit_covectors(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    r = np.sqrt(1 - z**2)
    phi = np.pi * (1 + 5**0.5) * k
    base = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    if n == 3:
        return base
    rng = np.random.default_rng(0)
    v = rng.normal(size=(count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def elliptic(expr, threshold: float = 1e-8, directions: int = 16) -> tuple[bool, float]:
    """Invertibility of the symbol over sampled (x, xi) with |xi| = 1.

    Returns (elliptic, smallest singular value seen).
    """
    worst = np.inf
    for x in range(expr.npts if isinstance(expr, DifferentialExpression) else 1):
        for xi in _unit_covectors(expr.dim if isinstance(expr, DifferentialExpression) else 1, directions):
            s = principal_symbol(expr, x, xi).sigma
            worst = min(worst, float(np.linalg.svd(s, compute_uv=False)[-1]))
    return bool(worst > threshold), worst


def dirac_expression(generators: Sequence[np.ndarray], scale: np.ndarray | None = None,
                     phi: np.ndarray | None = None) -> DifferentialExpression:
    """sum_k scale E_k (d_k + phi_k) as a polynomial in derivatives."""
    E = [np.asarray(e, dtype=complex) for e in generators]
    n = len(E)
    d = E[0].shape[0]
    npts = 1 if scale is None else len(scale)
    sc = np.ones(npts) if scale is None else np.asarray(scale, dtype=float)
    terms = {}
    for k in range(n):
        alpha = tuple(int(a == k) for a in range(n))
        terms[alpha] = sc[:, None, None] * E[k][None]
    zero = tuple([0] * n)
    c0 = np.zeros((npts, d, d), dtype=complex)
    if phi is not None:
        for k in range(n):
            c0 += sc[:, None, None] * np.einsum("ab,pbc->pac", E[k], phi[:, k])
    terms[zero] = c0
    return DifferentialExpression(n, d, terms, npts)


def laplacian_expression(n: int, d: int, scale: np.ndarray | None = None) -> DifferentialExpression:
    npts = 1 if scale is None else len(scale)
    sc = np.ones(npts) if scale is None else np.asarray(scale, dtype=float)
    terms = {}
    for k in range(n):
        alpha = tuple(2 * int(a == k) for a in range(n))
        terms[alpha] = (sc**2)[:, None, None] * np.eye(d)[None]
    return DifferentialExpression(n, d, terms, npts)


def sobolev_inner(u: np.ndarray, v: np.ndarray, laplacian, gram: np.ndarray, s: int) -> complex:
    """<(1 + nabla* nabla)^s u, v> for integer s >= 0."""
    if s < 0 or int(s) != s:
        raise CalculusError("Sobolev order must be a non-negative integer")
    w = np.asarray(u, dtype=complex)
    for _ in range(int(s)):
        w = w + laplacian @ w
    return complex(np.sum(gram * np.conj(w) * v))
