"""Vectorial gerbes given by sampled transition data.

Convention: ``g_ij`` maps chart-j fiber coordinates to chart-i fiber
coordinates, ``s_i = g_ij s_j``.  Only ``g_ij`` for i < j is stored; the
reverse direction is the pointwise inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import clifford as cl
from .cech import Cochain, coboundary, coboundary_witness
from .cover import Cover

__all__ = [
    "GerbeError",
    "Band",
    "TransitionFamily",
    "VectorialGerbe",
    "GerbeReport",
    "LiftingProblemSpec",
    "validate_gerbe",
    "clifford_gerbe",
    "lift_by_continuity",
    "lifting_gerbe",
    "invariant_subbundle",
    "InvariantSubbundle",
    "embed_in_trivial",
    "Embedding",
    "cocycle_class",
]

BAND_TOL = 1e-9
ISOMETRY_TOL = 1e-10


class GerbeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Band:
    """Cyclic band Z/m embedded in GL(V) through ``generator`` (order m)."""

    generator: np.ndarray
    order: int = 2

    def __post_init__(self):
        gen = np.asarray(self.generator)
        object.__setattr__(self, "generator", gen)
        if self.order < 1:
            raise GerbeError("band order must be positive")
        p = np.linalg.matrix_power(gen, self.order)
        if np.max(np.abs(p - np.eye(gen.shape[0]))) > 1e-9:
            raise GerbeError(f"band generator does not have order dividing {self.order}")

    @classmethod
    def trivial(cls, dim: int) -> "Band":
        return cls(np.eye(dim), 1)

    @classmethod
    def sign(cls, dim: int, dtype=float) -> "Band":
        return cls(-np.eye(dim, dtype=dtype), 2)

    def elements(self) -> list[np.ndarray]:
        d = self.generator.shape[0]
        out = [np.eye(d, dtype=self.generator.dtype)]
        for _ in range(self.order - 1):
            out.append(out[-1] @ self.generator)
        return out

    def classify(self, m: np.ndarray) -> tuple[int, float]:
        """Closest band power to ``m`` and the max-abs distance to it."""
        dists = [float(np.max(np.abs(m - e))) for e in self.elements()]
        k = int(np.argmin(dists))
        return k, dists[k]

    @property
    def modulus(self) -> int:
        return max(self.order, 2)


@dataclass(eq=False)
class TransitionFamily:
    """Per-overlap sampled transition matrices g_ij (i < j) in pair order."""

    cover: Cover
    fiber_dim: int
    values: dict[tuple[int, int], np.ndarray]
    name: str = "chain"
    _inv: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for key in self.cover.overlaps:
            if key not in self.values:
                raise GerbeError(f"no transition data for overlap {self.cover.pair_name(*key)}")
        for key, v in self.values.items():
            if key not in self.cover.overlaps:
                raise GerbeError(f"transition given for non-overlap {key}")
            v = np.asarray(v)
            ov = self.cover.overlaps[key]
            if v.shape != (ov.size, self.fiber_dim, self.fiber_dim):
                raise GerbeError(
                    f"transitions on {self.cover.pair_name(*key)} have shape {v.shape}, "
                    f"expected {(ov.size, self.fiber_dim, self.fiber_dim)}"
                )
            self.values[key] = v
        self.inverse_residual()

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(v) for v in self.values.values())

    def at(self, a: int, b: int) -> np.ndarray:
        """g_ab at each pair of overlap (a, b), in pair order."""
        if a < b:
            return self.values[(a, b)]
        if (b, a) not in self._inv:
            self._inv[(b, a)] = np.linalg.inv(self.values[(b, a)])
        return self._inv[(b, a)]

    def inverse_residual(self) -> float:
        worst = 0.0
        for (i, j), v in self.values.items():
            if v.shape[0] == 0:
                continue
            cond = np.linalg.cond(v)
            if np.any(~np.isfinite(cond)) or np.max(cond) > 1e12:
                raise GerbeError(f"transition on {self.cover.pair_name(i, j)} is not invertible")
            prod = v @ self.at(j, i)
            worst = max(worst, float(np.max(np.abs(prod - np.eye(self.fiber_dim)))))
        if worst > ISOMETRY_TOL:
            raise GerbeError(f"g_ij g_ji deviates from identity by {worst:.3g}")
        return worst

    def map(self, fn: Callable[[np.ndarray], np.ndarray], fiber_dim: int | None = None,
            name: str | None = None) -> "TransitionFamily":
        vals = {k: np.array([fn(m) for m in v]) if v.shape[0] else
                np.zeros((0, fiber_dim or self.fiber_dim, fiber_dim or self.fiber_dim))
                for k, v in self.values.items()}
        return TransitionFamily(self.cover, fiber_dim or self.fiber_dim, vals, name or self.name)

    def scaled_by_band(self, exponents: dict[tuple[int, int], int], band: Band) -> "TransitionFamily":
        """Multiply g_ij by band powers, one exponent per overlap."""
        els = band.elements()
        vals = {k: v @ els[exponents.get(k, 0) % band.order] for k, v in self.values.items()}
        return TransitionFamily(self.cover, self.fiber_dim, vals, self.name)


@dataclass(eq=False)
class VectorialGerbe:
    cover: Cover
    transitions: TransitionFamily
    band: Band
    metric: dict[int, np.ndarray] | None = None
    kind: str = "vector"
    clifford_dim: int | None = None
    spin_lifts: dict[tuple[int, int], np.ndarray] | None = None
    lifts: dict[tuple[int, int], list] | None = None

    @property
    def fiber_dim(self) -> int:
        return self.transitions.fiber_dim

    def gram(self, chart: int) -> np.ndarray:
        if self.metric is None or chart not in self.metric:
            return np.eye(self.fiber_dim)
        return self.metric[chart]


@dataclass
class GerbeReport:
    passed: bool
    cocycle: Cochain | None
    cocycle_class: str
    max_band_residual: float
    max_isometry_residual: float | None
    triple_residuals: dict[tuple[int, int, int], float]
    failures: list[str]

    def as_dict(self, chart_ids: Sequence[str]) -> dict[str, Any]:
        name = lambda t: "-".join(chart_ids[v] for v in t)
        out = {
            "passed": self.passed,
            "cocycle_class": self.cocycle_class,
            "max_band_residual": self.max_band_residual,
            "triple_residuals": {name(t): r for t, r in sorted(self.triple_residuals.items())},
            "failures": list(self.failures),
        }
        if self.cocycle is not None:
            out["cocycle"] = {name(s): v for s, v in sorted(self.cocycle.as_dict().items())}
        if self.max_isometry_residual is not None:
            out["max_isometry_residual"] = self.max_isometry_residual
        return out


def cocycle_class(c: Cochain | None) -> str:
    if c is None:
        return "unknown"
    if c.is_zero():
        return "trivial"
    if c.modulus != 2:
        return "unknown"
    return "trivial" if coboundary_witness(c) is not None else "nontrivial"


def triple_products(g: TransitionFamily, i: int, j: int, k: int) -> np.ndarray:
    """c_ijk = g_ij g_jk g_ki at the matched triple samples (in chart i frame)."""
    t = g.cover.triple_samples(i, j, k)
    gij = g.at(i, j)[t["ij"]]
    gjk = g.at(j, k)[t["jk"]]
    gki = g.at(k, i)[t["ik"]]
    return gij @ gjk @ gki


def validate_gerbe(gerbe: VectorialGerbe, band_tol: float = BAND_TOL,
                   isometry_tol: float = ISOMETRY_TOL) -> GerbeReport:
    """Extract c_ijk, check band membership, delta c = 0 and isometry."""
    cover = gerbe.cover
    ids = [c.id for c in cover.charts]
    failures: list[str] = []
    residuals: dict[tuple[int, int, int], float] = {}
    vals = np.zeros(cover.nerve.count(2), dtype=np.int64)
    worst = 0.0
    for t_idx, (i, j, k) in enumerate(cover.nerve.level(2)):
        prods = triple_products(gerbe.transitions, i, j, k)
        powers, dist = set(), 0.0
        for m in prods:
            p, d = gerbe.band.classify(m)
            powers.add(p)
            dist = max(dist, d)
        residuals[(i, j, k)] = dist
        worst = max(worst, dist)
        label = f"({ids[i]},{ids[j]},{ids[k]})"
        if dist > band_tol:
            failures.append(f"not a gerbe over this band: c_ijk on {label} is {dist:.3g} from the band")
        elif len(powers) > 1:
            failures.append(f"c_ijk not constant on {label}; triple overlap not connected")
        vals[t_idx] = min(powers) if powers else 0
    cocycle = Cochain(cover.nerve, 2, vals, gerbe.band.modulus)
    if not failures and cover.nerve.count(3) and not coboundary(cocycle).is_zero():
        failures.append(f"delta c != 0 on {coboundary(cocycle).support()}")
    iso = None
    if gerbe.metric is not None:
        iso = 0.0
        for (i, j), v in gerbe.transitions.values.items():
            mi, mj = gerbe.gram(i), gerbe.gram(j)
            res = np.conj(np.swapaxes(v, 1, 2)) @ mi @ v - mj
            if res.size:
                iso = max(iso, float(np.max(np.abs(res))))
        for c in range(len(cover.charts)):
            m = gerbe.gram(c)
            for b in gerbe.band.elements():
                iso = max(iso, float(np.max(np.abs(np.conj(b.T) @ m @ b - m))))
        if iso > isometry_tol:
            failures.append(f"transitions are not isometries of the fiber metric (residual {iso:.3g})")
    ok = not failures
    return GerbeReport(ok, cocycle if ok else None, cocycle_class(cocycle) if ok else "unknown",
                       worst, iso, residuals, failures)


def lift_by_continuity(cover: Cover, key: tuple[int, int], candidates: Callable[[int], list],
                       distance: Callable[[Any, Any], float]) -> list:
    """Choose one lift per matched sample, continuous along overlap paths.

    ``candidates(pair_id)`` lists the lifts over that sample with the
    preferred base choice first.  Along the BFS tree of each overlap
    component, the candidate nearest to the parent's choice is taken.
    """
    i, j = key
    n = cover.overlaps[key].size
    chosen: list = [None] * n
    for order, parent in cover.component_paths(i, j):
        for pid, par in zip(order, parent):
            cands = candidates(int(pid))
            if par < 0:
                chosen[pid] = cands[0]
                continue
            ref = chosen[par]
            ds = [distance(c, ref) for c in cands]
            best = int(np.argmin(ds))
            srt = sorted(ds)
            if len(srt) > 1 and srt[1] - srt[0] < 1e-3 * max(srt[1], 1e-300):
                raise GerbeError(
                    f"lift along {cover.pair_name(i, j)} is ambiguous at pair {pid}; "
                    "sample spacing too coarse for path continuity"
                )
            chosen[pid] = cands[best]
    return chosen


def clifford_gerbe(frames: TransitionFamily) -> VectorialGerbe:
    """The Clifford gerbe of an SO(n) frame chain (n <= 3).

    Each g'_ij(x) is lifted to Spin(n) by continuity from the lift with
    nonnegative scalar part at the base sample of each overlap component;
    the transitions are left multiplication on Cl(R^n).
    """
    n = frames.fiber_dim
    if n > 3:
        raise GerbeError("clifford_gerbe supports n <= 3")
    cover = frames.cover
    size = 1 << n
    trans, spins = {}, {}
    for key, rots in frames.values.items():
        def cands(pid, rots=rots):
            g, h = cl.lift_rotation(np.real(rots[pid]))
            return [g.value, h.value]

        lifts = lift_by_continuity(cover, key, cands, lambda a, b: float(np.linalg.norm(a.coeffs - b.coeffs)))
        spins[key] = np.array([g.coeffs for g in lifts]).reshape(-1, size)
        trans[key] = np.array([cl.left_matrix(g) for g in lifts]).reshape(-1, size, size)
    tf = TransitionFamily(cover, size, trans, name=frames.name + ":spin")
    metric = {c: np.eye(size) for c in range(len(cover.charts))}
    return VectorialGerbe(cover, tf, Band.sign(size), metric, kind="clifford",
                          clifford_dim=n, spin_lifts=spins)


@dataclass(eq=False)
class LiftingProblemSpec:
    """Lifting data for 1 -> H -> G -> K -> 1 with representation r of G on W.

    Group elements of G are opaque objects handled through the callables.
    ``section`` picks some preimage in G of a K-valued matrix; ``band``
    lists the elements of H; ``f`` maps W-vectors to V-vectors and must
    satisfy f(r(g) w) = pi(g) f(w).
    """

    base: TransitionFamily
    section: Callable[[np.ndarray], Any]
    mul: Callable[[Any, Any], Any]
    band: Sequence[Any]
    band_generator: Any
    band_order: int
    r: Callable[[Any], np.ndarray]
    pi: Callable[[Any], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    w_dim: int
    f_matrix: np.ndarray | None = None
    sample_vectors: int = 4
    seed: int = 0

    def square_residual(self, elements: Sequence[Any]) -> float:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        cplx = any(np.iscomplexobj(self.r(x)) for x in list(elements)[:1])
        for x in elements:
            rx, px = self.r(x), self.pi(x)
            if self.f_matrix is not None:
                worst = max(worst, float(np.max(np.abs(self.f_matrix @ rx - px @ self.f_matrix))))
                continue
            for _ in range(self.sample_vectors):
                w = rng.standard_normal(self.w_dim)
                if cplx:
                    w = w + 1j * rng.standard_normal(self.w_dim)
                worst = max(worst, float(np.max(np.abs(self.f(rx @ w) - px @ self.f(w)))))
        return worst


def lifting_gerbe(spec: LiftingProblemSpec, tol: float = 1e-10) -> VectorialGerbe:
    """The gerbe C_{H,W}: transitions r(g_ij) for continuous lifts g_ij of g'_ij."""
    cover = spec.base.cover
    lifts_all, trans = {}, {}
    for key, base_vals in spec.base.values.items():
        def cands(pid, base_vals=base_vals):
            g = spec.section(base_vals[pid])
            return [spec.mul(g, h) for h in spec.band]

        lifts = lift_by_continuity(cover, key, cands,
                                   lambda a, b: float(np.max(np.abs(spec.r(a) - spec.r(b)))))
        for pid, g in enumerate(lifts):
            if np.max(np.abs(spec.pi(g) - base_vals[pid])) > tol:
                raise GerbeError(f"section does not lift g'_ij on {cover.pair_name(*key)}")
        lifts_all[key] = lifts
        rv = [spec.r(g) for g in lifts]
        trans[key] = np.array(rv).reshape(-1, spec.w_dim, spec.w_dim)
    sample = [g for v in lifts_all.values() for g in v] + list(spec.band)
    res = spec.square_residual(sample)
    if res > tol:
        raise GerbeError(f"commuting square f o r = pi o f violated (max residual {res:.3g})")
    tf = TransitionFamily(cover, spec.w_dim, trans, name=spec.base.name + ":lift")
    band = Band(spec.r(spec.band_generator), spec.band_order)
    return VectorialGerbe(cover, tf, band, kind="lifting", lifts=lifts_all)


@dataclass
class InvariantSubbundle:
    basis: np.ndarray
    transitions: TransitionFamily | None
    commutation_residual: float
    cocycle_residual: float

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


def invariant_subbundle(gerbe: VectorialGerbe, tol: float = 1e-10) -> InvariantSubbundle:
    """Joint fixed space T of the band, with the induced base transitions."""
    d = gerbe.fiber_dim
    gen = gerbe.band.generator
    _, s, vh = np.linalg.svd(gen - np.eye(d))
    null = vh[np.sum(s > 1e-10):].conj().T
    if null.shape[1] == 0:
        return InvariantSubbundle(null, None, 0.0, 0.0)
    comm = 0.0
    vals = {}
    for key, v in gerbe.transitions.values.items():
        if v.shape[0]:
            comm = max(comm, float(np.max(np.abs(v @ gen - gen @ v))))
        vals[key] = np.conj(null.T) @ v @ null
    if comm > tol:
        raise GerbeError(f"transitions do not commute with the band (residual {comm:.3g})")
    tf = TransitionFamily(gerbe.cover, null.shape[1], vals, name=gerbe.transitions.name + ":T")
    worst = 0.0
    r = null.shape[1]
    for (i, j, k) in gerbe.cover.nerve.level(2):
        prods = triple_products(tf, i, j, k)
        if prods.size:
            worst = max(worst, float(np.max(np.abs(prods - np.eye(r)))))
    return InvariantSubbundle(null, tf, comm, worst)


@dataclass
class Embedding:
    chart: int
    matrices: np.ndarray          # (npts, l*d, d)
    min_singular_value: float
    gram_residual: float

    def project(self) -> np.ndarray:
        """Left inverse (k^H k)^{-1} k^H at every sample."""
        k = self.matrices
        kh = np.conj(np.swapaxes(k, 1, 2))
        return np.linalg.solve(kh @ k, kh)


def embed_in_trivial(gerbe: VectorialGerbe, chart: int, partition) -> Embedding:
    """Injection of the chart-``chart`` object into the trivial bundle C^(l d).

    At a sample x of U_i the block for chart m is sqrt(f_m(x)) g_mi(x), zero
    when x is not a sample of U_m.
    """
    partition.check_subordinate(gerbe.cover)
    cover = gerbe.cover
    ci = cover.charts[chart]
    d = gerbe.fiber_dim
    l = len(cover.charts)
    dtype = complex if gerbe.transitions.is_complex else float
    k = np.zeros((ci.size, l * d, d), dtype=dtype)
    for m in range(l):
        w = partition.weights.get(m)
        if w is None:
            continue
        if m == chart:
            k[:, m * d:(m + 1) * d, :] = np.sqrt(w)[:, None, None] * np.eye(d)
            continue
        if not cover.has_overlap(m, chart):
            continue
        li, lm, pids = cover.matching(chart, m)
        g = gerbe.transitions.at(m, chart)[pids]
        k[li, m * d:(m + 1) * d, :] = np.sqrt(w[lm])[:, None, None] * g
    sv = np.linalg.svd(k, compute_uv=False)
    kh = np.conj(np.swapaxes(k, 1, 2))
    gram = kh @ k
    if gerbe.metric is not None:
        target = np.broadcast_to(gerbe.gram(chart), gram.shape)
        gram_res = float(np.max(np.abs(gram - target)))
    else:
        gram_res = float(np.max(np.abs(gram - np.eye(d))))
    return Embedding(chart, k, float(sv.min()), gram_res)
