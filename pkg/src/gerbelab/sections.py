"""Global sections of a transition chain and their inner products."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cover import Cover
from .gerbe import LiftingProblemSpec, TransitionFamily, VectorialGerbe

__all__ = [
    "SectionError",
    "PartitionOfUnity",
    "GlobalSection",
    "DefectReport",
    "FormalSection",
    "check_global_section",
    "construct_bump_section",
    "inner_product",
    "project_to_base",
    "defect_cocycle",
    "DefectCocycle",
    "formal_inner_product",
]

DEFAULT_TOL = 1e-8


class SectionError(ValueError):
    pass


@dataclass(eq=False)
class PartitionOfUnity:
    """Weights f_k >= 0 on the samples of chart i(k); one piece per chart here."""

    weights: dict[int, np.ndarray]
    conforming: bool = True    # False: charts share only some samples, so sums are checked there only

    def check_subordinate(self, cover: Cover, tol: float = 1e-12) -> float:
        """Validate supports and sum-to-one; returns the worst sum defect.

        The sum is checked at every sample that is matched into other charts
        (those are the samples where several pieces meet) and at unmatched
        samples of charts carrying weight.  Edge samples of a grid chart that
        are shared with another chart must carry zero weight, so supports are
        compact inside their charts.
        """
        n = len(cover.charts)
        for m, w in self.weights.items():
            if not 0 <= m < n:
                raise SectionError(f"partition piece for unknown chart index {m}")
            if w.shape != (cover.charts[m].size,):
                raise SectionError(f"partition weights for chart {cover.charts[m].id} have wrong shape")
            if np.any(w < -tol):
                raise SectionError(f"negative partition weight on chart {cover.charts[m].id}")
        worst = 0.0
        for a in range(n):
            wa = self.weights.get(a, np.zeros(cover.charts[a].size))
            total = wa.copy()
            matched = np.zeros(cover.charts[a].size, dtype=bool)
            inside_other = np.zeros(cover.charts[a].size, dtype=bool)
            for b in range(n):
                if b == a or not cover.has_overlap(a, b):
                    continue
                la, lb, _ = cover.matching(a, b)
                matched[la] = True
                chb = cover.charts[b]
                inside_other[la] |= ~_grid_edge(chb)[lb] if chb.is_grid else True
                wb = self.weights.get(b)
                if wb is not None:
                    total[la] += wb[lb]
            if np.any(matched):
                worst = max(worst, float(np.max(np.abs(total[matched] - 1.0))))
            free = ~matched & (wa > 0)
            if self.conforming and np.any(free):
                worst = max(worst, float(np.max(np.abs(wa[free] - 1.0))))
            ch = cover.charts[a]
            if ch.is_grid and a in self.weights:
                edge = _grid_edge(ch)
                # an edge sample another chart sees as interior; samples on the
                # edge of every chart containing them are manifold boundary
                shared = edge & inside_other
                if np.any(wa[shared] > tol):
                    raise SectionError(
                        f"partition piece on chart {ch.id} is not subordinate: nonzero weight at the chart edge"
                    )
        if worst > 1e-9:
            raise SectionError(f"partition weights do not sum to one (defect {worst:.3g})")
        return worst


def _grid_edge(chart) -> np.ndarray:
    idx = chart.grid_index(np.arange(chart.size))
    edge = np.zeros(chart.size, dtype=bool)
    for a, n in enumerate(chart.shape):
        edge |= (idx[a] == 0) | (idx[a] == n - 1)
    return edge


@dataclass(eq=False)
class GlobalSection:
    chain: str
    values: list[np.ndarray]   # per chart, (npts, d)

    def __add__(self, other: "GlobalSection") -> "GlobalSection":
        if other.chain != self.chain:
            raise SectionError("cannot add sections of different chains")
        return GlobalSection(self.chain, [a + b for a, b in zip(self.values, other.values)])

    def scale(self, a: complex) -> "GlobalSection":
        return GlobalSection(self.chain, [a * v for v in self.values])

    def flat(self) -> tuple[np.ndarray, list[int]]:
        """Concatenated sample array plus chart offsets (for reports)."""
        offsets = np.cumsum([0] + [v.shape[0] for v in self.values]).tolist()
        return np.concatenate([v.reshape(v.shape[0], -1) for v in self.values]), offsets


@dataclass
class DefectReport:
    accepted: bool
    max_defect: float
    per_overlap: dict[tuple[int, int], float]


def _defects(chain: TransitionFamily, values: Sequence[np.ndarray]) -> dict[tuple[int, int], float]:
    out = {}
    for (i, j) in chain.cover.overlaps:
        li, lj, pids = chain.cover.matching(i, j)
        g = chain.at(i, j)[pids]
        diff = values[i][li] - np.einsum("pab,pb->pa", g, values[j][lj])
        out[(i, j)] = float(np.max(np.linalg.norm(diff, axis=1))) if diff.size else 0.0
    return out


def check_global_section(chain: TransitionFamily, values: Sequence[np.ndarray],
                         tol: float = DEFAULT_TOL) -> GlobalSection | DefectReport:
    """Accept per-chart samples as a global section iff s_i = g_ij s_j on overlaps."""
    cover = chain.cover
    if len(values) != len(cover.charts) or any(v is None for v in values):
        raise SectionError("section data missing for some chart")
    vals = []
    for c, v in zip(cover.charts, values):
        v = np.asarray(v)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape != (c.size, chain.fiber_dim):
            raise SectionError(f"section on chart {c.id} has shape {v.shape}")
        vals.append(v)
    per = _defects(chain, vals)
    worst = max(per.values(), default=0.0)
    if worst < tol:
        return GlobalSection(chain.name, vals)
    return DefectReport(False, worst, per)


def construct_bump_section(chain: TransitionFamily, chart: int,
                           fiber_vector: np.ndarray | None = None) -> GlobalSection:
    """A section supported in the private part of ``chart``.

    The profile is the sample-graph distance to the nearest shared sample,
    so it vanishes on every sample that is also seen by another chart.
    """
    cover = chain.cover
    c = cover.charts[chart]
    shared = np.zeros(c.size, dtype=bool)
    for b in range(len(cover.charts)):
        if b != chart and cover.has_overlap(chart, b):
            la, _, _ = cover.matching(chart, b)
            shared[la] = True
    if np.all(shared):
        raise SectionError(f"no private region: every sample of chart {c.id} lies in another chart")
    dist = np.full(c.size, np.inf)
    frontier = list(np.flatnonzero(shared))
    dist[frontier] = 0.0
    adj = c.adjacency()
    from collections import deque

    q = deque(frontier)
    while q:
        p = q.popleft()
        for nb in adj[p]:
            if dist[nb] > dist[p] + 1:
                dist[nb] = dist[p] + 1
                q.append(nb)
    if not frontier:
        dist = np.ones(c.size)
    dist[~np.isfinite(dist)] = np.max(dist[np.isfinite(dist)], initial=1.0)
    profile = np.sin(0.5 * np.pi * dist / max(dist.max(), 1.0)) ** 2
    v = np.zeros(chain.fiber_dim) if fiber_vector is None else np.asarray(fiber_vector)
    if fiber_vector is None:
        v[0] = 1.0
    dtype = complex if (chain.is_complex or np.iscomplexobj(v)) else float
    vals = [np.zeros((ch.size, chain.fiber_dim), dtype=dtype) for ch in cover.charts]
    vals[chart] = profile[:, None] * v[None, :]
    out = check_global_section(chain, vals)
    assert isinstance(out, GlobalSection)
    return out


def inner_product(s: GlobalSection, t: GlobalSection, partition: PartitionOfUnity,
                  gerbe: VectorialGerbe, weighting: str = "linear") -> float:
    """Sum_k integral of f_k <s_i(k), t_i(k)> over chart i(k).

    ``weighting="squared"`` uses <f_k s, f_k t> instead; that variant depends on
    the partition and is kept only for comparison.
    """
    if s.chain != t.chain:
        raise SectionError(f"chain mismatch: {s.chain!r} vs {t.chain!r}")
    cover = gerbe.cover
    total = 0.0
    for m in sorted(partition.weights):
        w = partition.weights[m]
        if weighting == "squared":
            w = w * w
        elif weighting != "linear":
            raise SectionError(f"unknown weighting {weighting!r}")
        vol = cover.charts[m].volume
        gram = gerbe.gram(m)
        local = np.einsum("pa,ab,pb->p", np.conj(s.values[m]), gram, t.values[m])
        total += float(np.real(np.sum(w * vol * local)))
    return total


def project_to_base(s: GlobalSection, spec: LiftingProblemSpec, tol: float = 1e-10):
    """Apply f chartwise; the images must glue under the base transitions."""
    base = spec.base
    vals = [np.array([spec.f(x) for x in v]).reshape(v.shape[0], -1) for v in s.values]
    per = _defects(base, vals)
    worst = max(per.values(), default=0.0)
    if worst > tol:
        return DefectReport(False, worst, per)
    return GlobalSection(base.name, vals)


@dataclass
class DefectCocycle:
    s_ij: dict[tuple[int, int], np.ndarray]      # in chart-i frame, pair order
    s_ijk: dict[tuple[int, int, int], np.ndarray]  # in chart-i frame, triple order
    identity_residual: float
    base_residual: float | None

    def max_norm(self) -> float:
        vals = [np.max(np.abs(v)) for v in self.s_ijk.values() if v.size]
        return float(max(vals, default=0.0))


def defect_cocycle(chain: TransitionFamily, values: Sequence[np.ndarray],
                   spec: LiftingProblemSpec | None = None, tol: float = 1e-10) -> DefectCocycle:
    """s_ij = s_i - g_ij s_j and s_ijk = g_ij s_jk - s_ik + s_ij.

    Everything is expressed in the frame of the lowest chart.  The alternating
    sum equals (g_ik - g_ij g_jk) s_k identically; that identity is checked.
    With a lifting spec whose f is linear, f(s_ij) = 0 is checked as well.
    """
    cover = chain.cover
    vals = [np.asarray(v).reshape(v.shape[0], -1) for v in values]
    if spec is not None:
        base_vals = [np.array([spec.f(x) for x in v]).reshape(v.shape[0], -1) for v in vals]
        glue = max(_defects(spec.base, base_vals).values(), default=0.0)
        if glue > tol:
            raise SectionError(f"base sections f(s_i) do not glue (defect {glue:.3g})")
    s_ij = {}
    for (i, j) in cover.overlaps:
        li, lj, pids = cover.matching(i, j)
        s_ij[(i, j)] = vals[i][li] - np.einsum("pab,pb->pa", chain.at(i, j)[pids], vals[j][lj])
    base_res = None
    if spec is not None and spec.f_matrix is not None:
        base_res = max((float(np.max(np.abs(v @ spec.f_matrix.T))) for v in s_ij.values() if v.size),
                       default=0.0)
    s_ijk, worst = {}, 0.0
    for (i, j, k) in cover.nerve.level(2):
        t = cover.triple_samples(i, j, k)
        gij = chain.at(i, j)[t["ij"]]
        gik = chain.at(i, k)[t["ik"]]
        gjk = chain.at(j, k)[t["jk"]]
        alt = (np.einsum("pab,pb->pa", gij, s_ij[(j, k)][t["jk"]])
               - s_ij[(i, k)][t["ik"]] + s_ij[(i, j)][t["ij"]])
        direct = np.einsum("pab,pb->pa", gik - gij @ gjk, vals[k][t["k"]])
        if alt.size:
            worst = max(worst, float(np.max(np.abs(alt - direct))))
        s_ijk[(i, j, k)] = alt
    return DefectCocycle(s_ij, s_ijk, worst, base_res)


@dataclass(eq=False)
class FormalSection:
    """Finite formal sum of global sections, merged per chain."""

    terms: dict[str, GlobalSection] = field(default_factory=dict)

    @classmethod
    def of(cls, *sections: GlobalSection) -> "FormalSection":
        out = cls()
        for s in sections:
            out = out + cls({s.chain: s})
        return out

    def __add__(self, other: "FormalSection") -> "FormalSection":
        merged = dict(self.terms)
        for chain, s in other.terms.items():
            merged[chain] = merged[chain] + s if chain in merged else s
        return FormalSection(merged)


def formal_inner_product(a: FormalSection, b: FormalSection, partition: PartitionOfUnity,
                         gerbes: Mapping[str, VectorialGerbe]) -> float:
    """Block-diagonal over chains: sections of different chains are orthogonal."""
    total = 0.0
    for chain in sorted(set(a.terms) & set(b.terms)):
        total += inner_product(a.terms[chain], b.terms[chain], partition, gerbes[chain])
    return total
