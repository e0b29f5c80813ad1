"""Sampled charts and finite covers.

A chart is a finite set of sample points in its own coordinates, either a
regular grid (row-major flattening) or a scattered point set.  An overlap
between charts i < j is a list of matched sample pairs ``(p_i, p_j)``
denoting the same point of the manifold, split into connected components.
Nothing is ever interpolated: every cross-chart quantity is evaluated at
matched samples.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cech import Nerve, build_nerve

__all__ = ["Chart", "Overlap", "Cover", "CoverError", "grid_chart", "point_chart"]


class CoverError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Chart:
    id: str
    coords: np.ndarray
    volume: np.ndarray
    shape: tuple[int, ...] | None = None
    spacing: tuple[float, ...] | None = None
    origin: tuple[float, ...] | None = None
    frame_scale: np.ndarray | None = None
    neighbors: tuple[np.ndarray, ...] | None = None

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def is_grid(self) -> bool:
        return self.shape is not None

    @property
    def cell_measure(self) -> float:
        if not self.is_grid:
            raise CoverError(f"chart {self.id} is not a grid chart")
        return float(np.prod(self.spacing))

    def scale(self) -> np.ndarray:
        return np.ones(self.size) if self.frame_scale is None else self.frame_scale

    def grid_index(self, flat: np.ndarray) -> tuple[np.ndarray, ...]:
        return np.unravel_index(flat, self.shape)

    def shift(self, axis: int, step: int) -> np.ndarray:
        """Flat index of the neighbour ``step`` cells along ``axis``, or -1 off-grid."""
        idx = list(np.unravel_index(np.arange(self.size), self.shape))
        moved = idx[axis] + step
        ok = (moved >= 0) & (moved < self.shape[axis])
        idx[axis] = np.clip(moved, 0, self.shape[axis] - 1)
        out = np.ravel_multi_index(tuple(idx), self.shape)
        return np.where(ok, out, -1)

    def adjacency(self) -> list[np.ndarray]:
        if self.neighbors is not None:
            return list(self.neighbors)
        if self.is_grid:
            nb = [self.shift(a, s) for a in range(len(self.shape)) for s in (-1, 1)]
            stacked = np.stack(nb, axis=1)
            return [row[row >= 0] for row in stacked]
        from scipy.spatial import cKDTree

        k = min(7, self.size)
        _, nn = cKDTree(self.coords).query(self.coords, k=k)
        return [np.asarray(r[1:]) for r in np.atleast_2d(nn)]


def grid_chart(id: str, shape: Sequence[int], spacing: Sequence[float], origin: Sequence[float],
               volume: np.ndarray | None = None, frame_scale: np.ndarray | None = None) -> Chart:
    shape = tuple(int(s) for s in shape)
    spacing = tuple(float(h) for h in spacing)
    origin = tuple(float(o) for o in origin)
    axes = [o + h * np.arange(n) for o, h, n in zip(origin, spacing, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    if volume is None:
        volume = np.full(coords.shape[0], float(np.prod(spacing)))
    return Chart(id, coords, np.asarray(volume, dtype=float), shape, spacing, origin,
                 None if frame_scale is None else np.asarray(frame_scale, dtype=float))


def point_chart(id: str, coords: np.ndarray, volume: np.ndarray | None = None) -> Chart:
    coords = np.asarray(coords, dtype=float)
    if volume is None:
        volume = np.ones(coords.shape[0])
    return Chart(id, coords, np.asarray(volume, dtype=float))


@dataclass(frozen=True, eq=False)
class Overlap:
    """Matched samples of U_i and U_j, i < j."""

    i: int
    j: int
    idx_i: np.ndarray
    idx_j: np.ndarray
    component: np.ndarray
    jacobian: np.ndarray | None = None  # d x_i / d x_j at each pair

    @property
    def size(self) -> int:
        return self.idx_i.size

    @property
    def n_components(self) -> int:
        return int(self.component.max()) + 1 if self.size else 0


@dataclass(eq=False)
class Cover:
    charts: list[Chart]
    overlaps: dict[tuple[int, int], Overlap]
    nerve: Nerve = None
    _lookup: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = [c.id for c in self.charts]
        if len(set(ids)) != len(ids):
            raise CoverError(f"duplicate chart ids in {ids}")
        for (i, j), ov in self.overlaps.items():
            if not (0 <= i < j < len(self.charts)) or (ov.i, ov.j) != (i, j):
                raise CoverError(f"overlap key {(i, j)} malformed")
            if ov.idx_i.shape != ov.idx_j.shape or ov.component.shape != ov.idx_i.shape:
                raise CoverError(f"overlap {self.pair_name(i, j)}: ragged matching arrays")
            for idx, c in ((ov.idx_i, i), (ov.idx_j, j)):
                if idx.size and (idx.min() < 0 or idx.max() >= self.charts[c].size):
                    raise CoverError(f"overlap {self.pair_name(i, j)} indexes outside chart {self.charts[c].id}")
                if np.unique(idx).size != idx.size:
                    raise CoverError(f"overlap {self.pair_name(i, j)}: a sample of chart "
                                     f"{self.charts[c].id} is matched twice")
            fwd = -np.ones(self.charts[i].size, dtype=np.int64)
            fwd[ov.idx_i] = np.arange(ov.size)
            bwd = -np.ones(self.charts[j].size, dtype=np.int64)
            bwd[ov.idx_j] = np.arange(ov.size)
            self._lookup[(i, j)] = fwd
            self._lookup[(j, i)] = bwd
        detected = [t for t in self._detect_triangles()]
        if self.nerve is None:
            quads = self._detect_tetrahedra(detected)
            self.nerve = build_nerve(len(self.charts), sorted(self.overlaps), detected, quads)
        else:
            declared = set(self.nerve.level(2))
            missing = set(detected) - declared
            if missing:
                raise CoverError(f"triple overlaps {sorted(missing)} have samples but are not in the nerve")
            for t in declared:
                if len(self.triple_samples(*t)["i"]) == 0:
                    raise CoverError(f"declared triple overlap {t} has no matched samples")

    # -- lookups ---------------------------------------------------------
    def pair_name(self, i: int, j: int) -> str:
        return f"({self.charts[i].id},{self.charts[j].id})"

    def chart_index(self, chart_id: str) -> int:
        for k, c in enumerate(self.charts):
            if c.id == chart_id:
                return k
        raise CoverError(f"unknown chart id {chart_id!r}")

    def has_overlap(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.overlaps

    def matching(self, a: int, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(samples in a, samples in b, pair ids) for the ordered pair (a, b)."""
        if a < b:
            ov = self.overlaps[(a, b)]
            return ov.idx_i, ov.idx_j, np.arange(ov.size)
        ov = self.overlaps[(b, a)]
        return ov.idx_j, ov.idx_i, np.arange(ov.size)

    def pair_id(self, a: int, b: int, local_a: np.ndarray) -> np.ndarray:
        """Pair ids of samples ``local_a`` of chart a inside overlap (a, b); -1 if absent."""
        return self._lookup[(a, b)][local_a]

    def partner(self, a: int, b: int, local_a: np.ndarray) -> np.ndarray:
        """Sample of chart b matched to ``local_a`` of chart a, or -1."""
        pid = self.pair_id(a, b, local_a)
        _, mb, _ = self.matching(a, b)
        return np.where(pid >= 0, mb[np.maximum(pid, 0)], -1)

    def jacobian(self, a: int, b: int) -> np.ndarray:
        """d x_a / d x_b at each pair of overlap (a, b), in pair order."""
        ov = self.overlaps[(min(a, b), max(a, b))]
        n = self.charts[a].dim
        if ov.jacobian is None:
            return np.broadcast_to(np.eye(n), (ov.size, n, n))
        return ov.jacobian if a < b else np.linalg.inv(ov.jacobian)

    def triple_samples(self, i: int, j: int, k: int) -> dict[str, np.ndarray]:
        """Matched samples of U_i n U_j n U_k with pair ids in (i,j), (j,k), (i,k)."""
        empty = {key: np.zeros(0, dtype=np.int64) for key in ("i", "j", "k", "ij", "jk", "ik")}
        if not (self.has_overlap(i, j) and self.has_overlap(j, k) and self.has_overlap(i, k)):
            return empty
        pi, pj, _ = self.matching(i, j)
        pk_from_i = self.partner(i, k, pi)
        pk_from_j = self.partner(j, k, pj)
        sel = (pk_from_i >= 0) & (pk_from_j >= 0)
        bad = sel & (pk_from_i != pk_from_j)
        if np.any(bad):
            p = int(pi[bad][0])
            raise CoverError(
                f"triple overlap {(self.charts[i].id, self.charts[j].id, self.charts[k].id)}: "
                f"sample {p} of chart {self.charts[i].id} matches inconsistently"
            )
        si, sj, sk = pi[sel], pj[sel], pk_from_i[sel]
        return {
            "i": si, "j": sj, "k": sk,
            "ij": self.pair_id(i, j, si),
            "jk": self.pair_id(j, k, sj),
            "ik": self.pair_id(i, k, si),
        }

    def _detect_triangles(self):
        out = []
        n = len(self.charts)
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    if len(self.triple_samples(i, j, k)["i"]):
                        out.append((i, j, k))
        return out

    def _detect_tetrahedra(self, triangles):
        tri = set(triangles)
        out = []
        n = len(self.charts)
        for q in _combinations4(n):
            if all(f in tri for f in _faces(q)):
                a, b, c, d = q
                t = self.triple_samples(a, b, c)
                pd = self.partner(a, d, t["i"])
                if np.any(pd >= 0):
                    out.append(q)
        return out

    # -- sample connectivity ----------------------------------------------
    def component_paths(self, a: int, b: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """BFS order through each connected overlap component, seen from chart a.

        Returns per component a pair ``(pair_ids_in_bfs_order, parent_pair_id)``
        with parent -1 at the base sample.  Adjacency is chart a's sample
        adjacency restricted to the overlap.
        """
        ov = self.overlaps[(min(a, b), max(a, b))]
        la, _, pids = self.matching(a, b)
        adj = self.charts[a].adjacency()
        lookup = self._lookup[(a, b)]
        out = []
        for comp in range(ov.n_components):
            members = pids[ov.component == comp]
            if members.size == 0:
                continue
            base = int(members.min())
            order, parent = [base], [-1]
            seen = {base}
            queue = deque([base])
            allowed = set(members.tolist())
            while queue:
                cur = queue.popleft()
                for nb in adj[la[cur]]:
                    q = int(lookup[nb])
                    if q >= 0 and q in allowed and q not in seen:
                        seen.add(q)
                        order.append(q)
                        parent.append(cur)
                        queue.append(q)
            if len(seen) != members.size:
                raise CoverError(
                    f"overlap {self.pair_name(a, b)} component {comp} is not connected "
                    f"in the sample adjacency ({len(seen)} of {members.size} reached)"
                )
            out.append((np.array(order), np.array(parent)))
        return out


def _combinations4(n):
    import itertools

    return itertools.combinations(range(n), 4)


def _faces(q):
    import itertools

    return list(itertools.combinations(q, 3))
