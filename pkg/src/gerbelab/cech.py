"""Cech cochains on the nerve of a finite cover, with coefficients in Z/m."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Nerve",
    "Cochain",
    "NerveError",
    "CochainError",
    "build_nerve",
    "coboundary",
    "coboundary_witness",
    "enumerate_witnesses",
    "spin_obstruction",
    "solve_mod2",
    "random_cochain",
]

MAX_NERVE_DIM = 3


class NerveError(ValueError):
    pass


class CochainError(ValueError):
    pass


@dataclass(frozen=True)
class Nerve:
    """Simplicial nerve up to dimension 3; simplices are sorted vertex tuples."""

    n_vertices: int
    simplices: tuple[tuple[tuple[int, ...], ...], ...]

    def __post_init__(self):
        idx = {}
        for k, level in enumerate(self.simplices):
            idx.update({s: i for i, s in enumerate(level)})
        object.__setattr__(self, "_index", idx)

    @property
    def dim(self) -> int:
        return len(self.simplices) - 1

    def level(self, k: int) -> tuple[tuple[int, ...], ...]:
        if k < 0:
            return ()
        if k < len(self.simplices):
            return self.simplices[k]
        return ()

    def count(self, k: int) -> int:
        return len(self.level(k))

    def index(self, simplex: tuple[int, ...]) -> int:
        return self._index[tuple(simplex)]

    def __contains__(self, simplex) -> bool:
        return tuple(simplex) in self._index


def build_nerve(n_vertices: int, edges: Iterable = (), triangles: Iterable = (),
                tetrahedra: Iterable = ()) -> Nerve:
    """Assemble and validate a nerve from declared overlaps.

    Each simplex may be given in any vertex order; it is stored sorted.
    Every face of a declared simplex must itself be declared.
    """
    levels: list[set[tuple[int, ...]]] = [set((v,) for v in range(n_vertices))]
    for k, given in enumerate((edges, triangles, tetrahedra), start=1):
        lev = set()
        for s in given:
            t = tuple(sorted(int(v) for v in s))
            if len(t) != k + 1 or len(set(t)) != k + 1:
                raise NerveError(f"malformed {k}-simplex {tuple(s)}")
            if t[0] < 0 or t[-1] >= n_vertices:
                raise NerveError(f"simplex {t} references an unknown vertex")
            lev.add(t)
        levels.append(lev)
    while len(levels) > 1 and not levels[-1]:
        levels.pop()
    for k in range(1, len(levels)):
        for s in sorted(levels[k]):
            for face in itertools.combinations(s, k):
                if face not in levels[k - 1]:
                    raise NerveError(f"simplex {s} has undeclared face {face}")
    return Nerve(n_vertices, tuple(tuple(sorted(lev)) for lev in levels))


@dataclass(frozen=True)
class Cochain:
    """A k-cochain with values in Z/m, one value per k-simplex of the nerve."""

    nerve: Nerve
    degree: int
    values: np.ndarray
    modulus: int = 2

    def __post_init__(self):
        if not 2 <= self.modulus <= 2**32:
            raise CochainError(f"band Z/{self.modulus} outside supported range")
        v = np.asarray(self.values, dtype=np.int64) % self.modulus
        if v.shape != (self.nerve.count(self.degree),):
            raise CochainError(
                f"{self.degree}-cochain needs {self.nerve.count(self.degree)} values, got {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zero(cls, nerve: Nerve, degree: int, modulus: int = 2) -> "Cochain":
        return cls(nerve, degree, np.zeros(nerve.count(degree), dtype=np.int64), modulus)

    @classmethod
    def from_dict(cls, nerve: Nerve, degree: int, values: Mapping, modulus: int = 2) -> "Cochain":
        v = np.zeros(nerve.count(degree), dtype=np.int64)
        for s, x in values.items():
            t = tuple(sorted(s))
            if t not in nerve or len(t) != degree + 1:
                raise CochainError(f"{s} is not a {degree}-simplex of the nerve")
            v[nerve.index(t)] = x
        return cls(nerve, degree, v, modulus)

    def __getitem__(self, simplex) -> int:
        return int(self.values[self.nerve.index(tuple(sorted(simplex)))])

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {s: int(x) for s, x in zip(self.nerve.level(self.degree), self.values)}

    def support(self) -> list[tuple[int, ...]]:
        return [s for s, x in zip(self.nerve.level(self.degree), self.values) if x]

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def __add__(self, other: "Cochain") -> "Cochain":
        self._compatible(other)
        return Cochain(self.nerve, self.degree, self.values + other.values, self.modulus)

    def __sub__(self, other: "Cochain") -> "Cochain":
        self._compatible(other)
        return Cochain(self.nerve, self.degree, self.values - other.values, self.modulus)

    def __eq__(self, other):
        if not isinstance(other, Cochain):
            return NotImplemented
        return (self.nerve == other.nerve and self.degree == other.degree
                and self.modulus == other.modulus and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.degree, self.modulus, self.values.tobytes()))

    def _compatible(self, other):
        if (self.nerve != other.nerve or self.degree != other.degree
                or self.modulus != other.modulus):
            raise CochainError("cochains live on different nerves, degrees or bands")


def coboundary_matrix(nerve: Nerve, degree: int) -> np.ndarray:
    """Integer matrix of delta: C^k -> C^{k+1}, alternating face signs."""
    rows = nerve.level(degree + 1)
    cols = nerve.level(degree)
    m = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for r, s in enumerate(rows):
        for i in range(len(s)):
            face = s[:i] + s[i + 1:]
            m[r, nerve.index(face)] += (-1) ** i
    return m


def coboundary(c: Cochain) -> Cochain:
    if c.degree > MAX_NERVE_DIM - 1:
        raise CochainError("coboundary defined for degree <= 2")
    m = coboundary_matrix(c.nerve, c.degree)
    return Cochain(c.nerve, c.degree + 1, m @ c.values, c.modulus)


def solve_mod2(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """One solution x of a x = b over F_2, or None when inconsistent."""
    a = np.array(a, dtype=np.uint8) % 2
    b = np.array(b, dtype=np.uint8) % 2
    rows, cols = a.shape
    aug = np.concatenate([a, b.reshape(-1, 1)], axis=1)
    pivots = []
    r = 0
    for c in range(cols):
        hit = np.flatnonzero(aug[r:, c])
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            aug[[r, p]] = aug[[p, r]]
        others = np.flatnonzero(aug[:, c])
        others = others[others != r]
        aug[others] ^= aug[r]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    if np.any(aug[r:, -1]):
        return None
    x = np.zeros(cols, dtype=np.uint8)
    for i, c in enumerate(pivots):
        x[c] = aug[i, -1]
    return x


def coboundary_witness(c: Cochain) -> Cochain | None:
    """Return b with delta(b) = c for a Z/2 2-cocycle c, or None if [c] != 0."""
    if c.modulus != 2:
        raise CochainError("coboundary_witness is implemented over Z/2 only")
    if c.degree != 2:
        raise CochainError("coboundary_witness expects a 2-cochain")
    if c.nerve.count(3) and not coboundary(c).is_zero():
        raise CochainError(f"not a cocycle: delta c nonzero on {coboundary(c).support()}")
    m = coboundary_matrix(c.nerve, 1)
    x = solve_mod2(m, c.values)
    if x is None:
        return None
    b = Cochain(c.nerve, 1, x.astype(np.int64), 2)
    assert coboundary(b) == c
    return b


def enumerate_witnesses(c: Cochain, limit: int = 1 << 16) -> list[Cochain]:
    """Every 1-cochain b with delta(b) = c, by brute force over Z/2."""
    n = c.nerve.count(1)
    if (1 << n) > limit:
        raise CochainError(f"{1 << n} candidate 1-cochains exceed the enumeration limit {limit}")
    m = coboundary_matrix(c.nerve, 1) % 2
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1
    hits = np.all((bits @ m.T) % 2 == c.values % 2, axis=1)
    return [Cochain(c.nerve, 1, bits[k].astype(np.int64), 2) for k in np.flatnonzero(hits)]


def random_cochain(nerve: Nerve, degree: int, rng: np.random.Generator, modulus: int = 2) -> Cochain:
    return Cochain(nerve, degree, rng.integers(0, modulus, nerve.count(degree)), modulus)


def spin_obstruction(cover, lifts: Mapping[tuple[int, int], np.ndarray],
                     tol: float = 1e-9) -> Cochain:
    """Z/2 2-cocycle recording the sign of g_ij g_jk g_ki on triple overlaps.

    ``lifts`` maps each overlap (i, j), i < j, to an array of even Clifford
    coefficient vectors, one per matched sample in the cover's pair order.
    The product must be +-1 at every triple sample and constant across each
    triple overlap.
    """
    from . import clifford as cl

    nerve = cover.nerve
    vals = np.zeros(nerve.count(2), dtype=np.int64)
    for t, (i, j, k) in enumerate(nerve.level(2)):
        rows = cover.triple_samples(i, j, k)
        if len(rows["i"]) == 0:
            raise CochainError(f"triple overlap {(i, j, k)} has no samples")
        signs = set()
        for n in range(len(rows["i"])):
            gij = _spin_at(lifts, cover, i, j, rows["ij"][n])
            gjk = _spin_at(lifts, cover, j, k, rows["jk"][n])
            gki = _spin_at(lifts, cover, k, i, rows["ik"][n])
            prod = cl.clifford_mul(cl.clifford_mul(gij, gjk), gki)
            off = prod.coeffs.copy()
            off[0] = 0.0
            if np.max(np.abs(off)) > tol or abs(abs(prod.coeffs[0]) - 1.0) > tol:
                raise CochainError(
                    f"lift product on {(i, j, k)} is not +-1 (residual "
                    f"{max(np.max(np.abs(off)), abs(abs(prod.coeffs[0]) - 1.0)):.3g}); "
                    "lifts do not cover a common orthogonal family"
                )
            signs.add(1 if prod.coeffs[0] < 0 else 0)
        if len(signs) > 1:
            raise CochainError(
                f"sign of g_ij g_jk g_ki varies across triple overlap {(i, j, k)}; "
                "overlap not connected or lifts not continuous"
            )
        vals[t] = signs.pop()
    c = Cochain(nerve, 2, vals, 2)
    if nerve.count(3):
        assert coboundary(c).is_zero(), "spin obstruction failed to be a cocycle"
    return c


def _spin_at(lifts, cover, a, b, pair_index):
    from . import clifford as cl

    n_coeff = next(iter(lifts.values())).shape[1]
    dim = int(round(np.log2(n_coeff)))
    if a < b:
        return cl.CliffordElement(dim, lifts[(a, b)][pair_index])
    return cl.reverse(cl.CliffordElement(dim, lifts[(b, a)][pair_index]))
