"""Real Clifford algebra Cl(R^n) with e_k e_k = -1, and the Spin double cover.

Multivectors are stored as dense coefficient vectors over the 2**n blades.
A blade is identified with the bitmask of its generators, so blade ``(1, 3)``
(that is e1 e3) lives at index ``0b101``.  Products are computed from a
precomputed sign/index table; the sign of ``e_A e_B`` is the parity of the
transpositions needed to sort the concatenated generator word, times
``(-1)**|A & B|`` for the generators that square to -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 8

__all__ = [
    "CliffordElement",
    "SpinElement",
    "CliffordError",
    "blade_index",
    "blade_tuple",
    "generator",
    "scalar",
    "vector",
    "bivector",
    "clifford_mul",
    "scalar_product",
    "reverse",
    "grade_involution",
    "grade",
    "adjoint_action",
    "adjoint_matrix",
    "lift_rotation",
    "lift_path",
    "left_matrix",
    "right_matrix",
    "grade_involution_matrix",
    "clifford_exp",
    "spin_from_bivector_matrix",
]


class CliffordError(ValueError):
    """Raised for malformed Clifford input (dimension mismatch, bad grades)."""


def _popcount(x: int) -> int:
    return bin(x).count("1")


def blade_index(blade: Iterable[int]) -> int:
    """Bitmask of a strictly increasing 1-based generator tuple."""
    idx = 0
    prev = 0
    for k in blade:
        if k <= prev:
            raise CliffordError(f"blade {tuple(blade)} is not strictly increasing")
        idx |= 1 << (k - 1)
        prev = k
    return idx


def blade_tuple(idx: int) -> tuple[int, ...]:
    return tuple(k + 1 for k in range(idx.bit_length()) if idx >> k & 1)


def _reorder_sign(a: int, b: int) -> int:
    # transpositions to move each generator of b left past larger generators of a
    swaps = 0
    a >>= 1
    while a:
        swaps += _popcount(a & b)
        a >>= 1
    return -1 if swaps & 1 else 1


@lru_cache(maxsize=None)
def _tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    size = 1 << n
    sign = np.empty((size, size), dtype=np.int8)
    for a in range(size):
        for b in range(size):
            s = _reorder_sign(a, b)
            if _popcount(a & b) & 1:
                s = -s
            sign[a, b] = s
    xor = np.bitwise_xor.outer(np.arange(size), np.arange(size))
    sign.setflags(write=False)
    xor.setflags(write=False)
    return sign, xor


@lru_cache(maxsize=None)
def _grades(n: int) -> np.ndarray:
    g = np.array([_popcount(i) for i in range(1 << n)])
    g.setflags(write=False)
    return g


@dataclass(frozen=True, eq=False)
class CliffordElement:
    """Element of Cl(R^n); ``coeffs[mask]`` is the coefficient of that blade."""

    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise CliffordError(f"dimension {self.dim} outside 1..{MAX_DIM}")
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (1 << self.dim,):
            raise CliffordError(
                f"expected {1 << self.dim} coefficients for n={self.dim}, got shape {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_blades(cls, dim: int, terms: dict) -> "CliffordElement":
        c = np.zeros(1 << dim)
        for blade, val in terms.items():
            idx = blade_index(blade)
            if idx >= 1 << dim:
                raise CliffordError(f"blade {blade} exceeds dimension {dim}")
            c[idx] += val
        return cls(dim, c)

    def blades(self) -> dict[tuple[int, ...], float]:
        return {blade_tuple(i): float(v) for i, v in enumerate(self.coeffs) if v != 0.0}

    def __getitem__(self, blade) -> float:
        return float(self.coeffs[blade_index(blade)])

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = scalar(self.dim, other)
        _check_dims(self, other)
        return CliffordElement(self.dim, self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return CliffordElement(self.dim, -self.coeffs)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = scalar(self.dim, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return CliffordElement(self.dim, self.coeffs * other)
        return clifford_mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return CliffordElement(self.dim, self.coeffs * other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, CliffordElement):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.dim, self.coeffs.tobytes()))

    def allclose(self, other: "CliffordElement", atol: float = 1e-12) -> bool:
        _check_dims(self, other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs)) <= atol)

    def grade_part(self, k: int) -> "CliffordElement":
        return grade(self, k)

    def is_even(self) -> bool:
        return not np.any(self.coeffs[_grades(self.dim) % 2 == 1])

    def vector_part(self) -> np.ndarray:
        return np.array([self.coeffs[1 << k] for k in range(self.dim)])

    def norm(self) -> float:
        return math.sqrt(scalar_product(self, self))

    def __repr__(self):
        terms = []
        for blade, v in self.blades().items():
            name = "e" + "".join(str(k) for k in blade) if blade else "1"
            terms.append(f"{v:+.6g}*{name}")
        return f"Cl{self.dim}(" + (" ".join(terms) if terms else "0") + ")"


def _check_dims(a: CliffordElement, b: CliffordElement) -> None:
    if a.dim != b.dim:
        raise CliffordError(f"dimension mismatch: Cl({a.dim}) vs Cl({b.dim})")


def scalar(n: int, value: float = 1.0) -> CliffordElement:
    c = np.zeros(1 << n)
    c[0] = value
    return CliffordElement(n, c)


def generator(n: int, k: int) -> CliffordElement:
    """The generator e_k (1-based)."""
    if not 1 <= k <= n:
        raise CliffordError(f"generator e{k} not in Cl({n})")
    c = np.zeros(1 << n)
    c[1 << (k - 1)] = 1.0
    return CliffordElement(n, c)


def vector(v: Sequence[float]) -> CliffordElement:
    n = len(v)
    c = np.zeros(1 << n)
    for k, x in enumerate(v):
        c[1 << k] = x
    return CliffordElement(n, c)


def bivector(n: int, a: np.ndarray) -> CliffordElement:
    """Sum_{k<l} a[k, l] e_k e_l for a square array ``a``."""
    c = np.zeros(1 << n)
    for k in range(n):
        for l in range(k + 1, n):
            c[(1 << k) | (1 << l)] = a[k, l]
    return CliffordElement(n, c)


def clifford_mul(a: CliffordElement, b: CliffordElement) -> CliffordElement:
    _check_dims(a, b)
    sign, xor = _tables(a.dim)
    out = np.zeros(1 << a.dim)
    terms = sign * np.outer(a.coeffs, b.coeffs)
    np.add.at(out, xor.ravel(), terms.ravel())
    return CliffordElement(a.dim, out)


def scalar_product(a: CliffordElement, b: CliffordElement) -> float:
    """Euclidean product making the blade basis orthonormal.

    Left multiplication by a unit Spin element is an isometry for it.
    """
    _check_dims(a, b)
    return float(np.dot(a.coeffs, b.coeffs))


def reverse(a: CliffordElement) -> CliffordElement:
    g = _grades(a.dim)
    s = np.where((g * (g - 1) // 2) % 2 == 1, -1.0, 1.0)
    return CliffordElement(a.dim, a.coeffs * s)


def grade_involution(a: CliffordElement) -> CliffordElement:
    s = np.where(_grades(a.dim) % 2 == 1, -1.0, 1.0)
    return CliffordElement(a.dim, a.coeffs * s)


def grade(a: CliffordElement, k: int) -> CliffordElement:
    return CliffordElement(a.dim, np.where(_grades(a.dim) == k, a.coeffs, 0.0))


def left_matrix(a: CliffordElement) -> np.ndarray:
    """Matrix of x -> a x on the blade basis."""
    sign, xor = _tables(a.dim)
    size = 1 << a.dim
    m = np.zeros((size, size))
    # column b holds a * e_b; entry at row a_idx ^ b
    for i in np.flatnonzero(a.coeffs):
        m[xor[i], np.arange(size)] += sign[i, :] * a.coeffs[i]
    return m


def right_matrix(a: CliffordElement) -> np.ndarray:
    """Matrix of x -> x a on the blade basis."""
    sign, xor = _tables(a.dim)
    size = 1 << a.dim
    m = np.zeros((size, size))
    for i in np.flatnonzero(a.coeffs):
        m[xor[:, i], np.arange(size)] += sign[:, i] * a.coeffs[i]
    return m


def grade_involution_matrix(n: int) -> np.ndarray:
    return np.diag(np.where(_grades(n) % 2 == 1, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class SpinElement:
    """Unit-norm even element of Cl(R^n)."""

    value: CliffordElement
    tol: float = 1e-12

    def __post_init__(self):
        if not self.value.is_even():
            raise CliffordError("Spin element has nonzero odd-grade coefficients")
        nrm = self.value.norm()
        if abs(nrm - 1.0) > self.tol:
            raise CliffordError(f"Spin element not unit norm (|g| = {nrm!r})")

    @property
    def dim(self) -> int:
        return self.value.dim

    def inverse(self) -> "SpinElement":
        return SpinElement(reverse(self.value), self.tol)

    def __neg__(self):
        return SpinElement(-self.value, self.tol)

    def __mul__(self, other: "SpinElement") -> "SpinElement":
        return SpinElement(clifford_mul(self.value, other.value), max(self.tol, other.tol) * 4)


def _as_clifford(g) -> CliffordElement:
    return g.value if isinstance(g, SpinElement) else g


def adjoint_action(g, v: CliffordElement, tol: float = 1e-10) -> CliffordElement:
    """Return g v g^{-1} for unit g and grade-1 v."""
    g = _as_clifford(g)
    _check_dims(g, v)
    if abs(g.norm() - 1.0) > tol:
        raise CliffordError(f"adjoint action needs a unit-norm element, |g| = {g.norm()!r}")
    if np.any(v.coeffs[_grades(v.dim) != 1]):
        raise CliffordError("adjoint action input must be pure grade 1")
    return clifford_mul(clifford_mul(g, v), reverse(g))


def adjoint_matrix(g) -> np.ndarray:
    """The orthogonal n x n matrix of v -> g v g^{-1} on R^n."""
    g = _as_clifford(g)
    n = g.dim
    cols = [adjoint_action(g, generator(n, k + 1)).vector_part() for k in range(n)]
    return np.column_stack(cols)


def _quaternion_from_matrix(r: np.ndarray) -> np.ndarray:
    # Shepperd's method; returns (w, x, y, z) with w >= 0 when possible
    t = np.trace(r)
    cands = [t, r[0, 0], r[1, 1], r[2, 2]]
    k = int(np.argmax(cands))
    if k == 0:
        w = 0.5 * math.sqrt(max(1.0 + t, 0.0))
        q = [w, (r[2, 1] - r[1, 2]) / (4 * w), (r[0, 2] - r[2, 0]) / (4 * w), (r[1, 0] - r[0, 1]) / (4 * w)]
    elif k == 1:
        x = 0.5 * math.sqrt(max(1.0 + 2 * r[0, 0] - t, 0.0))
        q = [(r[2, 1] - r[1, 2]) / (4 * x), x, (r[0, 1] + r[1, 0]) / (4 * x), (r[0, 2] + r[2, 0]) / (4 * x)]
    elif k == 2:
        y = 0.5 * math.sqrt(max(1.0 + 2 * r[1, 1] - t, 0.0))
        q = [(r[0, 2] - r[2, 0]) / (4 * y), (r[0, 1] + r[1, 0]) / (4 * y), y, (r[1, 2] + r[2, 1]) / (4 * y)]
    else:
        z = 0.5 * math.sqrt(max(1.0 + 2 * r[2, 2] - t, 0.0))
        q = [(r[1, 0] - r[0, 1]) / (4 * z), (r[0, 2] + r[2, 0]) / (4 * z), (r[1, 2] + r[2, 1]) / (4 * z), z]
    q = np.array(q)
    return q / np.linalg.norm(q)


def _check_rotation(r: np.ndarray, tol: float) -> None:
    n = r.shape[0]
    if r.shape != (n, n):
        raise CliffordError("rotation must be a square matrix")
    if np.max(np.abs(r.T @ r - np.eye(n))) > tol:
        raise CliffordError("matrix is not orthogonal")
    if np.linalg.det(r) < 0:
        raise CliffordError("det(R) = -1: Pin lifts are not supported")


def clifford_exp(a: CliffordElement, terms: int = 30) -> CliffordElement:
    """exp(a) by scaling and squaring of the power series."""
    nrm = max(a.norm(), 1e-300)
    k = max(0, int(math.ceil(math.log2(nrm))) + 1)
    x = a * (1.0 / (1 << k))
    out = scalar(a.dim)
    term = scalar(a.dim)
    for j in range(1, terms):
        term = clifford_mul(term, x) * (1.0 / j)
        out = out + term
    for _ in range(k):
        out = clifford_mul(out, out)
    return out


def spin_from_bivector_matrix(a: np.ndarray) -> SpinElement:
    """Lift expm(a) for antisymmetric ``a`` along the path t -> expm(t a)."""
    a = np.asarray(a, dtype=float)
    if np.max(np.abs(a + a.T)) > 1e-12:
        raise CliffordError("generator matrix must be antisymmetric")
    n = a.shape[0]
    g = clifford_exp(bivector(n, -0.5 * a))
    # renormalize away series roundoff
    return SpinElement(g * (1.0 / g.norm()))


def lift_rotation(r: np.ndarray, generator_matrix: np.ndarray | None = None,
                  tol: float = 1e-10) -> tuple[SpinElement, SpinElement]:
    """Both Spin(n) preimages ``(g, -g)`` of a rotation matrix.

    For n in {2, 3} the lift is closed form; the member with nonnegative
    scalar part comes first.  For larger n an antisymmetric
    ``generator_matrix`` with expm(A) = R must be supplied.
    """
    r = np.asarray(r, dtype=float)
    _check_rotation(r, tol)
    n = r.shape[0]
    if n == 1:
        g = scalar(1)
    elif n == 2:
        theta = math.atan2(r[1, 0], r[0, 0])
        g = CliffordElement(2, [math.cos(theta / 2), 0.0, 0.0, math.sin(theta / 2)])
    elif n == 3:
        w, x, y, z = _quaternion_from_matrix(r)
        # i, j, k -> e2e3, e3e1, e1e2; e3e1 = -e1e3 sits at mask 0b101
        c = np.zeros(8)
        c[0] = w
        c[0b110] = x
        c[0b101] = -y
        c[0b011] = z
        g = CliffordElement(3, c)
    else:
        if generator_matrix is None:
            raise CliffordError(f"n = {n} > 3 needs an antisymmetric generator matrix")
        from scipy.linalg import expm

        if np.max(np.abs(expm(generator_matrix) - r)) > 1e-9:
            raise CliffordError("expm(generator_matrix) does not reproduce R")
        g = spin_from_bivector_matrix(generator_matrix).value
    if g.coeffs[0] < 0:
        g = -g
    s = SpinElement(g * (1.0 / g.norm()), tol=1e-12)
    return s, -s


def lift_path(rotations: Sequence[np.ndarray], start=None) -> list[SpinElement]:
    """Lift a sampled path of rotations by continuity.

    ``start`` fixes the lift of the first sample (default: the lift with
    nonnegative scalar part).  Each subsequent lift is the preimage closest
    to its predecessor; consecutive samples must be well below a half-turn
    apart for this to track the path.
    """
    out: list[SpinElement] = []
    prev = None
    for k, r in enumerate(rotations):
        g, h = lift_rotation(r)
        if k == 0 and start is not None:
            prev = _as_clifford(start)
        if prev is not None and scalar_product(g.value, prev) < 0:
            g = h
        out.append(g)
        prev = g.value
    return out
