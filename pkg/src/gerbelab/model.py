"""In-memory datasets: a cover with its chain, fiber data and declared checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .calculus import ConnectionData, spin_connection
from .cover import Cover
from .gerbe import Band, TransitionFamily, VectorialGerbe
from .operators import SampleSpace, assemble_dirac, assemble_nabla, compact_laplacian, assemble
from .sections import PartitionOfUnity

SCHEMA = "gerbelab/1"

__all__ = ["SCHEMA", "FiberSpec", "DiracSpec", "Dataset"]


@dataclass(eq=False)
class FiberSpec:
    """Clifford module tensored with the chain's coefficient bundle.

    The chain (transitions, connection) lives on a coefficient bundle E of
    rank r.  Spinors take values in C (x) E where C has dimension
    ``module_dim`` and carries the Clifford generators and grading; with no
    generators C is one-dimensional and the fiber is E itself.
    """

    module_dim: int = 1
    complex: bool = False
    kind: str = "vector"                       # vector | clifford | spinor
    generators: list[np.ndarray] | None = None
    grading: np.ndarray | None = None


@dataclass(eq=False)
class DiracSpec:
    """Discretization parameters for the Dirac operator of a dataset."""

    wilson: float = 0.0
    wilson_mass: np.ndarray | None = None
    symmetrize: bool = True
    overlap_mass: float = 1.0
    overlap_wilson: float = 1.0


@dataclass(eq=False)
class Dataset:
    name: str
    cover: Cover
    transitions: TransitionFamily
    band: Band
    fiber: FiberSpec
    description: str = ""
    metric: np.ndarray | None = None
    connection: ConnectionData | None = None         # on the coefficient bundle
    levi_civita: ConnectionData | None = None
    scalar_curvature: list[np.ndarray] | None = None
    frames: TransitionFamily | None = None
    sections: dict[str, list[np.ndarray]] = field(default_factory=dict)
    partitions: dict[str, PartitionOfUnity] = field(default_factory=dict)
    dirac: DiracSpec | None = None
    flat: bool = False
    lifting: str | None = None                       # named lifting recipe over ``transitions``
    expect: dict[str, Any] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    # -- derived objects ---------------------------------------------------------
    @property
    def rank(self) -> int:
        return self.transitions.fiber_dim

    @property
    def total_dim(self) -> int:
        return self.fiber.module_dim * self.rank

    def _lift(self, m: np.ndarray) -> np.ndarray:
        """Module endomorphism m (s x s) acting on C (x) E."""
        return np.kron(np.asarray(m), np.eye(self.rank))

    def generators(self) -> list[np.ndarray] | None:
        g = self.fiber.generators
        return None if g is None else [self._lift(e) for e in g]

    def grading(self) -> np.ndarray | None:
        return None if self.fiber.grading is None else self._lift(self.fiber.grading)

    def gerbe(self) -> VectorialGerbe:
        if self.lifting is not None:
            if "lift" not in self._cache:
                from .datasets import LIFTINGS
                from .gerbe import lifting_gerbe

                if self.lifting not in LIFTINGS:
                    raise ValueError(f"unknown lifting recipe {self.lifting!r}")
                self._cache["lift"] = lifting_gerbe(LIFTINGS[self.lifting](self.transitions))
            return self._cache["lift"]
        metric = None if self.metric is None else {c: self.metric for c in range(len(self.cover.charts))}
        return VectorialGerbe(self.cover, self.transitions, self.band, metric, self.fiber.kind,
                              None if self.fiber.generators is None else len(self.fiber.generators))

    def total_chain(self) -> TransitionFamily:
        s = self.fiber.module_dim
        if s == 1:
            return self.transitions
        if "chain" not in self._cache:
            vals = {k: np.einsum("ab,pxy->paxby", np.eye(s), v).reshape(v.shape[0], s * self.rank, s * self.rank)
                    for k, v in self.transitions.values.items()}
            self._cache["chain"] = TransitionFamily(self.cover, s * self.rank, vals, self.transitions.name)
        return self._cache["chain"]

    def space(self) -> SampleSpace:
        if "space" not in self._cache:
            self._cache["space"] = SampleSpace(self.total_chain())
        return self._cache["space"]

    def fiber_connection(self) -> list[np.ndarray | None]:
        """Connection on C (x) E per chart: spin part (x) 1 + 1 (x) coefficient part."""
        n = len(self.cover.charts)
        s, r = self.fiber.module_dim, self.rank
        spin = [None] * n
        if self.levi_civita is not None:
            if self.fiber.generators is None:
                raise ValueError("Levi-Civita data needs Clifford generators on the fiber")
            spin = spin_connection(self.levi_civita, self.fiber.generators).values
        coef = [None] * n if self.connection is None else list(self.connection.values)
        out = []
        for c in range(n):
            if spin[c] is None and coef[c] is None:
                out.append(None)
                continue
            ch = self.cover.charts[c]
            w = np.zeros((ch.size, ch.dim, s * r, s * r), dtype=complex if self.fiber.complex else float)
            if spin[c] is not None:
                w = w + np.einsum("paxy,bc->paxbyc", spin[c], np.eye(r)).reshape(w.shape)
            if coef[c] is not None:
                w = w + np.einsum("xy,pabc->paxbyc", np.eye(s), coef[c]).reshape(w.shape)
            out.append(w)
        return out

    def fiber_connection_data(self) -> ConnectionData:
        return ConnectionData(self.cover, self.fiber_connection(), self.total_dim)

    def dirac_operator(self, wilson: float | None = None):
        spec = self.dirac or DiracSpec()
        r = spec.wilson if wilson is None else wilson
        key = ("dirac", r)
        if key not in self._cache:
            mass = None if spec.wilson_mass is None else self._lift(spec.wilson_mass)
            self._cache[key] = assemble_dirac(
                self.space(), self.generators(), self.fiber_connection(), wilson=r,
                wilson_mass=mass, symmetrize=spec.symmetrize, grading=self.grading())
        return self._cache[key]

    def nabla(self):
        return assemble_nabla(self.space(), self.fiber_connection())

    def laplacian(self):
        """Global -sum scale^2 (compact covariant Laplacian), not symmetrized."""
        import scipy.sparse as sp

        conn = self.fiber_connection()
        local = []
        d = self.total_dim
        for c, ch in enumerate(self.cover.charts):
            sc2 = sp.kron(sp.diags(ch.scale() ** 2), sp.identity(d), format="csr")
            local.append(-sc2 @ compact_laplacian(ch, conn[c], d))
        return assemble(self.space(), local)

    def scalar_curvature_global(self) -> np.ndarray | None:
        if self.scalar_curvature is None:
            return None
        sp_ = self.space()
        return np.array([self.scalar_curvature[c][l] for c, l in zip(sp_.owner, sp_.owner_local)])
