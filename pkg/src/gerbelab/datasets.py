"""Builders for the shipped example datasets.

Every example is built from closed-form data sampled on grid charts whose
overlaps share samples exactly, so no quantity is ever interpolated.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .calculus import ConnectionData
from .cover import Cover, Overlap, grid_chart, point_chart
from .gerbe import Band, TransitionFamily
from .model import Dataset, DiracSpec, FiberSpec
from .sections import PartitionOfUnity

SIGMA = (np.array([[0, 1], [1, 0]], dtype=complex),
         np.array([[0, -1j], [1j, 0]], dtype=complex),
         np.array([[1, 0], [0, -1]], dtype=complex))

# rank-1 Wilson parameter that cancels the leading dispersion error of
# |i(d_c - (r h/2) Lap)| on plane waves: sin^2 + r^2 (1 - cos)^2 = x^2 + O(x^6)
S1_WILSON = 2.0 / np.sqrt(3.0)


@dataclass
class Axis:
    n: int                  # global samples along the axis
    h: float
    origin: float = 0.0
    periodic: bool = True
    arcs: int = 1
    overlap: int = 0        # extra samples on each side of an arc

    def ranges(self) -> list[np.ndarray]:
        if not self.periodic or self.arcs == 1 and self.overlap == 0:
            return [np.arange(self.n)]
        step = self.n // self.arcs
        if step * self.arcs != self.n:
            raise ValueError("arcs must divide the number of samples")
        return [np.arange(a * step - self.overlap, (a + 1) * step + self.overlap) for a in range(self.arcs)]


@dataclass
class ProductCover:
    cover: Cover
    ranges: list[tuple[np.ndarray, ...]]      # per chart: unwrapped global indices per axis
    offsets: dict[tuple[int, int], np.ndarray]  # per overlap: x_i - x_j at each pair

    def axis_coord(self, c: int, axis: int) -> np.ndarray:
        return self.cover.charts[c].coords[:, axis]


def product_cover(axes: list[Axis], names: list[str] | None = None, volume=None,
                  frame_scale=None) -> ProductCover:
    """Charts are products of arcs; overlaps are found by shared wrapped indices."""
    per_axis = [ax.ranges() for ax in axes]
    charts, ranges = [], []
    for k, combo in enumerate(itertools.product(*per_axis)):
        shape = [len(r) for r in combo]
        origin = [ax.origin + ax.h * r[0] for ax, r in zip(axes, combo)]
        cid = names[k] if names else "U" + "".join(str(i) for i in np.unravel_index(k, [len(p) for p in per_axis]))
        ch = grid_chart(cid, shape, [ax.h for ax in axes], origin)
        vol = None if volume is None else volume(ch.coords)
        fs = None if frame_scale is None else frame_scale(ch.coords)
        ch = grid_chart(cid, shape, [ax.h for ax in axes], origin, vol, fs)
        charts.append(ch)
        ranges.append(combo)
    keys = []
    for combo in ranges:
        mesh = np.meshgrid(*[np.mod(r, ax.n) for r, ax in zip(combo, axes)], indexing="ij")
        flat = np.stack([m.ravel() for m in mesh], axis=1)
        keys.append(np.ravel_multi_index(tuple(flat.T), tuple(ax.n for ax in axes)))
    overlaps, offsets = {}, {}
    for i in range(len(charts)):
        pos_i = {int(key): p for p, key in enumerate(keys[i])}
        for j in range(i + 1, len(charts)):
            pairs = [(pos_i[int(key)], q) for q, key in enumerate(keys[j]) if int(key) in pos_i]
            if not pairs:
                continue
            pairs.sort()
            ii = np.array([p for p, _ in pairs])
            jj = np.array([q for _, q in pairs])
            comp = _components(charts[i], ii)
            overlaps[(i, j)] = Overlap(i, j, ii, jj, comp)
            offsets[(i, j)] = charts[i].coords[ii] - charts[j].coords[jj]
    return ProductCover(Cover(charts, overlaps), ranges, offsets)


def _components(chart, members: np.ndarray) -> np.ndarray:
    pos = -np.ones(chart.size, dtype=np.int64)
    pos[members] = np.arange(members.size)
    comp = -np.ones(members.size, dtype=np.int64)
    adj = chart.adjacency()
    label = 0
    for start in range(members.size):
        if comp[start] >= 0:
            continue
        comp[start] = label
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nb in adj[members[cur]]:
                q = pos[nb]
                if q >= 0 and comp[q] < 0:
                    comp[q] = label
                    queue.append(q)
        label += 1
    return comp


def ramp_weights(pc: ProductCover, axis: int, ax: Axis, profile: str = "smooth") -> list[np.ndarray]:
    """1-D partition along a periodic arc axis, constant in the other axes."""
    out = []
    step = ax.n // ax.arcs
    m = ax.overlap
    for c, combo in enumerate(pc.ranges):
        r = combo[axis]
        idx = pc.cover.charts[c].grid_index(np.arange(pc.cover.charts[c].size))[axis]
        k = r[idx]                                   # unwrapped global index
        a0 = r[0] + m                                 # start of the arc's own block
        w = np.ones(k.size)
        if ax.arcs > 1 and m > 0:
            # overlap band at the low end: k in [a0 - m, a0 + m)
            t_lo = (k - (a0 - m)) / (2 * m - 1)
            t_hi = (k - (a0 + step - m)) / (2 * m - 1)
            lo = k < a0 + m
            hi = k >= a0 + step - m
            w[lo] = _rise(t_lo[lo], profile)
            w[hi] = 1.0 - _rise(t_hi[hi], profile)
        out.append(w)
    return out


def _rise(t, profile):
    t = np.clip(t, 0.0, 1.0)
    if profile == "smooth":
        return np.sin(0.5 * np.pi * t) ** 2
    if profile == "linear":
        return t
    raise ValueError(profile)


def _partition(pc, weights_per_axis) -> PartitionOfUnity:
    w = {}
    for c in range(len(pc.cover.charts)):
        prod = np.ones(pc.cover.charts[c].size)
        for ws in weights_per_axis:
            prod = prod * ws[c]
        w[c] = prod
    return PartitionOfUnity(w)


# -- circle ---------------------------------------------------------------------

def s1_dataset(antiperiodic: bool, n: int = 256, overlap: int = 8) -> Dataset:
    ax = Axis(n, 2 * np.pi / n, 0.0, True, 2, overlap)
    pc = product_cover([ax], names=["A", "B"])
    cov = pc.cover
    ov = cov.overlaps[(0, 1)]
    g = np.ones((ov.size, 1, 1), dtype=complex)
    # the component where the arcs meet across theta = 0 carries the flip
    wrap = np.abs(pc.offsets[(0, 1)][:, 0]) > np.pi
    if antiperiodic:
        g[wrap] = -1.0
    chain = TransitionFamily(cov, 1, {(0, 1): g}, "antiperiodic" if antiperiodic else "periodic")
    fiber = FiberSpec(1, True, "spinor", [np.array([[1j]])])
    parts = {
        "smooth": _partition(pc, [ramp_weights(pc, 0, ax, "smooth")]),
        "linear": _partition(pc, [ramp_weights(pc, 0, ax, "linear")]),
    }
    sections = {}
    if antiperiodic:
        # half-angle profile, continued across the flip
        vals = []
        for c in range(2):
            th = cov.charts[c].coords[:, 0]
            vals.append(np.cos(th / 2)[:, None].astype(complex))
        sections["half_angle"] = vals
    else:
        sections["constant"] = [np.ones((cov.charts[c].size, 1), dtype=complex) for c in range(2)]
    name = "s1_antiperiodic" if antiperiodic else "s1_periodic"
    expect = {"kernel_dim": 0, "gap": [0.5, 1e-3]} if antiperiodic else {"kernel_dim": 1}
    return Dataset(
        name, cov, chain, Band.sign(1, complex), fiber,
        description=f"circle, {n} samples on two arcs, {'anti' if antiperiodic else ''}periodic spinors",
        sections=sections, partitions=parts,
        dirac=DiracSpec(wilson=S1_WILSON, wilson_mass=np.array([[1j]])),
        flat=True, expect=expect, tolerances={"section": 1e-10, "spectrum_threshold": 1e-6},
    )


# -- flat torus with a degree-d line bundle ----------------------------------------

def t2_dataset(d: int, n: int = 20, overlap: int = 2, name: str | None = None) -> Dataset:
    """Flat torus of side 2 pi, spinors twisted by the degree-d line bundle.

    Landau gauge A = B x dy with B = 2 pi d / L^2; across the x-wrap the
    transition is exp(i B (x_i - x_j) y_j).  The connection on the spinor
    fiber is w = -i A.
    """
    L = 2 * np.pi
    h = L / n
    ax = Axis(n, h, 0.0, True, 2, overlap)
    pc = product_cover([ax, ax])
    cov = pc.cover
    B = 2 * np.pi * d / L**2
    vals = {}
    for key, ov in cov.overlaps.items():
        i, j = key
        dx = pc.offsets[key][:, 0]
        yj = cov.charts[j].coords[ov.idx_j, 1]
        vals[key] = np.exp(1j * B * dx * yj)[:, None, None]
    chain = TransitionFamily(cov, 1, vals, f"degree {d}")
    conn = []
    for ch in cov.charts:
        w = np.zeros((ch.size, 2, 1, 1), dtype=complex)
        w[:, 1, 0, 0] = -1j * B * ch.coords[:, 0]
        conn.append(w)
    gens = [1j * SIGMA[0], 1j * SIGMA[1]]
    fiber = FiberSpec(2, True, "spinor", gens, grading=SIGMA[2].copy())
    smooth = ramp_weights(pc, 0, ax), ramp_weights(pc, 1, ax)
    parts = {"smooth": _partition(pc, list(smooth))}
    expect = {"graded_index": d, "chern": [float(d), 1e-3]}
    if d == 0:
        expect["kernel_dim"] = 2
    if d == 1:
        expect["symbol_invariance"] = {"count": 10, "norm": 0.3, "seed": 0}
    return Dataset(
        name or (f"t2_twisted_d{d}" if d else "t2_flat"), cov, chain, Band.trivial(1), fiber,
        description=f"flat torus {n}x{n}, four charts, spinors twisted by a degree {d} line bundle",
        connection=ConnectionData(cov, conn, 1), scalar_curvature=[np.zeros(ch.size) for ch in cov.charts],
        partitions=parts,
        dirac=DiracSpec(wilson=1.0, wilson_mass=SIGMA[2].copy(), overlap_mass=1.0, overlap_wilson=1.0),
        flat=True, expect=expect, tolerances={"connection_C": 10.0, "spectrum_threshold": 1e-6},
    )


# -- round sphere on a Mercator band ------------------------------------------------

def clifford2_module():
    """Left multiplication on Cl(R^2), basis (1, e1, e2, e12), and its grade involution."""
    from . import clifford as cl

    gens = [cl.left_matrix(cl.generator(2, k)) for k in (1, 2)]
    return gens, cl.grade_involution_matrix(2)


def s2_round_dataset(n: int = 64, overlap: int = 4, radius: float = 1.0, rho_max: float = 3.9375,
                     antiperiodic: bool = True, wilson: float = 0.0, name: str | None = None) -> Dataset:
    """Round sphere in Mercator coordinates (rho, theta), rho truncated at +-rho_max.

    Metric radius^2 sech^2(rho) (d rho^2 + d theta^2); the orthonormal frame
    is (cosh rho / radius) d/d rho, (cosh rho / radius) d/d theta and the
    Levi-Civita form is w^1_2 = tanh(rho) d theta.  The frame turns once
    around each pole, so spinors are antiperiodic in theta.
    """
    n_theta = 2 * (n - 2 * overlap)
    h_theta = 2 * np.pi / n_theta
    h_rho = 2 * rho_max / (n - 1)
    ax_rho = Axis(n, h_rho, -rho_max, periodic=False)
    ax_th = Axis(n_theta, h_theta, 0.0, True, 2, overlap)
    pc = product_cover(
        [ax_rho, ax_th], names=["east", "west"],
        volume=lambda x: radius**2 / np.cosh(x[:, 0]) ** 2 * h_rho * h_theta,
        frame_scale=lambda x: np.cosh(x[:, 0]) / radius)
    cov = pc.cover
    ov = cov.overlaps[(0, 1)]
    g = np.ones((ov.size, 1, 1))
    wrap = np.abs(pc.offsets[(0, 1)][:, 1]) > np.pi
    if antiperiodic:
        g[wrap] = -1.0
    chain = TransitionFamily(cov, 1, {(0, 1): g}, "spin" if antiperiodic else "periodic")
    lc = []
    for ch in cov.charts:
        w = np.zeros((ch.size, 2, 2, 2))
        t = np.tanh(ch.coords[:, 0])
        w[:, 1, 0, 1] = t
        w[:, 1, 1, 0] = -t
        lc.append(w)
    gens, alpha = clifford2_module()
    # R(e1) alpha anticommutes with every left multiplication by a vector
    from . import clifford as cl

    grading = cl.right_matrix(cl.generator(2, 1)) @ alpha
    fiber = FiberSpec(4, False, "clifford", gens, grading=grading)
    s = 2.0 / radius**2
    th_parts = ramp_weights(pc, 1, ax_th)
    parts = {"smooth": _partition(pc, [th_parts])}
    return Dataset(
        name or "s2_round", cov, chain, Band.sign(1), fiber,
        description=f"round sphere of radius {radius}, Mercator band |rho| <= {rho_max}, "
                    f"two {n}x{n} charts, Cl(R^2) fibers",
        levi_civita=ConnectionData(cov, lc, 2, "levi_civita"),
        scalar_curvature=[np.full(ch.size, s) for ch in cov.charts],
        partitions=parts,
        dirac=DiracSpec(wilson=wilson, wilson_mass=alpha),
        expect={"kernel_dim": 0, "gap_min": 0.8},
        tolerances={"spectrum_threshold": 1e-6, "friedrich_bound": float(np.sqrt(s / 2)),
                    "boundary_band": 4},
    )


def s2_half_radius_dataset(n: int = 64, overlap: int = 4) -> Dataset:
    ds = s2_round_dataset(n, overlap, radius=0.5, name="s2_half_radius")
    ds.expect = {"kernel_dim": 0, "gap_min": 1.6}
    return ds


# -- tetrahedral cover of the sphere ----------------------------------------------------

TETRA = np.array([
    [0.0, 0.0, 1.0],
    [2 * np.sqrt(2) / 3, 0.0, -1.0 / 3],
    [-np.sqrt(2) / 3, np.sqrt(2.0 / 3), -1.0 / 3],
    [-np.sqrt(2) / 3, -np.sqrt(2.0 / 3), -1.0 / 3],
])


def fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z**2)
    phi = np.pi * (1 + 5**0.5) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def tetra_cover(n_points: int = 3000, cap_deg: float = 78.0) -> tuple[Cover, np.ndarray, list[np.ndarray]]:
    """Four caps around the vertices of a regular tetrahedron (v0 at the north pole).

    Returns the cover, the global points and per chart the global index of
    each chart sample.  The caps meet in threes near the face centres and
    never all four, so the nerve is the boundary of a tetrahedron.
    """
    pts = fibonacci_sphere(n_points)
    cosr = np.cos(np.radians(cap_deg))
    members = [np.flatnonzero(pts @ v > cosr) for v in TETRA]
    charts = [point_chart(f"cap{i}", pts[m], np.full(m.size, 4 * np.pi / n_points))
              for i, m in enumerate(members)]
    overlaps = {}
    for i in range(4):
        pos_i = {int(g): p for p, g in enumerate(members[i])}
        for j in range(i + 1, 4):
            pairs = [(pos_i[int(g)], q) for q, g in enumerate(members[j]) if int(g) in pos_i]
            ii = np.array([p for p, _ in pairs])
            jj = np.array([q for _, q in pairs])
            overlaps[(i, j)] = Overlap(i, j, ii, jj, _components(charts[i], ii))
    return Cover(charts, overlaps), pts, members


def cap_partition(cov: Cover, cap_deg: float = 78.0) -> PartitionOfUnity:
    """(cos angle - cos cap)^2 bumps around the cap centres, normalized.

    Each bump vanishes on the cap boundary circle; every sample lies well
    inside at least one cap, so the normalizing sum is bounded below.
    """
    cosr = np.cos(np.radians(cap_deg))
    bump = lambda x: np.clip(x @ TETRA.T - cosr, 0.0, None) ** 2          # (npts, 4)
    weights = {}
    for i, ch in enumerate(cov.charts):
        b = bump(ch.coords)
        weights[i] = b[:, i] / b.sum(axis=1)
    return PartitionOfUnity(weights)


def _rz(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def s2_clutched_dataset(n_points: int = 3000) -> Dataset:
    """Rank-3 bundle clutched by the full z-rotation loop along the equator.

    Chart 0 uses the northern trivialization; charts 1-3 all contain the
    south pole and use the southern one, so g_0j = R_z(azimuth) and the
    remaining transitions are the identity.
    """
    cov, pts, members = tetra_cover(n_points)
    vals = {}
    for (i, j), ov in cov.overlaps.items():
        x = cov.charts[i].coords[ov.idx_i]
        if i == 0:
            vals[(i, j)] = np.array([_rz(np.arctan2(p[1], p[0])) for p in x])
        else:
            vals[(i, j)] = np.broadcast_to(np.eye(3), (ov.size, 3, 3)).copy()
    frames = TransitionFamily(cov, 3, vals, "clutched")
    return Dataset("s2_clutched", cov, frames, Band.trivial(3), FiberSpec(1, False, "frame"),
                   description="rank-3 bundle on the sphere clutched by a 2 pi rotation loop, tetrahedral cover",
                   frames=frames, partitions={"caps": cap_partition(cov)},
                   expect={"cocycle_class": "nontrivial"})


def tangent_frames(cov: Cover) -> list[np.ndarray]:
    """Per chart (npts, 3, 2) orthonormal tangent frames.

    e1 is the tangential part of a fixed unit vector a_i orthogonal to the
    cap centre; it degenerates only at +-a_i, 90 degrees from the centre.
    """
    out = []
    for i, ch in enumerate(cov.charts):
        v = TETRA[i]
        a = np.cross(v, [0.3, 0.5, 0.8])
        a /= np.linalg.norm(a)
        x = ch.coords
        e1 = a[None] - (x @ a)[:, None] * x
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(x, e1)
        out.append(np.stack([e1, e2], axis=2))
    return out


def s2_tangent_dataset(n_points: int = 3000) -> Dataset:
    cov, _, _ = tetra_cover(n_points)
    fr = tangent_frames(cov)
    vals = {}
    for (i, j), ov in cov.overlaps.items():
        vals[(i, j)] = np.einsum("pai,paj->pij", fr[i][ov.idx_i], fr[j][ov.idx_j])
    frames = TransitionFamily(cov, 2, vals, "tangent")
    return Dataset("s2_tangent", cov, frames, Band.trivial(2), FiberSpec(1, False, "frame"),
                   description="tangent bundle of the sphere in cap frames, tetrahedral cover",
                   frames=frames, partitions={"caps": cap_partition(cov)},
                   expect={"cocycle_class": "trivial"})


# -- monopole line bundle on two stereographic charts ----------------------------------

def _chi(t, a):
    t = np.clip(np.asarray(t, dtype=float) / a, -1.0, 1.0)
    return 0.5 * (1.0 - np.sin(0.5 * np.pi * t))


def s2_monopole_dataset(n: int = 65, half_width: float = 2.0, blend: float = 0.5) -> Dataset:
    """Degree-1 line bundle on the sphere, charts N and S with z_S = 1 / z_N.

    A = (x dy - y dx) / (1 + r^2) in both charts, w = -i A, and
    g_NS = exp(i theta_N).  Grid samples coincide under z -> 1/z only on
    the unit circle at (+-1, 0) and (0, +-1), which is all the overlap
    matching holds.
    """
    h = 2 * half_width / (n - 1)
    charts = [grid_chart(cid, (n, n), (h, h), (-half_width, -half_width)) for cid in ("N", "S")]
    ch = charts[0]
    r2 = np.sum(ch.coords**2, axis=1)
    on_circle = np.flatnonzero(np.isclose(r2, 1.0, atol=1e-12))
    # z_S = 1/z_N = conj(z_N) on |z| = 1
    x, y = ch.coords[on_circle].T
    target = np.stack([x, -y], axis=1)
    lookup = {tuple(np.round(p, 12)): k for k, p in enumerate(charts[1].coords)}
    idx_s = np.array([lookup[tuple(np.round(p, 12))] for p in target])
    zs = target[:, 0] + 1j * target[:, 1]
    fp = -1.0 / zs**2                       # d z_N / d z_S
    jac = np.stack([np.stack([fp.real, -fp.imag], 1), np.stack([fp.imag, fp.real], 1)], 1)
    ov = Overlap(0, 1, on_circle, idx_s, np.arange(on_circle.size), jac)
    cov = Cover(charts, {(0, 1): ov})
    theta = np.arctan2(y, x)
    chain = TransitionFamily(cov, 1, {(0, 1): np.exp(1j * theta)[:, None, None]}, "monopole")
    conn = []
    for c in charts:
        cx, cy = c.coords.T
        den = 1 + cx**2 + cy**2
        w = np.zeros((c.size, 2, 1, 1), dtype=complex)
        w[:, 0, 0, 0] = -1j * (-cy / den)
        w[:, 1, 0, 0] = -1j * (cx / den)
        conn.append(w)
    weights = {}
    for k, c in enumerate(charts):
        r = np.sqrt(np.sum(c.coords**2, axis=1))
        with np.errstate(divide="ignore"):
            weights[k] = _chi(np.log(np.maximum(r, 1e-300)), blend)
    parts = {"radial": PartitionOfUnity(weights, conforming=False)}
    return Dataset("s2_monopole", cov, chain, Band.trivial(1), FiberSpec(1, True, "line"),
                   description=f"monopole line bundle, two stereographic {n}x{n} charts on "
                               f"[-{half_width},{half_width}]^2",
                   connection=ConnectionData(cov, conn, 1), partitions=parts,
                   expect={"chern": [1.0, 1e-3], "connection": "unaligned"}, tolerances={"connection_C": 10.0})


# -- lifting problems -------------------------------------------------------------------

def torus_grid_cover(n: int = 24, arcs: int = 3, overlap: int = 1) -> ProductCover:
    """Flat torus of side 2 pi as a product of arcs; with three arcs per axis it is a good cover."""
    ax = Axis(n, 2 * np.pi / n, 0.0, True, arcs, overlap)
    return product_cover([ax, ax])


def degree_line_chain(pc: ProductCover, d: int) -> TransitionFamily:
    L = 2 * np.pi
    B = 2 * np.pi * d / L**2
    cov = pc.cover
    vals = {}
    for key, ov in cov.overlaps.items():
        dx = pc.offsets[key][:, 0]
        yj = cov.charts[key[1]].coords[ov.idx_j, 1]
        vals[key] = np.exp(1j * B * dx * yj)[:, None, None]
    return TransitionFamily(cov, 1, vals, f"degree {d}")


def t2_square_lift_dataset(d: int = 1, n: int = 24) -> Dataset:
    """Square-root lifting of a degree-d circle bundle on the torus.

    1 -> Z/2 -> U(1) -> U(1) with pi(z) = z^2, W = C^2, r(z) = diag(z, z^2)
    and f the second coordinate.  The band acts as diag(-1, 1).
    """
    pc = torus_grid_cover(n)
    base = degree_line_chain(pc, d)
    # first W-coordinate 1 everywhere, base part 0: f(s_i) glues, s_i cannot
    attempt = [np.column_stack([np.ones(ch.size), np.zeros(ch.size)]).astype(complex) for ch in pc.cover.charts]
    return Dataset(f"t2_square_lift_d{d}", pc.cover, base, Band.trivial(1), FiberSpec(1, True, "line"),
                   description=f"square-root lifting problem for a degree {d} circle bundle on the torus, "
                               "3x3 arc cover",
                   lifting="square_map", sections={"lift_attempt": attempt},
                   expect={"cocycle_class": "nontrivial" if d % 2 else "trivial",
                           "defect_sections": {"lift_attempt": {"nonzero_triple": True if d % 2 else None}}})


def s2_invariant_dataset(n_points: int = 3000) -> Dataset:
    """Spin(2) acting on W = Cl(R^2)^even + R^2 by left multiplication plus rotation.

    The band -1 acts as -1 on the even part and trivially on R^2, so the
    fixed subbundle is the tangent bundle with honest cocycle transitions.
    """
    ds = s2_tangent_dataset(n_points)
    ds.name = "s2_invariant"
    ds.description = "lifting gerbe on W = Cl(R^2)^even + R^2 over tangent frames, fixed rank-2 subbundle"
    ds.lifting = "spin_even_plus_vector"
    ds.expect = {"invariant_rank": 2, "cocycle_class": "trivial"}
    return ds


def square_map_spec(base: TransitionFamily):
    from .gerbe import LiftingProblemSpec

    return LiftingProblemSpec(
        base=base,
        section=lambda m: complex(np.sqrt(complex(m[0, 0]))),
        mul=lambda a, b: a * b,
        band=[1.0 + 0j, -1.0 + 0j],
        band_generator=-1.0 + 0j,
        band_order=2,
        r=lambda z: np.diag([z, z * z]).astype(complex),
        pi=lambda z: np.array([[z * z]], dtype=complex),
        f=lambda w: np.asarray(w)[1:2],
        w_dim=2,
        f_matrix=np.array([[0.0, 1.0]]),
    )


def spin_even_plus_vector_spec(base: TransitionFamily):
    """Lifting SO(2) frames to Spin(2) acting on Cl(R^2)^even + R^2."""
    from . import clifford as cl
    from .gerbe import LiftingProblemSpec

    even = [0, 3]   # blades 1 and e1e2

    def r(g):
        L = cl.left_matrix(g)[np.ix_(even, even)]
        return np.block([[L, np.zeros((2, 2))], [np.zeros((2, 2)), cl.adjoint_matrix(g)]])

    def f(w):
        return np.asarray(w)[2:]

    return LiftingProblemSpec(
        base=base,
        section=lambda m: cl.lift_rotation(np.real(m))[0].value,
        mul=lambda a, b: cl.clifford_mul(a, b),
        band=[cl.scalar(2, 1.0), cl.scalar(2, -1.0)],
        band_generator=cl.scalar(2, -1.0),
        band_order=2,
        r=r,
        pi=lambda g: cl.adjoint_matrix(g),
        f=f,
        w_dim=4,
        f_matrix=np.hstack([np.zeros((2, 2)), np.eye(2)]),
    )


LIFTINGS = {"square_map": square_map_spec, "spin_even_plus_vector": spin_even_plus_vector_spec}


def s2_round_coarse_dataset() -> Dataset:
    return s2_round_dataset(n=32, overlap=2, name="s2_round_coarse")


EXAMPLES = {
    "s1_periodic": lambda: s1_dataset(False),
    "s1_antiperiodic": lambda: s1_dataset(True),
    "t2_flat": lambda: t2_dataset(0),
    **{f"t2_twisted_d{d}": (lambda d=d: t2_dataset(d)) for d in (-2, -1, 1, 2)},
    "s2_round": s2_round_dataset,
    "s2_round_coarse": s2_round_coarse_dataset,
    "s2_half_radius": s2_half_radius_dataset,
    "s2_clutched": s2_clutched_dataset,
    "s2_tangent": s2_tangent_dataset,
    "s2_monopole": s2_monopole_dataset,
    "t2_square_lift_d1": lambda: t2_square_lift_dataset(1),
    "t2_square_lift_d2": lambda: t2_square_lift_dataset(2),
    "s2_invariant": s2_invariant_dataset,
}
