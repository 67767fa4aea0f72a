"""Perforated geometry and a single conforming P1 mesh of the closed domain.

The domain is an axis-aligned rectangle partitioned into lattice cells of side
2*eps anchored at its lower-left corner.  A hole of radius ``radius_for(eps)``
sits at the centre of every full cell, so holes lie on the vertices of the
(shifted) lattice of cubes of size 2*eps.  Hole interiors are meshed and
marked; problems on the perforated domain are posed by constraining the hole
nodes, which turns extension by zero into masking.

Mesh layout
-----------
Cells with a hole are meshed as an O-grid: ``m`` rays from the centre cross a
regular m-gon for the hole boundary, log-graded rings up to radius eps, then a
transition fan out to the cell square.  Everything else is a tensor grid whose
lines, inside hole columns/rows, are the ray end points on the cell edges, so
the two parts share nodes exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

INTERIOR = 0
OUTER_BOUNDARY = 1
HOLE_BOUNDARY = 2
HOLE_INTERIOR = 3

MARKER_NAMES = {
    INTERIOR: "interior",
    OUTER_BOUNDARY: "outer_boundary",
    HOLE_BOUNDARY: "hole_boundary",
    HOLE_INTERIOR: "hole_interior",
}


class GeometryError(ValueError):
    """Raised when the lattice parameters violate the geometric framework."""


class MeshError(RuntimeError):
    """Raised when a mesh cannot be built within the requested quality bounds."""


@dataclass(frozen=True)
class LatticeSpec:
    epsilon: float
    c0: float = 1.0
    dim: int = 2
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    perforate: bool = True

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise GeometryError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.c0 > 0 and math.isfinite(self.c0)):
            raise GeometryError(f"c0 must be positive, got {self.c0}")
        if self.dim < 2:
            raise GeometryError("dimension must be at least 2")
        x0, y0, x1, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(f"degenerate domain {self.domain}")

    @property
    def radius(self) -> float:
        return radius_for(self.epsilon, self.c0, self.dim)

    @property
    def cell_side(self) -> float:
        return 2.0 * self.epsilon

    def cell_shape(self) -> tuple[int, int]:
        x0, y0, x1, y1 = self.domain
        side = self.cell_side
        ncx = max(1, math.ceil((x1 - x0) / side - 1e-9))
        ncy = max(1, math.ceil((y1 - y0) / side - 1e-9))
        return ncx, ncy


@dataclass(frozen=True)
class Hole:
    center: tuple
    radius: float
    cell: tuple
    polygon_order: int = 32


@dataclass(frozen=True)
class MeshParams:
    target_h: float = 0.05
    grading_ratio: float = 1.25
    polygon_order: int = 32
    min_angle: float = 0.2  # degrees

    def __post_init__(self):
        if not self.target_h > 0:
            raise ValueError("target_h must be positive")
        if not (1.0 < self.grading_ratio <= 4.0):
            raise ValueError(f"grading_ratio must lie in (1, 4], got {self.grading_ratio}")
        if self.polygon_order < 16:
            raise ValueError("polygon_order must be at least 16")
        if self.min_angle < 0:
            raise ValueError("min_angle must be nonnegative")


@dataclass
class HoleRings:
    """Node bookkeeping for one hole: ``nodes[i, j]`` is ring i, ray j."""

    hole: Hole
    radii: np.ndarray
    nodes: np.ndarray
    center_node: int
    polygon_order: int

    @property
    def ring_count(self) -> int:
        return len(self.radii) - 1


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_marker: np.ndarray
    triangle_cell: np.ndarray
    triangle_in_hole: np.ndarray
    cell_shape: tuple | None = None
    holes: list = field(default_factory=list)
    rings: list = field(default_factory=list)

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def nt(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def hole_nodes(self) -> np.ndarray:
        return np.flatnonzero(
            (self.vertex_marker == HOLE_BOUNDARY) | (self.vertex_marker == HOLE_INTERIOR)
        )

    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_marker == OUTER_BOUNDARY)

    def perforated_constraints(self) -> np.ndarray:
        """Nodes carrying the homogeneous Dirichlet condition of the eps-problem."""
        return np.flatnonzero(self.vertex_marker != INTERIOR)

    def check(self, min_angle: float = 0.0) -> None:
        """Structural checks: orientation, conformity, hole edges, angles."""
        a = self.areas()
        if np.any(a <= 0):
            raise MeshError(f"{int(np.sum(a <= 0))} triangles with nonpositive orientation")
        edges = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        bnd = uniq[counts == 1]
        on_outer = np.all(self.vertex_marker[bnd] == OUTER_BOUNDARY, axis=1)
        if not np.all(on_outer):
            raise MeshError(f"{int(np.sum(~on_outer))} hanging edges inside the domain")
        edge_set = {tuple(e) for e in uniq}
        for hr in self.rings:
            ring0 = hr.nodes[0]
            m = len(ring0)
            for j in range(m):
                e = tuple(sorted((int(ring0[j]), int(ring0[(j + 1) % m]))))
                if e not in edge_set:
                    raise MeshError("hole polygon edge missing from the mesh")
        if min_angle > 0:
            ang = self.min_angle_deg()
            if ang < min_angle:
                raise MeshError(
                    f"minimum angle {ang:.3g} deg below bound {min_angle} deg "
                    f"(nv={self.nv}, nt={self.nt})"
                )

    def min_angle_deg(self) -> float:
        p = self.vertices[self.triangles]
        best = np.inf
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            best = min(best, float(np.min(np.degrees(np.arccos(np.clip(c, -1, 1))))))
        return best

    def cell_index(self, ix: int, iy: int) -> int:
        return ix + iy * self.cell_shape[0]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"{self.nv} {self.nt}\n")
            for (x, y), mk in zip(self.vertices, self.vertex_marker):
                fh.write(f"{float(x)!r} {float(y)!r} {int(mk)}\n")
            for (i, j, k), c, h in zip(self.triangles, self.triangle_cell, self.triangle_in_hole):
                fh.write(f"{i} {j} {k} {int(c)} {int(bool(h))}\n")

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path) as fh:
            nv, nt = (int(t) for t in fh.readline().split())
            vdata = np.loadtxt(fh, max_rows=nv, ndmin=2)
            tdata = np.loadtxt(fh, max_rows=nt, dtype=np.int64, ndmin=2)
        return cls(
            vertices=vdata[:, :2].copy(),
            triangles=tdata[:, :3].copy(),
            vertex_marker=vdata[:, 2].astype(np.int8),
            triangle_cell=tdata[:, 3].copy(),
            triangle_in_hole=tdata[:, 4].astype(bool),
        )


def radius_for(epsilon: float, c0: float, dim: int = 2) -> float:
    """Hole radius of the model example: c0*eps**(N/(N-2)) for N >= 3, exp(-c0/eps**2) for N = 2."""
    if dim < 2:
        raise GeometryError("dimension must be at least 2")
    if not (epsilon > 0 and c0 > 0):
        raise GeometryError("epsilon and c0 must be positive")
    if dim == 2:
        return math.exp(-c0 / epsilon**2)
    return c0 * epsilon ** (dim / (dim - 2))


def place_holes(spec: LatticeSpec, polygon_order: int = 32) -> list[Hole]:
    """One hole at the centre of every lattice cell that lies fully inside the domain.

    Cells clipped by the domain boundary carry no hole, so that the corrector
    can be built cell by cell.
    """
    r = spec.radius
    if r >= spec.epsilon:
        raise GeometryError(f"hole radius {r:.4g} >= epsilon {spec.epsilon:.4g}")
    if not spec.perforate:
        return []
    x0, y0, x1, y1 = spec.domain
    side = spec.cell_side
    ncx, ncy = spec.cell_shape()
    tol = 1e-12 * max(1.0, x1 - x0, y1 - y0)
    holes = []
    for iy in range(ncy):
        for ix in range(ncx):
            if x0 + side * (ix + 1) > x1 + tol or y0 + side * (iy + 1) > y1 + tol:
                continue
            c = (x0 + side * ix + spec.epsilon, y0 + side * iy + spec.epsilon)
            holes.append(Hole(center=c, radius=r, cell=(ix, iy), polygon_order=polygon_order))
    return holes


def removed_measure(spec: LatticeSpec, polygon_order: int | None = None) -> float:
    """Total hole area; disk area by default, inscribed m-gon area if ``polygon_order`` is given."""
    holes = place_holes(spec)
    r = spec.radius
    if polygon_order is None:
        return len(holes) * math.pi * r * r
    m = polygon_order
    return len(holes) * 0.5 * m * r * r * math.sin(2 * math.pi / m)


def mask_to_perforated(u: np.ndarray, mesh: Mesh) -> np.ndarray:
    """Copy of the nodal vector with all hole nodes set to zero."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.nv,):
        raise ValueError(f"nodal vector of length {u.shape} does not match mesh with {mesh.nv} vertices")
    out = u.copy()
    out[mesh.hole_nodes()] = 0.0
    return out


# --------------------------------------------------------------------- meshing


def _uniform_lines(a: float, b: float, h: float) -> list[float]:
    n = max(1, math.ceil((b - a) / h - 1e-9))
    return [a + (b - a) * k / n for k in range(n + 1)]


def _effective_order(params: MeshParams, eps: float) -> int:
    # ray end points must be <= target_h apart along the cell edges (spacing peaks at 4*pi*eps/m)
    m = max(params.polygon_order, math.ceil(4 * math.pi * eps / params.target_h))
    return 8 * math.ceil(m / 8)


def ring_radii(r: float, outer: float, ratio: float) -> np.ndarray:
    """Geometric radii from ``r`` to ``outer``, consecutive ratio at most ``ratio``."""
    n = max(1, math.ceil(math.log(outer / r) / math.log(ratio) - 1e-12))
    radii = r * (outer / r) ** (np.arange(n + 1) / n)
    radii[0], radii[-1] = r, outer
    return radii


def _axis_lines(lo, hi, side, eps, ncells, hole_cols, pattern, h):
    """Grid lines along one axis; returns (coords, first-line index of every cell)."""
    coords: list[float] = []
    starts = []
    for i in range(ncells):
        a = lo + side * i
        b = min(lo + side * (i + 1), hi)
        if i == ncells - 1:
            b = hi
        starts.append(len(coords))
        if i in hole_cols:
            seg = [a] + [a + eps * (1.0 + p) for p in pattern[1:-1]] + [b]
        else:
            seg = _uniform_lines(a, b, h)
        coords.extend(seg[:-1])
    coords.append(hi)
    starts.append(len(coords) - 1)
    return np.array(coords), starts


def _shorter_diagonal_zip(P, Q, pts):
    """Triangulate the strip between two point chains (index lists) sharing a start side."""
    tris = []
    i = k = 0
    while i < len(P) - 1 or k < len(Q) - 1:
        if i == len(P) - 1:
            tris.append((P[i], Q[k], Q[k + 1]))
            k += 1
        elif k == len(Q) - 1:
            tris.append((P[i], Q[k], P[i + 1]))
            i += 1
        else:
            d_p = np.sum((pts[P[i + 1]] - pts[Q[k]]) ** 2)
            d_q = np.sum((pts[P[i]] - pts[Q[k + 1]]) ** 2)
            if d_p <= d_q:
                tris.append((P[i], Q[k], P[i + 1]))
                i += 1
            else:
                tris.append((P[i], Q[k], Q[k + 1]))
                k += 1
    return tris


def _split_quad(a, b, c, d, pts):
    """Split quad a-b-c-d (cyclic) along the diagonal satisfying the Delaunay angle test."""

    def angle(p, q, s):
        u, v = pts[q] - pts[p], pts[s] - pts[p]
        return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u @ v)

    # diagonal a-c is opposite the angles at b and d
    if angle(b, a, c) + angle(d, c, a) <= math.pi + 1e-12:
        return [(a, b, c), (a, c, d)]
    return [(a, b, d), (b, c, d)]


def build_mesh(spec: LatticeSpec, params: MeshParams | None = None) -> Mesh:
    """Deterministic conforming mesh of the closed domain resolving every hole."""
    params = params or MeshParams()
    holes = place_holes(spec, params.polygon_order)
    eps = spec.epsilon
    x0, y0, x1, y1 = spec.domain
    side = spec.cell_side
    h = params.target_h
    ncx, ncy = spec.cell_shape() if holes else (1, 1)
    if not holes:
        side = max(x1 - x0, y1 - y0)

    m = _effective_order(params, eps) if holes else 0
    q8, q4 = m // 8, m // 4
    pattern = [math.tan(2 * math.pi * (k - q8) / m) for k in range(q4 + 1)] if holes else []
    if pattern:
        pattern[0], pattern[q8], pattern[-1] = -1.0, 0.0, 1.0

    hole_cells = {hl.cell: hl for hl in holes}
    hole_cols = {c[0] for c in hole_cells}
    hole_rows = {c[1] for c in hole_cells}
    X, xs = _axis_lines(x0, x1, side, eps, ncx, hole_cols, pattern, h)
    Y, ys = _axis_lines(y0, y1, side, eps, ncy, hole_rows, pattern, h)
    nx, ny = len(X), len(Y)

    # tensor nodes are created lazily so that nodes strictly inside hole cells are skipped
    pts: list = []
    marker: list = []
    tensor_id = -np.ones((nx, ny), dtype=np.int64)

    def tnode(ix, iy):
        if tensor_id[ix, iy] < 0:
            tensor_id[ix, iy] = len(pts)
            pts.append((X[ix], Y[iy]))
            on_outer = ix in (0, nx - 1) or iy in (0, ny - 1)
            marker.append(OUTER_BOUNDARY if on_outer else INTERIOR)
        return int(tensor_id[ix, iy])

    def new_node(p, mk):
        pts.append((float(p[0]), float(p[1])))
        marker.append(mk)
        return len(pts) - 1

    in_hole_cell = np.zeros((nx - 1, ny - 1), dtype=bool)
    for (cx, cy) in hole_cells:
        in_hole_cell[xs[cx]:xs[cx + 1], ys[cy]:ys[cy + 1]] = True

    tris: list = []
    tri_hole: list = []
    tri_cell: list = []

    for iy in range(ny - 1):
        for ix in range(nx - 1):
            if in_hole_cell[ix, iy]:
                continue
            a, b = tnode(ix, iy), tnode(ix + 1, iy)
            c, d = tnode(ix + 1, iy + 1), tnode(ix, iy + 1)
            tris.extend([(a, b, c), (a, c, d)])
            tri_hole.extend([False, False])

    ring_info = []
    for (cx, cy), hole in sorted(hole_cells.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        ccx, ccy = hole.center
        radii = ring_radii(hole.radius, eps, params.grading_ratio)
        n = len(radii) - 1
        theta = 2 * math.pi * np.arange(m) / m
        ix0, ix1 = xs[cx], xs[cx + 1]
        iy0, iy1 = ys[cy], ys[cy + 1]

        def boundary_index(j):
            t = ((j + q8) % m) - q8  # j in [-q8, m - q8)
            if -q8 <= t <= q8:
                return ix1, iy0 + q8 + t
            if t <= 3 * q8:
                s = t - 2 * q8
                return ix0 + q8 - s, iy1
            if t <= 5 * q8:
                s = t - 4 * q8
                return ix0, iy0 + q8 - s
            s = t - 6 * q8
            return ix0 + q8 + s, iy0

        center = new_node(hole.center, HOLE_INTERIOR)
        ring_nodes = np.empty((n + 1, m), dtype=np.int64)
        chains = []
        for j in range(m):
            bix, biy = boundary_index(j)
            bpt = np.array([X[bix], Y[biy]])
            direction = np.array([math.cos(theta[j]), math.sin(theta[j])])
            degenerate = j % (2 * q8) == 0  # ray hits the cell edge at its tangency point
            for i in range(n + 1):
                if i == n and degenerate:
                    ring_nodes[i, j] = tnode(bix, biy)
                    continue
                mk = HOLE_BOUNDARY if i == 0 else INTERIOR
                ring_nodes[i, j] = new_node(
                    (ccx + radii[i] * direction[0], ccy + radii[i] * direction[1]), mk
                )
            chain = [int(ring_nodes[n, j])]
            if not degenerate:
                rp = np.array(pts[chain[0]])
                gap = float(np.linalg.norm(bpt - rp))
                nl = max(1, math.ceil(gap / min(h, 2 * math.pi * eps / m) - 1e-9))
                for l in range(1, nl):
                    chain.append(new_node(rp + (bpt - rp) * (l / nl), INTERIOR))
                chain.append(tnode(bix, biy))
            chains.append(chain)

        P = np.asarray(pts)
        for j in range(m):
            jn = (j + 1) % m
            tris.append((center, int(ring_nodes[0, j]), int(ring_nodes[0, jn])))
            tri_hole.append(True)
            for i in range(n):
                quad = (
                    int(ring_nodes[i, j]), int(ring_nodes[i, jn]),
                    int(ring_nodes[i + 1, jn]), int(ring_nodes[i + 1, j]),
                )
                tris.extend(_split_quad(*quad, P))
                tri_hole.extend([False, False])
            strip = _shorter_diagonal_zip(chains[j], chains[jn], P)
            tris.extend(strip)
            tri_hole.extend([False] * len(strip))
        ring_info.append(
            HoleRings(hole=Hole(hole.center, hole.radius, hole.cell, m), radii=radii,
                      nodes=ring_nodes, center_node=center, polygon_order=m)
        )

    V = np.asarray(pts, dtype=float)
    T = np.asarray(tris, dtype=np.int64)
    keep = (T[:, 0] != T[:, 1]) & (T[:, 1] != T[:, 2]) & (T[:, 0] != T[:, 2])
    T, tri_hole = T[keep], np.asarray(tri_hole, dtype=bool)[keep]
    p = V[T]
    area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = area2 < 0
    T[flip] = T[flip][:, [0, 2, 1]]

    if holes:
        cen = V[T].mean(axis=1)
        cix = np.clip(np.floor((cen[:, 0] - x0) / spec.cell_side).astype(int), 0, ncx - 1)
        ciy = np.clip(np.floor((cen[:, 1] - y0) / spec.cell_side).astype(int), 0, ncy - 1)
        tri_cell_arr = cix + ciy * ncx
        cell_shape = (ncx, ncy)
    else:
        tri_cell_arr = -np.ones(len(T), dtype=np.int64)
        cell_shape = None

    mesh = Mesh(
        vertices=V,
        triangles=T,
        vertex_marker=np.asarray(marker, dtype=np.int8),
        triangle_cell=tri_cell_arr,
        triangle_in_hole=tri_hole,
        cell_shape=cell_shape,
        holes=[hr.hole for hr in ring_info],
        rings=ring_info,
    )
    area = mesh.areas()
    if np.any(area < 1e-300):
        raise MeshError("degenerate triangle produced")
    mesh.check(params.min_angle)
    log.debug("mesh eps=%g: %d vertices, %d triangles, %d holes", eps, mesh.nv, mesh.nt, len(holes))
    return mesh


def plain_mesh(domain=(0.0, 0.0, 1.0, 1.0), target_h: float = 0.05) -> Mesh:
    """Structured mesh of the rectangle without holes."""
    spec = LatticeSpec(epsilon=0.5, c0=1.0, domain=tuple(domain), perforate=False)
    return build_mesh(spec, MeshParams(target_h=target_h))
