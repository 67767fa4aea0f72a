"""Capacitary corrector w, its variant z and the strange-term density.

w is built cell by cell: in every annulus ``r < |x - c| < eps`` it solves the
adjoint-operator Dirichlet problem with w = 0 on the hole and w = 1 on the
outer ring; it is identically 1 elsewhere.  The per-cell energy of w gives the
density of the measure mu^eps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (registers sp.linalg)

from . import fem
from .domain import INTERIOR, Mesh


@dataclass
class CorrectorField:
    mesh: Mesh
    w: np.ndarray
    annuli: list  # (hole radius, outer radius) per hole

    @property
    def hole_nodes(self) -> np.ndarray:
        return self.mesh.hole_nodes()


@dataclass
class MeasureDensity:
    cell_ix: np.ndarray
    cell_iy: np.ndarray
    area: np.ndarray
    energy: np.ndarray
    interior: np.ndarray

    @property
    def density(self) -> np.ndarray:
        return np.where(self.area > 0, self.energy / np.where(self.area > 0, self.area, 1.0), 0.0)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.energy))

    def interior_mean(self) -> float:
        d = self.density[self.interior]
        return float(np.mean(d)) if d.size else 0.0

    def per_triangle(self, mesh: Mesh, cell_shape) -> np.ndarray:
        """Density as a per-triangle weight on ``mesh`` (cells of this density's lattice)."""
        lut = np.zeros(cell_shape[0] * cell_shape[1])
        lut[self.cell_ix + self.cell_iy * cell_shape[0]] = self.density
        return lut[mesh.triangle_cell]

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["cell_ix", "cell_iy", "area", "density", "interior_flag"])
            for row in zip(self.cell_ix, self.cell_iy, self.area, self.density, self.interior):
                wr.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3])), int(row[4])])


@dataclass
class ZField:
    mesh: Mesh
    z: np.ndarray


def analytic_w_profile(rho, r0: float, R: float):
    """Radial harmonic profile (ln rho - ln r0)/(ln R - ln r0), clamped to [0, 1]."""
    if not (0 < r0 < R):
        raise ValueError(f"need 0 < r0 < R, got r0={r0}, R={R}")
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        val = (np.log(np.maximum(rho, 1e-300)) - math.log(r0)) / math.log(R / r0)
    out = np.clip(val, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def annulus_energy(r0: float, R: float) -> float:
    """Dirichlet energy of the radial profile on the annulus r0 < rho < R: 2 pi / ln(R/r0)."""
    return 2.0 * math.pi / math.log(R / r0)


def analytic_mu(dim: int, c0: float) -> float:
    """Strange-term constant of the periodic model example."""
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    if not c0 > 0:
        raise ValueError("c0 must be positive")
    if dim == 2:
        return (2.0 * math.pi / 4.0) / c0
    sphere = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
    return sphere * (dim - 2) / 2.0**dim * c0 ** (dim - 2)


def compute_w(mesh: Mesh, A=None, rtol: float = 1e-12) -> CorrectorField:
    """Cell-local capacitary corrector on the global mesh."""
    w = np.ones(mesh.nv)
    w[mesh.hole_nodes()] = 0.0
    if not mesh.rings:
        return CorrectorField(mesh, w, [])
    local = fem.element_stiffness(mesh, A, transpose=True)
    T = mesh.triangles
    annuli = []
    for hr in mesh.rings:
        nodes = np.unique(hr.nodes)
        in_set = np.zeros(mesh.nv, dtype=bool)
        in_set[nodes] = True
        sel = np.flatnonzero(np.all(in_set[T], axis=1) & ~mesh.triangle_in_hole)
        gl = np.full(mesh.nv, -1)
        gl[nodes] = np.arange(len(nodes))
        lt = gl[T[sel]]
        rows = np.repeat(lt, 3, axis=1).ravel()
        cols = np.tile(lt, (1, 3)).ravel()
        K = sp.coo_matrix((local[sel].ravel(), (rows, cols)), shape=(len(nodes),) * 2).tocsr()
        fixed = {int(gl[i]): 0.0 for i in hr.nodes[0]}
        fixed.update({int(gl[i]): 1.0 for i in hr.nodes[-1]})
        system = fem.constrain(K, np.zeros(len(nodes)), fixed)
        # the adjoint operator may be nonsymmetric; fall back to a direct solve then
        if abs(system.matrix - system.matrix.T).max() <= 1e-14 * abs(system.matrix).max():
            x = fem.solve_spd(system, rtol=rtol)
        else:
            x = system.expand(sp.linalg.spsolve(system.matrix.tocsc(), system.rhs))
        w[nodes] = np.clip(x, 0.0, 1.0)
        annuli.append((hr.hole.radius, float(hr.radii[-1])))
    return CorrectorField(mesh, w, annuli)


def energy_density(mesh: Mesh, w, A=None) -> np.ndarray:
    """Per-triangle energy  |T| * A Dw . Dw."""
    area, _ = fem.p1_gradients(mesh)
    a = fem._coef(mesh, A)
    dw = fem.gradient(mesh, w)
    return area * np.einsum("tk,tkl,tl->t", dw, a, dw)


def mu_density(cw: CorrectorField, A=None) -> MeasureDensity:
    """Cell-wise density of the corrector energy."""
    mesh = cw.mesh
    if mesh.cell_shape is None:
        return MeasureDensity(np.array([0]), np.array([0]), np.array([float(np.sum(mesh.areas()))]),
                              np.array([0.0]), np.array([False]))
    ncx, ncy = mesh.cell_shape
    ncell = ncx * ncy
    e = energy_density(mesh, cw.w, A)
    energy = np.bincount(mesh.triangle_cell, weights=e, minlength=ncell)
    area = np.bincount(mesh.triangle_cell, weights=mesh.areas(), minlength=ncell)
    interior = np.zeros(ncell, dtype=bool)
    for h in mesh.holes:
        interior[h.cell[0] + h.cell[1] * ncx] = True
    idx = np.arange(ncell)
    return MeasureDensity(idx % ncx, idx // ncx, area, energy, interior)


def _domain_free(mesh: Mesh) -> np.ndarray:
    return np.flatnonzero(mesh.vertex_marker != 1)


def discrete_mu(mesh: Mesh, w, A=None) -> np.ndarray:
    """Nodal functional <mu^eps, phi_i> = int tA Dw . D phi_i on the free nodes of the perforated domain.

    Hole nodes carry the part acting on the holes and are zeroed.
    """
    Kt = fem.assemble_stiffness(mesh, A, transpose=True)
    mu = Kt @ w
    mu[mesh.vertex_marker != INTERIOR] = 0.0
    return mu


def w_mu_load(mesh: Mesh, w, A=None, pairing: str = "nodal") -> np.ndarray:
    """Nodal functional <w mu^eps, phi_i> = <mu^eps, w phi_i>.

    ``nodal`` pairs the discrete measure with the interpolant of w phi_i,
    i.e. w_i <mu^eps, phi_i>; this keeps the product structure exact, so that
    w mu^eps = mu^eps wherever w = 1.  ``exact`` integrates
    int tA Dw . D(w phi_i) with the quadratic product taken exactly on each
    triangle, which carries an O(h^2) consistency error.
    """
    if pairing == "nodal":
        return np.asarray(w) * discrete_mu(mesh, w, A)
    if pairing != "exact":
        raise ValueError(f"unknown pairing {pairing!r}")
    area, g = fem.p1_gradients(mesh)
    a = fem._coef(mesh, A)
    w = np.asarray(w, float)
    wt = w[mesh.triangles]
    dw = np.einsum("tij,ti->tj", g, wt)
    flux = np.einsum("tlk,tl->tk", a, dw)  # tA Dw
    wbar = wt.mean(axis=1)
    # int_T (tA Dw).(w D phi_i + phi_i Dw)
    loc = area[:, None] * (wbar[:, None] * np.einsum("tk,tik->ti", flux, g)
                           + (np.einsum("tk,tk->t", flux, dw) / 3.0)[:, None])
    out = np.zeros(mesh.nv)
    np.add.at(out, mesh.triangles.ravel(), loc.ravel())
    out[mesh.vertex_marker == 1] = 0.0
    out[mesh.vertex_marker == 3] = 0.0
    return out


def compute_z(cw: CorrectorField, A=None, pairing: str = "nodal", rtol: float = 1e-12) -> ZField:
    """Solve -div tA Dz = w mu^eps in the perforated domain with z = w on its boundary."""
    mesh = cw.mesh
    if not mesh.rings:
        return ZField(mesh, cw.w.copy())
    Kt = fem.assemble_stiffness(mesh, A, transpose=True)
    b = w_mu_load(mesh, cw.w, A, pairing)
    fixed = mesh.perforated_constraints()
    system = fem.constrain(Kt, b, fixed, cw.w[fixed])
    if abs(system.matrix - system.matrix.T).max() <= 1e-14 * abs(system.matrix).max():
        z = fem.solve_spd(system, rtol=rtol, x0=cw.w)
    else:
        z = system.expand(sp.linalg.spsolve(system.matrix.tocsc(), system.rhs))
    return ZField(mesh, z)


def sandwich_violation(z: ZField, cw: CorrectorField) -> float:
    """max(0, -min z, max(z - w)); zero when 0 <= z <= w nodally."""
    return float(max(0.0, -np.min(z.z), np.max(z.z - cw.w)))


def z_minus_w_h1(z: ZField, cw: CorrectorField) -> float:
    d = z.z - cw.w
    return math.sqrt(fem.seminorm_h1(cw.mesh, d) ** 2 + fem.norm_l2(cw.mesh, d) ** 2)


def pairing_bound_check(cw: CorrectorField, A=None, pairing: str = "nodal") -> float:
    """Ratio of discrete H^-1 norms ||w mu^eps|| / ||mu^eps|| via Riesz solves (1 when mu^eps = 0)."""
    mesh = cw.mesh
    mu = discrete_mu(mesh, cw.w, A)
    wmu = w_mu_load(mesh, cw.w, A, pairing)
    if not np.any(mu):
        return 1.0
    K = fem.assemble_stiffness(mesh)
    free = _domain_free(mesh)
    Kf = K[free][:, free].tocsr()

    def dual_sq(f):
        y = fem.solve_spd(Kf, f[free], rtol=1e-12)
        return float(f[free] @ y)

    return math.sqrt(dual_sq(wmu) / dual_sq(mu))
