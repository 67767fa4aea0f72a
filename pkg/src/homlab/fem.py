"""P1 finite elements: assembly, Dirichlet elimination, Jacobi-PCG, norms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .domain import Mesh


class SolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


# ------------------------------------------------------------------ geometry


def p1_gradients(mesh: Mesh):
    """Per-triangle areas (nt,) and basis gradients (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # shape-relative degeneracy: graded meshes legitimately carry areas far below 1e-14
    scale = np.max(
        np.stack([np.sum(e1**2, 1), np.sum(e2**2, 1), np.sum((p[:, 2] - p[:, 1]) ** 2, 1)]), axis=0
    )
    bad = np.abs(det) < 2e-14 * scale
    if np.any(bad):
        raise ValueError(f"{int(bad.sum())} degenerate triangles (area < 1e-14 relative)")
    inv = np.empty((len(det), 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    # grad(lambda_1), grad(lambda_2) are the rows of inv; grad(lambda_0) = -(sum)
    g = np.empty((len(det), 3, 2))
    g[:, 1] = inv[:, 0]
    g[:, 2] = inv[:, 1]
    g[:, 0] = -g[:, 1] - g[:, 2]
    return 0.5 * det, g


def gradient(mesh: Mesh, u) -> np.ndarray:
    """Piecewise-constant gradient (nt, 2) of a nodal field."""
    _, g = p1_gradients(mesh)
    return np.einsum("tij,ti->tj", g, np.asarray(u, dtype=float)[mesh.triangles])


# ---------------------------------------------------------------- coefficient


@dataclass
class CoefficientField:
    """Piecewise-constant matrix field A, one 2x2 block per triangle."""

    values: np.ndarray

    @classmethod
    def constant(cls, mesh: Mesh, matrix=((1.0, 0.0), (0.0, 1.0))) -> "CoefficientField":
        a = np.asarray(matrix, dtype=float)
        return cls(np.broadcast_to(a, (mesh.nt, 2, 2)).copy())

    @classmethod
    def identity(cls, mesh: Mesh, scale: float = 1.0) -> "CoefficientField":
        return cls.constant(mesh, scale * np.eye(2))

    @classmethod
    def from_function(cls, mesh: Mesh, fn: Callable) -> "CoefficientField":
        """``fn(x, y) -> 2x2`` sampled at triangle centroids."""
        c = mesh.vertices[mesh.triangles].mean(axis=1)
        return cls(np.array([np.asarray(fn(x, y), dtype=float) for x, y in c]))

    @property
    def alpha(self) -> float:
        sym = 0.5 * (self.values + np.swapaxes(self.values, 1, 2))
        return float(np.min(np.linalg.eigvalsh(sym)))

    @property
    def bound(self) -> float:
        return float(np.max(np.linalg.norm(self.values, ord=2, axis=(1, 2))))

    def transposed(self) -> "CoefficientField":
        return CoefficientField(np.swapaxes(self.values, 1, 2).copy())

    def check_coercive(self) -> float:
        a = self.alpha
        if not a > 0:
            raise ValueError(f"coefficient field is not coercive (alpha = {a:.3g})")
        return a


def _coef(mesh, A):
    if A is None:
        return np.broadcast_to(np.eye(2), (mesh.nt, 2, 2))
    if isinstance(A, CoefficientField):
        v = A.values
    else:
        v = np.asarray(A, dtype=float)
        if v.shape == (2, 2):
            v = np.broadcast_to(v, (mesh.nt, 2, 2))
    if v.shape != (mesh.nt, 2, 2):
        raise ValueError("coefficient field does not match the mesh")
    return v


def _scatter(mesh, local):
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.nv, mesh.nv)).tocsr()


# ------------------------------------------------------------------ assembly


def element_stiffness(mesh: Mesh, A=None, transpose: bool = False) -> np.ndarray:
    area, g = p1_gradients(mesh)
    a = _coef(mesh, A)
    if transpose:
        a = np.swapaxes(a, 1, 2)
    # K[i, j] = int A grad(phi_j) . grad(phi_i)
    return area[:, None, None] * np.einsum("tik,tkl,tjl->tij", g, a, g)


def assemble_stiffness(mesh: Mesh, A=None, transpose: bool = False) -> sp.csr_matrix:
    """Exact P1 stiffness for piecewise-constant A (use ``transpose`` for the adjoint form)."""
    if isinstance(A, CoefficientField):
        A.check_coercive()
    return _scatter(mesh, element_stiffness(mesh, A, transpose))


def assemble_weighted_mass(mesh: Mesh, weight=None, lumped: bool = False) -> sp.csr_matrix:
    """Mass matrix with a nonnegative per-triangle weight."""
    area, _ = p1_gradients(mesh)
    w = np.ones(mesh.nt) if weight is None else np.broadcast_to(np.asarray(weight, float), (mesh.nt,))
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("mass weight must be finite and nonnegative")
    aw = area * w
    if lumped:
        diag = np.zeros(mesh.nv)
        np.add.at(diag, mesh.triangles.ravel(), np.repeat(aw / 3.0, 3))
        return sp.diags(diag).tocsr()
    local = aw[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh, local)


def lumped_weights(mesh: Mesh, mask=None) -> np.ndarray:
    """Vertex quadrature weights sum(|T|/3) over the triangles selected by ``mask``."""
    area = mesh.areas()
    if mask is not None:
        area = np.where(mask, area, 0.0)
    out = np.zeros(mesh.nv)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(area / 3.0, 3))
    return out


def assemble_load(mesh: Mesh, f, lumped: bool = False) -> np.ndarray:
    """Load vector int f phi_i.

    Per-vertex ``f`` is integrated exactly as a P1 field (or by vertex
    quadrature when ``lumped``); per-triangle ``f`` is treated as piecewise
    constant.  A scalar is broadcast to the vertices.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        f = np.full(mesh.nv, float(f))
    if not np.all(np.isfinite(f)):
        raise ValueError("load values must be finite")
    if f.shape == (mesh.nv,):
        if lumped:
            return lumped_weights(mesh) * f
        return assemble_weighted_mass(mesh) @ f
    if f.shape == (mesh.nt,):
        area = mesh.areas()
        out = np.zeros(mesh.nv)
        np.add.at(out, mesh.triangles.ravel(), np.repeat(area * f / 3.0, 3))
        return out
    raise ValueError(f"load of shape {f.shape} matches neither vertices nor triangles")


# ----------------------------------------------------------- constraints/solve


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n: int

    def expand(self, x_free) -> np.ndarray:
        u = np.empty(self.n)
        u[self.free] = x_free
        u[self.fixed] = self.fixed_values
        return u


def constrain(matrix, rhs, constrained, values=0.0) -> SparseSystem:
    """Eliminate Dirichlet nodes.

    ``constrained`` is either a dict node -> value or an index array (then
    ``values`` gives the prescribed values, scalar or per node).
    """
    matrix = sp.csr_matrix(matrix)
    n = matrix.shape[0]
    if not isinstance(constrained, dict):
        idx = np.asarray(constrained, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        constrained = dict(zip(idx.tolist(), vals.tolist()))
    fixed = np.array(sorted(constrained), dtype=np.int64)
    vals = np.array([constrained[i] for i in fixed], dtype=float)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    if free.size == 0:
        raise ValueError("no free nodes left after applying constraints")
    rhs = np.asarray(rhs, dtype=float)
    kff = matrix[free][:, free].tocsr()
    kfc = matrix[free][:, fixed]
    b = rhs[free] - kfc @ vals
    return SparseSystem(kff, b, free, fixed, vals, n)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)


def solve_spd(system, rhs=None, rtol: float = 1e-10, x0=None, maxiter: int | None = None,
              full_output: bool = False):
    """Jacobi-preconditioned conjugate gradients.

    Accepts a ``SparseSystem`` (returns the expanded nodal vector) or a bare
    matrix plus ``rhs``.  Stops when ||r|| <= rtol * ||b||.
    """
    if isinstance(system, SparseSystem):
        A, b = system.matrix, system.rhs
        if x0 is not None and len(x0) == system.n:
            x0 = np.asarray(x0, dtype=float)[system.free]
    else:
        A, b = system, np.asarray(rhs, dtype=float)
    A = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
    n = b.shape[0]
    maxiter = maxiter or max(1000, 10 * n)
    diag = A.diagonal() if sp.issparse(A) else np.diag(A).copy()
    if np.any(diag <= 0):
        raise SolverError("matrix has a nonpositive diagonal entry; not SPD")
    minv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    history = []
    if bnorm == 0.0:
        x[:] = 0.0
        res = CGResult(x, 0, [0.0])
        return _finish(system, res, full_output)
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = r @ z
    rel = np.linalg.norm(r) / bnorm
    history.append(rel)
    it = 0
    while rel > rtol:
        if it >= maxiter:
            raise SolverError(f"CG did not converge in {maxiter} iterations (rel. residual {rel:.3e})",
                              history)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("nonpositive curvature encountered; matrix not SPD", history)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if it % 50 == 0:
            r = b - A @ x  # guard against drift of the recursive residual
        rel = np.linalg.norm(r) / bnorm
        history.append(rel)
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return _finish(system, CGResult(x, it, history), full_output)


def _finish(system, res, full_output):
    if isinstance(system, SparseSystem):
        res.x = system.expand(res.x)
    return res if full_output else res.x


# ------------------------------------------------------------------- norms


def _same(mesh, *us):
    for u in us:
        if np.shape(u) != (mesh.nv,):
            raise ValueError("nodal vector does not match the mesh")


def norm_l2(mesh: Mesh, u, mask=None) -> float:
    """Exact L2 norm of a P1 field (optionally restricted to triangles in ``mask``)."""
    _same(mesh, u)
    M = assemble_weighted_mass(mesh, None if mask is None else np.asarray(mask, float))
    u = np.asarray(u, float)
    return float(np.sqrt(max(u @ (M @ u), 0.0)))


def seminorm_h1(mesh: Mesh, u, mask=None) -> float:
    _same(mesh, u)
    area, _ = p1_gradients(mesh)
    du = gradient(mesh, u)
    w = area if mask is None else area * np.asarray(mask, float)
    return float(np.sqrt(np.sum(w * np.sum(du**2, axis=1))))


def energy_pair(mesh: Mesh, u, v, A=None) -> float:
    """int A Du . Dv."""
    _same(mesh, u, v)
    area, _ = p1_gradients(mesh)
    a = _coef(mesh, A)
    du, dv = gradient(mesh, u), gradient(mesh, v)
    return float(np.sum(area * np.einsum("tk,tkl,tl->t", dv, a, du)))


# ------------------------------------------------------------------ fields


@dataclass
class FeFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        _same(self.mesh, self.values)

    @classmethod
    def interpolate(cls, mesh: Mesh, fn: Callable) -> "FeFunction":
        return cls(mesh, fn(mesh.vertices[:, 0], mesh.vertices[:, 1]))

    def l2(self) -> float:
        return norm_l2(self.mesh, self.values)

    def h1(self) -> float:
        return seminorm_h1(self.mesh, self.values)

    def save_xyz(self, path) -> None:
        data = np.column_stack([self.mesh.vertices, self.values])
        np.savetxt(path, data, fmt="%.17g")

    def save_triangle_csv(self, path) -> None:
        """Triangle soup for plotting: one row per triangle with its three (x, y, value)."""
        T = self.mesh.triangles
        p = self.mesh.vertices[T]
        v = self.values[T]
        cols = [np.arange(len(T))]
        header = ["tri"]
        for k in range(3):
            cols += [p[:, k, 0], p[:, k, 1], v[:, k]]
            header += [f"x{k}", f"y{k}", f"v{k}"]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
                   comments="", fmt="%.17g")


# degree-5 Dunavant rule on the reference triangle (barycentric points, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_QP = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_QW = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def error_norms(mesh: Mesh, u, exact: Callable, exact_grad: Callable | None = None):
    """(L2 error, H1-seminorm error) of a P1 field against a smooth function, by 7-point quadrature."""
    _same(mesh, u)
    area, g = p1_gradients(mesh)
    p = mesh.vertices[mesh.triangles]
    uv = np.asarray(u, float)[mesh.triangles]
    xq = np.einsum("qk,tkd->tqd", _QP, p)
    uh = np.einsum("qk,tk->tq", _QP, uv)
    ue = exact(xq[..., 0], xq[..., 1])
    l2 = np.sqrt(np.sum(area[:, None] * _QW[None, :] * (uh - ue) ** 2))
    if exact_grad is None:
        return float(l2), None
    duh = np.einsum("tij,ti->tj", g, uv)
    gx, gy = exact_grad(xq[..., 0], xq[..., 1])
    h1 = np.sqrt(np.sum(area[:, None] * _QW[None, :] * ((duh[:, None, 0] - gx) ** 2 + (duh[:, None, 1] - gy) ** 2)))
    return float(l2), float(h1)


def function_load(mesh: Mesh, fn: Callable, weights=None) -> np.ndarray:
    """Load vector int f phi_i for a smooth ``fn(x, y)`` by 7-point quadrature.

    ``weights`` overrides the rule's weights (used for fault injection).
    """
    qw = _QW if weights is None else np.asarray(weights, float)
    area = mesh.areas()
    p = mesh.vertices[mesh.triangles]
    xq = np.einsum("qk,tkd->tqd", _QP, p)
    fq = fn(xq[..., 0], xq[..., 1])
    loc = area[:, None] * np.einsum("q,tq,qk->tk", qw, fq, _QP)
    out = np.zeros(mesh.nv)
    np.add.at(out, mesh.triangles.ravel(), loc.ravel())
    return out


def manufactured_study(sizes=(8, 16, 32), weights=None):
    """P1 errors for -lap u = 2 pi^2 sin(pi x) sin(pi y) on the unit square.

    Returns a list of (h, L2 error, H1-seminorm error).
    """
    from .domain import plain_mesh

    pi = np.pi
    exact = lambda x, y: np.sin(pi * x) * np.sin(pi * y)
    grad = lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y))
    rows = []
    for n in sizes:
        mesh = plain_mesh(target_h=1.0 / n)
        K = assemble_stiffness(mesh)
        b = function_load(mesh, lambda x, y: 2 * pi**2 * exact(x, y), weights)
        u = solve_spd(constrain(K, b, mesh.boundary_nodes()), rtol=1e-12)
        rows.append((1.0 / n, *error_norms(mesh, u, exact, grad)))
    return rows
