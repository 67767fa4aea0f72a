"""Singular semilinear solver and diagnostics.

Solves  -div A Du (+ mu u) = F(x, u),  u >= 0,  u = 0 on constrained nodes,
for sources with an envelope 0 <= F(x, s) <= h(x)/Gamma(s).  The source is
regularised as F(x, max(s, delta)); delta is driven down by continuation and
each delta-step is solved by damped Picard iteration.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem
from .domain import Mesh
from .truncate import g_cut, z_delta

log = logging.getLogger(__name__)

KINDS = ("constant", "power", "oscillating_exp", "composite")


class EnvelopeError(ValueError):
    pass


def _inv_s(s):
    return 1.0 / s


@dataclass
class SingularSource:
    """F(x, s) sampled at mesh vertices.

    Coefficient fields (``f``, ``g``, ``l``, ``h``) are scalars or per-vertex
    arrays.  ``S`` is the decreasing blow-up map of the oscillating term
    (default 1/s).
    """

    kind: str
    h: object = 1.0
    gamma: float = 1.0
    f: object = 0.0
    g: object = 0.0
    l: object = 0.0
    a: float = 2.0
    b: float = 2.0
    S: Callable = _inv_s
    nonincreasing: bool = False

    def __call__(self, s, idx=None):
        """F evaluated at nodal values ``s`` (> 0); ``idx`` selects vertices of array coefficients."""
        s = np.asarray(s, dtype=float)
        pick = (lambda c: c if np.ndim(c) == 0 or idx is None else np.asarray(c)[idx])
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            if self.kind == "constant":
                return np.broadcast_to(pick(self.f), s.shape).astype(float)
            if self.kind == "power":
                return pick(self.h) / s**self.gamma
            out = np.zeros_like(s)
            f, g, l = pick(self.f), pick(self.g), pick(self.l)
            if np.any(f):
                S = self.S(s)
                out = out + f * (self.a + np.sin(S)) * np.exp(S)
            if self.kind == "composite":
                if np.any(g):
                    out = out + g * (self.b + np.sin(1.0 / s)) / s**self.gamma
                out = out + l
            return out

    def Gamma(self, s):
        """Envelope denominator: 0 at 0, strictly increasing."""
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore", divide="ignore"):
            if self.kind == "constant":
                return s / (1.0 + s)
            if self.kind == "power":
                return s**self.gamma
            if self.kind == "oscillating_exp":
                return np.exp(-self.S(np.maximum(s, 1e-300))) / (self.a + 1.0)
            # composite: Gamma = 1 / sum of the term envelopes
            phi = np.ones_like(s)
            if np.any(self.f):
                phi = phi + (self.a + 1.0) * np.exp(self.S(s))
            if np.any(self.g):
                phi = phi + (self.b + 1.0) / s**self.gamma
            return 1.0 / phi

    def envelope_h(self, idx=None):
        if self.kind == "constant":
            c = self.f
        elif self.kind == "power":
            c = self.h
        elif self.kind == "oscillating_exp":
            c = self.f
        else:
            c = np.maximum(np.maximum(self.f, self.g), self.l)
        return c if np.ndim(c) == 0 or idx is None else np.asarray(c)[idx]

    def check_envelope(self, s, values=None, idx=None, rel: float = 1e-12) -> None:
        s = np.asarray(s, float)
        vals = self(s, idx) if values is None else values
        hh = self.envelope_h(idx)
        gam = self.Gamma(s)
        ok = np.isfinite(vals) & (vals >= 0) & (vals * gam <= hh * (1.0 + rel) + 1e-300)
        if not np.all(ok):
            bad = np.flatnonzero(~np.broadcast_to(ok, np.shape(vals)))[:5]
            raise EnvelopeError(f"envelope F <= h/Gamma violated (or F not finite) at samples {bad.tolist()}")

    def to_dict(self) -> dict:
        def plain(c):
            return c if np.ndim(c) == 0 else np.asarray(c).tolist()

        return {"kind": self.kind, "h": plain(self.h), "gamma": self.gamma, "f": plain(self.f),
                "g": plain(self.g), "l": plain(self.l), "a": self.a, "b": self.b}


def make_source(kind: str, **params) -> SingularSource:
    """Build and validate a source.

    power:            F = h / s**gamma
    constant:         F = f
    oscillating_exp:  F = f (a + sin S(s)) exp(S(s))
    composite:        F = f (a + sin S(s)) exp(S(s)) + g (b + sin(1/s)) / s**gamma + l
    """
    if kind not in KINDS:
        raise ValueError(f"unknown source kind {kind!r}; expected one of {KINDS}")
    unknown = set(params) - {"h", "gamma", "f", "g", "l", "a", "b", "S"}
    if unknown:
        raise ValueError(f"unknown source parameters {sorted(unknown)}")
    src = SingularSource(kind=kind, **params)
    if not src.gamma > 0:
        raise ValueError("gamma must be positive")
    if kind in ("oscillating_exp", "composite") and not src.a > 1:
        raise ValueError("a must exceed 1")
    if kind == "composite" and not src.b > 1:
        raise ValueError("b must exceed 1")
    for name in ("h", "f", "g", "l"):
        if np.any(np.asarray(getattr(src, name)) < 0):
            raise ValueError(f"{name} must be nonnegative")
    src.nonincreasing = kind in ("constant", "power")
    # sampled envelope check; the exp term overflows below s ~ 1/700
    lo = 2e-3 if kind in ("oscillating_exp", "composite") and np.any(src.f) else 1e-6
    s = np.logspace(math.log10(lo), 3, 400)
    n = max((np.size(getattr(src, c)) for c in ("h", "f", "g", "l")), default=1)
    for i in range(n if n > 1 else 1):
        src.check_envelope(s, idx=(i if n > 1 else None))
    return src


def regularize(source: SingularSource, delta: float) -> Callable:
    """F_delta(x, s) = F(x, max(s, delta))."""
    if not delta > 0:
        raise ValueError("delta must be positive")

    def F_delta(s, idx=None):
        return source(np.maximum(np.asarray(s, float), delta), idx)

    return F_delta


@dataclass
class SolverParams:
    delta0: float = 1e-1
    delta_factor: float = 0.5
    delta_min: float = 1e-6
    damping: float = 0.5
    inner_rtol: float = 1e-9
    inner_maxit: int = 200
    continuation_rtol: float = 1e-6
    cg_rtol: float = 1e-11

    def __post_init__(self):
        if not (0 < self.delta_min <= self.delta0):
            raise ValueError("need 0 < delta_min <= delta0")
        if not (0 < self.delta_factor < 1):
            raise ValueError("delta_factor must lie in (0, 1)")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.inner_maxit < 1:
            raise ValueError("inner_maxit must be positive")


@dataclass
class StepRecord:
    delta: float
    inner_iters: int
    final_residual: float
    increment: float
    min_u: float
    max_u: float


@dataclass
class SolveTrace:
    steps: list = field(default_factory=list)
    inner_history: list = field(default_factory=list)
    clip_events: int = 0

    @property
    def final_delta(self) -> float:
        return self.steps[-1].delta if self.steps else float("nan")

    def increments(self) -> list:
        return [s.increment for s in self.steps[1:]]

    def eventually_decreasing(self, slack: float = 1e-12) -> bool:
        """Continuation increments are nonincreasing after their maximum."""
        inc = self.increments()
        if len(inc) < 2:
            return True
        k = int(np.argmax(inc))
        tail = inc[k:]
        return all(b <= a + slack for a, b in zip(tail, tail[1:]))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["delta", "inner_iters", "final_residual", "increment", "min_u", "max_u"])
            for s in self.steps:
                wr.writerow([repr(s.delta), s.inner_iters, repr(s.final_residual), repr(s.increment),
                             repr(s.min_u), repr(s.max_u)])


class SemilinearSolver:
    """Holds the assembled operator for repeated solves on one mesh."""

    def __init__(self, mesh: Mesh, A=None, mu=None, constrained=None):
        self.mesh = mesh
        K = fem.assemble_stiffness(mesh, A)
        if mu is not None:
            weight = np.broadcast_to(np.asarray(mu, float), (mesh.nt,))
            K = K + fem.assemble_weighted_mass(mesh, weight, lumped=True)
        self.K = K.tocsr()
        if constrained is None:
            constrained = mesh.boundary_nodes()
        constrained = np.unique(np.asarray(constrained, dtype=np.int64))
        if constrained.size == 0:
            raise ValueError("at least one constrained node is required")
        self.system = fem.constrain(self.K, np.zeros(mesh.nv), constrained)
        self.free = self.system.free
        self.weights = fem.lumped_weights(mesh)
        self.M = fem.assemble_weighted_mass(mesh)

    def rel_l2(self, d, ref) -> float:
        nd = math.sqrt(max(d @ (self.M @ d), 0.0))
        nr = math.sqrt(max(ref @ (self.M @ ref), 0.0))
        if nr == 0.0:
            return 0.0 if nd == 0.0 else math.inf
        return nd / nr

    def load(self, source, delta, u):
        s = np.maximum(u[self.free], delta)
        vals = source(s, self.free)
        if not np.all(np.isfinite(vals)):
            raise EnvelopeError("source evaluation is not finite (overflow); raise delta_min")
        source.check_envelope(s, vals, idx=self.free)
        b = np.zeros(self.mesh.nv)
        b[self.free] = self.weights[self.free] * vals
        return b

    def nonlinear_residual(self, source, delta, u) -> float:
        b = self.load(source, delta, u)[self.free]
        r = (self.K @ u)[self.free] - b
        nb = np.linalg.norm(b)
        return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))

    def picard(self, source, delta, u, params: SolverParams, trace: SolveTrace | None = None,
               maxit: int | None = None):
        theta = params.damping
        maxit = maxit or params.inner_maxit
        v = u.copy()
        incs = []
        growth = 0
        for it in range(1, maxit + 1):
            b = self.load(source, delta, u)
            self.system.rhs = b[self.free]
            v = fem.solve_spd(self.system, rtol=params.cg_rtol, x0=v)
            if np.min(v) < 0:
                if trace is not None and np.min(v) < -1e-12:
                    trace.clip_events += 1
                v = np.maximum(v, 0.0)
            u_new = (1.0 - theta) * u + theta * v
            inc = self.rel_l2(u_new - u, u_new)
            u = u_new
            incs.append(inc)
            if trace is not None:
                trace.inner_history.append((delta, it, inc))
            if inc <= params.inner_rtol:
                return u, it, incs
            growth = growth + 1 if len(incs) > 1 and inc > incs[-2] else 0
            if growth >= 10:
                raise fem.SolverError(f"Picard iteration diverging at delta={delta:g}", incs)
        if maxit < params.inner_maxit:
            return u, maxit, incs
        raise fem.SolverError(
            f"Picard iteration did not converge in {maxit} steps at delta={delta:g} "
            f"(last increment {incs[-1]:.3e})", incs)


def solve_semilinear(mesh: Mesh, A=None, mu=None, source: SingularSource | None = None,
                     params: SolverParams | None = None, constrained_nodes=None, u0=None):
    """Continuation in delta with damped Picard inner iterations.

    ``mu`` is an optional per-triangle density of the zeroth-order measure term.
    Returns the nodal solution (>= 0) and its ``SolveTrace``.
    """
    params = params or SolverParams()
    if source is None:
        raise ValueError("a source is required")
    solver = SemilinearSolver(mesh, A, mu, constrained_nodes)
    return _continuation(solver, source, params, u0)


def _continuation(solver: SemilinearSolver, source, params, u0=None):
    mesh = solver.mesh
    u = np.zeros(mesh.nv) if u0 is None else np.maximum(np.asarray(u0, float), 0.0).copy()
    u[solver.system.fixed] = 0.0
    trace = SolveTrace()
    delta = params.delta0
    prev = None
    while True:
        u, its, incs = solver.picard(source, delta, u, params, trace)
        res = solver.nonlinear_residual(source, delta, u)
        inc = solver.rel_l2(u - prev, u) if prev is not None else float("nan")
        trace.steps.append(StepRecord(delta, its, res, inc, float(u.min()), float(u.max())))
        log.debug("delta=%.3e iters=%d residual=%.2e increment=%.2e", delta, its, res, inc)
        if prev is not None and inc <= params.continuation_rtol:
            break
        nxt = delta * params.delta_factor
        if nxt < params.delta_min * (1 - 1e-12):
            break
        prev = u.copy()
        delta = nxt
    return u, trace


# ---------------------------------------------------------------- diagnostics


def _fraction_above(ut, n):
    """Area fraction of each triangle where the linear interpolant of ``ut`` exceeds n."""
    s = np.sort(ut, axis=1)
    u1, u2, u3 = s[:, 0], s[:, 1], s[:, 2]
    frac = np.zeros(len(ut))
    frac[n <= u1] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = (n >= u2) & (n < u3)
        frac[hi] = ((u3[hi] - n) ** 2 / ((u3[hi] - u1[hi]) * (u3[hi] - u2[hi])))
        lo = (n > u1) & (n < u2)
        frac[lo] = 1.0 - (n - u1[lo]) ** 2 / ((u2[lo] - u1[lo]) * (u3[lo] - u1[lo]))
    return frac


def truncated_energy(mesh: Mesh, u, k: float, A=None) -> float:
    """int A D G_k(u) . D G_k(u) with G_k applied to the P1 field pointwise."""
    area, _ = fem.p1_gradients(mesh)
    du = fem.gradient(mesh, u)
    a = fem._coef(mesh, A)
    frac = _fraction_above(np.asarray(u, float)[mesh.triangles], k)
    return float(np.sum(area * frac * np.einsum("tk,tkl,tl->t", du, a, du)))


def energy_equality_residual(mesh: Mesh, u, source: SingularSource, A=None, n: float = 1.0,
                             constrained_nodes=None) -> float:
    """Relative gap between int A DG_n(u).DG_n(u) and int F(x,u) G_n(u).

    The right side uses the solver's vertex quadrature with G_n applied
    nodally.
    """
    u = np.asarray(u, float)
    lhs = truncated_energy(mesh, u, n, A)
    gn = g_cut(u, n)
    sel = np.flatnonzero(gn > 0)
    if constrained_nodes is not None:
        sel = np.setdiff1d(sel, constrained_nodes)
    w = fem.lumped_weights(mesh)
    rhs = float(np.sum(w[sel] * source(u[sel], sel) * gn[sel])) if sel.size else 0.0
    scale = max(lhs, rhs)
    if scale < 1e-300:
        return 0.0
    return abs(lhs - rhs) / scale


@dataclass
class AprioriProfile:
    rows: list  # (k, ||DG_k u||, Gamma(k), product)
    safety: float = 10.0

    @property
    def products(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    @property
    def bound(self) -> float:
        return self.safety * float(np.min(self.products))

    @property
    def ok(self) -> bool:
        return bool(np.all(self.products <= self.bound * (1 + 1e-12)))


def apriori_profile(mesh: Mesh, u, source: SingularSource, ks, A=None, safety: float = 10.0) -> AprioriProfile:
    """||D G_k(u)||_L2 * Gamma(k) for each level k."""
    rows = []
    for k in ks:
        dg = math.sqrt(truncated_energy(mesh, u, k))
        gam = float(source.Gamma(k))
        rows.append((float(k), dg, gam, dg * gam))
    return AprioriProfile(rows, safety)


def zdelta_mass(mesh: Mesh, u, source: SingularSource, v, delta: float, delta_reg: float | None = None) -> float:
    """Vertex-quadrature value of int F(x,u) Z_delta(u) v over the perforated domain.

    ``v`` should vanish where u is constrained; F is evaluated through the
    regularisation at ``delta_reg`` (the solver's final delta).
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    if np.any(v < 0):
        raise ValueError("v must be nonnegative")
    zd = z_delta(u, delta)
    sel = np.flatnonzero((zd > 0) & (v > 0))
    if sel.size == 0:
        return 0.0
    w = fem.lumped_weights(mesh, ~mesh.triangle_in_hole)
    s = u[sel] if delta_reg is None else np.maximum(u[sel], delta_reg)
    return float(np.sum(w[sel] * source(s, sel) * zd[sel] * v[sel]))


def uniqueness_probe(mesh: Mesh, A, mu, source: SingularSource, params: SolverParams, seeds,
                     constrained_nodes=None):
    """Solve from several initial iterates; return (max pairwise relative L2 distance, solutions, traces)."""
    if not source.nonincreasing:
        raise ValueError("uniqueness probe requires a source flagged nonincreasing in s")
    solver = SemilinearSolver(mesh, A, mu, constrained_nodes)
    sols, traces = [], []
    for seed in seeds:
        seed = np.broadcast_to(np.asarray(seed, float), (mesh.nv,))
        u, tr = _continuation(solver, source, params, seed)
        sols.append(u)
        traces.append(tr)
    dist = 0.0
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            dist = max(dist, solver.rel_l2(sols[i] - sols[j], sols[i]))
    return dist, sols, traces
