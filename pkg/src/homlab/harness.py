"""Epsilon sweeps: mesh, u^eps, correctors, homogenized limits, error tables and reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corrector, fem, singular, truncate
from .domain import LatticeSpec, Mesh, MeshParams, build_mesh, mask_to_perforated, removed_measure

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "epsilon", "status", "n_vertices", "n_holes",
    "e_l2_meas", "rel_l2_meas", "e_l2_ana", "rel_l2_ana",
    "p1_meas", "p2_meas", "p3_meas", "p1_ana", "p2_ana", "p3_ana",
    "mu_interior", "mu_deviation", "sandwich_violation", "z_minus_w", "pairing_ratio",
    "energy_residual", "u_min", "u_max", "removed_measure",
]
GNUPLOT_COLUMNS = ["epsilon", "e_l2", "p1", "p2", "p3", "mu_deviation", "z_minus_w"]
TREND_SLACK = 0.10


class ConfigError(ValueError):
    pass


class CaseError(RuntimeError):
    """Failure of one sweep case, tagged with the pipeline stage."""

    def __init__(self, stage: str, epsilon: float, message: str):
        super().__init__(f"[{stage}] eps={epsilon:g}: {message}")
        self.stage = stage
        self.epsilon = epsilon
        self.message = message


def _default_source():
    return {"kind": "constant", "f": 1.0}


@dataclass
class SweepConfig:
    epsilon_list: list = field(default_factory=lambda: [0.5, 1 / 3, 0.25])
    c0: float = 1.0
    domain: list = field(default_factory=lambda: [0.0, 0.0, 1.0, 1.0])
    mesh: dict = field(default_factory=dict)
    coefficient: dict = field(default_factory=lambda: {"kind": "identity"})
    source: dict = field(default_factory=_default_source)
    solver: dict = field(default_factory=dict)
    k_levels: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    delta_levels: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025, 0.0125])
    test_modes: list = field(default_factory=lambda: [[1, 1], [2, 1], [1, 2]])
    z_pairing: str = "nodal"
    output_dir: str | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        eps = [float(e) for e in self.epsilon_list]
        if not eps:
            raise ConfigError("epsilon_list is empty")
        if any(not (e > 0) for e in eps):
            raise ConfigError("epsilon values must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon_list must be strictly decreasing")
        self.epsilon_list = eps
        if len(self.domain) != 4:
            raise ConfigError("domain must be [x0, y0, x1, y1]")
        _check_keys("mesh", self.mesh, {f.name for f in dataclasses.fields(MeshParams)})
        _check_keys("solver", self.solver, {f.name for f in dataclasses.fields(singular.SolverParams)})
        _check_keys("coefficient", self.coefficient, {"kind", "scale", "matrix"})
        if self.coefficient.get("kind", "identity") not in ("identity", "constant"):
            raise ConfigError("coefficient kind must be 'identity' or 'constant'")
        if self.z_pairing not in ("nodal", "exact"):
            raise ConfigError("z_pairing must be 'nodal' or 'exact'")
        if any(not k > 0 for k in self.k_levels) or any(not d > 0 for d in self.delta_levels):
            raise ConfigError("k_levels and delta_levels must be positive")
        if len(self.test_modes) < 1 or any(len(m) != 2 for m in self.test_modes):
            raise ConfigError("test_modes must be a list of [m, n] pairs")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.mesh_params()
            self.solver_params()
            self.make_source()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def mesh_params(self) -> MeshParams:
        return MeshParams(**self.mesh)

    def solver_params(self) -> singular.SolverParams:
        return singular.SolverParams(**self.solver)

    def make_source(self) -> singular.SingularSource:
        params = dict(self.source)
        kind = params.pop("kind", None)
        if kind is None:
            raise ConfigError("source needs a 'kind'")
        return singular.make_source(kind, **params)

    def coefficient_field(self, mesh: Mesh) -> fem.CoefficientField:
        spec = self.coefficient
        if spec.get("kind", "identity") == "identity":
            A = fem.CoefficientField.identity(mesh, float(spec.get("scale", 1.0)))
        else:
            A = fem.CoefficientField.constant(mesh, spec["matrix"])
        A.check_coercive()
        return A

    def lattice(self, epsilon: float) -> LatticeSpec:
        return LatticeSpec(float(epsilon), float(self.c0), 2, tuple(float(v) for v in self.domain))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        _check_keys("config", data, {f.name for f in dataclasses.fields(cls)})
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)


def _check_keys(where: str, data: dict, allowed: set) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


# ---------------------------------------------------------------------- cases


@dataclass
class CaseResult:
    epsilon: float
    mesh: Mesh
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray
    mu: corrector.MeasureDensity
    trace: singular.SolveTrace
    diagnostics: dict

    def digest(self) -> dict:
        return {"epsilon": self.epsilon, **self.diagnostics}


def _finite(obj) -> bool:
    if isinstance(obj, dict):
        return all(_finite(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return all(_finite(v) for v in obj)
    if isinstance(obj, float):
        return math.isfinite(obj)
    return True


def _persist_partial(config: SweepConfig, epsilon: float, mesh: Mesh | None) -> None:
    if config.output_dir and mesh is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        mesh.save(out / f"partial_eps{epsilon:.6g}_mesh.txt")


def run_case(epsilon: float, config: SweepConfig) -> CaseResult:
    """Full pipeline for one epsilon; failures raise ``CaseError`` tagged by stage."""
    stage, mesh = "geometry", None
    try:
        spec = config.lattice(epsilon)
        mparams = config.mesh_params()
        mesh = build_mesh(spec, mparams)
        mesh.check(mparams.min_angle)
        A = config.coefficient_field(mesh)
        source = config.make_source()
        params = config.solver_params()

        stage = "corrector"
        cw = corrector.compute_w(mesh, A)
        md = corrector.mu_density(cw, A)
        zf = corrector.compute_z(cw, A, config.z_pairing)
        ratio = corrector.pairing_bound_check(cw, A, config.z_pairing)

        stage = "solve"
        constrained = mesh.perforated_constraints()
        u, trace = singular.solve_semilinear(mesh, A, None, source, params, constrained)

        stage = "diagnostics"
        x, y = _unit_coords(mesh, config)
        m0, n0 = config.test_modes[0]
        v = cw.w * np.sin(m0 * np.pi * x) * np.sin(n0 * np.pi * y)
        level = float(np.median(u))
        profile = singular.apriori_profile(mesh, u, source, config.k_levels, A)
        split_ok = all(
            np.array_equal(truncate.t_cut(u, k) + truncate.g_cut(u, k), u) for k in config.k_levels)
        mu_ana = corrector.analytic_mu(2, config.c0)
        mu_int = md.interior_mean()
        diag = {
            "n_vertices": mesh.nv,
            "n_triangles": mesh.nt,
            "n_holes": len(mesh.holes),
            "ring_counts": [hr.ring_count for hr in mesh.rings],
            "min_angle_deg": mesh.min_angle_deg(),
            "hole_radius": spec.radius,
            "removed_measure": removed_measure(spec),
            "w_min": float(cw.w.min()),
            "w_max": float(cw.w.max()),
            "z_min": float(zf.z.min()),
            "z_max": float(zf.z.max()),
            "mu_interior": mu_int,
            "mu_analytic": mu_ana,
            "mu_deviation": abs(mu_int - mu_ana) / mu_ana if md.interior.any() else float("nan"),
            "mu_total_mass": md.total_mass,
            "sandwich_violation": corrector.sandwich_violation(zf, cw),
            "z_minus_w": corrector.z_minus_w_h1(zf, cw),
            "pairing_ratio": ratio,
            "u_min": float(u.min()),
            "u_max": float(u.max()),
            "continuation_steps": len(trace.steps),
            "final_delta": trace.final_delta,
            "inner_iterations": [s.inner_iters for s in trace.steps],
            "clip_events": trace.clip_events,
            "increments_eventually_decreasing": trace.eventually_decreasing(),
            "energy_level": level,
            "energy_residual": singular.energy_equality_residual(mesh, u, source, A, level, constrained),
            "apriori": [list(r) for r in profile.rows],
            "apriori_ok": profile.ok,
            "zdelta": [[d, singular.zdelta_mass(mesh, u, source, v, d, trace.final_delta)]
                       for d in config.delta_levels],
            "splitting_ok": split_ok,
        }
        if not _finite({k: v for k, v in diag.items() if k != "mu_deviation"}):
            raise ValueError("non-finite diagnostic")
    except CaseError:
        raise
    except Exception as exc:  # tag and persist whatever exists
        _persist_partial(config, epsilon, mesh)
        raise CaseError(stage, epsilon, f"{type(exc).__name__}: {exc}") from exc
    return CaseResult(epsilon, mesh, u, cw.w, zf.z, md, trace, diag)


def _unit_coords(mesh: Mesh, config: SweepConfig):
    x0, y0, x1, y1 = config.domain
    return (mesh.vertices[:, 0] - x0) / (x1 - x0), (mesh.vertices[:, 1] - y0) / (y1 - y0)


# ---------------------------------------------------------------------- sweep


@dataclass
class SweepReport:
    config: dict
    cases: list  # CaseResult or None, in epsilon order
    failures: dict  # epsilon -> "stage: message"
    rows: list  # per-epsilon error/pairing rows
    mu_measured: float
    mu_analytic: float
    verdicts: dict
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "mu_measured": self.mu_measured,
            "mu_analytic": self.mu_analytic,
            "rows": self.rows,
            "cases": [c.digest() if c is not None else None for c in self.cases],
            "failures": {repr(k): v for k, v in self.failures.items()},
            "verdicts": self.verdicts,
        }

    @property
    def ok(self) -> bool:
        return not self.failures


def nonincreasing(values, slack: float = TREND_SLACK) -> bool:
    """Each value at most (1 + slack) times its predecessor."""
    return all(b <= (1.0 + slack) * a for a, b in zip(values, values[1:]))


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _limit_errors(case: CaseResult, config: SweepConfig, mu_value: float):
    mesh = case.mesh
    A = config.coefficient_field(mesh)
    u0, _ = singular.solve_semilinear(mesh, A, mu_value, config.make_source(), config.solver_params(),
                                      mesh.boundary_nodes())
    d = mask_to_perforated(case.u, mesh) - u0
    M = fem.assemble_weighted_mass(mesh)
    e = math.sqrt(max(d @ (M @ d), 0.0))
    n0 = math.sqrt(max(u0 @ (M @ u0), 0.0))
    x, y = _unit_coords(mesh, config)
    pairings, cs_ok = [], True
    for m, n in config.test_modes:
        phi = np.sin(m * np.pi * x) * np.sin(n * np.pi * y)
        p = float(d @ (M @ phi))
        nphi = math.sqrt(phi @ (M @ phi))
        cs_ok &= abs(p) <= e * nphi * (1 + 1e-9) + 1e-300
        pairings.append(p)
    return e, (e / n0 if n0 > 0 else float("nan")), pairings, bool(cs_ok)


def _run_one(args):
    eps, config = args
    try:
        return run_case(eps, config), None
    except CaseError as exc:
        log.error("%s", exc)
        return None, f"{exc.stage}: {exc.message}"


def run_sweep(config: SweepConfig) -> SweepReport:
    """Run every epsilon (isolated failures), solve both limit problems and tabulate."""
    t0 = time.perf_counter()
    jobs = [(eps, config) for eps in config.epsilon_list]
    workers = 1 if os.environ.get("HOMLAB_DETERMINISTIC") == "1" else int(config.workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    cases = [r[0] for r in results]
    failures = {eps: r[1] for eps, r in zip(config.epsilon_list, results) if r[1] is not None}

    mu_ana = corrector.analytic_mu(2, config.c0)
    done = [c for c in cases if c is not None]
    # measured density: interior-cell mean at the smallest successful epsilon
    mu_meas = float("nan")
    for c in reversed(done):
        if c.mu.interior.any():
            mu_meas = c.mu.interior_mean()
            break
    if not math.isfinite(mu_meas):
        mu_meas = mu_ana

    rows = []
    nmodes = len(config.test_modes)
    for eps, case in zip(config.epsilon_list, cases):
        row = {"epsilon": eps, "status": "ok" if case is not None else "failed"}
        if case is None:
            rows.append(row)
            continue
        try:
            e_m, r_m, p_m, cs_m = _limit_errors(case, config, mu_meas)
            e_a, r_a, p_a, cs_a = _limit_errors(case, config, mu_ana)
        except Exception as exc:
            failures[eps] = f"limit: {type(exc).__name__}: {exc}"
            row["status"] = "failed"
            rows.append(row)
            continue
        dg = case.diagnostics
        row.update({
            "n_vertices": dg["n_vertices"], "n_holes": dg["n_holes"],
            "e_l2_meas": e_m, "rel_l2_meas": r_m, "e_l2_ana": e_a, "rel_l2_ana": r_a,
            "p_meas": p_m, "p_ana": p_a, "cauchy_schwarz_ok": cs_m and cs_a,
            "mu_interior": dg["mu_interior"], "mu_deviation": dg["mu_deviation"],
            "sandwich_violation": dg["sandwich_violation"], "z_minus_w": dg["z_minus_w"],
            "pairing_ratio": dg["pairing_ratio"], "energy_residual": dg["energy_residual"],
            "u_min": dg["u_min"], "u_max": dg["u_max"], "removed_measure": dg["removed_measure"],
        })
        rows.append(row)

    good = [r for r in rows if r["status"] == "ok"]
    verdicts = {}
    if good:
        e_meas = [r["e_l2_meas"] for r in good]
        e_ana = [r["e_l2_ana"] for r in good]
        verdicts["e_l2_meas_trend"] = nonincreasing(e_meas)
        verdicts["e_l2_ana_trend"] = nonincreasing(e_ana)
        verdicts["e_l2_meas_end_to_end"] = e_meas[-1] < e_meas[0] if len(good) > 1 else False
        for j in range(nmodes):
            pj = [abs(r["p_meas"][j]) for r in good]
            verdicts[f"p{j + 1}_trend"] = nonincreasing(pj)
            verdicts[f"p{j + 1}_end_to_end"] = pj[-1] < pj[0] if len(good) > 1 else False
        verdicts["cauchy_schwarz"] = all(r["cauchy_schwarz_ok"] for r in good)
        verdicts["sandwich"] = all(r["sandwich_violation"] <= 1e-8 for r in good)
        verdicts["pairing_bound"] = all(r["pairing_ratio"] <= 1 + 1e-6 for r in good)
        verdicts["z_minus_w_strictly_decreasing"] = strictly_decreasing([r["z_minus_w"] for r in good])
        devs = [r["mu_deviation"] for r in good if math.isfinite(r["mu_deviation"])]
        verdicts["mu_deviation_strictly_decreasing"] = len(devs) > 1 and strictly_decreasing(devs)
        verdicts["nonnegative"] = all(r["u_min"] >= -1e-12 for r in good)
        verdicts["increments_eventually_decreasing"] = all(
            c.diagnostics["increments_eventually_decreasing"] for c in done)
    verdicts["all_cases_completed"] = not failures
    report = SweepReport(config.to_dict(), cases, failures, rows, mu_meas, mu_ana, verdicts,
                         time.perf_counter() - t0)
    if config.output_dir:
        _write_case_artifacts(report, Path(config.output_dir))
    return report


def _write_case_artifacts(report: SweepReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for c in report.cases:
        if c is None:
            continue
        tag = f"eps{c.epsilon:.6g}"
        c.mu.save_csv(out / f"mu_{tag}.csv")
        c.trace.save_csv(out / f"trace_{tag}.csv")


# ----------------------------------------------------------------------- emit


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_record(row: dict) -> list:
    rec = dict(row)
    for tag in ("meas", "ana"):
        for j, p in enumerate(row.get(f"p_{tag}", [None] * 3)[:3]):
            rec[f"p{j + 1}_{tag}"] = p
    return [_fmt(rec.get(col, float("nan"))) for col in CSV_COLUMNS]


def emit(report: SweepReport, formats, out_dir) -> list:
    """Write the report as csv / json / gnuplot (and optional png) files; returns the paths."""
    if isinstance(formats, str):
        formats = [f.strip() for f in formats.split(",") if f.strip()]
    unknown = set(formats) - {"csv", "json", "gnuplot", "png"}
    if unknown:
        raise ValueError(f"unknown output formats {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if "csv" in formats:
        p = out / "sweep.csv"
        with open(p, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_COLUMNS)
            for row in report.rows:
                wr.writerow(_csv_record(row))
        paths.append(p)
    if "json" in formats:
        p = out / "report.json"
        with open(p, "w") as fh:
            json.dump(_jsonable(report.to_dict()), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        paths.append(p)
    if "gnuplot" in formats:
        p = out / "sweep.dat"
        with open(p, "w") as fh:
            fh.write("# " + " ".join(GNUPLOT_COLUMNS) + "\n")
            for row in report.rows:
                pm = row.get("p_meas", [float("nan")] * 3)
                vals = [row["epsilon"], row.get("e_l2_meas"), *pm[:3], row.get("mu_deviation"),
                        row.get("z_minus_w")]
                fh.write(" ".join(_fmt(v) for v in vals) + "\n")
        gp = out / "sweep.gp"
        gp.write_text(
            "set logscale xy\n"
            "set xlabel 'epsilon'\n"
            "set key left top\n"
            "plot 'sweep.dat' using 1:2 with linespoints title 'L2 error', \\\n"
            "     '' using 1:(abs($3)) with linespoints title '|p1|', \\\n"
            "     '' using 1:6 with linespoints title 'mu deviation'\n")
        paths += [p, gp]
    if "png" in formats:
        from . import plots

        paths += plots.render_report(report, out)
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


# -------------------------------------------------------------------- selftest


@dataclass
class SelftestResult:
    checks: list  # (name, ok, detail)
    elapsed: float

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    @property
    def failed(self) -> list:
        return [name for name, ok, _ in self.checks if not ok]


FAULTS = ("quadrature",)


def selftest(faults=()) -> SelftestResult:
    """Reduced-size acceptance checks; ``faults`` injects known defects to prove the checks bite."""
    faults = set(faults)
    if faults - set(FAULTS):
        raise ValueError(f"unknown faults {sorted(faults - set(FAULTS))}")
    t0 = time.perf_counter()
    checks = []

    def record(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), detail))

    def trunc():
        rng = np.random.default_rng(0)
        s = rng.uniform(-10, 10, 10_000)
        k = rng.uniform(0.01, 5, 10_000)
        n = k + rng.uniform(0.01, 5, 10_000)
        back = truncate.t_cut(s, k) + truncate.g_cut(s, k)
        exact = int(np.sum(back == s))
        ok = exact == s.size
        a = np.abs(s)
        gk = truncate.g_cut(a, k)
        ulp = np.spacing(np.maximum(np.abs(gk), np.abs(n)))
        ok &= bool(np.all(np.abs(truncate.s_window(a, (k, n)) + truncate.g_cut(a, n) - gk) <= ulp))
        ok &= bool(np.all(np.abs(truncate.s_window(a, (k, n)) - truncate.t_cut(gk, n - k)) <= ulp))
        return ok, f"T_k + G_k == s bitwise on {exact}/{s.size} samples; window identities within 1 ulp"

    def fem_rates():
        weights = fem._QW * 0.9 if "quadrature" in faults else None
        rows = fem.manufactured_study((8, 16, 32), weights)
        l2 = [rows[i][1] / rows[i + 1][1] for i in range(2)]
        h1 = [rows[i][2] / rows[i + 1][2] for i in range(2)]
        ok = all(3.4 <= f <= 4.6 for f in l2) and all(1.7 <= f <= 2.3 for f in h1)
        return ok, f"L2 factors {l2[0]:.3f}, {l2[1]:.3f}; H1 factors {h1[0]:.3f}, {h1[1]:.3f}"

    def corr():
        spec = LatticeSpec(0.5)
        mesh = build_mesh(spec, MeshParams())
        cw = corrector.compute_w(mesh)
        hr = mesh.rings[0]
        c = np.asarray(hr.hole.center)
        nodes = hr.nodes.ravel()
        rho = np.linalg.norm(mesh.vertices[nodes] - c, axis=1)
        dev = float(np.max(np.abs(cw.w[nodes] - corrector.analytic_w_profile(rho, spec.radius, 0.5))))
        md = corrector.mu_density(cw)
        ref = corrector.annulus_energy(spec.radius, 0.5)
        err = abs(md.energy[md.interior][0] - ref) / ref
        zf = corrector.compute_z(cw)
        sv = corrector.sandwich_violation(zf, cw)
        return dev <= 2e-2 and err <= 0.03 and sv <= 1e-8, \
            f"ring deviation {dev:.2e}, cell energy error {err:.2%}, sandwich {sv:.1e}"

    def mu_values():
        vals = [corrector.analytic_mu(2, 1), corrector.analytic_mu(3, 1), corrector.analytic_mu(2, 2)]
        ref = [math.pi / 2, math.pi / 2, math.pi / 4]
        return all(abs(a - b) <= 1e-14 for a, b in zip(vals, ref)), "analytic mu spot values"

    def geometry():
        m = removed_measure(LatticeSpec(1 / 3))
        return m < 1e-6, f"removed measure at eps=1/3: {m:.2e}"

    def poisson():
        from .domain import plain_mesh

        mesh = plain_mesh(target_h=0.05)
        u, _ = singular.solve_semilinear(mesh, source=singular.make_source("constant", f=1.0))
        return abs(u.max() - 0.0737) / 0.0737 <= 0.05, f"max u = {u.max():.5f}"

    record("truncate", trunc)
    record("fem", fem_rates)
    record("corrector", corr)
    record("analytic_mu", mu_values)
    record("geometry", geometry)
    record("solver", poisson)
    return SelftestResult(checks, time.perf_counter() - t0)
