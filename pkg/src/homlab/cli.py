"""Command line interface: ``homlab {mesh,corrector,solve,sweep,selftest}``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import corrector, harness
from .domain import GeometryError, build_mesh
from .fem import FeFunction

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


def _config(args) -> harness.SweepConfig:
    if args.config is None:
        return harness.SweepConfig()
    return harness.SweepConfig.from_json(args.config)


def cmd_mesh(args) -> int:
    cfg = _config(args)
    params = cfg.mesh_params()
    mesh = build_mesh(cfg.lattice(args.eps), params)
    mesh.check(params.min_angle)
    mesh.save(args.out)
    print(f"vertices={mesh.nv} triangles={mesh.nt} holes={len(mesh.holes)} "
          f"min_angle_deg={mesh.min_angle_deg():.3f} -> {args.out}")
    return EXIT_OK


def cmd_corrector(args) -> int:
    cfg = _config(args)
    mesh = build_mesh(cfg.lattice(args.eps), cfg.mesh_params())
    A = cfg.coefficient_field(mesh)
    cw = corrector.compute_w(mesh, A)
    md = corrector.mu_density(cw, A)
    zf = corrector.compute_z(cw, A, cfg.z_pairing)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    FeFunction(mesh, cw.w).save_xyz(out / "w.xyz")
    FeFunction(mesh, zf.z).save_xyz(out / "z.xyz")
    md.save_csv(out / "mu.csv")
    sv = corrector.sandwich_violation(zf, cw)
    ratio = corrector.pairing_bound_check(cw, A, cfg.z_pairing)
    print(f"holes={len(mesh.holes)} mu_interior={md.interior_mean():.6g} "
          f"mu_analytic={corrector.analytic_mu(2, cfg.c0):.6g} sandwich_violation={sv:.3e} "
          f"z_minus_w_h1={corrector.z_minus_w_h1(zf, cw):.3e} pairing_ratio={ratio:.9f}")
    return EXIT_OK if sv <= 1e-8 and ratio <= 1 + 1e-6 else EXIT_CHECK


def cmd_solve(args) -> int:
    cfg = _config(args)
    if args.out_dir:
        cfg.output_dir = args.out_dir
    try:
        case = harness.run_case(args.eps, cfg)
    except harness.CaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    d = case.diagnostics
    for key in ("n_vertices", "n_holes", "u_min", "u_max", "continuation_steps", "final_delta",
                "energy_residual", "sandwich_violation", "mu_interior", "mu_deviation"):
        print(f"{key},{d[key]!r}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        FeFunction(case.mesh, case.u).save_xyz(out / "u.xyz")
        case.trace.save_csv(out / "trace.csv")
    return EXIT_OK if d["u_min"] >= -1e-12 else EXIT_CHECK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    cfg.output_dir = args.out_dir
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    if args.figures and "png" not in formats:
        formats.append("png")
    report = harness.run_sweep(cfg)
    paths = harness.emit(report, formats, args.out_dir)
    print("epsilon,e_l2_meas,rel_l2_meas,mu_deviation,z_minus_w,status")
    for r in report.rows:
        if r["status"] == "ok":
            print(f"{r['epsilon']:.6g},{r['e_l2_meas']:.6e},{r['rel_l2_meas']:.4f},"
                  f"{r['mu_deviation']:.4f},{r['z_minus_w']:.3e},ok")
        else:
            print(f"{r['epsilon']:.6g},,,,,failed")
    for name, ok in report.verdicts.items():
        print(f"verdict,{name},{'pass' if ok else 'fail'}")
    for p in paths:
        print(f"wrote,{p}")
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_selftest(args) -> int:
    res = harness.selftest(faults=args.fault or ())
    for name, ok, detail in res.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    print(f"selftest {'passed' if res.ok else 'failed'} in {res.elapsed:.1f} s")
    return EXIT_OK if res.ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_case(sp):
        sp.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        sp.add_argument("--eps", type=float, required=True)

    sp = sub.add_parser("mesh", help="build and export the perforated mesh")
    with_case(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_mesh)

    sp = sub.add_parser("corrector", help="compute w, z and the measure density")
    with_case(sp)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_corrector)

    sp = sub.add_parser("solve", help="solve the perforated problem for one epsilon")
    with_case(sp)
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep", help="run the epsilon sweep and write reports")
    sp.add_argument("--config")
    sp.add_argument("--format", default="csv,json,gnuplot")
    sp.add_argument("--figures", action="store_true", help="also render PNG figures")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("selftest", help="reduced acceptance checks")
    sp.add_argument("--fault", action="append", choices=harness.FAULTS, help="inject a known defect")
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (harness.ConfigError, GeometryError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
