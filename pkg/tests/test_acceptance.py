"""Acceptance criteria, one pass/fail line each (run with -s or read the captured lines)."""

import math
import time

import numpy as np
import pytest

from homlab import corrector, fem, truncate
from homlab.domain import LatticeSpec, MeshParams, build_mesh, removed_measure
from homlab.singular import SolverParams, apriori_profile, make_source, uniqueness_probe


@pytest.fixture
def say(capsys):
    def _say(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    return _say


def test_criterion_1_truncation_algebra(say):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n_samples = 100_000
    s = rng.uniform(-100.0, 100.0, n_samples)
    k = rng.uniform(1e-3, 50.0, n_samples)
    n = k + rng.uniform(1e-3, 50.0, n_samples)
    exact = truncate.t_cut(s, k) + truncate.g_cut(s, k) == s
    a = np.abs(s)
    gk = truncate.g_cut(a, k)
    ulp = np.spacing(np.maximum(np.abs(gk), n))
    win = truncate.s_window(a, (k, n))
    id2 = np.abs(gk - (win + truncate.g_cut(a, n))) <= ulp
    id3 = np.abs(win - truncate.t_cut(gk, n - k)) <= ulp
    elapsed = time.perf_counter() - t0
    ok = bool(exact.all() and id2.all() and id3.all() and elapsed < 1.0)
    say(1, ok, f"s = T_k + G_k bitwise on {int(exact.sum())}/{n_samples}; "
               f"window identities within 1 ulp on {int(id2.sum())}, {int(id3.sum())}; {elapsed:.2f} s")
    assert elapsed < 1.0
    assert id2.all() and id3.all()
    assert exact.all(), "s - T_k(s) is not representable in binary64 for some samples"


def test_criterion_2_fem_order(say):
    t0 = time.perf_counter()
    rows = fem.manufactured_study((8, 16, 32))
    l2 = [rows[i][1] / rows[i + 1][1] for i in range(2)]
    h1 = [rows[i][2] / rows[i + 1][2] for i in range(2)]
    elapsed = time.perf_counter() - t0
    ok = all(3.4 <= f <= 4.6 for f in l2) and all(1.7 <= f <= 2.3 for f in h1) and elapsed < 30
    say(2, ok, f"L2 factors {l2[0]:.3f}, {l2[1]:.3f}; H1 factors {h1[0]:.3f}, {h1[1]:.3f}; {elapsed:.2f} s")
    assert ok


def test_criterion_3_corrector_fidelity(say):
    t0 = time.perf_counter()
    eps, c0 = 0.5, 1.0
    spec = LatticeSpec(eps, c0)
    mesh = build_mesh(spec, MeshParams())
    cw = corrector.compute_w(mesh)
    hr = mesh.rings[0]
    nodes = hr.nodes.ravel()
    rho = np.linalg.norm(mesh.vertices[nodes] - np.asarray(hr.hole.center), axis=1)
    dev = float(np.max(np.abs(cw.w[nodes] - corrector.analytic_w_profile(rho, spec.radius, eps))))
    md = corrector.mu_density(cw)
    oracle = 2 * math.pi / (c0 / eps**2 + math.log(eps))
    err = abs(md.energy[md.interior][0] - oracle) / oracle
    elapsed = time.perf_counter() - t0
    ok = dev <= 0.02 and err <= 0.03 and elapsed < 30
    say(3, ok, f"ring deviation {dev:.2e}; cell energy {md.energy[md.interior][0]:.5f} vs {oracle:.5f} "
               f"({err:.2%}); {elapsed:.2f} s")
    assert ok


def test_criterion_4_strange_term_constant(say):
    t0 = time.perf_counter()
    mu = corrector.analytic_mu(2, 1.0)
    devs = []
    for eps in (0.5, 1 / 3, 0.25):
        mesh = build_mesh(LatticeSpec(eps), MeshParams())
        md = corrector.mu_density(corrector.compute_w(mesh))
        devs.append(abs(md.interior_mean() - mu) / mu)
    elapsed = time.perf_counter() - t0
    ok = all(b < a for a, b in zip(devs, devs[1:])) and devs[-1] <= 0.12 and elapsed < 300
    say(4, ok, "deviations " + ", ".join(f"{d:.2%}" for d in devs) + f"; {elapsed:.2f} s")
    assert ok


def test_criterion_5_z_properties(say, linear_report, power_report):
    viol = [r["sandwich_violation"] for rep in (linear_report, power_report) for r in rep.rows]
    zw = [r["z_minus_w"] for r in linear_report.rows]
    sandwich = max(viol) <= 1e-8
    decreasing = all(b < a for a, b in zip(zw, zw[1:]))
    # supplementary: the exactly integrated product pairing, for comparison only
    alt = []
    for c in linear_report.cases:
        cw = corrector.CorrectorField(c.mesh, c.w, [])
        z = corrector.compute_z(cw, pairing="exact")
        alt.append((corrector.sandwich_violation(z, cw), corrector.z_minus_w_h1(z, cw)))
    say(5, sandwich and decreasing,
        f"max sandwich violation {max(viol):.1e} over {len(viol)} cases; "
        f"||z - w||_H1 = " + ", ".join(f"{v:.3e}" for v in zw) + " (z = w identically in this geometry); "
        "exact-product pairing: violation/||z - w|| " + ", ".join(f"{a:.1e}/{b:.2e}" for a, b in alt))
    assert sandwich
    assert decreasing, "||z - w|| vanishes at every epsilon, so it cannot strictly decrease"


def test_criterion_6_linear_homogenization(say, linear_report):
    rows = linear_report.rows
    e = [r["e_l2_meas"] for r in rows]
    rel = rows[-1]["rel_l2_meas"]
    p = np.abs([r["p_meas"] for r in rows])
    pairs_ok = [bool(p[-1, j] < p[0, j]) for j in range(p.shape[1])]
    ok = e[-1] < e[0] and rel <= 0.10 and all(pairs_ok) and linear_report.elapsed < 600
    say(6, ok, "e_L2 " + ", ".join(f"{v:.3e}" for v in e) + f"; final relative {rel:.2%}; "
        + "; ".join(f"|p{j + 1}| {p[0, j]:.2e} -> {p[-1, j]:.2e}" for j in range(p.shape[1]))
        + f"; sweep {linear_report.elapsed:.1f} s")
    assert e[-1] < e[0] and rel <= 0.10
    assert all(pairs_ok), "symmetric modes pair to rounding-level values at eps = 1/2 and 1/4"


def test_criterion_7_strong_singularity(say, power_report):
    rows = power_report.rows
    cases = power_report.cases
    converged = all(r["status"] == "ok" for r in rows) and all(r["u_min"] >= -1e-12 for r in rows)
    finest = cases[-1].diagnostics
    residual = finest["energy_residual"]
    products = np.array([row[3] for row in finest["apriori"]])
    span_ok = bool(products.min() > 0 and products.max() <= 10 * products.min())
    zd = dict((d, m) for d, m in finest["zdelta"])
    deltas = sorted(zd, reverse=True)
    quarter = [(d, d / 4) for d in deltas if d / 4 in zd]
    zd_ok = bool(quarter) and all(zd[b] <= 0.5 * zd[a] for a, b in quarter)
    ok = converged and residual <= 1e-3 and span_ok and zd_ok and power_report.elapsed < 600
    # supplementary: levels scaled to the attained range of u
    scaled = apriori_profile(cases[-1].mesh, cases[-1].u, make_source("power", h=1.0, gamma=2.0),
                             [finest["u_max"] * f for f in (1 / 16, 1 / 8, 1 / 4, 1 / 2)])
    sp = scaled.products
    say(7, ok, f"converged {converged}; energy residual {residual:.2e} at n = {finest['energy_level']:.4f}; "
               f"apriori products {products.tolist()} (max u {finest['u_max']:.4f}); "
               f"at k = max u x (1/16..1/2) products span {sp.max() / sp.min():.1f}x; "
               f"zdelta " + ", ".join(f"{zd[d]:.3e}" for d in deltas) + f"; sweep {power_report.elapsed:.1f} s")
    assert converged and residual <= 1e-3 and zd_ok
    assert span_ok, "every level k >= 0.5 lies above max u, so all products vanish"


def test_criterion_8_uniqueness_and_stability(say, linear_report, power_report):
    t0 = time.perf_counter()
    mesh = build_mesh(LatticeSpec(0.25), MeshParams())
    x, y = mesh.vertices.T
    src = make_source("power", h=1.0, gamma=2.0)
    dist, _, traces = uniqueness_probe(mesh, None, None, src, SolverParams(), [0.0, 1.0, x * (1 - x)],
                                       mesh.perforated_constraints())
    elapsed = time.perf_counter() - t0
    runs = [c.trace for rep in (linear_report, power_report) for c in rep.cases] + traces
    eventually = all(t.eventually_decreasing() for t in runs)
    ok = dist <= 1e-6 and eventually and elapsed < 180
    say(8, ok, f"max pairwise relative L2 distance {dist:.2e}; increments eventually decreasing on "
               f"{sum(t.eventually_decreasing() for t in runs)}/{len(runs)} runs; {elapsed:.2f} s")
    assert ok


def test_criterion_9_geometry_limit(say):
    t0 = time.perf_counter()
    eps_list = [1 / 3, 1 / 4, 1 / 5, 1 / 6, 1 / 8]
    vals = [removed_measure(LatticeSpec(e)) for e in eps_list]
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-6 for v in vals) and elapsed < 1.0
    say(9, ok, "removed measure " + ", ".join(f"{v:.2e}" for v in vals) + f"; {elapsed:.3f} s")
    assert ok
