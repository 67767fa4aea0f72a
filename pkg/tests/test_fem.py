import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from homlab import fem
from homlab.domain import LatticeSpec, MeshParams, build_mesh, plain_mesh


@pytest.fixture(scope="module")
def square():
    return plain_mesh(target_h=0.1)


@pytest.fixture(scope="module")
def perforated():
    return build_mesh(LatticeSpec(0.5), MeshParams())


def test_gradient_exact_for_linear(perforated):
    x, y = perforated.vertices.T
    g = fem.gradient(perforated, 2 * x - 3 * y + 1)
    assert np.allclose(g, [2.0, -3.0], atol=1e-6)


def test_stiffness_properties(perforated):
    K = fem.assemble_stiffness(perforated)
    assert abs(K - K.T).max() < 1e-12
    assert np.allclose(K @ np.ones(perforated.nv), 0, atol=1e-9)
    x, y = perforated.vertices.T
    u = x + 2 * y
    # energy of a linear field equals |grad|^2 * area
    assert u @ (K @ u) == pytest.approx(5.0, rel=1e-10)


def test_coefficient_scaling_and_transpose(square):
    A = fem.CoefficientField.constant(square, [[2.0, 0.5], [0.0, 1.0]])
    assert A.alpha > 0 and A.check_coercive() > 0
    K = fem.assemble_stiffness(square, A)
    Kt = fem.assemble_stiffness(square, A, transpose=True)
    assert abs(K - Kt.T).max() < 1e-12
    K2 = fem.assemble_stiffness(square, fem.CoefficientField.identity(square, 2.0))
    assert abs(K2 - 2 * fem.assemble_stiffness(square)).max() < 1e-12
    with pytest.raises(ValueError):
        fem.CoefficientField.constant(square, [[-1.0, 0.0], [0.0, 1.0]]).check_coercive()


def test_mass_and_load(square):
    M = fem.assemble_weighted_mass(square)
    one = np.ones(square.nv)
    assert one @ (M @ one) == pytest.approx(1.0)
    assert fem.lumped_weights(square).sum() == pytest.approx(1.0)
    x, y = square.vertices.T
    # consistent P1 load of a linear function is exact: int (x + y) dx = 1
    assert fem.assemble_load(square, x + y).sum() == pytest.approx(1.0, rel=1e-12)
    assert fem.assemble_load(square, 3.0, lumped=True).sum() == pytest.approx(3.0)
    assert fem.assemble_load(square, np.full(square.nt, 2.0)).sum() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        fem.assemble_weighted_mass(square, -1.0)
    with pytest.raises(ValueError):
        fem.assemble_load(square, np.ones(7))


def test_norms(square):
    x, y = square.vertices.T
    assert fem.norm_l2(square, np.ones(square.nv)) == pytest.approx(1.0)
    assert fem.seminorm_h1(square, 3 * x) == pytest.approx(3.0)
    f = fem.FeFunction(square, x)
    assert f.l2() == pytest.approx(math.sqrt(1 / 3), rel=1e-12)
    assert f.h1() == pytest.approx(1.0)


def test_pcg_matches_direct(perforated):
    K = fem.assemble_stiffness(perforated)
    b = fem.assemble_load(perforated, 1.0)
    system = fem.constrain(K, b, perforated.perforated_constraints())
    u = fem.solve_spd(system, rtol=1e-12)
    ref = spla.spsolve(system.matrix.tocsc(), system.rhs)
    assert np.allclose(u[system.free], ref, rtol=1e-8, atol=1e-12)
    assert np.all(u[perforated.hole_nodes()] == 0)
    res = fem.solve_spd(system, rtol=1e-12, full_output=True)
    assert res.residuals[-1] <= 1e-12 and res.iterations == len(res.residuals) - 1


def test_pcg_errors():
    A = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(200, 200)).tocsr()
    with pytest.raises(fem.SolverError) as err:
        fem.solve_spd(A, np.ones(200), rtol=1e-14, maxiter=3)
    assert len(err.value.history) == 4
    with pytest.raises(fem.SolverError):
        fem.solve_spd(-A, np.ones(200))


def test_constrain_nonzero_values(square):
    K = fem.assemble_stiffness(square)
    x, y = square.vertices.T
    bnd = square.boundary_nodes()
    # harmonic linear data is reproduced exactly
    u = fem.solve_spd(fem.constrain(K, np.zeros(square.nv), bnd, (x + 2 * y)[bnd]), rtol=1e-13)
    assert np.allclose(u, x + 2 * y, atol=1e-10)
    u2 = fem.solve_spd(fem.constrain(K, np.zeros(square.nv), {int(i): float(x[i] + 2 * y[i]) for i in bnd}))
    assert np.allclose(u2, u, atol=1e-8)


def test_manufactured_rates():
    rows = fem.manufactured_study((8, 16, 32))
    l2 = [rows[i][1] / rows[i + 1][1] for i in range(2)]
    h1 = [rows[i][2] / rows[i + 1][2] for i in range(2)]
    assert all(3.4 <= f <= 4.6 for f in l2), l2
    assert all(1.7 <= f <= 2.3 for f in h1), h1


def test_corrupted_quadrature_breaks_rates():
    rows = fem.manufactured_study((8, 16, 32), weights=fem._QW * 0.9)
    assert rows[1][1] / rows[2][1] < 3.4


def test_exports(tmp_path, square):
    f = fem.FeFunction.interpolate(square, lambda x, y: x * y)
    f.save_xyz(tmp_path / "u.xyz")
    data = np.loadtxt(tmp_path / "u.xyz")
    assert data.shape == (square.nv, 3) and np.allclose(data[:, 2], f.values)
    f.save_triangle_csv(tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0].startswith("tri,x0,y0,v0")
