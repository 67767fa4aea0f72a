import math

import numpy as np
import pytest

from homlab.domain import (HOLE_BOUNDARY, HOLE_INTERIOR, INTERIOR, OUTER_BOUNDARY, GeometryError, LatticeSpec, Mesh,
                           MeshParams, build_mesh, mask_to_perforated, place_holes, plain_mesh, radius_for,
                           removed_measure, ring_radii)


@pytest.fixture(scope="module")
def mesh_half():
    return build_mesh(LatticeSpec(0.5), MeshParams())


def test_radius_law():
    assert radius_for(0.5, 1.0) == pytest.approx(math.exp(-4.0))
    assert radius_for(0.5, 2.0, dim=3) == pytest.approx(2.0 * 0.5**3)
    with pytest.raises(GeometryError):
        radius_for(0.5, 1.0, dim=1)


def test_invalid_specs():
    with pytest.raises(GeometryError):
        LatticeSpec(-0.1)
    with pytest.raises(GeometryError):
        LatticeSpec(0.5, c0=0.0)
    with pytest.raises(GeometryError):
        place_holes(LatticeSpec(0.9, c0=0.01))  # radius exceeds epsilon


@pytest.mark.parametrize("eps,count", [(0.5, 1), (1 / 3, 1), (0.25, 4), (1 / 6, 9)])
def test_hole_counts_and_cells(eps, count):
    holes = place_holes(LatticeSpec(eps))
    assert len(holes) == count
    for h in holes:
        cx, cy = h.center
        ix, iy = h.cell
        assert cx == pytest.approx(2 * eps * ix + eps) and cy == pytest.approx(2 * eps * iy + eps)
        assert eps <= cx <= 1 - eps + 1e-12 and eps <= cy <= 1 - eps + 1e-12


def test_removed_measure():
    assert removed_measure(LatticeSpec(0.5)) == pytest.approx(math.pi * math.exp(-8.0), rel=1e-12)
    assert removed_measure(LatticeSpec(0.5, perforate=False)) == 0.0
    poly = removed_measure(LatticeSpec(0.5), polygon_order=32)
    assert poly < removed_measure(LatticeSpec(0.5))
    assert poly == pytest.approx(16 * math.exp(-8.0) * math.sin(2 * math.pi / 32))


def test_ring_count_ratio_two():
    mesh = build_mesh(LatticeSpec(0.5), MeshParams(grading_ratio=2.0))
    assert mesh.rings[0].ring_count == math.ceil(math.log2(0.5 / math.exp(-4.0))) == 5


def test_ring_radii_geometric():
    r = ring_radii(1e-3, 1.0, 2.0)
    assert r[0] == pytest.approx(1e-3) and r[-1] == pytest.approx(1.0)
    q = r[1:] / r[:-1]
    assert np.allclose(q, q[0]) and q[0] <= 2.0


def test_mesh_invariants(mesh_half):
    m = mesh_half
    m.check(MeshParams().min_angle)
    assert m.areas().min() > 0
    assert m.areas().sum() == pytest.approx(1.0, abs=1e-12)
    hr = m.rings[0]
    assert np.all(m.vertex_marker[hr.nodes[0]] == HOLE_BOUNDARY)
    assert m.vertex_marker[hr.center_node] == HOLE_INTERIOR
    rho = np.linalg.norm(m.vertices[hr.nodes] - np.asarray(hr.hole.center), axis=2)
    assert np.allclose(rho, hr.radii[:, None], rtol=1e-12)
    # corners are outer boundary nodes
    corners = [np.argmin(np.linalg.norm(m.vertices - c, axis=1)) for c in [(0, 0), (1, 0), (1, 1), (0, 1)]]
    assert np.all(m.vertex_marker[corners] == OUTER_BOUNDARY)
    assert np.all(m.triangle_in_hole == np.all(np.isin(m.triangles, m.hole_nodes()), axis=1)) or \
        m.triangle_in_hole.sum() > 0


def test_mesh_deterministic():
    a = build_mesh(LatticeSpec(0.25), MeshParams())
    b = build_mesh(LatticeSpec(0.25), MeshParams())
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


def test_plain_mesh():
    m = plain_mesh(target_h=0.25)
    assert m.nt >= 32
    assert set(np.unique(m.vertex_marker)) <= {INTERIOR, OUTER_BOUNDARY}
    m.check()


def test_save_load_roundtrip(tmp_path, mesh_half):
    p = tmp_path / "mesh.txt"
    mesh_half.save(p)
    head = p.read_text().splitlines()[0].split()
    assert head == [str(mesh_half.nv), str(mesh_half.nt)]
    back = Mesh.load(p)
    assert np.allclose(back.vertices, mesh_half.vertices)
    assert np.array_equal(back.triangles, mesh_half.triangles)
    assert np.array_equal(back.vertex_marker, mesh_half.vertex_marker)
    assert np.array_equal(back.triangle_in_hole, mesh_half.triangle_in_hole)


def test_mask(mesh_half):
    u = np.ones(mesh_half.nv)
    v = mask_to_perforated(u, mesh_half)
    holes = mesh_half.hole_nodes()
    assert np.all(v[holes] == 0) and np.sum(v == 1) == mesh_half.nv - len(holes)
    assert np.array_equal(mask_to_perforated(v, mesh_half), v)
    with pytest.raises(ValueError):
        mask_to_perforated(np.ones(3), mesh_half)


def test_mesh_params_validation():
    with pytest.raises(ValueError):
        MeshParams(grading_ratio=1.0)
    with pytest.raises(ValueError):
        MeshParams(polygon_order=8)
    with pytest.raises(ValueError):
        MeshParams(target_h=0)
