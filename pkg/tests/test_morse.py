import math

import numpy as np
import pytest

from nodal_forge.mesh import build_sphere_mesh, build_torus_mesh
from nodal_forge.morse import (CriticalPoint, CriticalReport, classify_critical_vertices, lower_link_betti,
                               morse_betti_check)


def _tilted_height(coords):
    """Last coordinate with a small generic tilt so no two vertices tie."""
    tilt = np.array([1e-3 * 3 ** -k for k in range(coords.shape[1] - 1)] + [1.0])
    return coords @ tilt


def test_lower_links_on_tetrahedron_boundary():
    """Test the reduced Betti rows of the boundary of a tetrahedron ranked 0..3."""
    cells = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    betti = lower_link_betti(cells, np.arange(4), 4)
    assert betti[0].tolist() == [1, 0, 0, 0]
    assert betti[1].tolist() == [0, 0, 0, 0]
    assert betti[2].tolist() == [0, 0, 0, 0]
    assert betti[3].tolist() == [0, 0, 1, 0]


def test_icosahedron_height():
    """Test a linear height on a convex surface has only a minimum and a maximum."""
    mesh = build_sphere_mesh(2, 0)
    u = _tilted_height(mesh.coords)
    report = classify_critical_vertices(mesh, u)
    assert report.counts_by_index == [1, 0, 1]
    assert report.alternating_sum() == 2
    assert report.degenerate_count == 0
    minimum = [p for p in report.points if p.index == 0][0]
    assert minimum.vertex == int(np.argmin(u))


def test_cross_polytope_height():
    """Test the boundary of the 16-cell has one minimum and one maximum in dimension 3."""
    mesh = build_sphere_mesh(3, 0)
    report = classify_critical_vertices(mesh, _tilted_height(mesh.coords))
    assert report.counts_by_index == [1, 0, 0, 1]
    assert report.alternating_sum() == 0


def test_doughnut_height_on_flat_torus():
    """Test the height of a torus of revolution read on the flat T² chart."""
    mesh = build_torus_mesh(2, 24)
    theta = 2 * math.pi * mesh.coords[:, 0]
    phi = 2 * math.pi * mesh.coords[:, 1]
    rng = np.random.default_rng(0)
    u = (2.0 + 0.7 * np.cos(phi)) * np.cos(theta) + 1e-9 * rng.uniform(-1.0, 1.0, mesh.n_vertices)
    report = classify_critical_vertices(mesh, u)
    assert report.counts_by_index[0] >= 1
    assert report.counts_by_index[1] >= 2
    assert report.counts_by_index[2] >= 1
    checked = morse_betti_check(report, [1, 2, 1])
    assert checked.morse_pass
    assert checked.betti_reference == [1, 2, 1]


def test_restricted_to_cells():
    """Test a cell subset sees the boundary as part of its domain."""
    mesh = build_sphere_mesh(2, 1)
    u = _tilted_height(mesh.coords)
    upper = np.all(mesh.coords[mesh.cells][:, :, 2] > -0.2, axis=1)
    report = classify_critical_vertices(mesh, u, cell_mask=upper)
    used = set(np.unique(mesh.cells[upper]).tolist())
    assert all(p.vertex in used for p in report.points)
    assert report.counts_by_index[2] == 1


def test_input_errors():
    """Test constant functions, wrong lengths and empty cell subsets are rejected."""
    mesh = build_sphere_mesh(2, 0)
    with pytest.raises(ValueError, match="constant"):
        classify_critical_vertices(mesh, np.ones(mesh.n_vertices))
    with pytest.raises(ValueError):
        classify_critical_vertices(mesh, np.ones(3))
    with pytest.raises(ValueError):
        classify_critical_vertices(mesh, mesh.coords[:, 2], cell_mask=np.zeros(mesh.n_cells, dtype=bool))


def test_betti_check():
    """Test the weak Morse inequalities below the top degree."""
    report = CriticalReport(dim=3, points=[CriticalPoint(0, 0, -1.0)], counts_by_index=[1, 1, 0, 1])
    assert morse_betti_check(report, [1, 0, 0, 1]).morse_pass
    assert not morse_betti_check(report, [1, 2, 0, 0]).morse_pass
    with pytest.raises(ValueError):
        morse_betti_check(report, [1, 2, 0])
    data = morse_betti_check(report, [1, 0, 0, 1]).to_dict()
    assert data["counts_by_index"] == [1, 1, 0, 1]
    assert data["points"][0]["vertex"] == 0


@pytest.mark.parametrize("build, euler", [
    (lambda: build_torus_mesh(2, 8), 0),
    (lambda: build_sphere_mesh(2, 1), 2),
    (lambda: build_torus_mesh(3, 4), 0),
    (lambda: build_sphere_mesh(3, 0), 0),
])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_euler_relation_on_closed_meshes(build, euler, seed):
    """Test critical points of a generic function add up to the Euler characteristic."""
    mesh = build()
    assert mesh.euler_characteristic() == euler
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, mesh.n_vertices)
    report = classify_critical_vertices(mesh, u)
    assert report.euler_sum == euler
    if report.degenerate_count == 0:
        assert report.alternating_sum() == euler
    assert report.to_dict()["euler_sum"] == euler
    assert morse_betti_check(report, [1] + [0] * (mesh.dim - 1) + [1]).euler_sum == euler


def test_euler_relation_on_cell_subset():
    """Test a cap of the sphere sums to the Euler characteristic of the selected cells."""
    mesh = build_sphere_mesh(2, 1)
    upper = np.all(mesh.coords[mesh.cells][:, :, 2] > -0.2, axis=1)
    cells = mesh.cells[upper]
    edges = np.unique(np.sort(cells[:, [[0, 1], [1, 2], [0, 2]]].reshape(-1, 2), axis=1), axis=0)
    euler = len(np.unique(cells)) - len(edges) + len(cells)
    u = np.random.default_rng(3).uniform(-1.0, 1.0, mesh.n_vertices)
    assert classify_critical_vertices(mesh, u, cell_mask=upper).euler_sum == euler
