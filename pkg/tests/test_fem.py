import dataclasses
import math

import numpy as np
import pytest

from nodal_forge.eigen import solve_lowest
from nodal_forge.fem import (CollarMode, assemble, collar_modes, export_operators, harmonic_extension,
                             local_matrices, mode_vector, rayleigh, upper_bound_check)
from nodal_forge.mesh import REGION_EXTERIOR, CollarSpec, build_ball_mesh, build_torus_mesh
from nodal_forge.metric import coordinate_metric, degenerate_metric, reference_metric


@pytest.fixture(scope="module")
def slab_torus():
    return build_torus_mesh(3, 16, [CollarSpec(sigma_model="torus2", r=0.25, layers=6)])


@pytest.fixture(scope="module")
def reference(slab_torus):
    return reference_metric(slab_torus)


@pytest.fixture(scope="module")
def flat_square():
    mesh = build_torus_mesh(2, 8)
    return mesh, assemble(mesh, coordinate_metric(mesh), "closed")


def test_flat_grid_is_five_point_stencil(flat_square):
    """Test P1 on right isosceles triangles gives the 4/-1 stencil with zero row sums."""
    _, ops = flat_square
    K = ops.stiffness.toarray()
    assert np.allclose(K, K.T)
    assert np.allclose(np.diag(K), 4.0)
    assert np.allclose(K.sum(axis=1), 0.0)
    off = K[~np.eye(len(K), dtype=bool)]
    assert np.all(np.isclose(off, 0.0) | np.isclose(off, -1.0))
    assert np.count_nonzero(np.isclose(K, -1.0), axis=1).tolist() == [4] * len(K)


def test_mass_totals_area(flat_square):
    """Test the consistent and lumped mass both total the area of the unit torus."""
    mesh, ops = flat_square
    assert ops.mass.sum() == pytest.approx(1.0)
    lumped = assemble(mesh, coordinate_metric(mesh), "closed", mass_kind="lumped").mass
    assert lumped.count_nonzero() == mesh.n_vertices
    assert np.allclose(lumped.diagonal(), np.asarray(ops.mass.sum(axis=1)).ravel())


def test_rayleigh_quotient(flat_square):
    """Test the constant has zero energy and a zero vector is rejected."""
    mesh, ops = flat_square
    assert rayleigh(ops, np.ones(mesh.n_vertices)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        rayleigh(ops, np.zeros(mesh.n_vertices))


def test_assembly_argument_errors(flat_square, slab_torus, reference):
    """Test unknown conditions, foreign metrics and bare conformal requests fail."""
    mesh, _ = flat_square
    with pytest.raises(ValueError):
        assemble(mesh, coordinate_metric(mesh), "robin")
    with pytest.raises(ValueError):
        assemble(slab_torus, coordinate_metric(mesh))
    with pytest.raises(ValueError):
        assemble(slab_torus, reference, realization="conformal")
    with pytest.raises(ValueError):
        assemble(mesh, coordinate_metric(mesh), mass_kind="diagonal")


def test_closed_assembly_needs_closed_mesh():
    """Test a mesh with boundary needs an explicit boundary condition."""
    ball = build_ball_mesh(3, 1, CollarSpec(sigma_model="sphere2", r=0.5, layers=4))
    ref = reference_metric(ball)
    with pytest.raises(ValueError, match="boundary"):
        assemble(ball, ref, "closed")
    ops = assemble(ball, ref, "dirichlet")
    assert np.array_equal(ops.constrained, ball.boundary_vertices)
    free = np.arange(len(ops.free), dtype=float)
    full = ops.expand(free)
    assert np.all(full[ball.boundary_vertices] == 0.0)
    assert np.array_equal(ops.restrict(full), free)


def test_exterior_cells_scale_with_eps(slab_torus, reference):
    """Test cells away from the collar scale K by eps^(n/2-1) and M by eps^(n/2)."""
    eps = 0.3
    metric = degenerate_metric(reference, eps, strict=False)
    touches_collar = np.any(slab_torus.collar_edge_mask[slab_torus.cell_edges], axis=1)
    cells = np.nonzero(~touches_collar)[0][:50]
    K0, M0 = local_matrices(reference, cells=cells)
    for realization in ("conformal", "edges"):
        K, M = local_matrices(metric, realization=realization, cells=cells)
        assert np.allclose(K, math.sqrt(eps) * K0)
        assert np.allclose(M, eps ** 1.5 * M0)


def test_collar_cells_keep_reference_operators(slab_torus, reference):
    """Test cells inside the collar are untouched by the degeneration."""
    metric = degenerate_metric(reference, 0.1, strict=False)
    cells = np.nonzero(slab_torus.collar_cells)[0][:50]
    K0, M0 = local_matrices(reference, cells=cells)
    K, M = local_matrices(metric, realization="conformal", cells=cells)
    assert np.allclose(K, K0)
    assert np.allclose(M, M0)


def test_harmonic_extension_of_constant(slab_torus, reference):
    """Test constant collar data extends to the same constant."""
    extension = harmonic_extension(slab_torus, reference, np.full(slab_torus.n_vertices, 2.0))
    assert np.allclose(extension.values, 2.0)
    assert extension.isolated_components == 0


def test_harmonic_extension_maximum_principle(slab_torus, reference):
    """Test the extension of a collar cosine stays within the data range."""
    data = mode_vector(slab_torus, CollarMode(0, 1, 0.0))
    values = harmonic_extension(slab_torus, reference, data).values
    on_collar = slab_torus.collar_vertices
    assert np.allclose(values[on_collar], data[on_collar])
    assert values.min() >= -1.0 - 1e-9
    assert values.max() <= 1.0 + 1e-9


def test_harmonic_extension_rejects_bad_data(slab_torus, reference):
    """Test NaN data on the collar and unknown outer conditions are rejected."""
    with pytest.raises(ValueError):
        harmonic_extension(slab_torus, reference, np.full(slab_torus.n_vertices, np.nan))
    with pytest.raises(ValueError):
        harmonic_extension(slab_torus, reference, np.zeros(slab_torus.n_vertices), outer_bc="periodic")


def test_harmonic_extension_dirichlet_zero():
    """Test the ball extension falls from the collar value to zero on the boundary."""
    ball = build_ball_mesh(3, 1, CollarSpec(sigma_model="sphere2", r=0.5, layers=4))
    extension = harmonic_extension(ball, reference_metric(ball), np.ones(ball.n_vertices), outer_bc="dirichlet_zero")
    values = extension.values
    assert np.all(values[ball.boundary_vertices] == 0.0)
    assert np.allclose(values[ball.collar_vertices], 1.0)
    # the core is enclosed by the collar
    radii = np.linalg.norm(ball.coords, axis=1)
    core = (radii < 0.3) & ~ball.collar_vertices
    assert np.any(core)
    assert np.allclose(values[core], 1.0, atol=1e-8)
    # P1 on the onion mesh keeps the discrete maximum principle only approximately
    assert values.min() >= -0.05
    assert values.max() <= 1.05
    outside = (radii > 0.7) & ~ball.boundary_vertices
    assert np.all(values[outside] < 1.0)
    assert extension.isolated_components == 0


def _with_detached_copy(mesh):
    """The mesh plus a disjoint copy of it that carries no collar."""
    n = mesh.n_vertices
    return dataclasses.replace(
        mesh,
        coords=np.vstack([mesh.coords, mesh.coords]),
        cells=np.vstack([mesh.cells, mesh.cells + n]),
        region=np.concatenate([mesh.region, np.full(mesh.n_cells, REGION_EXTERIOR)]),
        collar_x=np.concatenate([mesh.collar_x, np.full(n, np.nan)]),
        collar_index=np.concatenate([mesh.collar_index, np.full(n, -1)]),
        sigma_points=np.vstack([mesh.sigma_points, np.full(mesh.sigma_points.shape, np.nan)]),
    )


def test_harmonic_extension_isolated_component():
    """Test an exterior component that never meets the collar is set to zero."""
    strip = build_torus_mesh(2, 16, [CollarSpec(sigma_model="circle", r=0.25, layers=4)])
    union = _with_detached_copy(strip)
    n = strip.n_vertices
    extension = harmonic_extension(union, coordinate_metric(union), np.full(union.n_vertices, 3.0))
    assert extension.isolated_components == 1
    assert extension.isolated_vertices == n
    assert np.all(extension.values[n:] == 0.0)
    assert np.allclose(extension.values[:n], 3.0)


def test_collar_modes_union():
    """Test every collar contributes its constant and ties keep collar order."""
    collars = [CollarSpec(sigma_model="torus2", gamma=1.0, label=0),
               CollarSpec(sigma_model="torus2", gamma=0.8, label=1)]
    modes = collar_modes(collars, 4)
    assert [(m.collar, m.k) for m in modes] == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert modes[2].eigenvalue == pytest.approx(math.pi ** 2 / 4)
    assert modes[3].eigenvalue == pytest.approx(math.pi ** 2 / (4 * 0.64))


def test_mode_vector(slab_torus):
    """Test the collar cosine is ±1 at the ends of the collar and NaN outside."""
    values = mode_vector(slab_torus, CollarMode(0, 2, 0.0))
    on_collar = slab_torus.collar_vertices
    assert np.all(np.isnan(values[~on_collar]))
    ends = np.isclose(np.abs(slab_torus.collar_x), 1.0) & on_collar
    assert np.allclose(values[ends], 1.0)


def test_upper_bounds_dominate_eigenvalues(slab_torus, reference):
    """Test the glued Rayleigh–Ritz bounds sit above the computed eigenvalues."""
    metric = degenerate_metric(reference, 0.1, strict=False)
    report = upper_bound_check(slab_torus, metric, slab_torus.collars, 1, realization="conformal")
    assert report.targets == pytest.approx([0.0, math.pi ** 2 / 4])
    assert report.bounds[0] == pytest.approx(0.0, abs=1e-9)
    assert report.isolated_components == 0
    ops = assemble(slab_torus, metric, realization="conformal")
    eigenvalues = solve_lowest(ops, 2).eigenvalues
    for bound, value in zip(report.bounds, eigenvalues):
        assert bound >= value - 1e-3 * max(value, 1.0)
    assert report.to_dict()["excess"] == pytest.approx(report.excess)


def test_export_operators(tmp_path, flat_square):
    """Test K and M are written as COO text with a shape header."""
    _, ops = flat_square
    k_path, m_path = export_operators(ops, str(tmp_path / "flat"))
    lines = open(k_path).read().splitlines()
    rows, cols, nnz = (int(v) for v in lines[0].lstrip("# ").split())
    assert (rows, cols) == ops.stiffness.shape
    assert len(lines) == nnz + 1
    assert m_path.endswith("_M.coo")
