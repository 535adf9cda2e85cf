import math

import numpy as np
import pytest

from nodal_forge.mesh import (REGION_EXTERIOR, CollarSpec, build_ball_mesh, build_collar_band,
                              build_model_mesh, build_sphere_mesh, build_torus_mesh, cell_quality,
                              genus2_sdf, load_mesh, mesh_audit, refine, save_mesh)
from nodal_forge.utils import MeshError


@pytest.fixture(scope="module")
def slab_torus():
    return build_torus_mesh(3, 16, [CollarSpec(sigma_model="torus2", r=0.25, layers=6)])


def test_icosahedron_counts():
    """Test the unrefined icosphere is the icosahedron."""
    mesh = build_sphere_mesh(2, 0)
    assert mesh.n_vertices == 12
    assert mesh.n_cells == 20
    assert mesh.is_closed
    assert mesh.euler_characteristic() == 2
    assert np.allclose(np.linalg.norm(mesh.coords, axis=1), 1.0)


def test_sixteen_cell_counts():
    """Test the unrefined S³ is the boundary of the 16-cell."""
    mesh = build_sphere_mesh(3, 0)
    assert mesh.n_vertices == 8
    assert mesh.n_cells == 16
    assert mesh.euler_characteristic() == 0


def test_refine_multiplies_cells():
    """Test uniform refinement splits triangles into 4 and tetrahedra into 8."""
    surface = build_sphere_mesh(2, 0)
    assert refine(surface).n_cells == 4 * surface.n_cells
    volume = build_torus_mesh(3, 4)
    refined = refine(volume)
    assert refined.n_cells == 8 * volume.n_cells
    assert refined.euler_characteristic() == 0
    assert mesh_audit(refined).passed


def test_flat_torus_grid_counts():
    """Test the periodic Kuhn grid has n! simplices per cube."""
    mesh = build_torus_mesh(2, 8)
    assert mesh.n_vertices == 64
    assert mesh.n_cells == 128
    assert mesh.euler_characteristic() == 0
    cube = build_torus_mesh(3, 4)
    assert cube.n_cells == 6 * 64


def test_slab_collar_layout(slab_torus):
    """Test a slab collar covers its layers and runs its coordinate from -1 to 1."""
    audit = mesh_audit(slab_torus)
    assert audit.passed, audit.violations
    assert audit.region_counts["collar_0"] == 6 * 16 * 16 * 6
    x = slab_torus.collar_x[slab_torus.collar_vertices]
    assert x.min() == pytest.approx(-1.0)
    assert x.max() == pytest.approx(1.0)
    assert slab_torus.sigma_kind == "periodic"


def test_collar_submesh_is_a_band(slab_torus):
    """Test the collar cells form a band whose boundary is the two ends of Ω."""
    band = slab_torus.submesh(slab_torus.collar_cells)
    assert not band.is_closed
    ends = band.collar_x[band.boundary_vertices]
    assert np.allclose(np.abs(ends), 1.0)
    assert band.euler_characteristic() == 0


def test_overlapping_slabs_rejected():
    """Test two slabs placed on top of each other raise a MeshError."""
    collars = [
        CollarSpec(sigma_model="torus2", r=0.25, layers=6, label=0, position=0.5),
        CollarSpec(sigma_model="torus2", r=0.25, layers=6, label=1, position=0.55),
    ]
    with pytest.raises(MeshError):
        build_torus_mesh(3, 16, collars)


def test_slabs_need_common_radius():
    """Test slab collars with different r are rejected."""
    collars = [
        CollarSpec(sigma_model="torus2", r=0.25, layers=6, label=0),
        CollarSpec(sigma_model="torus2", r=0.3, layers=6, label=1),
    ]
    with pytest.raises(MeshError):
        build_torus_mesh(3, 16, collars)


def test_coarse_grid_rejected():
    """Test a collar that does not fit the grid reports the coarse resolution."""
    with pytest.raises(MeshError, match="divisions"):
        build_torus_mesh(3, 6, [CollarSpec(sigma_model="torus2", r=0.25, layers=8)])


@pytest.mark.parametrize("gamma, layers", [(0.5, 8), (1.2, 8), (1.0, 3)])
def test_collar_spec_validation(gamma, layers):
    """Test stretch constants outside (1/2, 1] and too few layers are rejected."""
    with pytest.raises(ValueError):
        CollarSpec(gamma=gamma, layers=layers)


def test_collar_spec_admits():
    """Test the Σ-gap constraint λ₁(Σ) > l²π²/(4Γ²)."""
    assert CollarSpec(sigma_model="sphere2", r=0.4).admits(2)
    assert not CollarSpec(sigma_model="sphere2", r=0.5).admits(2)
    assert CollarSpec(sigma_model="genus2").admits(5)
    assert CollarSpec(gamma=0.8).neumann_eigenvalue(1) == pytest.approx(math.pi ** 2 / 2.56)


def test_collared_sphere_audit():
    """Test the collared S³ is an audited closed manifold with an equatorial collar."""
    mesh = build_model_mesh("sphere", 3, 1, [CollarSpec(sigma_model="sphere2", r=0.4, layers=4)])
    audit = mesh_audit(mesh)
    assert audit.passed, audit.violations
    assert audit.euler == 0
    assert mesh.is_closed
    assert np.any(mesh.collar_cells)
    assert np.any(mesh.region == REGION_EXTERIOR)


def test_ball_with_collar():
    """Test the unit ball has a boundary and a collar strictly inside it."""
    mesh = build_ball_mesh(3, 1, CollarSpec(sigma_model="sphere2", r=0.5, layers=4))
    assert mesh_audit(mesh).passed
    assert mesh.euler_characteristic() == 1
    assert not mesh.is_closed
    assert not np.any(mesh.boundary_vertices & mesh.collar_vertices)
    radii = np.linalg.norm(mesh.coords[mesh.boundary_vertices], axis=1)
    assert np.allclose(radii, 1.0)


def test_ball_carries_one_collar():
    """Test that a ball rejects a second collar."""
    collars = [CollarSpec(sigma_model="sphere2", r=0.5, layers=4, label=i) for i in range(2)]
    with pytest.raises(MeshError):
        build_model_mesh("ball", 3, 1, collars)


def test_ball_rejects_coarse_or_thin_layers():
    """Test the ball checks its refinement and collar layer count up front."""
    with pytest.raises(MeshError, match="refinement"):
        build_ball_mesh(3, 0, CollarSpec(sigma_model="sphere2", r=0.5, layers=4))
    with pytest.raises(MeshError, match="layers"):
        build_ball_mesh(3, 1, CollarSpec(sigma_model="sphere2", r=0.5, layers=40))
    with pytest.raises(MeshError, match="layers"):
        build_ball_mesh(2, 1, CollarSpec(sigma_model="circle", r=0.5, layers=40))


def test_genus2_band():
    """Test the implicit genus-2 collar sits where the distance function is small."""
    mesh = build_torus_mesh(3, 16, [CollarSpec(sigma_model="genus2", r=1.0, layers=4)], embedding="implicit")
    phi = genus2_sdf(mesh.coords[mesh.collar_vertices])
    width = mesh.implicit["half_width"]
    assert np.all(np.abs(phi) <= width + 1e-12)
    assert mesh.sigma_kind == "none"


def test_collar_band_over_circle():
    """Test the bare band over a polygon is a 2D annulus with both ends as boundary."""
    points = 16
    angles = 2 * np.pi * np.arange(points) / points
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    segments = np.column_stack([np.arange(points), (np.arange(points) + 1) % points])
    band = build_collar_band(circle, segments, CollarSpec(sigma_model="circle", r=0.25, layers=4))
    assert band.dim == 2
    assert band.n_vertices == points * 5
    assert band.euler_characteristic() == 0
    assert np.count_nonzero(band.boundary_vertices) == 2 * points


def test_cell_quality_bounds():
    """Test quality lies in (0, 1] and equals 1 only for regular cells."""
    quality = cell_quality(build_sphere_mesh(2, 1))
    assert np.all(quality > 0.0)
    assert np.all(quality <= 1.0 + 1e-12)


def test_unknown_model():
    """Test an unknown model name is rejected."""
    with pytest.raises(ValueError):
        build_model_mesh("klein", 2, 0)


def test_save_and_load(tmp_path, slab_torus):
    """Test a saved mesh loads with the same cells, collars and metadata."""
    path = tmp_path / "mesh.json"
    save_mesh(slab_torus, str(path))
    loaded = load_mesh(str(path))
    assert np.array_equal(loaded.cells, slab_torus.cells)
    assert np.allclose(loaded.coords, slab_torus.coords)
    assert loaded.collars == slab_torus.collars
    assert loaded.sigma_kind == slab_torus.sigma_kind
    assert mesh_audit(loaded).passed
