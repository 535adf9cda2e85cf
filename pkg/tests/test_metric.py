import math

import numpy as np
import pytest

from nodal_forge.mesh import CollarSpec, build_sphere_mesh, build_torus_mesh
from nodal_forge.metric import (SmoothingProfile, cayley_menger_volume, collar_depth, coordinate_metric,
                                default_delta, degenerate_metric, edge_depth, reference_metric,
                                smoothed_metric, smoothstep)
from nodal_forge.utils import UnrealizableCellError

LAYERS = 6
RADIUS = 0.25


@pytest.fixture(scope="module")
def slab_torus():
    return build_torus_mesh(3, 16, [CollarSpec(sigma_model="torus2", r=RADIUS, layers=LAYERS)])


@pytest.fixture(scope="module")
def reference(slab_torus):
    return reference_metric(slab_torus)


def test_cayley_menger_equilateral():
    """Test squared volumes of the unit triangle and the regular unit tetrahedron."""
    assert cayley_menger_volume([1.0, 1.0, 1.0]) == pytest.approx(3.0 / 16.0, rel=1e-14)
    assert cayley_menger_volume([1.0] * 6) == pytest.approx(1.0 / 72.0, rel=1e-13)
    assert cayley_menger_volume([3.0, 4.0, 5.0]) == pytest.approx(36.0, rel=1e-13)


def test_cayley_menger_degenerate():
    """Test the flat triangle (1, 1, 2) has no realization."""
    with pytest.raises(UnrealizableCellError):
        cayley_menger_volume([1.0, 1.0, 2.0])
    with pytest.raises(UnrealizableCellError):
        cayley_menger_volume([1.0, 0.0, 1.0])


def test_cayley_menger_length_count():
    """Test a length count that is not a triangular number is rejected."""
    with pytest.raises(ValueError):
        cayley_menger_volume([1.0] * 5)


@pytest.mark.parametrize("order", [2, 3, 4])
def test_smoothstep_shape(order):
    """Test the smoothstep is 0, 1/2 and 1 at the ends and midpoint, and monotone."""
    t = np.linspace(-0.5, 1.5, 201)
    values = smoothstep(t, order)
    assert values[0] == 0.0
    assert values[-1] == pytest.approx(1.0)
    assert smoothstep(np.array([0.5]), order)[0] == pytest.approx(0.5)
    assert np.all(np.diff(values) >= -1e-15)


def test_smoothstep_flat_ends():
    """Test the first derivative vanishes at both ends."""
    h = 1e-4
    assert smoothstep(np.array([h]), 2)[0] / h < 1e-6
    assert (1.0 - smoothstep(np.array([1.0 - h]), 2)[0]) / h < 1e-6


def test_profile_values():
    """Test χ is 1 on the collar and eps beyond δ."""
    profile = SmoothingProfile(eps=0.01, delta=0.5)
    values = profile.value(np.array([0.0, 0.25, 0.5, 2.0]))
    assert values[0] == pytest.approx(1.0)
    assert 0.01 < values[1] < 1.0
    assert values[2] == pytest.approx(0.01)
    assert values[3] == pytest.approx(0.01)
    sharp = SmoothingProfile(eps=0.01, delta=0.0)
    assert sharp.value(np.array([0.0, 1e-6])).tolist() == [1.0, 0.01]


@pytest.mark.parametrize("kwargs", [{"eps": 0.0, "delta": 0.1}, {"eps": 1.5, "delta": 0.1},
                                    {"eps": 0.1, "delta": -0.1}, {"eps": 0.1, "delta": 0.1, "order": 1}])
def test_profile_validation(kwargs):
    """Test out-of-range profile parameters are rejected."""
    with pytest.raises(ValueError):
        SmoothingProfile(**kwargs)


def test_coordinate_metric_is_chord():
    """Test chart chords on the icosahedron are all equal."""
    mesh = build_sphere_mesh(2, 0)
    lengths = coordinate_metric(mesh).lengths
    assert len(lengths) == 30
    assert np.allclose(lengths, lengths[0])


def test_reference_collar_lengths(slab_torus, reference):
    """Test collar edges across the slab measure Γ·Δx and edges along Σ match the exterior."""
    a, b = slab_torus.edges[:, 0], slab_torus.edges[:, 1]
    delta = slab_torus.chart_difference(a, b)
    collar = slab_torus.collar_edge_mask
    across = collar & np.isclose(np.abs(delta[:, 0]), 1 / 16) & np.all(delta[:, 1:] == 0, axis=1)
    assert np.any(across)
    assert np.allclose(reference.lengths[across], 2.0 / LAYERS)

    along = np.isclose(delta[:, 0], 0.0)
    scale = 2.0 * math.pi * RADIUS
    chords = np.linalg.norm(delta, axis=1)
    assert np.allclose(reference.lengths[along], scale * chords[along])


def test_collar_depth(slab_torus, reference):
    """Test depth vanishes on the closed collar and grows away from it."""
    depth = collar_depth(reference)
    assert np.all(depth[slab_torus.collar_vertices] == 0.0)
    outside = ~slab_torus.collar_vertices
    assert np.all(depth[outside] > 0.0)
    assert np.all(np.isfinite(depth))


def test_edge_depth_on_boundary_chords(slab_torus, reference):
    """Test non-collar edges get a positive midpoint depth."""
    depths = edge_depth(reference)
    assert np.all(depths[slab_torus.collar_edge_mask] == 0.0)
    assert np.all(depths[~slab_torus.collar_edge_mask] > 0.0)


def test_degenerate_metric_scaling(slab_torus, reference):
    """Test g_eps keeps collar edges and scales the others by sqrt(eps)."""
    eps = 0.25
    metric = degenerate_metric(reference, eps, strict=False)
    collar = slab_torus.collar_edge_mask
    assert np.allclose(metric.lengths[collar], reference.lengths[collar])
    assert np.allclose(metric.lengths[~collar], math.sqrt(eps) * reference.lengths[~collar])
    assert metric.provenance == "degenerate"
    assert metric.reference is reference


def test_degenerate_metric_unrealizable(reference):
    """Test a small eps collapses cells with a face on the collar boundary."""
    with pytest.raises(UnrealizableCellError) as info:
        degenerate_metric(reference, 0.01)
    assert info.value.cell >= 0


def test_degenerate_metric_eps_range(reference):
    """Test eps outside (0, 1] is rejected."""
    with pytest.raises(ValueError):
        degenerate_metric(reference, 0.0)


def test_smoothed_metric_factor(slab_torus, reference):
    """Test the smoothed metric carries χ between eps and 1 and stays 1 on the collar."""
    delta = default_delta(reference)
    assert delta >= 2.0 / LAYERS
    metric = smoothed_metric(reference, SmoothingProfile(eps=0.05, delta=delta), strict=False)
    chi = metric.conformal
    assert np.allclose(chi[slab_torus.collar_edge_mask], 1.0)
    assert np.all((chi >= 0.05 - 1e-15) & (chi <= 1.0 + 1e-15))
    assert np.allclose(metric.lengths, reference.lengths * np.sqrt(chi))
    assert metric.describe() == {"provenance": "smoothed", "eps": 0.05, "delta": delta, "order": 2}


def test_smoothed_metric_rejects_wide_delta(reference):
    """Test δ at least the deepest exterior point is rejected."""
    deepest = float(collar_depth(reference).max())
    with pytest.raises(ValueError):
        smoothed_metric(reference, SmoothingProfile(eps=0.1, delta=deepest))


def test_scaled_metric(reference):
    """Test a global constant scales lengths and the attached reference together."""
    base = degenerate_metric(reference, 0.5, strict=False)
    metric = base.scaled(2.0)
    assert np.allclose(metric.lengths, 2.0 * base.lengths)
    assert np.allclose(metric.reference.lengths, 2.0 * reference.lengths)
    assert np.array_equal(metric.conformal, base.conformal)


def test_radius_override_rescales_exterior(slab_torus, reference):
    """Test overriding r rescales the Σ and exterior lengths together."""
    smaller = reference_metric(slab_torus, [CollarSpec(sigma_model="torus2", r=0.8 * RADIUS, layers=LAYERS)])
    a, b = slab_torus.edges[:, 0], slab_torus.edges[:, 1]
    along = np.isclose(slab_torus.chart_difference(a, b)[:, 0], 0.0)
    assert np.allclose(smaller.lengths[along], 0.8 * reference.lengths[along])
