"""Analytic and dense cross-checks of the discretization."""

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np

from .eigen import dense_solve, solve_lowest
from .fem import OperatorPair, assemble
from .mesh import CollarSpec, build_collar_band, build_model_mesh, build_sphere_mesh, build_torus_mesh
from .metric import cayley_menger_volume, coordinate_metric, reference_metric
from .utils import to_builtin


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({"name": self.name, "passed": self.passed, **self.details})


def flat_torus_spectrum(n: int, count: int, period: float = 1.0) -> List[float]:
    """Lowest ``count`` eigenvalues (2π/period)²|m|², m ∈ Zⁿ, with multiplicity."""
    reach = int(math.ceil(count ** (1.0 / n))) + 1
    values = sorted(
        sum(m * m for m in combo) * (2.0 * math.pi / period) ** 2
        for combo in itertools.product(range(-reach, reach + 1), repeat=n)
    )
    return values[:count]


def sphere_spectrum(n: int, count: int) -> List[float]:
    """Lowest ``count`` eigenvalues j(j+n-1) of the round unit Sⁿ with multiplicity."""
    values: List[float] = []
    j = 0
    while len(values) < count:
        multiplicity = math.comb(j + n, n) - (math.comb(j + n - 2, n) if j >= 2 else 0)
        values.extend([float(j * (j + n - 1))] * multiplicity)
        j += 1
    return values[:count]


def interval_spectrum(gamma: float, count: int) -> List[float]:
    return [(k * math.pi / (2.0 * gamma)) ** 2 for k in range(count)]


def observed_order(errors: List[float], ratio: float = 2.0) -> float:
    """Convergence order between the last two errors for mesh sizes shrinking by ``ratio``."""
    return math.log(errors[-2] / errors[-1]) / math.log(ratio)


def check_cayley_menger() -> OracleResult:
    triangle = math.sqrt(cayley_menger_volume([1.0, 1.0, 1.0]))
    tetrahedron = math.sqrt(cayley_menger_volume([1.0] * 6))
    triangle_ok = abs(triangle - math.sqrt(3.0) / 4.0) <= 1e-12
    tetra_ok = abs(tetrahedron - 1.0 / (6.0 * math.sqrt(2.0))) <= 1e-12
    return OracleResult("cayley-menger", triangle_ok and tetra_ok, {
        "triangle": triangle,
        "tetrahedron": tetrahedron,
    })


def check_sphere_spectrum(levels: int = 3, min_order: float = 1.8) -> OracleResult:
    """Round S² with the ambient chord metric: λ₁..λ₃ → 2 at order ≥ ``min_order`` in h."""
    errors = []
    for level in range(1, levels + 1):
        mesh = build_sphere_mesh(2, level)
        ops = assemble(mesh, coordinate_metric(mesh), "closed")
        result = solve_lowest(ops, 4, tol=1e-8)
        errors.append(float(np.max(np.abs(result.eigenvalues[1:4] - 2.0))))
    order = observed_order(errors)
    return OracleResult("sphere-spectrum", order >= min_order, {"errors": errors, "order": order})


def check_flat_torus(n: int = 2, divisions=(8, 16), min_order: float = 1.8) -> OracleResult:
    exact = flat_torus_spectrum(n, 5)
    errors = []
    for count in divisions:
        mesh = build_torus_mesh(n, count)
        ops = assemble(mesh, coordinate_metric(mesh), "closed")
        result = solve_lowest(ops, 5, tol=1e-8)
        errors.append(float(np.max(np.abs(result.eigenvalues - exact)[1:] / np.array(exact[1:]))))
    order = observed_order(errors, divisions[-1] / divisions[-2])
    return OracleResult("flat-torus", order >= min_order, {"errors": errors, "order": order, "exact": exact})


def check_collar_interval(points: int = 64, layers: int = 24, rtol: float = 0.02) -> OracleResult:
    """Neumann spectrum of the bare band (-1, 1) × r·S¹ starts with {0, π²/4, π²}."""
    angles = 2.0 * math.pi * np.arange(points) / points
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    segments = np.column_stack([np.arange(points), (np.arange(points) + 1) % points])
    collar = CollarSpec(sigma_model="circle", r=0.25, layers=layers)
    mesh = build_collar_band(circle, segments, collar)
    ops = assemble(mesh, reference_metric(mesh), "neumann")
    computed = dense_solve(ops, 3).eigenvalues
    exact = interval_spectrum(collar.gamma, 3)
    passed = abs(computed[0]) <= 1e-8 and all(
        abs(c - e) <= rtol * e for c, e in zip(computed[1:], exact[1:]))
    return OracleResult("collar-interval", passed, {"computed": computed, "exact": exact})


def check_dense_vs_iterative(refinement: int = 2, count: int = 6, rtol: float = 1e-8) -> OracleResult:
    mesh = build_sphere_mesh(2, refinement)
    ops = assemble(mesh, coordinate_metric(mesh), "closed")
    dense = dense_solve(ops, count).eigenvalues
    iterative = solve_lowest(ops, count, tol=1e-9).eigenvalues
    scale = np.maximum(np.abs(dense), 1.0)
    deviation = float(np.max(np.abs(dense - iterative) / scale))
    return OracleResult("dense-vs-iterative", deviation <= rtol, {
        "dense": dense,
        "iterative": iterative,
        "max_relative_deviation": deviation,
    })


def exterior_dirichlet_constant(mesh, ref) -> float:
    """First Dirichlet eigenvalue of Ω^c under g₀ (zero on ∂Ω and on any boundary of M)."""
    outside = ~mesh.collar_cells
    ops = assemble(mesh, ref, "neumann", cell_mask=outside)
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[np.unique(mesh.cells[outside])] = True
    constrained = ~touched | mesh.collar_vertices
    constrained[mesh.boundary_vertices] = True
    pinned = OperatorPair(ops.stiffness, ops.mass, "dirichlet", ops.mass_kind, constrained)
    return float(solve_lowest(pinned, 1, tol=1e-8).eigenvalues[0])


def check_exterior_constant(refinement: int = 1) -> OracleResult:
    collar = CollarSpec(sigma_model="sphere2", r=0.4, layers=8)
    mesh = build_model_mesh("sphere", 3, refinement, [collar])
    c0 = exterior_dirichlet_constant(mesh, reference_metric(mesh))
    return OracleResult("exterior-c0", c0 > 0.0, {"c0": c0})


ORACLES: Dict[str, Callable[[], OracleResult]] = {
    "cayley-menger": check_cayley_menger,
    "sphere-spectrum": check_sphere_spectrum,
    "flat-torus": check_flat_torus,
    "collar-interval": check_collar_interval,
    "dense-vs-iterative": check_dense_vs_iterative,
    "exterior-c0": check_exterior_constant,
}


def run_oracle(name: str) -> OracleResult:
    """Run one named oracle, or all of them for ``name == "all"``.

    Raises:
        KeyError: If the oracle is unknown.
    """
    if name == "all":
        results = [check() for check in ORACLES.values()]
        return OracleResult("all", all(r.passed for r in results), {
            "results": [r.to_dict() for r in results]})
    if name not in ORACLES:
        raise KeyError(f"Unknown oracle {name!r}; expected one of {sorted(ORACLES)} or 'all'")
    return ORACLES[name]()
