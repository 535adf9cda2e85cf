"""P1 finite elements for the Laplace–Beltrami operator of an edge-length metric."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .mesh import CollarSpec, SimplicialMesh
from .metric import EdgeLengthMetric, cell_gram
from .utils import SingularSystemError, UnrealizableCellError

BOUNDARY_CONDITIONS = ("closed", "neumann", "dirichlet")
MASS_KINDS = ("consistent", "lumped")
REALIZATIONS = ("auto", "edges", "conformal")


@dataclass(frozen=True, eq=False)
class OperatorPair:
    """Stiffness K and mass M over all vertices, plus the Dirichlet-constrained set.

    The eigenproblem lives on the free vertices; constrained rows and columns
    are eliminated (value 0).
    """

    stiffness: sparse.csr_matrix
    mass: sparse.csr_matrix
    bc: str = "closed"
    mass_kind: str = "consistent"
    constrained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n_vertices(self) -> int:
        return self.stiffness.shape[0]

    @property
    def free(self) -> np.ndarray:
        if self.constrained.size == 0:
            return np.arange(self.n_vertices)
        return np.nonzero(~self.constrained)[0]

    @property
    def reduced_stiffness(self) -> sparse.csr_matrix:
        free = self.free
        return self.stiffness[free][:, free].tocsr()

    @property
    def reduced_mass(self) -> sparse.csr_matrix:
        free = self.free
        return self.mass[free][:, free].tocsr()

    def restrict(self, v: np.ndarray) -> np.ndarray:
        """Free-vertex part of a full vector (free-length vectors pass through)."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] == self.n_vertices and len(self.free) != self.n_vertices:
            return v[self.free]
        return v

    def expand(self, v: np.ndarray) -> np.ndarray:
        """Full vector with zeros on constrained vertices."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] == self.n_vertices:
            return v
        full = np.zeros((self.n_vertices,) + v.shape[1:])
        full[self.free] = v
        return full


def _reference_gram(metric: EdgeLengthMetric) -> Tuple[np.ndarray, np.ndarray]:
    """Gram matrices of the reference shapes and the cell-mean conformal factor."""
    n = metric.mesh.dim
    reference = metric.reference
    gram = cell_gram(reference.lengths[metric.mesh.cell_edges], n)
    factor = metric.conformal[metric.mesh.cell_edges].mean(axis=1)
    return gram, factor


def local_matrices(
    metric: EdgeLengthMetric,
    mass_kind: str = "consistent",
    realization: str = "edges",
    cells: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Element stiffness and mass matrices, shape (C, n+1, n+1) each.

    Each cell is realized by a Cholesky factorization of its Gram matrix.
    The "conformal" realization uses the g₀ shape of the cell and multiplies
    K by χ̄^(n/2-1) and M by χ̄^(n/2), χ̄ the mean factor over the cell's edges.

    Raises:
        UnrealizableCellError: If a Gram matrix is not positive definite.
    """
    mesh = metric.mesh
    n = mesh.dim
    selected = np.arange(mesh.n_cells) if cells is None else np.asarray(cells)
    if realization == "conformal":
        gram, factor = _reference_gram(metric)
        gram, factor = gram[selected], factor[selected]
    else:
        gram = cell_gram(metric.lengths[mesh.cell_edges[selected]], n)
        factor = None
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        dets = np.linalg.det(gram)
        bad = int(np.argmin(dets))
        raise UnrealizableCellError(int(selected[bad]), float(dets[bad]) / math.factorial(n) ** 2)
    diag = np.diagonal(chol, axis1=1, axis2=2)
    volume = np.prod(diag, axis=1) / math.factorial(n)
    if np.any(volume <= 0.0):
        bad = int(np.argmin(volume))
        raise UnrealizableCellError(int(selected[bad]), 0.0, f"Cell {int(selected[bad])} has zero volume")
    inv_chol = np.linalg.inv(chol)
    inv_gram = inv_chol.transpose(0, 2, 1) @ inv_chol
    difference = np.hstack([-np.ones((n, 1)), np.eye(n)])
    stiffness = volume[:, None, None] * (difference.T @ inv_gram @ difference)
    if mass_kind == "consistent":
        pattern = (np.ones((n + 1, n + 1)) + np.eye(n + 1)) / ((n + 1) * (n + 2))
    elif mass_kind == "lumped":
        pattern = np.eye(n + 1) / (n + 1)
    else:
        raise ValueError(f"Unknown mass kind {mass_kind!r}; expected one of {MASS_KINDS}")
    mass = volume[:, None, None] * pattern[None, :, :]
    if factor is not None:
        stiffness *= (factor ** (n / 2.0 - 1.0))[:, None, None]
        mass *= (factor ** (n / 2.0))[:, None, None]
    return stiffness, mass


def _scatter(cells: np.ndarray, local: np.ndarray, size: int) -> sparse.csr_matrix:
    width = cells.shape[1]
    rows = np.repeat(cells, width, axis=1).ravel()
    cols = np.tile(cells, (1, width)).ravel()
    matrix = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()
    matrix.sum_duplicates()
    return matrix


def _choose_realization(metric: EdgeLengthMetric, realization: str) -> str:
    if realization not in REALIZATIONS:
        raise ValueError(f"Unknown realization {realization!r}; expected one of {REALIZATIONS}")
    if realization == "auto":
        return "edges"
    if realization == "conformal" and (metric.conformal is None or metric.reference is None):
        raise ValueError("Conformal realization needs a metric built from a smoothing profile")
    return realization


def assemble(
    mesh: SimplicialMesh,
    metric: EdgeLengthMetric,
    bc: str = "closed",
    mass_kind: str = "consistent",
    realization: str = "auto",
    cell_mask: Optional[np.ndarray] = None,
) -> OperatorPair:
    """Assemble K and M of the P1 Laplacian.

    Args:
        mesh: The mesh the metric lives on.
        metric: Edge lengths.
        bc: "closed" (no boundary), "neumann" (natural condition on the mesh
            boundary, e.g. ∂Ω for a collar submesh) or "dirichlet" (zero on
            the mesh boundary).
        mass_kind: "consistent" or "lumped".
        realization: "edges", "conformal" or "auto" (edges).
        cell_mask: Restrict assembly to these cells.

    Raises:
        UnrealizableCellError: If a cell has no Euclidean realization.
    """
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"Unknown boundary condition {bc!r}; expected one of {BOUNDARY_CONDITIONS}")
    if metric.mesh is not mesh:
        raise ValueError("Metric belongs to a different mesh")
    if bc == "closed" and not mesh.is_closed and cell_mask is None:
        raise ValueError("Mesh has a boundary; use bc='neumann' or bc='dirichlet'")
    realization = _choose_realization(metric, realization)
    cells = np.arange(mesh.n_cells) if cell_mask is None else np.nonzero(cell_mask)[0]
    stiffness, mass = local_matrices(metric, mass_kind, realization, cells)
    K = _scatter(mesh.cells[cells], stiffness, mesh.n_vertices)
    M = _scatter(mesh.cells[cells], mass, mesh.n_vertices)
    constrained = mesh.boundary_vertices.copy() if bc == "dirichlet" else np.zeros(mesh.n_vertices, dtype=bool)
    return OperatorPair(stiffness=K, mass=M, bc=bc, mass_kind=mass_kind, constrained=constrained)


def rayleigh(ops: OperatorPair, v: np.ndarray) -> float:
    """vᵀKv / vᵀMv over the free vertices.

    Raises:
        ValueError: If v has zero M-norm.
    """
    v = ops.restrict(v)
    denominator = float(v @ (ops.reduced_mass @ v))
    if denominator <= 0.0:
        raise ValueError("Rayleigh quotient of a vector with zero M-norm")
    return float(v @ (ops.reduced_stiffness @ v)) / denominator


@dataclass(frozen=True, eq=False)
class HarmonicExtension:
    """Harmonic extension of collar data to the exterior.

    ``values`` is a full vertex vector: the data on the closed collars and the
    extension elsewhere. ``isolated_components`` counts exterior components
    that touch neither ∂Ω nor a Dirichlet boundary; they are set to 0.
    """

    values: np.ndarray
    isolated_components: int = 0
    isolated_vertices: int = 0


def harmonic_extension(
    mesh: SimplicialMesh,
    metric: EdgeLengthMetric,
    boundary_data: np.ndarray,
    outer_bc: str = "none",
    realization: str = "auto",
) -> HarmonicExtension:
    """Solve Δû = 0 off the collars with û = data on the closed collars.

    Args:
        boundary_data: Full vertex vector; only collar-vertex entries are read.
        outer_bc: "none" or "dirichlet_zero" (û = 0 on the mesh boundary).

    Raises:
        ValueError: If the exterior is empty or the data is not finite.
        SingularSystemError: If the reduced system cannot be solved.
    """
    if outer_bc not in ("none", "dirichlet_zero"):
        raise ValueError(f"Unknown outer boundary condition {outer_bc!r}")
    data = np.asarray(boundary_data, dtype=float)
    known = mesh.collar_vertices.copy()
    if not np.all(np.isfinite(data[known])):
        raise ValueError("Boundary data must be finite on the collar vertices")
    values = np.where(known, data, 0.0)
    if outer_bc == "dirichlet_zero":
        known |= mesh.boundary_vertices & ~mesh.collar_vertices
    unknown = np.nonzero(~known)[0]
    if len(unknown) == 0:
        raise ValueError("The exterior region has no free vertices")
    exterior_cells = ~mesh.collar_cells
    stiffness, _ = local_matrices(metric, "lumped", _choose_realization(metric, realization),
                                  np.nonzero(exterior_cells)[0])
    K = _scatter(mesh.cells[exterior_cells], stiffness, mesh.n_vertices)
    K_uu = K[unknown][:, unknown].tocsr()
    K_uk = K[unknown][:, np.nonzero(known)[0]].tocsr()
    rhs = -(K_uk @ values[known])
    count, labels = csgraph.connected_components(K_uu, directed=False)
    coupled = np.asarray(abs(K_uk).sum(axis=1)).ravel() > 0
    anchored = np.zeros(count, dtype=bool)
    anchored[labels[coupled]] = True
    solvable = anchored[labels]
    solution = np.zeros(len(unknown))
    if np.any(solvable):
        idx = np.nonzero(solvable)[0]
        solved = spsolve(K_uu[idx][:, idx].tocsc(), rhs[idx])
        if not np.all(np.isfinite(solved)):
            raise SingularSystemError("Harmonic extension system is singular")
        solution[idx] = solved
    values[unknown] = solution
    return HarmonicExtension(
        values=values,
        isolated_components=int(np.sum(~anchored)),
        isolated_vertices=int(np.sum(~solvable)),
    )


@dataclass(frozen=True)
class CollarMode:
    """Analytic Neumann mode cos(kπ(x+1)/2) carried by one collar."""

    collar: int
    k: int
    eigenvalue: float


def collar_modes(collars: Sequence[CollarSpec], count: int) -> List[CollarMode]:
    """The ``count`` lowest modes of the disjoint union of collar intervals.

    Each collar contributes its own constant; ties keep collar order.
    """
    modes = []
    for index, collar in enumerate(collars):
        for k in range(count):
            modes.append(CollarMode(index, k, collar.neumann_eigenvalue(k)))
    modes.sort(key=lambda m: (m.eigenvalue, m.collar, m.k))
    return modes[:count]


def mode_vector(mesh: SimplicialMesh, mode: CollarMode) -> np.ndarray:
    """Full vertex vector of a collar mode: the cosine on its collar, NaN off the collars."""
    values = np.full(mesh.n_vertices, np.nan)
    values[mesh.collar_vertices] = 0.0
    on_collar = mesh.collar_index == mode.collar
    values[on_collar] = np.cos(mode.k * math.pi * (mesh.collar_x[on_collar] + 1.0) / 2.0)
    return values


@dataclass(frozen=True)
class UpperBoundReport:
    """Rayleigh–Ritz upper bounds from glued test functions ψ_k."""

    eps: Optional[float]
    targets: List[float]
    bounds: List[float]
    extension_constants: List[float]
    isolated_components: int = 0

    @property
    def excess(self) -> List[float]:
        return [b - t for b, t in zip(self.bounds, self.targets)]

    def to_dict(self) -> Dict[str, object]:
        return {
            "eps": self.eps,
            "targets": self.targets,
            "bounds": self.bounds,
            "excess": self.excess,
            "extension_constants": self.extension_constants,
            "isolated_components": self.isolated_components,
        }


def upper_bound_check(
    mesh: SimplicialMesh,
    metric_eps: EdgeLengthMetric,
    collars: Sequence[CollarSpec],
    l: int,
    bc: str = "closed",
    mass_kind: str = "consistent",
    realization: str = "auto",
) -> UpperBoundReport:
    """Max Rayleigh quotient over span{ψ_0..ψ_k} for k ≤ l.

    ψ_k is the k-th collar mode on the closed collars glued to its g₀-harmonic
    extension outside (zero on ∂M under a Dirichlet condition). The bounds use
    the same K and M as the eigensolve.

    Raises:
        ValueError: If the extension does not reproduce the mode on ∂Ω.
    """
    reference = metric_eps.reference if metric_eps.reference is not None else metric_eps
    ops = assemble(mesh, metric_eps, bc, mass_kind, realization)
    outer_bc = "dirichlet_zero" if bc == "dirichlet" else "none"
    modes = collar_modes(collars, l + 1)
    exterior = assemble(mesh, reference, "neumann", mass_kind, cell_mask=~mesh.collar_cells)
    collar_mass = assemble(mesh, reference, "neumann", mass_kind, cell_mask=mesh.collar_cells).mass

    columns, constants, isolated = [], [], 0
    for mode in modes:
        data = mode_vector(mesh, mode)
        extension = harmonic_extension(mesh, reference, data, outer_bc)
        on_collar = mesh.collar_vertices
        if np.max(np.abs(extension.values[on_collar] - data[on_collar])) > 1e-12:
            raise ValueError("Glued test function does not match the collar mode on ∂Ω")
        psi = extension.values
        isolated = max(isolated, extension.isolated_components)
        columns.append(psi)
        norm = float(psi @ (collar_mass @ psi))
        energy = float(psi @ (exterior.stiffness @ psi) + psi @ (exterior.mass @ psi))
        constants.append(energy / ((mode.eigenvalue + 1.0) * norm) if norm > 0 else float("nan"))
    basis = ops.restrict(np.column_stack(columns))
    K, M = ops.reduced_stiffness, ops.reduced_mass
    bounds = []
    for k in range(len(modes)):
        span = basis[:, : k + 1]
        A = span.T @ (K @ span)
        B = span.T @ (M @ span)
        bounds.append(float(scipy.linalg.eigh(A, B, eigvals_only=True)[-1]))
    return UpperBoundReport(
        eps=metric_eps.eps,
        targets=[m.eigenvalue for m in modes],
        bounds=bounds,
        extension_constants=constants,
        isolated_components=isolated,
    )


def write_coo(matrix: sparse.spmatrix, path: str) -> None:
    """Write a sparse matrix as "row col value" lines with a shape header."""
    coo = sparse.coo_matrix(matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for row, col, value in zip(coo.row, coo.col, coo.data):
            f.write(f"{row} {col} {value:.17g}\n")


def export_operators(ops: OperatorPair, prefix: str) -> Tuple[str, str]:
    """Write K and M next to each other as ``<prefix>_K.coo`` and ``<prefix>_M.coo``."""
    paths = (f"{prefix}_K.coo", f"{prefix}_M.coo")
    write_coo(ops.stiffness, paths[0])
    write_coo(ops.mass, paths[1])
    return paths
