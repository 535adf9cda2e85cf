"""PL critical points by lower-link homology."""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .mesh import SimplicialMesh, _boundary_facets
from .utils import local_faces, to_builtin, vertex_ranks


@dataclass(frozen=True)
class CriticalPoint:
    vertex: int
    index: int
    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class CriticalReport:
    dim: int
    points: List[CriticalPoint]
    counts_by_index: List[int]
    betti_reference: Optional[List[int]] = None
    morse_pass: Optional[bool] = None
    # Σ_v Σ_i (-1)^i b̃_{i-1}(lower link of v); equals χ of the complex even with degenerate points
    euler_sum: Optional[int] = None

    @property
    def degenerate_count(self) -> int:
        return sum(1 for p in self.points if p.degenerate)

    def alternating_sum(self) -> int:
        return int(sum((-1) ** i * c for i, c in enumerate(self.counts_by_index)))

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            "counts_by_index": self.counts_by_index,
            "degenerate": self.degenerate_count,
            "betti_reference": self.betti_reference,
            "morse_pass": self.morse_pass,
            "euler_sum": self.euler_sum,
            "points": [p.__dict__ for p in self.points],
        })


def _unique_faces(cells: np.ndarray, k: int) -> np.ndarray:
    """Sorted unique k-vertex faces of the cells."""
    n = cells.shape[1] - 1
    raw = np.concatenate([cells[:, list(face)] for face in local_faces(n, k)], axis=0)
    return np.unique(np.sort(raw, axis=1), axis=0)


def _apex(faces: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """Highest-ranked vertex of each face."""
    column = np.argmax(ranks[faces], axis=1)
    return faces[np.arange(len(faces)), column]


def lower_link_betti(cells: np.ndarray, ranks: np.ndarray, n_vertices: int) -> np.ndarray:
    """Reduced Betti numbers (b̃₋₁, b̃₀, b̃₁, b̃₂) of every vertex's lower link.

    The lower link of v has one k-simplex per (k+2)-face of the lower star,
    i.e. per face whose highest vertex is v, so face counts give its Euler
    characteristic. b̃₀ comes from the components of the link graph and the
    top class exists only when the whole closed link is lower.
    """
    n = cells.shape[1] - 1
    edges = _unique_faces(cells, 2)
    triangles = _unique_faces(cells, 3)
    edge_apex = _apex(edges, ranks)
    tri_apex = _apex(triangles, ranks)
    counts = [np.bincount(edge_apex, minlength=n_vertices), np.bincount(tri_apex, minlength=n_vertices)]
    if n == 3:
        tet_apex = _apex(np.sort(cells, axis=1), ranks)
        counts.append(np.bincount(tet_apex, minlength=n_vertices))
    euler = counts[0] - counts[1] + (counts[2] if n == 3 else 0)

    # link graph: lower-star edges joined when they span a lower-star triangle
    keys = edges[:, 0].astype(np.int64) * n_vertices + edges[:, 1]
    others = np.array([[t[t != a][0], t[t != a][1]] for t, a in zip(triangles, tri_apex)]) \
        if len(triangles) else np.zeros((0, 2), dtype=np.int64)

    def edge_id(u, v):
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        return np.searchsorted(keys, lo.astype(np.int64) * n_vertices + hi)

    first = edge_id(others[:, 0], tri_apex)
    second = edge_id(others[:, 1], tri_apex)
    graph = sparse.coo_matrix((np.ones(len(first)), (first, second)), shape=(len(edges), len(edges)))
    _, labels = csgraph.connected_components(graph, directed=False)
    pairs = np.unique(np.stack([edge_apex, labels], axis=1), axis=0)
    b0 = np.bincount(pairs[:, 0], minlength=n_vertices)

    boundary = np.zeros(n_vertices, dtype=bool)
    facets = _boundary_facets(cells)
    if facets.size:
        boundary[np.unique(facets)] = True
    star = np.bincount(cells.ravel(), minlength=n_vertices)
    top = counts[n - 1]
    closed_and_lower = (~boundary) & (star > 0) & (top == star)
    b_top = closed_and_lower.astype(np.int64)

    betti = np.zeros((n_vertices, 4), dtype=np.int64)
    empty = counts[0] == 0
    betti[:, 0] = empty.astype(np.int64)
    betti[:, 1] = np.where(empty, 0, b0 - 1)
    if n == 2:
        betti[:, 2] = np.where(empty, 0, b0 - euler)
    else:
        betti[:, 3] = b_top
        betti[:, 2] = np.where(empty, 0, b0 - euler + b_top)
    return betti


def classify_critical_vertices(
    mesh: SimplicialMesh,
    u: np.ndarray,
    cell_mask: Optional[np.ndarray] = None,
) -> CriticalReport:
    """Critical vertices of the PL function u, optionally on a subset of cells.

    Values are ordered by (value, vertex index); a vertex is critical when its
    lower link has non-trivial reduced homology, with index one more than the
    first non-vanishing degree (an empty lower link is a minimum).

    Raises:
        ValueError: If u is constant.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_vertices:
        raise ValueError(f"Function has {u.shape[0]} values for {mesh.n_vertices} vertices")
    cells = mesh.cells if cell_mask is None else mesh.cells[np.asarray(cell_mask, dtype=bool)]
    used = np.unique(cells)
    if len(used) == 0:
        raise ValueError("No cells selected")
    if np.ptp(u[used]) == 0.0:
        raise ValueError("Function is constant; every point is critical")
    ranks = vertex_ranks(u)
    betti = lower_link_betti(cells, ranks, mesh.n_vertices)
    n = mesh.dim
    points = []
    counts = [0] * (n + 1)
    for vertex in used:
        row = betti[vertex]
        total = int(row.sum())
        if total == 0:
            continue
        index = int(np.argmax(row > 0))
        counts[index] += 1
        points.append(CriticalPoint(int(vertex), index, float(u[vertex]), degenerate=total > 1))
    signs = np.array([1, -1, 1, -1])
    euler_sum = int((betti[used] @ signs).sum())
    return CriticalReport(dim=n, points=points, counts_by_index=counts, euler_sum=euler_sum)


def morse_betti_check(report: CriticalReport, betti: Sequence[int]) -> CriticalReport:
    """Weak Morse inequalities cᵢ ≥ bᵢ for 0 ≤ i ≤ n-1.

    Raises:
        ValueError: If ``betti`` does not have n+1 entries.
    """
    betti = [int(b) for b in betti]
    if len(betti) != report.dim + 1:
        raise ValueError(f"Expected {report.dim + 1} Betti numbers, got {len(betti)}")
    passed = all(report.counts_by_index[i] >= betti[i] for i in range(report.dim))
    return CriticalReport(
        dim=report.dim,
        points=report.points,
        counts_by_index=report.counts_by_index,
        betti_reference=betti,
        morse_pass=passed,
        euler_sum=report.euler_sum,
    )
