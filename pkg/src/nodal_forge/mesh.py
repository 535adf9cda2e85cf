"""Simplicial meshes of the model manifolds with a designated collar region.

Every generator returns an immutable :class:`SimplicialMesh`. A collar Ω is the
band identified with (-1, 1) × Σ; its coordinate x is stored per vertex in
``collar_x`` (NaN away from the collar) together with the point of Σ the vertex
projects to (``sigma_points``).

Built-in models:

* ``build_torus_mesh``: periodic Kuhn grid of Tⁿ, with grid-aligned slab
  collars (Σ a coordinate slice, non-separating), an embedded ball whose
  boundary sphere is Σ (separating), or an implicit genus-2 surface.
* ``build_sphere_mesh``: icosahedron / 16-cell subdivisions; with a collar, a
  cap–band–cap construction around the equator.
* ``build_ball_mesh``: the unit ball with Σ the concentric sphere of radius 1/2.
* ``build_collar_band``: the bare band Σ × [-1, 1] over a user triangulation.
"""

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import permutations
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial import ConvexHull

from .utils import MeshError, local_edges, local_faces, permutation_parity, to_builtin

REGION_EXTERIOR = -1
REGION_TRANSITION = -2

SIGMA_MODELS = ("circle", "sphere2", "torus2", "genus2", "custom")

MESH_FORMAT = "nodal-forge-mesh"
MESH_FORMAT_VERSION = 1

QUALITY_FLOOR = 0.05

EXPECTED_EULER = {
    ("sphere", 2): 2,
    ("sphere", 3): 0,
    ("torus", 2): 0,
    ("torus", 3): 0,
    ("ball", 2): 1,
    ("ball", 3): 1,
}


@dataclass(frozen=True)
class CollarSpec:
    """Geometry of one collar Ω ≅ (-1, 1) × Σ.

    Attributes:
        sigma_model: Model of Σ (circle, sphere2, torus2, genus2 or custom).
        r: Scale of the metric on Σ (radius of the round models).
        gamma: Stretch constant Γ of the product metric Γ²dx² + r²g_Σ.
        layers: Mesh layers across the collar.
        label: Collar index i.
        half_width: Chart half-width of the band for ball, embedded-ball and
            implicit collars; None picks the model default.
        position: Chart centre of a torus slab along the first axis; None
            spreads the collars evenly.
    """

    sigma_model: str = "sphere2"
    r: float = 0.4
    gamma: float = 1.0
    layers: int = 8
    label: int = 0
    half_width: Optional[float] = None
    position: Optional[float] = None

    def __post_init__(self):
        if self.sigma_model not in SIGMA_MODELS:
            raise ValueError(f"Unknown sigma_model {self.sigma_model!r}; expected one of {SIGMA_MODELS}")
        if self.r <= 0:
            raise ValueError(f"Collar scale r must be positive, got {self.r}")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError(f"Stretch constant gamma must lie in (1/2, 1], got {self.gamma}")
        if self.layers < 4:
            raise ValueError(f"Collar needs at least 4 layers, got {self.layers}")

    def sigma_eigenvalue(self) -> Optional[float]:
        """First nonzero eigenvalue of Σ under r²g_model, or None when unknown."""
        if self.sigma_model in ("circle", "torus2"):
            return 1.0 / self.r ** 2
        if self.sigma_model == "sphere2":
            return 2.0 / self.r ** 2
        return None

    def neumann_eigenvalue(self, k: int) -> float:
        """k-th Neumann eigenvalue k²π²/(4Γ²) of the interval factor."""
        return (k * math.pi / (2.0 * self.gamma)) ** 2

    def admits(self, l: int) -> bool:
        """Whether the Σ-mode gap keeps the first l interval modes lowest."""
        sigma = self.sigma_eigenvalue()
        return sigma is None or sigma > self.neumann_eigenvalue(l)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sigma_model": self.sigma_model,
            "r": self.r,
            "gamma": self.gamma,
            "layers": self.layers,
            "label": self.label,
            "half_width": self.half_width,
            "position": self.position,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CollarSpec":
        known = {key: data[key] for key in cls.__dataclass_fields__ if key in data}
        return cls(**known)


@dataclass(frozen=True)
class AuditReport:
    """Outcome of :func:`mesh_audit`."""

    passed: bool
    euler: int
    expected_euler: Optional[int]
    vertex_count: int
    cell_count: int
    region_counts: Dict[str, int]
    quality_min: float
    quality_max: float
    violations: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            "passed": self.passed,
            "euler": self.euler,
            "expected_euler": self.expected_euler,
            "vertices": self.vertex_count,
            "cells": self.cell_count,
            "region_counts": self.region_counts,
            "quality_min": self.quality_min,
            "quality_max": self.quality_max,
            "violations": self.violations,
        })


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """An n-dimensional simplicial manifold complex with collar data.

    ``coords`` are chart coordinates: ambient points for spheres and balls,
    the unit-periodic chart [0, 1)ⁿ for tori (``period`` = 1). ``extension``
    describes the conformal density of the smooth exterior metric on that chart.
    """

    dim: int
    coords: np.ndarray
    cells: np.ndarray
    region: np.ndarray
    collar_x: np.ndarray
    collar_index: np.ndarray
    sigma_points: np.ndarray
    boundary_facets: np.ndarray
    model: str
    collars: Tuple[CollarSpec, ...] = ()
    sigma_kind: str = "none"
    period: Optional[float] = None
    extension: Dict[str, Any] = field(default_factory=lambda: {"kind": "uniform", "scale": 1.0})
    expected_euler: Optional[int] = None
    implicit: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return int(self.coords.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def is_closed(self) -> bool:
        return self.boundary_facets.shape[0] == 0

    def chart_difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Coordinate vectors from vertices ``a`` to ``b`` (minimum image on tori)."""
        delta = self.coords[b] - self.coords[a]
        if self.period:
            delta = delta - self.period * np.round(delta / self.period)
        return delta

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique sorted vertex pairs, shape (E, 2)."""
        return self._edge_table[0]

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """Edge id of each local edge of each cell, shape (C, (n+1)n/2)."""
        return self._edge_table[1]

    @cached_property
    def _edge_table(self) -> Tuple[np.ndarray, np.ndarray]:
        pairs = local_edges(self.dim)
        raw = np.concatenate([self.cells[:, [i, j]] for i, j in pairs], axis=0)
        raw = np.sort(raw, axis=1)
        edges, inverse = np.unique(raw, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(len(pairs), self.n_cells).T
        return edges, inverse

    @cached_property
    def faces(self) -> np.ndarray:
        """Unique sorted codimension-1 faces (facets), shape (F, n)."""
        return self._facet_table[0]

    @cached_property
    def cell_facets(self) -> np.ndarray:
        """Facet id opposite each local vertex, shape (C, n+1)."""
        return self._facet_table[1]

    @cached_property
    def facet_counts(self) -> np.ndarray:
        return self._facet_table[2]

    @cached_property
    def _facet_table(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.dim
        raw = np.concatenate(
            [np.delete(self.cells, i, axis=1) for i in range(n + 1)], axis=0)
        raw = np.sort(raw, axis=1)
        facets, inverse, counts = np.unique(raw, axis=0, return_inverse=True, return_counts=True)
        inverse = np.asarray(inverse).reshape(n + 1, self.n_cells).T
        return facets, inverse, counts

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency of the 1-skeleton."""
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e), dtype=np.int8)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        if self.boundary_facets.size:
            mask[np.unique(self.boundary_facets)] = True
        return mask

    @cached_property
    def collar_cells(self) -> np.ndarray:
        return self.region >= 0

    @cached_property
    def collar_vertices(self) -> np.ndarray:
        """Vertices of collar cells (the closure Ω̄ at vertex level)."""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[np.unique(self.cells[self.collar_cells])] = True
        return mask

    @cached_property
    def collar_edge_mask(self) -> np.ndarray:
        """Edges belonging to at least one collar cell."""
        mask = np.zeros(len(self.edges), dtype=bool)
        mask[np.unique(self.cell_edges[self.collar_cells])] = True
        return mask

    def euler_characteristic(self) -> int:
        """Alternating sum of face counts over all dimensions."""
        total = 0
        for k in range(1, self.dim + 2):
            if k == 1:
                count = len(np.unique(self.cells))
            elif k == 2:
                count = len(self.edges)
            elif k == self.dim:
                count = len(self.faces)
            elif k == self.dim + 1:
                count = self.n_cells
            else:
                raw = np.concatenate([self.cells[:, list(f)] for f in local_faces(self.dim, k)])
                count = len(np.unique(np.sort(raw, axis=1), axis=0))
            total += (-1) ** (k - 1) * count
        return int(total)

    def submesh(self, cell_mask: np.ndarray) -> "SimplicialMesh":
        """Mesh formed by the selected cells; vertices are renumbered in order."""
        cell_mask = np.asarray(cell_mask, dtype=bool)
        cells = self.cells[cell_mask]
        used = np.unique(cells)
        remap = -np.ones(self.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        new_cells = remap[cells]
        return SimplicialMesh(
            dim=self.dim,
            coords=self.coords[used],
            cells=new_cells,
            region=self.region[cell_mask],
            collar_x=self.collar_x[used],
            collar_index=self.collar_index[used],
            sigma_points=self.sigma_points[used],
            boundary_facets=_boundary_facets(new_cells),
            model="submesh",
            collars=self.collars,
            sigma_kind=self.sigma_kind,
            period=self.period,
            extension=self.extension,
            expected_euler=None,
            implicit=self.implicit,
        )

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            "format": MESH_FORMAT,
            "version": MESH_FORMAT_VERSION,
            "dim": self.dim,
            "coords": self.coords,
            "cells": self.cells,
            "region": self.region,
            "collar_x": self.collar_x,
            "collar_index": self.collar_index,
            "sigma_points": self.sigma_points,
            "boundary_facets": self.boundary_facets,
            "model": self.model,
            "collars": [c.to_dict() for c in self.collars],
            "sigma_kind": self.sigma_kind,
            "period": self.period,
            "extension": self.extension,
            "expected_euler": self.expected_euler,
            "implicit": self.implicit,
        })

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimplicialMesh":
        if data.get("format") != MESH_FORMAT:
            raise MeshError(f"Not a mesh document: format={data.get('format')!r}")
        if data.get("version") != MESH_FORMAT_VERSION:
            raise MeshError(f"Unsupported mesh format version {data.get('version')!r}")
        dim = int(data["dim"])

        def floats(values, width=None):
            arr = np.array([np.nan if v is None else v for v in _flatten_none(values)], dtype=float)
            return arr.reshape(-1, width) if width is not None else arr

        coords = np.asarray(data["coords"], dtype=float)
        n_vertices = coords.shape[0]
        sigma_raw = data.get("sigma_points") or []
        sigma_width = len(sigma_raw[0]) if sigma_raw else 0
        sigma = floats(sigma_raw, sigma_width) if sigma_width else np.zeros((n_vertices, 0))
        facets = np.asarray(data.get("boundary_facets") or [], dtype=np.int64).reshape(-1, dim)
        return cls(
            dim=dim,
            coords=coords,
            cells=np.asarray(data["cells"], dtype=np.int64),
            region=np.asarray(data["region"], dtype=np.int64),
            collar_x=floats(data["collar_x"]),
            collar_index=np.asarray(data.get("collar_index", [-1] * n_vertices), dtype=np.int64),
            sigma_points=sigma,
            boundary_facets=facets,
            model=data.get("model", "custom"),
            collars=tuple(CollarSpec.from_dict(c) for c in data.get("collars", [])),
            sigma_kind=data.get("sigma_kind", "none"),
            period=data.get("period"),
            extension=data.get("extension") or {"kind": "uniform", "scale": 1.0},
            expected_euler=data.get("expected_euler"),
            implicit=data.get("implicit") or {},
        )


def _flatten_none(values):
    for value in values:
        if isinstance(value, (list, tuple)):
            yield from _flatten_none(value)
        else:
            yield value


def save_mesh(mesh: SimplicialMesh, path: str, lengths: Optional[Dict[str, float]] = None) -> None:
    """Write the mesh JSON, optionally with metric ``lengths`` keyed "a-b"."""
    document = mesh.to_dict()
    if lengths is not None:
        document["lengths"] = lengths
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f)


def load_mesh(path: str) -> SimplicialMesh:
    with open(path, "r", encoding="utf-8") as f:
        return SimplicialMesh.from_dict(json.load(f))


def _boundary_facets(cells: np.ndarray) -> np.ndarray:
    """Sorted facets that belong to exactly one cell."""
    n1 = cells.shape[1]
    raw = np.concatenate([np.delete(cells, i, axis=1) for i in range(n1)], axis=0)
    raw = np.sort(raw, axis=1)
    facets, counts = np.unique(raw, axis=0, return_counts=True)
    return facets[counts == 1].astype(np.int64).reshape(-1, n1 - 1)


def _facet_pairs(cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cells sharing a facet, and whether their induced orientations agree.

    Two coherently oriented cells induce opposite orientations on a shared
    facet, so ``same`` marks the pairs that violate coherence.
    """
    count, n1 = cells.shape
    raw, signs = [], []
    for i in range(n1):
        facet = np.delete(cells, i, axis=1)
        signs.append((-1) ** i * permutation_parity(facet))
        raw.append(np.sort(facet, axis=1))
    raw = np.concatenate(raw, axis=0)
    signs = np.concatenate(signs)
    owner = np.tile(np.arange(count), n1)
    _, inverse = np.unique(raw, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    order = np.argsort(inverse, kind="stable")
    ordered = inverse[order]
    k = np.nonzero(ordered[:-1] == ordered[1:])[0]
    first, second = order[k], order[k + 1]
    return owner[first], owner[second], signs[first] == signs[second]


def _orient(cells: np.ndarray) -> np.ndarray:
    """Flip cells so that neighbours induce opposite facet orientations."""
    from scipy.sparse import csgraph

    cells = np.array(cells, dtype=np.int64, copy=True)
    count = cells.shape[0]
    a, b, same = _facet_pairs(cells)
    if len(a) == 0:
        return cells
    relation = sparse.coo_matrix(
        (np.where(same, 2, 1), (a, b)), shape=(count, count)).tocsr()
    relation = relation.maximum(relation.T).tocsr()
    flip = np.zeros(count, dtype=bool)
    n_components, labels = csgraph.connected_components(relation, directed=False)
    for component in range(n_components):
        start = int(np.argmax(labels == component))
        order, predecessors = csgraph.breadth_first_order(
            relation, start, directed=False, return_predecessors=True)
        if len(order) < 2:
            continue
        tail = order[1:]
        needs_flip = np.asarray(relation[tail, predecessors[tail]]).ravel() == 2
        for cell, parent, rel in zip(tail, predecessors[tail], needs_flip):
            flip[cell] = flip[parent] ^ rel
    cells[flip, 0], cells[flip, 1] = cells[flip, 1], cells[flip, 0]
    return cells


def cell_quality(mesh: SimplicialMesh) -> np.ndarray:
    """n·inradius/circumradius of every cell on its chart coordinates (1 for regular)."""
    n = mesh.dim
    cells = mesh.cells
    edges = np.stack([mesh.chart_difference(cells[:, 0], cells[:, i]) for i in range(1, n + 1)], axis=1)
    gram = edges @ edges.transpose(0, 2, 1)
    volume = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)) / math.factorial(n)
    diag = np.diagonal(gram, axis1=1, axis2=2)
    alpha = np.einsum("cij,cj->ci", np.linalg.pinv(gram), diag / 2.0)
    circumradius = np.sqrt(np.clip(np.einsum("ci,ci->c", alpha, diag / 2.0), 0.0, None))
    area = np.zeros(len(cells))
    for facet in local_faces(n, n):
        base = cells[:, facet[0]]
        vectors = np.stack([mesh.chart_difference(base, cells[:, j]) for j in facet[1:]], axis=1)
        facet_gram = vectors @ vectors.transpose(0, 2, 1)
        area += np.sqrt(np.clip(np.linalg.det(facet_gram), 0.0, None)) / math.factorial(n - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inradius = np.where(area > 0, n * volume / area, 0.0)
        quality = np.where(circumradius > 0, n * inradius / circumradius, 0.0)
    return quality


def mesh_audit(mesh: SimplicialMesh, quality_floor: float = QUALITY_FLOOR) -> AuditReport:
    """Check manifoldness, orientation, Euler characteristic, collar data and quality."""
    violations: List[str] = []
    cells = mesh.cells
    if np.any(np.diff(np.sort(cells, axis=1), axis=1) == 0):
        violations.append("cell with repeated vertex")
    counts = mesh.facet_counts
    if np.any(counts > 2):
        violations.append(f"{int(np.sum(counts > 2))} facets shared by more than two cells")
    open_facets = mesh.faces[counts == 1]
    declared = np.sort(mesh.boundary_facets, axis=1) if mesh.boundary_facets.size else open_facets[:0]
    if declared.shape != open_facets.shape or not np.array_equal(
            np.unique(declared, axis=0) if declared.size else declared, open_facets):
        violations.append(
            f"declared boundary ({len(declared)} facets) differs from the open facets ({len(open_facets)})")
    _, _, same = _facet_pairs(cells)
    if np.any(same):
        violations.append(f"{int(np.sum(same))} interior facets with inconsistent orientation")
    euler = mesh.euler_characteristic()
    if mesh.expected_euler is not None and euler != mesh.expected_euler:
        violations.append(f"Euler characteristic {euler} != expected {mesh.expected_euler}")
    if np.any(mesh.collar_cells):
        x = mesh.collar_x[mesh.collar_vertices]
        if np.any(np.isnan(x)):
            violations.append("collar vertex without a collar coordinate")
        elif np.any(np.abs(x) > 1.0 + 1e-9):
            violations.append("collar coordinate outside [-1, 1]")
    if mesh.collars and np.any(mesh.region >= len(mesh.collars)):
        violations.append("region label without a matching collar")
    quality = cell_quality(mesh)
    q_min = float(quality.min()) if len(quality) else 0.0
    q_max = float(quality.max()) if len(quality) else 0.0
    if q_min < quality_floor:
        violations.append(f"minimum cell quality {q_min:.4f} below floor {quality_floor}")
    labels, tallies = np.unique(mesh.region, return_counts=True)
    names = {REGION_EXTERIOR: "exterior", REGION_TRANSITION: "transition"}
    region_counts = {names.get(int(l), f"collar_{int(l)}"): int(t) for l, t in zip(labels, tallies)}
    return AuditReport(
        passed=not violations,
        euler=euler,
        expected_euler=mesh.expected_euler,
        vertex_count=mesh.n_vertices,
        cell_count=mesh.n_cells,
        region_counts=region_counts,
        quality_min=q_min,
        quality_max=q_max,
        violations=violations,
    )


def _finalize(mesh: SimplicialMesh, quality_floor: float = QUALITY_FLOOR) -> SimplicialMesh:
    report = mesh_audit(mesh, quality_floor)
    if not report.passed:
        raise MeshError(f"Generated {mesh.model} mesh failed its audit", report.violations)
    return mesh


def _label_transition(cells: np.ndarray, region: np.ndarray, collar_x: np.ndarray) -> np.ndarray:
    """Mark non-collar cells touching a vertex strictly inside a collar."""
    region = region.copy()
    inside = np.zeros(len(collar_x), dtype=bool)
    defined = ~np.isnan(collar_x)
    inside[defined] = np.abs(collar_x[defined]) < 1.0
    touching = np.any(inside[cells], axis=1) & (region < 0)
    region[touching] = REGION_TRANSITION
    return region


def refine(mesh: SimplicialMesh, check: bool = True) -> SimplicialMesh:
    """Split every cell into 2ⁿ children through edge midpoints.

    Sphere points are projected back to the sphere. Collar coordinates are
    interpolated linearly.
    """
    n = mesh.dim
    if n not in (2, 3):
        raise ValueError(f"Refinement supports dimensions 2 and 3, got {n}")
    edges = mesh.edges
    a, b = edges[:, 0], edges[:, 1]
    mid = mesh.coords[a] + 0.5 * mesh.chart_difference(a, b)
    if mesh.period:
        mid = np.mod(mid, mesh.period)
    if mesh.model == "sphere":
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    coords = np.vstack([mesh.coords, mid])
    collar_x = np.concatenate([mesh.collar_x, 0.5 * (mesh.collar_x[a] + mesh.collar_x[b])])
    sigma_mid = mesh.sigma_points[a].copy()
    if mesh.sigma_points.shape[1]:
        delta = mesh.sigma_points[b] - mesh.sigma_points[a]
        if mesh.sigma_kind == "periodic":
            delta -= np.round(delta)
        sigma_mid = mesh.sigma_points[a] + 0.5 * delta
        if mesh.sigma_kind == "periodic":
            sigma_mid = np.mod(sigma_mid, 1.0)
        elif mesh.sigma_kind == "round":
            sigma_mid /= np.linalg.norm(sigma_mid, axis=1, keepdims=True)
    sigma = np.vstack([mesh.sigma_points, sigma_mid])
    index_mid = np.where(mesh.collar_index[a] == mesh.collar_index[b], mesh.collar_index[a], -1)
    collar_index = np.concatenate([mesh.collar_index, index_mid])

    v = mesh.cells
    m = mesh.n_vertices + mesh.cell_edges
    if n == 2:
        # local edges: 01, 02, 12
        children = [
            (v[:, 0], m[:, 0], m[:, 1]),
            (m[:, 0], v[:, 1], m[:, 2]),
            (m[:, 1], m[:, 2], v[:, 2]),
            (m[:, 0], m[:, 2], m[:, 1]),
        ]
    else:
        # local edges: 01, 02, 03, 12, 13, 23; the octahedron is cut along 02-13
        m01, m02, m03, m12, m13, m23 = (m[:, i] for i in range(6))
        children = [
            (v[:, 0], m01, m02, m03),
            (m01, v[:, 1], m12, m13),
            (m02, m12, v[:, 2], m23),
            (m03, m13, m23, v[:, 3]),
            (m02, m13, m01, m03),
            (m02, m13, m03, m23),
            (m02, m13, m23, m12),
            (m02, m13, m12, m01),
        ]
    cells = np.concatenate([np.stack(c, axis=1) for c in children], axis=0)
    region = np.tile(mesh.region, len(children))
    cells = _orient(cells)
    refined = replace(
        mesh,
        coords=coords,
        cells=cells,
        region=region,
        collar_x=collar_x,
        collar_index=collar_index,
        sigma_points=sigma,
        boundary_facets=_boundary_facets(cells),
    )
    return _finalize(refined) if check else refined


def _grid(count: int, n: int) -> np.ndarray:
    axes = np.meshgrid(*[np.arange(count)] * n, indexing="ij")
    return np.stack(axes, axis=-1).reshape(-1, n)


def _kuhn(divisions: int, n: int, periodic: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kuhn (Freudenthal) triangulation of a cube grid.

    Returns the integer vertex indices, the cells, and the base corner of the
    cube each cell came from. Each cube splits into n! simplices, one per
    ordering of the axes.
    """
    per_axis = divisions if periodic else divisions + 1
    shape = (per_axis,) * n
    base = _grid(divisions, n)
    cells, bases = [], []
    for perm in permutations(range(n)):
        index = base.copy()
        vertices = [np.ravel_multi_index(index.T, shape)]
        for axis in perm:
            index = index.copy()
            index[:, axis] += 1
            wrapped = index % per_axis if periodic else index
            vertices.append(np.ravel_multi_index(wrapped.T, shape))
        cells.append(np.stack(vertices, axis=1))
        bases.append(base)
    return _grid(per_axis, n), np.concatenate(cells), np.concatenate(bases)


def _prisms(bottom: np.ndarray, top: np.ndarray, facets: np.ndarray) -> np.ndarray:
    """Staircase split of the prisms over ``facets`` between two vertex layers.

    ``facets`` hold sorted layer-local indices; cell i of a prism is
    (b_0..b_i, t_i..t_k), which makes neighbouring prisms conform.
    """
    width = facets.shape[1]
    cells = []
    for i in range(width):
        columns = [bottom[facets[:, j]] for j in range(i + 1)]
        columns += [top[facets[:, j]] for j in range(i, width)]
        cells.append(np.stack(columns, axis=1))
    return np.concatenate(cells, axis=0)


def _cube_surface(n: int, m: int):
    """Kuhn-split cube [-1, 1]ⁿ and its boundary.

    Returns the core points, core cells, surface vertex ids, surface facets in
    surface-local indices (sorted rows) and the surface points.
    """
    grid, core_cells, _ = _kuhn(m, n, periodic=False)
    q_core = -1.0 + 2.0 * grid / m
    surface = _boundary_facets(core_cells)
    surface_vertices = np.unique(surface)
    local = -np.ones(len(q_core), dtype=np.int64)
    local[surface_vertices] = np.arange(len(surface_vertices))
    facets = np.sort(local[surface], axis=1)
    return q_core, core_cells, surface_vertices, facets, q_core[surface_vertices]


@dataclass
class _Onion:
    """A cube core wrapped in vertex layers morphed from the cube surface."""

    coords: np.ndarray
    cells: np.ndarray
    region: np.ndarray
    collar_x: np.ndarray
    sigma: np.ndarray
    surface_ids: np.ndarray
    surface_facets: np.ndarray


def _build_onion(
    n: int,
    m: int,
    core_map: Callable[[np.ndarray], np.ndarray],
    layers: Sequence[Tuple[Callable[[np.ndarray], np.ndarray], int, Optional[float]]],
    close_map: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    outer_ids: Optional[np.ndarray] = None,
    id_offset: int = 0,
) -> _Onion:
    """Stack layers around a Kuhn-split cube [-1, 1]ⁿ with m divisions.

    Each layer is (position map on cube-surface points q, region of the cells
    between it and the previous layer, collar coordinate of its vertices).
    ``close_map`` caps the stack with a second core; ``outer_ids`` glues the
    last layer onto existing vertices instead of creating new ones.
    """
    q_core, core_cells, surface_vertices, facets, q_surface = _cube_surface(n, m)
    local = -np.ones(len(q_core), dtype=np.int64)
    local[surface_vertices] = np.arange(len(surface_vertices))
    directions = q_surface / np.linalg.norm(q_surface, axis=1, keepdims=True)

    coords = [core_map(q_core)]
    collar_x = [np.full(len(q_core), np.nan)]
    sigma = [np.full((len(q_core), n), np.nan)]
    cells = [core_cells + id_offset]
    region = [np.full(len(core_cells), REGION_EXTERIOR)]
    current = surface_vertices + id_offset
    next_id = id_offset + len(q_core)
    for j, (position, label, x) in enumerate(layers):
        if outer_ids is not None and j == len(layers) - 1:
            ids = np.asarray(outer_ids, dtype=np.int64)
        else:
            ids = np.arange(next_id, next_id + len(q_surface))
            next_id += len(q_surface)
            coords.append(position(q_surface))
            collar_x.append(np.full(len(q_surface), np.nan if x is None else x))
            sigma.append(directions if x is not None else np.full_like(directions, np.nan))
        prisms = _prisms(current, ids, facets)
        cells.append(prisms)
        region.append(np.full(len(prisms), label))
        current = ids
    if close_map is not None:
        interior = np.setdiff1d(np.arange(len(q_core)), surface_vertices)
        ids = -np.ones(len(q_core), dtype=np.int64)
        ids[interior] = np.arange(next_id, next_id + len(interior))
        ids[surface_vertices] = current[local[surface_vertices]]
        coords.append(close_map(q_core[interior]))
        collar_x.append(np.full(len(interior), np.nan))
        sigma.append(np.full((len(interior), n), np.nan))
        cells.append(ids[core_cells])
        region.append(np.full(len(core_cells), REGION_EXTERIOR))
        current = None
    surface_ids = current if current is not None else np.zeros(0, dtype=np.int64)
    surface_facets = current[facets] if current is not None else np.zeros((0, n), dtype=np.int64)
    return _Onion(
        coords=np.vstack(coords),
        cells=np.concatenate(cells),
        region=np.concatenate(region),
        collar_x=np.concatenate(collar_x),
        sigma=np.vstack(sigma),
        surface_ids=surface_ids,
        surface_facets=surface_facets,
    )


def _unit(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def _compact(coords: np.ndarray, cells: np.ndarray, *arrays: np.ndarray):
    """Drop vertices no cell uses and renumber the rest in order."""
    used = np.unique(cells)
    remap = -np.ones(len(coords), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return (coords[used], remap[cells]) + tuple(a[used] for a in arrays)


def _complete(
    dim: int,
    coords: np.ndarray,
    cells: np.ndarray,
    region: np.ndarray,
    collar_x: np.ndarray,
    sigma: np.ndarray,
    model: str,
    collars: Sequence[CollarSpec] = (),
    sigma_kind: str = "none",
    period: Optional[float] = None,
    extension: Optional[Dict[str, Any]] = None,
    implicit: Optional[Dict[str, Any]] = None,
    quality_floor: float = QUALITY_FLOOR,
    expected_euler: Optional[int] = None,
) -> SimplicialMesh:
    """Orient, label and audit a freshly generated complex."""
    cells = _orient(np.asarray(cells, dtype=np.int64))
    region = _label_transition(cells, np.asarray(region, dtype=np.int64), collar_x)
    collar_index = -np.ones(len(coords), dtype=np.int64)
    for label in np.unique(region[region >= 0]):
        collar_index[np.unique(cells[region == label])] = label
    outside = collar_index < 0
    collar_x = np.where(outside, np.nan, collar_x)
    sigma = np.array(sigma, dtype=float, copy=True)
    sigma[outside] = np.nan
    if expected_euler is None:
        expected_euler = EXPECTED_EULER.get((model, dim))
    mesh = SimplicialMesh(
        dim=dim,
        coords=np.asarray(coords, dtype=float),
        cells=cells,
        region=region,
        collar_x=collar_x,
        collar_index=collar_index,
        sigma_points=sigma,
        boundary_facets=_boundary_facets(cells),
        model=model,
        collars=tuple(collars),
        sigma_kind=sigma_kind,
        period=period,
        extension=extension or {"kind": "uniform", "scale": 1.0},
        expected_euler=expected_euler,
        implicit=implicit or {},
    )
    return _finalize(mesh, quality_floor)


GENUS2_TORUS_RADIUS = 0.17
GENUS2_TUBE_RADIUS = 0.08
GENUS2_OFFSET = 0.21


def genus2_sdf(points: np.ndarray) -> np.ndarray:
    """Approximate signed distance to the union of two overlapping solid tori.

    Negative inside the genus-2 handlebody. The tori lie in the z = 1/2 plane of
    the unit chart, centred at x = 1/2 ± offset.
    """
    points = np.asarray(points, dtype=float)
    values = []
    for sign in (-1.0, 1.0):
        dx = points[:, 0] - (0.5 + sign * GENUS2_OFFSET)
        dy = points[:, 1] - 0.5
        dz = points[:, 2] - 0.5
        ring = np.hypot(dx, dy) - GENUS2_TORUS_RADIUS
        values.append(np.hypot(ring, dz) - GENUS2_TUBE_RADIUS)
    return np.minimum(values[0], values[1])


def build_torus_mesh(
    n: int = 3,
    divisions: int = 16,
    collars: Sequence[CollarSpec] = (),
    embedding: str = "slice",
    block: Optional[int] = None,
    quality_floor: float = QUALITY_FLOOR,
) -> SimplicialMesh:
    """Periodic Kuhn triangulation of the flat torus Tⁿ = [0, 1)ⁿ.

    Args:
        n: Dimension (2 or 3).
        divisions: Grid cells per axis.
        collars: Collar specifications.
        embedding: How Σ sits in the torus: "slice" (coordinate slabs
            x₀ = const, non-separating), "ball" (a sphere inside a cube block,
            separating) or "implicit" (the genus-2 surface, n = 3).
        block: Cube block size in grid cells for the "ball" embedding.
        quality_floor: Minimum accepted cell quality.

    Raises:
        MeshError: If the grid is too coarse for the requested collars.
    """
    if n not in (2, 3):
        raise ValueError(f"Torus meshes support n = 2 or 3, got {n}")
    if divisions < 4:
        raise MeshError(f"Torus needs at least 4 divisions, got {divisions}")
    grid, cells, bases = _kuhn(divisions, n, periodic=True)
    coords = grid / divisions
    count = len(coords)
    region = np.full(len(cells), REGION_EXTERIOR)
    collar_x = np.full(count, np.nan)
    collars = tuple(collars)
    if not collars:
        return _complete(n, coords, cells, region, collar_x, np.zeros((count, 0)), "torus",
                         period=1.0, quality_floor=quality_floor)
    if embedding == "slice":
        return _torus_slices(n, divisions, grid, coords, cells, bases, collars, quality_floor)
    if embedding == "ball":
        return _torus_ball(n, divisions, grid, cells, bases, collars, block, quality_floor)
    if embedding == "implicit":
        return _torus_implicit(n, divisions, coords, cells, collars, quality_floor)
    raise ValueError(f"Unknown torus embedding {embedding!r}")


def _torus_slices(n, divisions, grid, coords, cells, bases, collars, quality_floor):
    expected = "circle" if n == 2 else "torus2"
    radii = {c.r for c in collars}
    if any(c.sigma_model != expected for c in collars):
        raise ValueError(f"Coordinate slices of T^{n} are modelled by {expected!r}")
    if len(radii) > 1:
        raise MeshError("Slab collars sharing one exterior must use a common scale r")
    region = np.full(len(cells), REGION_EXTERIOR)
    collar_x = np.full(len(coords), np.nan)
    claimed = np.zeros(len(coords), dtype=bool)
    for i, collar in enumerate(collars):
        layers = collar.layers
        centre = collar.position if collar.position is not None else (i + 0.5) / len(collars)
        start = int(round(centre * divisions - layers / 2))
        if start < 1 or start + layers > divisions - 1:
            raise MeshError(
                f"Collar {i} with {layers} layers does not fit in {divisions} divisions "
                "(divisions too small to resolve the collar)")
        slab = (bases[:, 0] >= start) & (bases[:, 0] < start + layers)
        on_slab = (grid[:, 0] >= start) & (grid[:, 0] <= start + layers)
        if np.any(claimed[on_slab]) or np.any(claimed[(grid[:, 0] == start - 1) | (grid[:, 0] == start + layers + 1)]):
            raise MeshError(f"Collar {i} overlaps or touches another collar")
        claimed[on_slab] = True
        region[slab] = i
        collar_x[on_slab] = -1.0 + 2.0 * (grid[on_slab, 0] - start) / layers
    # Σ is the flat torus of period 2πr, so the chart scales by 2πr everywhere
    scale = 2.0 * math.pi * collars[0].r
    return _complete(
        n, coords, cells, region, collar_x, coords[:, 1:].copy(), "torus",
        collars=collars, sigma_kind="periodic", period=1.0,
        extension={"kind": "uniform", "scale": scale}, quality_floor=quality_floor)


def _torus_ball(n, divisions, grid, cells, bases, collars, block, quality_floor):
    if len(collars) != 1:
        raise MeshError("The embedded-ball torus carries exactly one collar")
    collar = collars[0]
    if collar.sigma_model != ("circle" if n == 2 else "sphere2"):
        raise ValueError("An embedded ball is bounded by a circle (n=2) or sphere2 (n=3)")
    b = block if block is not None else 2 * (divisions // 4)
    if b < 2 or b % 2 or b > divisions - 2:
        raise MeshError(f"Block size {b} must be even and fit in {divisions} divisions")
    start = (divisions - b) // 2
    inside = np.all((bases >= start) & (bases < start + b), axis=1)
    cells = cells[~inside]
    half = b / (2.0 * divisions)
    centre = (start + b / 2.0) / divisions
    sigma_radius = 0.6 * half
    width = collar.half_width if collar.half_width is not None else 0.2 * half
    r_in, r_out = sigma_radius - width, sigma_radius + width
    if r_in <= 0 or r_out >= 0.95 * half:
        raise MeshError(f"Collar half-width {width} does not fit inside the block")
    core = 0.5 * r_in
    shells = max(1, b // 4)
    layers = []
    for j in range(1, shells + 1):
        t = j / shells
        layers.append((lambda q, t=t: centre + (1 - t) * core * q + t * r_in * _unit(q),
                       REGION_EXTERIOR, -1.0 if j == shells else None))
    for j in range(1, collar.layers + 1):
        radius = r_in + (r_out - r_in) * j / collar.layers
        layers.append((lambda q, radius=radius: centre + radius * _unit(q), 0, -1.0 + 2.0 * j / collar.layers))
    for j in range(1, shells + 1):
        t = j / shells
        layers.append((lambda q, t=t: centre + (1 - t) * r_out * _unit(q) + t * half * q, REGION_EXTERIOR, None))

    shape = (divisions,) * n
    grid_coords = grid / divisions
    q_surface = _cube_surface(n, b)[4]
    index = np.rint(start + (q_surface + 1.0) * b / 2.0).astype(np.int64)
    outer_ids = np.ravel_multi_index(index.T, shape)
    onion = _build_onion(n, b, lambda q: centre + core * q, layers,
                         outer_ids=outer_ids, id_offset=len(grid_coords))
    coords = np.vstack([grid_coords, onion.coords])
    all_cells = np.concatenate([cells, onion.cells])
    region = np.concatenate([np.full(len(cells), REGION_EXTERIOR), onion.region])
    collar_x = np.concatenate([np.full(len(grid_coords), np.nan), onion.collar_x])
    sigma = np.vstack([np.full((len(grid_coords), n), np.nan), onion.sigma])
    coords, all_cells, collar_x, sigma = _compact(coords, all_cells, collar_x, sigma)
    extension = {
        "kind": "radial",
        "center": [centre] * n,
        "radius": sigma_radius,
        "inner": collar.r / r_in,
        "outer": collar.r / r_out,
    }
    return _complete(
        n, coords, all_cells, region, collar_x, sigma, "torus", collars=collars,
        sigma_kind="round", period=1.0, extension=extension, quality_floor=quality_floor)


def _torus_implicit(n, divisions, coords, cells, collars, quality_floor):
    if n != 3 or len(collars) != 1 or collars[0].sigma_model != "genus2":
        raise ValueError("The implicit embedding is a single genus2 collar in T^3")
    collar = collars[0]
    width = collar.half_width if collar.half_width is not None else 1.5 / divisions
    phi = genus2_sdf(coords)
    in_band = np.abs(phi) <= width
    collar_cells = np.all(in_band[cells], axis=1)
    if not np.any(collar_cells):
        raise MeshError(f"{divisions} divisions are too coarse to resolve the genus-2 collar")
    region = np.where(collar_cells, 0, REGION_EXTERIOR)
    collar_x = np.clip(phi / width, -1.0, 1.0)
    implicit = {
        "kind": "genus2",
        "torus_radius": GENUS2_TORUS_RADIUS,
        "tube_radius": GENUS2_TUBE_RADIUS,
        "offset": GENUS2_OFFSET,
        "half_width": width,
    }
    return _complete(
        n, coords, cells, region, collar_x, np.zeros((len(coords), 0)), "torus",
        collars=collars, period=1.0, implicit=implicit, quality_floor=quality_floor)


DEFAULT_CAP_ANGLE = math.pi / 4


def _icosahedron() -> np.ndarray:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    points = []
    for a in (-1.0, 1.0):
        for b in (-t, t):
            points += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    return _unit(np.array(points))


def _cap_point(y: np.ndarray, cap_angle: float, south: bool) -> np.ndarray:
    """Map the unit chart ball onto the polar cap θ ≤ cap_angle of Sⁿ."""
    radius = np.linalg.norm(y, axis=1, keepdims=True)
    direction = np.divide(y, radius, out=np.zeros_like(y), where=radius > 0)
    theta = cap_angle * radius
    height = -np.cos(theta) if south else np.cos(theta)
    return np.hstack([np.sin(theta) * direction, height])


def build_sphere_mesh(
    n: int = 2,
    refinement: int = 2,
    collars: Sequence[CollarSpec] = (),
    cap_angle: float = DEFAULT_CAP_ANGLE,
    quality_floor: float = QUALITY_FLOOR,
) -> SimplicialMesh:
    """Triangulation of the unit sphere Sⁿ ⊂ Rⁿ⁺¹.

    Without collars this is the icosahedron (n = 2) or 16-cell (n = 3)
    subdivided ``refinement`` times. With a collar the sphere is built as two
    polar caps joined by an equatorial band θ ∈ [cap_angle, π - cap_angle],
    which is the collar; Σ is the equator.
    """
    if n not in (2, 3):
        raise ValueError(f"Sphere meshes support n = 2 or 3, got {n}")
    collars = tuple(collars)
    if not collars:
        points = _icosahedron() if n == 2 else np.vstack([np.eye(4), -np.eye(4)])
        cells = ConvexHull(points).simplices
        count = len(points)
        mesh = _complete(n, points, cells, np.full(len(cells), REGION_EXTERIOR),
                         np.full(count, np.nan), np.zeros((count, 0)), "sphere",
                         quality_floor=quality_floor)
        for _ in range(refinement):
            mesh = refine(mesh)
        return mesh
    if len(collars) != 1:
        raise MeshError("A sphere carries a single equatorial collar")
    collar = collars[0]
    if collar.sigma_model != ("circle" if n == 2 else "sphere2"):
        raise ValueError("The equator of S^n is modelled by circle (n=2) or sphere2 (n=3)")
    if not 0 < cap_angle < math.pi / 2:
        raise ValueError(f"cap_angle must lie in (0, π/2), got {cap_angle}")
    m = 2 ** (refinement + 1)
    shells = max(1, m // 4)
    core = 0.5
    layers = []
    for j in range(1, shells + 1):
        t = j / shells
        layers.append((lambda q, t=t: _cap_point((1 - t) * core * q + t * _unit(q), cap_angle, False),
                       REGION_EXTERIOR, 1.0 if j == shells else None))
    for j in range(1, collar.layers + 1):
        x = 1.0 - 2.0 * j / collar.layers
        theta = math.pi / 2 - x * (math.pi / 2 - cap_angle)
        layers.append((lambda q, theta=theta: np.hstack(
            [math.sin(theta) * _unit(q), np.full((len(q), 1), math.cos(theta))]), 0, x))
    for j in range(1, shells + 1):
        t = 1.0 - j / shells
        layers.append((lambda q, t=t: _cap_point((1 - t) * core * q + t * _unit(q), cap_angle, True),
                       REGION_EXTERIOR, None))
    onion = _build_onion(
        n, m, lambda q: _cap_point(core * q, cap_angle, False), layers,
        close_map=lambda q: _cap_point(core * q, cap_angle, True))
    return _complete(
        n, onion.coords, onion.cells, onion.region, onion.collar_x, onion.sigma, "sphere",
        collars=collars, sigma_kind="round",
        extension={"kind": "uniform", "scale": collar.r / math.sin(cap_angle)},
        quality_floor=quality_floor)


DEFAULT_SIGMA_RADIUS = 0.5
DEFAULT_BALL_HALF_WIDTH = 0.15
# thinnest collar layer allowed, relative to the tangential cell size on Σ
MIN_BALL_LAYER_ASPECT = 0.1


def build_ball_mesh(
    n: int = 3,
    refinement: int = 2,
    collar: Optional[CollarSpec] = None,
    sigma_radius: float = DEFAULT_SIGMA_RADIUS,
    quality_floor: float = QUALITY_FLOOR,
) -> SimplicialMesh:
    """Unit ball Bⁿ, optionally with a collar around the sphere |p| = sigma_radius.

    The collar coordinate grows outward: x = -1 on the inner face of the band
    and x = +1 on the outer face.

    Raises:
        MeshError: If refinement is below 1, or the collar does not fit or
            has layers too thin for the tangential resolution.
    """
    if n not in (2, 3):
        raise ValueError(f"Ball meshes support n = 2 or 3, got {n}")
    if refinement < 1:
        raise MeshError(f"Ball meshes need refinement >= 1, got {refinement}")
    m = 2 ** (refinement + 1)
    shells = max(1, m // 4)
    layers = []
    collars: Tuple[CollarSpec, ...] = ()
    extension = {"kind": "uniform", "scale": 1.0}
    if collar is None:
        core = 0.5
        for j in range(1, shells + 1):
            t = j / shells
            layers.append((lambda q, t=t: (1 - t) * core * q + t * _unit(q), REGION_EXTERIOR, None))
        sigma_kind = "none"
    else:
        if collar.sigma_model != ("circle" if n == 2 else "sphere2"):
            raise ValueError("The collar of a ball is modelled by circle (n=2) or sphere2 (n=3)")
        width = collar.half_width if collar.half_width is not None else DEFAULT_BALL_HALF_WIDTH
        r_in, r_out = sigma_radius - width, sigma_radius + width
        if r_in <= 0 or r_out >= 1.0:
            raise MeshError(f"Collar half-width {width} does not fit inside the unit ball")
        # a cube face covers a quarter turn of Σ in m cells
        tangential = 0.5 * math.pi * sigma_radius / m
        if 2.0 * width / collar.layers < MIN_BALL_LAYER_ASPECT * tangential:
            raise MeshError(f"{collar.layers} collar layers are too thin for refinement {refinement}; "
                            f"use at most {int(2.0 * width / (MIN_BALL_LAYER_ASPECT * tangential))} layers "
                            f"or refine further")
        core = 0.5 * r_in
        for j in range(1, shells + 1):
            t = j / shells
            layers.append((lambda q, t=t: (1 - t) * core * q + t * r_in * _unit(q),
                           REGION_EXTERIOR, -1.0 if j == shells else None))
        for j in range(1, collar.layers + 1):
            radius = r_in + (r_out - r_in) * j / collar.layers
            layers.append((lambda q, radius=radius: radius * _unit(q), 0, -1.0 + 2.0 * j / collar.layers))
        outer_shells = max(1, int(math.ceil((1.0 - r_out) * m / 1.6)))
        for j in range(1, outer_shells + 1):
            radius = r_out + (1.0 - r_out) * j / outer_shells
            layers.append((lambda q, radius=radius: radius * _unit(q), REGION_EXTERIOR, None))
        collars = (collar,)
        sigma_kind = "round"
        extension = {
            "kind": "radial",
            "center": [0.0] * n,
            "radius": sigma_radius,
            "inner": collar.r / r_in,
            "outer": collar.r / r_out,
        }
    onion = _build_onion(n, m, lambda q: core * q, layers)
    return _complete(
        n, onion.coords, onion.cells, onion.region, onion.collar_x, onion.sigma, "ball",
        collars=collars, sigma_kind=sigma_kind, extension=extension, quality_floor=quality_floor)


def build_collar_band(
    sigma_coords: np.ndarray,
    sigma_cells: np.ndarray,
    collar: CollarSpec,
    quality_floor: float = QUALITY_FLOOR,
) -> SimplicialMesh:
    """The bare collar Σ × [-1, 1] over a user triangulation of Σ.

    Chart coordinates are (σ, x). The Σ metric is r times the chord of
    ``sigma_coords``; both ends of the band are boundary.
    """
    sigma_coords = np.asarray(sigma_coords, dtype=float)
    facets = np.sort(np.asarray(sigma_cells, dtype=np.int64), axis=1)
    count = len(sigma_coords)
    layers = collar.layers
    cells = np.concatenate([
        _prisms(np.arange(j * count, (j + 1) * count), np.arange((j + 1) * count, (j + 2) * count), facets)
        for j in range(layers)
    ])
    x = np.repeat(-1.0 + 2.0 * np.arange(layers + 1) / layers, count)
    coords = np.hstack([np.tile(sigma_coords, (layers + 1, 1)), x[:, None]])
    return _complete(
        facets.shape[1], coords, cells, np.zeros(len(cells), dtype=np.int64), x,
        np.tile(sigma_coords, (layers + 1, 1)), "band", collars=(collar,), sigma_kind="round",
        quality_floor=quality_floor)


MODELS = ("sphere", "torus", "ball")


def build_model_mesh(
    model: str,
    n: int,
    refinement: int,
    collars: Sequence[CollarSpec] = (),
    embedding: str = "slice",
    divisions: Optional[int] = None,
    quality_floor: float = QUALITY_FLOOR,
) -> SimplicialMesh:
    """Build one of the named model manifolds at a refinement level.

    Torus grids default to 8·2^refinement divisions per axis.
    """
    if model == "sphere":
        return build_sphere_mesh(n, refinement, collars, quality_floor=quality_floor)
    if model == "ball":
        if len(collars) > 1:
            raise MeshError("A ball carries at most one collar")
        return build_ball_mesh(n, refinement, collars[0] if collars else None, quality_floor=quality_floor)
    if model == "torus":
        divisions = divisions if divisions is not None else 8 * 2 ** refinement
        return build_torus_mesh(n, divisions, collars, embedding, quality_floor=quality_floor)
    raise ValueError(f"Unknown model {model!r}; expected one of {MODELS}")
