"""Zero sets, nodal domains and collar profiles of P1 functions."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .fem import assemble
from .mesh import CollarSpec, SimplicialMesh
from .metric import EdgeLengthMetric, cell_gram, coordinate_metric
from .utils import local_edges, tie_break, to_builtin

DEFAULT_VERTEX_ZERO_SHIFT = 1e-9

SIGMA_EULER = {"sphere2": 2, "torus2": 0, "circle": 0, "genus2": -2}


@dataclass(frozen=True)
class NodalComponent:
    """One connected component of a zero set."""

    id: int
    euler_char: int
    area: float
    pieces: int
    touches_boundary: bool
    inside_collar: bool
    collar_mean: Optional[float]
    collar_std: Optional[float]
    # a regular level set in an orientable manifold is two-sided
    orientable: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin(self.__dict__)


@dataclass(frozen=True, eq=False)
class NodalComplex:
    """PL zero set of a function: points on crossed edges and the pieces they bound.

    ``simplices`` are segments (n = 2) or triangles (n = 3, quadrilateral pieces
    split in two) indexing ``points``.
    """

    dim: int
    points: np.ndarray
    point_edges: np.ndarray
    point_x: np.ndarray
    simplices: np.ndarray
    simplex_piece: np.ndarray
    piece_cells: np.ndarray
    piece_component: np.ndarray
    components: List[NodalComponent] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return len(self.piece_cells) == 0

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            "dim": self.dim,
            "points": self.points,
            "simplices": self.simplices,
            "simplex_component": self.piece_component[self.simplex_piece] if len(self.simplex_piece) else [],
            "components": [c.to_dict() for c in self.components],
        })


def signed_values(mesh: SimplicialMesh, u: np.ndarray, vertex_zero_shift: float = DEFAULT_VERTEX_ZERO_SHIFT,
                  constrained: Optional[np.ndarray] = None) -> np.ndarray:
    """Tie-broken copy of u with no vertex on the zero set.

    Vertices held at zero by a Dirichlet condition take the sign of the mean
    of their unconstrained neighbours.

    Raises:
        ValueError: If u vanishes identically.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_vertices:
        raise ValueError(f"Function has {u.shape[0]} values for {mesh.n_vertices} vertices")
    values = tie_break(u, vertex_zero_shift)
    if constrained is not None and np.any(constrained):
        free = (~constrained).astype(float)
        adjacency = mesh.adjacency.astype(float)
        neighbour_sum = adjacency @ (u * free)
        neighbour_count = adjacency @ free
        mean = np.divide(neighbour_sum, neighbour_count, out=np.zeros_like(u), where=neighbour_count > 0)
        magnitude = vertex_zero_shift * float(np.max(np.abs(u)))
        values[constrained] = np.where(mean[constrained] < 0, -magnitude, magnitude)
    return values


def _edge_ids(mesh: SimplicialMesh, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keys = mesh.edges[:, 0].astype(np.int64) * mesh.n_vertices + mesh.edges[:, 1]
    return np.searchsorted(keys, lo.astype(np.int64) * mesh.n_vertices + hi)


def _local_frames(metric: EdgeLengthMetric, cells: np.ndarray):
    """Vertex coordinates of each cell in a local Euclidean frame, and an area scale."""
    mesh = metric.mesh
    n = mesh.dim
    if metric.conformal is not None and metric.reference is not None:
        gram = cell_gram(metric.reference.lengths[mesh.cell_edges[cells]], n)
        scale = np.sqrt(metric.conformal[mesh.cell_edges[cells]].mean(axis=1))
    else:
        gram = cell_gram(metric.lengths[mesh.cell_edges[cells]], n)
        scale = np.ones(len(cells))
    chol = np.linalg.cholesky(gram)
    frames = np.zeros((len(cells), n + 1, n))
    frames[:, 1:, :] = chol
    return frames, scale


def _triangle_area(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * math.sqrt(max(float(a @ a) * float(b @ b) - float(a @ b) ** 2, 0.0))


def extract_zero_set(
    mesh: SimplicialMesh,
    u: np.ndarray,
    vertex_zero_shift: float = DEFAULT_VERTEX_ZERO_SHIFT,
    metric: Optional[EdgeLengthMetric] = None,
    constrained: Optional[np.ndarray] = None,
) -> NodalComplex:
    """Zero set of the piecewise-linear interpolant of u.

    Args:
        mesh: Mesh carrying u.
        u: Vertex values.
        vertex_zero_shift: Relative size of the tie-break shift.
        metric: Metric for piece areas; chart chords when omitted.
        constrained: Dirichlet-constrained vertices.

    Raises:
        ValueError: If u vanishes identically.
    """
    n = mesh.dim
    if n not in (2, 3):
        raise ValueError(f"Zero-set extraction supports n = 2 or 3, got {n}")
    metric = metric if metric is not None else coordinate_metric(mesh)
    values = signed_values(mesh, u, vertex_zero_shift, constrained)
    positive = values > 0
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    crossed = positive[a] != positive[b]
    crossed_ids = np.nonzero(crossed)[0]
    point_of_edge = -np.ones(len(mesh.edges), dtype=np.int64)
    point_of_edge[crossed_ids] = np.arange(len(crossed_ids))
    ca, cb = a[crossed_ids], b[crossed_ids]
    t = values[ca] / (values[ca] - values[cb])
    points = mesh.coords[ca] + t[:, None] * mesh.chart_difference(ca, cb)
    point_x = mesh.collar_x[ca] + t * (mesh.collar_x[cb] - mesh.collar_x[ca])

    pairs = local_edges(n)
    column = {pair: k for k, pair in enumerate(pairs)}
    cell_positive = positive[mesh.cells]
    mixed = np.nonzero(np.any(cell_positive, axis=1) & ~np.all(cell_positive, axis=1))[0]
    frames, scale = _local_frames(metric, mixed) if len(mixed) else (np.zeros((0, n + 1, n)), np.zeros(0))

    simplices, simplex_piece, piece_area, links = [], [], [], []
    for row, cell in enumerate(mixed):
        signs = cell_positive[cell]
        plus = [i for i in range(n + 1) if signs[i]]
        minus = [i for i in range(n + 1) if not signs[i]]
        if len(plus) == 2 and len(minus) == 2:
            p, q = plus
            r, s = minus
            ring = [(p, r), (p, s), (q, s), (q, r)]
        else:
            ring = [(i, j) for i in plus for j in minus]
        local = [tuple(sorted(e)) for e in ring]
        edge_ids = mesh.cell_edges[cell, [column[e] for e in local]]
        ids = point_of_edge[edge_ids]
        frame = frames[row]
        corners = []
        for (i, j), edge in zip(local, edge_ids):
            vi, vj = mesh.cells[cell, i], mesh.cells[cell, j]
            s_t = values[vi] / (values[vi] - values[vj])
            corners.append((1.0 - s_t) * frame[i] + s_t * frame[j])
        if n == 2:
            simplices.append([ids[0], ids[1]])
            simplex_piece.append(row)
            piece_area.append(float(np.linalg.norm(corners[1] - corners[0])) * scale[row])
        else:
            area = 0.0
            for k in range(1, len(ids) - 1):
                simplices.append([ids[0], ids[k], ids[k + 1]])
                simplex_piece.append(row)
                area += _triangle_area(corners[k] - corners[0], corners[k + 1] - corners[0])
            piece_area.append(area * scale[row] ** 2)
        links.extend((ids[k], ids[k + 1]) for k in range(len(ids) - 1))

    count = len(crossed_ids)
    if links:
        link = np.array(links)
        graph = sparse.coo_matrix((np.ones(len(link)), (link[:, 0], link[:, 1])), shape=(count, count))
        n_components, point_component = csgraph.connected_components(graph, directed=False)
    else:
        n_components, point_component = 0, np.zeros(count, dtype=np.int64)
    first_point = np.array([s[0] for s in simplices], dtype=np.int64)
    piece_first = np.zeros(len(mixed), dtype=np.int64)
    if len(simplex_piece):
        piece_first[np.array(simplex_piece)] = first_point
    piece_component = point_component[piece_first] if len(mixed) else np.zeros(0, dtype=np.int64)

    vertices_per = np.bincount(point_component, minlength=n_components) if count else np.zeros(0, dtype=np.int64)
    pieces_per = np.bincount(piece_component, minlength=n_components)
    if n == 3:
        faces = mesh.faces
        face_positive = positive[faces]
        crossed_face = np.any(face_positive, axis=1) & ~np.all(face_positive, axis=1)
        crossed_faces = faces[crossed_face]
        odd = np.where(face_positive[crossed_face, 0] != face_positive[crossed_face, 1], 1, 2)
        first_edge = _edge_ids(mesh, crossed_faces[:, 0], crossed_faces[np.arange(len(crossed_faces)), odd])
        face_component = point_component[point_of_edge[first_edge]] if len(crossed_faces) else np.zeros(0, dtype=np.int64)
        edges_per = np.bincount(face_component, minlength=n_components)
        euler = vertices_per - edges_per + pieces_per
    else:
        euler = vertices_per - pieces_per

    boundary_point = mesh.boundary_vertices[ca] | mesh.boundary_vertices[cb]
    areas = np.bincount(piece_component, weights=np.array(piece_area), minlength=n_components) \
        if len(mixed) else np.zeros(n_components)
    components = []
    for cid in range(n_components):
        mask = point_component == cid
        xs = point_x[mask]
        defined = xs[~np.isnan(xs)]
        components.append(NodalComponent(
            id=cid,
            euler_char=int(euler[cid]),
            area=float(areas[cid]),
            pieces=int(pieces_per[cid]),
            touches_boundary=bool(np.any(boundary_point[mask])),
            inside_collar=bool(len(defined) == len(xs) and len(xs) > 0),
            collar_mean=float(defined.mean()) if len(defined) else None,
            collar_std=float(defined.std()) if len(defined) else None,
        ))
    return NodalComplex(
        dim=n,
        points=points,
        point_edges=crossed_ids,
        point_x=point_x,
        simplices=np.array(simplices, dtype=np.int64).reshape(-1, n),
        simplex_piece=np.array(simplex_piece, dtype=np.int64),
        piece_cells=mixed,
        piece_component=piece_component,
        components=components,
    )


def expected_positions(k: int) -> List[float]:
    """Collar positions (1 + 2i - k)/k, i = 0..k-1, of the k zeros of cos(kπ(x+1)/2)."""
    if k < 1:
        return []
    return [(1.0 + 2.0 * i - k) / k for i in range(k)]


@dataclass(frozen=True)
class CensusExpectation:
    count: int
    euler_char: Optional[int]
    positions: List[float]
    position_tol: float = 0.1
    # non-separating Σ may carry extra components; only containment is checked
    containment: bool = False


@dataclass(frozen=True)
class CensusReport:
    passed: bool
    checks: Dict[str, bool]
    matched: List[Optional[int]]
    extras: List[int]
    observed_count: int

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin(self.__dict__)


def component_census(nc: NodalComplex, expected: CensusExpectation) -> CensusReport:
    """Compare components with the expected count, Euler characteristic and positions."""
    unused = set(range(len(nc.components)))
    matched: List[Optional[int]] = []
    for position in expected.positions:
        best, best_distance = None, None
        for cid in sorted(unused):
            component = nc.components[cid]
            if component.collar_mean is None or not component.inside_collar:
                continue
            if expected.euler_char is not None and component.euler_char != expected.euler_char:
                continue
            distance = abs(component.collar_mean - position)
            if distance <= expected.position_tol and (best_distance is None or distance < best_distance):
                best, best_distance = cid, distance
        matched.append(best)
        if best is not None:
            unused.discard(best)
    extras = sorted(unused)
    checks = {"positions": all(m is not None for m in matched)}
    if expected.containment:
        checks["count"] = len(nc.components) >= expected.count
    else:
        checks["count"] = len(nc.components) == expected.count
        if expected.euler_char is not None:
            checks["euler_char"] = all(c.euler_char == expected.euler_char for c in nc.components)
        checks["interior"] = not any(c.touches_boundary for c in nc.components)
    return CensusReport(
        passed=all(checks.values()),
        checks=checks,
        matched=matched,
        extras=extras,
        observed_count=len(nc.components),
    )


def stability_margin(mesh: SimplicialMesh, u: np.ndarray,
                     vertex_zero_shift: float = DEFAULT_VERTEX_ZERO_SHIFT) -> float:
    """Half the smallest |u| over vertices with no crossed edge."""
    values = tie_break(u, vertex_zero_shift)
    positive = values > 0
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    crossed = positive[a] != positive[b]
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[a[crossed]] = True
    touched[b[crossed]] = True
    calm = np.abs(values[~touched])
    return 0.5 * float(calm.min()) if len(calm) else 0.0


def perturbed_component_count(mesh: SimplicialMesh, u: np.ndarray, seed: int = 0,
                              vertex_zero_shift: float = DEFAULT_VERTEX_ZERO_SHIFT,
                              constrained: Optional[np.ndarray] = None) -> int:
    """Component count after a random perturbation below the stability margin."""
    margin = stability_margin(mesh, u, vertex_zero_shift)
    rng = np.random.default_rng(seed)
    noise = 0.9 * margin * rng.uniform(-1.0, 1.0, size=mesh.n_vertices)
    perturbed = extract_zero_set(mesh, np.asarray(u, dtype=float) + noise, vertex_zero_shift,
                                 constrained=constrained)
    return len(perturbed.components)


@dataclass(frozen=True, eq=False)
class NodalDomains:
    count: int
    volumes: np.ndarray
    labels: np.ndarray
    signs: np.ndarray

    def domain_cells(self, mesh: SimplicialMesh, domain: int) -> np.ndarray:
        """Cells whose vertices all lie in ``domain``."""
        return np.all(self.labels[mesh.cells] == domain, axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({"count": self.count, "volumes": self.volumes, "signs": self.signs})


def nodal_domains(
    mesh: SimplicialMesh,
    u: np.ndarray,
    vertex_zero_shift: float = DEFAULT_VERTEX_ZERO_SHIFT,
    metric: Optional[EdgeLengthMetric] = None,
    constrained: Optional[np.ndarray] = None,
    realization: str = "auto",
) -> NodalDomains:
    """Connected sign components of u over same-sign edges, with lumped volumes.

    Raises:
        ValueError: If u vanishes identically.
    """
    values = signed_values(mesh, u, vertex_zero_shift, constrained)
    positive = values > 0
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    same = positive[a] == positive[b]
    graph = sparse.coo_matrix(
        (np.ones(int(same.sum())), (a[same], b[same])), shape=(mesh.n_vertices, mesh.n_vertices))
    count, labels = csgraph.connected_components(graph, directed=False)
    metric = metric if metric is not None else coordinate_metric(mesh)
    weights = assemble(mesh, metric, "neumann", "lumped", realization).mass.diagonal()
    volumes = np.bincount(labels, weights=weights, minlength=count)
    signs = np.zeros(count, dtype=np.int64)
    signs[labels] = np.where(positive, 1, -1)
    return NodalDomains(count=int(count), volumes=volumes, labels=labels, signs=signs)


@dataclass(frozen=True)
class ProfileFit:
    beta: float
    rel_l2_error: float

    def to_dict(self) -> Dict[str, float]:
        return {"beta": self.beta, "rel_l2_error": self.rel_l2_error}


def profile_error(
    mesh: SimplicialMesh,
    u: np.ndarray,
    collar: CollarSpec,
    k: int,
    metric: Optional[EdgeLengthMetric] = None,
    realization: str = "auto",
) -> ProfileFit:
    """Fit β·cos(kπ(x+1)/2) to u on the collar, weighted by the lumped mass.

    Raises:
        ValueError: If the collar has no vertices.
    """
    on_collar = mesh.collar_index == collar.label
    if not np.any(on_collar):
        raise ValueError(f"Collar {collar.label} has no vertices")
    metric = metric if metric is not None else coordinate_metric(mesh)
    cell_mask = mesh.region == collar.label
    weights = assemble(mesh, metric, "neumann", "lumped", realization, cell_mask=cell_mask).mass.diagonal()
    w = weights[on_collar]
    values = np.asarray(u, dtype=float)[on_collar]
    profile = np.cos(k * math.pi * (mesh.collar_x[on_collar] + 1.0) / 2.0)
    beta = float(np.sum(w * values * profile) / np.sum(w * profile ** 2))
    fitted = beta * profile
    denominator = math.sqrt(float(np.sum(w * fitted ** 2)))
    error = math.sqrt(float(np.sum(w * (values - fitted) ** 2)))
    return ProfileFit(beta=beta, rel_l2_error=error / denominator if denominator > 0 else float("inf"))
