"""Piecewise-flat metrics: one length per mesh edge.

The reference metric g₀ is the product metric Γ²dx² + r²g_Σ on each collar and
a conformally flat extension outside. The degenerate metric g_ε multiplies g₀
by ε away from the collars; the smoothed metric χ·g₀ interpolates between the
two over a transition of width δ measured from the collars.
"""

import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.special import comb

from .mesh import CollarSpec, SimplicialMesh
from .utils import UnrealizableCellError, local_edges

PROVENANCES = ("reference_g0", "degenerate", "smoothed", "coordinate")

# 2-point Gauss nodes on [0, 1]
GAUSS_NODES = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))

REALIZABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class EdgeLengthMetric:
    """Edge lengths indexed like ``mesh.edges``."""

    mesh: SimplicialMesh
    lengths: np.ndarray
    provenance: str = "reference_g0"
    eps: Optional[float] = None
    delta: Optional[float] = None
    order: Optional[int] = None
    conformal: Optional[np.ndarray] = None
    reference: Optional["EdgeLengthMetric"] = None

    def cell_lengths(self) -> np.ndarray:
        """Per-cell lengths in local edge order 01, 02, ..., 12, ..."""
        return self.lengths[self.mesh.cell_edges]

    def scaled(self, factor: float) -> "EdgeLengthMetric":
        """Global conformal constant: every length times ``factor``."""
        reference = self.reference.scaled(factor) if self.reference is not None else None
        return replace(self, lengths=self.lengths * factor, reference=reference)

    def squared_volumes(self) -> np.ndarray:
        return squared_volumes(self.cell_lengths(), self.mesh.dim)

    def check_realizable(self) -> None:
        """Raise on the first cell without a Euclidean realization."""
        check_realizable(self.cell_lengths(), self.mesh.dim)

    def describe(self) -> Dict[str, object]:
        return {"provenance": self.provenance, "eps": self.eps, "delta": self.delta, "order": self.order}

    def to_dict(self) -> Dict[str, float]:
        """Lengths keyed by the sorted vertex pair "a-b"."""
        return {f"{a}-{b}": float(l) for (a, b), l in zip(self.mesh.edges, self.lengths)}


@dataclass(frozen=True)
class SmoothingProfile:
    """Monotone C^order transition χ from 1 on the collars to eps beyond depth δ.

    ``delta`` = 0 gives the sharp profile: 1 at depth 0, eps everywhere else.
    """

    eps: float
    delta: float
    order: int = 2

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        if self.order < 2:
            raise ValueError(f"order must be at least 2, got {self.order}")

    def value(self, depth: np.ndarray) -> np.ndarray:
        depth = np.asarray(depth, dtype=float)
        if self.delta == 0.0:
            return np.where(depth > 0.0, self.eps, 1.0)
        return self.eps + (1.0 - self.eps) * (1.0 - smoothstep(depth / self.delta, self.order))


def smoothstep(t: np.ndarray, order: int) -> np.ndarray:
    """Generalized smoothstep: 0 for t ≤ 0, 1 for t ≥ 1, C^order at both ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    total = np.zeros_like(t)
    for k in range(order + 1):
        total += comb(order + k, k) * comb(2 * order + 1, order - k) * (-t) ** k
    return t ** (order + 1) * total


def cell_gram(cell_lengths: np.ndarray, n: int) -> np.ndarray:
    """Gram matrices Gᵢⱼ = (l₀ᵢ² + l₀ⱼ² - lᵢⱼ²)/2 of the edge vectors from vertex 0."""
    squared = np.asarray(cell_lengths, dtype=float) ** 2
    column = {pair: k for k, pair in enumerate(local_edges(n))}
    gram = np.empty((squared.shape[0], n, n))
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            if i == j:
                value = squared[:, column[(0, i)]]
            else:
                value = 0.5 * (squared[:, column[(0, i)]] + squared[:, column[(0, j)]]
                               - squared[:, column[(i, j)]])
            gram[:, i - 1, j - 1] = value
            gram[:, j - 1, i - 1] = value
    return gram


def squared_volumes(cell_lengths: np.ndarray, n: int) -> np.ndarray:
    """Squared n-volumes det(G)/(n!)² of a batch of cells."""
    return np.linalg.det(cell_gram(cell_lengths, n)) / math.factorial(n) ** 2


def check_realizable(cell_lengths: np.ndarray, n: int) -> None:
    """Raise :class:`UnrealizableCellError` for the first cell with no positive volume."""
    volumes = squared_volumes(cell_lengths, n)
    scale = np.max(cell_lengths, axis=1) ** (2 * n)
    bad = np.nonzero(~(volumes > REALIZABILITY_TOLERANCE * scale))[0]
    if len(bad):
        raise UnrealizableCellError(int(bad[0]), float(volumes[bad[0]]))


def cayley_menger_volume(lengths: Sequence[float]) -> float:
    """Squared volume of one simplex from its (n+1 choose 2) edge lengths.

    Lengths follow the local edge order 01, 02, ..., 12, ...

    Raises:
        UnrealizableCellError: If the squared volume is not positive.
    """
    lengths = np.asarray(lengths, dtype=float)
    n = int(round((math.sqrt(1 + 8 * len(lengths)) - 1) / 2)) - 1
    if n < 1 or (n + 1) * n // 2 != len(lengths):
        raise ValueError(f"{len(lengths)} lengths do not describe a simplex")
    if np.any(lengths <= 0):
        raise UnrealizableCellError(-1, 0.0, "Edge lengths must be positive")
    matrix = np.ones((n + 2, n + 2))
    matrix[0, 0] = 0.0
    distances = np.zeros((n + 1, n + 1))
    for (i, j), length in zip(local_edges(n), lengths):
        distances[i, j] = distances[j, i] = length ** 2
    matrix[1:, 1:] = distances
    volume = (-1) ** (n + 1) / (2 ** n * math.factorial(n) ** 2) * np.linalg.det(matrix)
    if volume <= REALIZABILITY_TOLERANCE * float(np.max(lengths)) ** (2 * n):
        raise UnrealizableCellError(-1, float(volume))
    return float(volume)


def coordinate_metric(mesh: SimplicialMesh) -> EdgeLengthMetric:
    """Euclidean chord lengths of the chart coordinates."""
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    lengths = np.linalg.norm(mesh.chart_difference(a, b), axis=1)
    return EdgeLengthMetric(mesh, lengths, provenance="coordinate")


def _extension_lengths(mesh: SimplicialMesh, a: np.ndarray, b: np.ndarray, ratio: float) -> np.ndarray:
    """Chord lengths of the conformal extension density, by 2-point Gauss."""
    delta = mesh.chart_difference(a, b)
    chord = np.linalg.norm(delta, axis=1)
    extension = mesh.extension
    if extension.get("kind", "uniform") == "uniform":
        return ratio * float(extension.get("scale", 1.0)) * chord
    if extension["kind"] != "radial":
        raise ValueError(f"Unknown extension kind {extension['kind']!r}")
    centre = np.asarray(extension["center"], dtype=float)
    density = np.zeros(len(a))
    for t in GAUSS_NODES:
        point = mesh.coords[a] + t * delta
        radius = np.linalg.norm(point - centre, axis=1)
        density += 0.5 * np.where(radius < extension["radius"], extension["inner"], extension["outer"])
    return ratio * density * chord


def _sigma_chords(mesh: SimplicialMesh, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Chords on the unit Σ model between the projections of two vertices."""
    delta = mesh.sigma_points[b] - mesh.sigma_points[a]
    if mesh.sigma_kind == "periodic":
        # flat torus of period 2π per unit scale
        delta = delta - np.round(delta)
        return 2.0 * math.pi * np.linalg.norm(delta, axis=1)
    return np.linalg.norm(delta, axis=1)


def reference_metric(mesh: SimplicialMesh, collars: Optional[Sequence[CollarSpec]] = None) -> EdgeLengthMetric:
    """The reference metric g₀.

    Collar edges get sqrt((ΓΔx)² + (r·d_Σ)²); all other edges the extension
    density. ``collars`` may override the mesh's collar scales; the exterior
    density follows the change of r so the two stay matched along ∂Ω.

    Raises:
        ValueError: If region labels reference a missing collar.
        UnrealizableCellError: If a cell has no Euclidean realization.
    """
    collars = tuple(collars) if collars is not None else mesh.collars
    labels = np.unique(mesh.region[mesh.region >= 0])
    if len(labels) and labels.max() >= len(collars):
        raise ValueError(f"Mesh has collar label {labels.max()} but only {len(collars)} collars were given")
    ratio = 1.0
    if collars and mesh.collars:
        ratio = collars[0].r / mesh.collars[0].r
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    lengths = _extension_lengths(mesh, a, b, ratio)
    if mesh.sigma_kind != "none":
        edge_label = -np.ones(len(mesh.edges), dtype=np.int64)
        collar_cells = mesh.region >= 0
        edge_label[mesh.cell_edges[collar_cells].ravel()] = np.repeat(
            mesh.region[collar_cells], mesh.cell_edges.shape[1])
        for label in labels:
            collar = collars[label]
            edges = np.nonzero(edge_label == label)[0]
            ea, eb = a[edges], b[edges]
            along = collar.gamma * (mesh.collar_x[eb] - mesh.collar_x[ea])
            across = collar.r * _sigma_chords(mesh, ea, eb)
            lengths[edges] = np.hypot(along, across)
    metric = EdgeLengthMetric(mesh, lengths, provenance="reference_g0")
    metric.check_realizable()
    return metric


def collar_depth(ref: EdgeLengthMetric) -> np.ndarray:
    """Graph distance under g₀ from each vertex to the closed collars."""
    mesh = ref.mesh
    sources = np.nonzero(mesh.collar_vertices)[0]
    if len(sources) == 0:
        return np.full(mesh.n_vertices, np.inf)
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    count = mesh.n_vertices
    graph = sparse.csr_matrix(
        (np.concatenate([ref.lengths, ref.lengths]), (np.concatenate([a, b]), np.concatenate([b, a]))),
        shape=(count, count))
    return csgraph.dijkstra(graph, directed=False, indices=sources, min_only=True)


def edge_depth(ref: EdgeLengthMetric, depth: Optional[np.ndarray] = None) -> np.ndarray:
    """Depth of each edge midpoint: 0 on collar edges, the mean endpoint depth elsewhere.

    A non-collar edge joining two points of ∂Ω leaves the collar, so its
    midpoint sits at half its length.
    """
    mesh = ref.mesh
    depth = collar_depth(ref) if depth is None else depth
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    midpoint = 0.5 * (depth[a] + depth[b])
    collar = mesh.collar_edge_mask
    chord = ~collar & (midpoint == 0.0)
    midpoint[chord] = 0.5 * ref.lengths[chord]
    midpoint[collar] = 0.0
    return midpoint


def profiled_metric(ref: EdgeLengthMetric, profile: SmoothingProfile,
                    depth: Optional[np.ndarray] = None, strict: bool = True) -> EdgeLengthMetric:
    """Scale each edge by √χ at its midpoint depth.

    The result keeps χ per edge and ``ref`` so the FEM can realize it
    cellwise as a conformal rescaling of g₀.
    """
    chi = profile.value(edge_depth(ref, depth))
    provenance = "degenerate" if profile.delta == 0.0 else "smoothed"
    metric = EdgeLengthMetric(
        ref.mesh, ref.lengths * np.sqrt(chi), provenance=provenance,
        eps=profile.eps, delta=profile.delta, order=profile.order,
        conformal=chi, reference=ref)
    if strict:
        metric.check_realizable()
    return metric


def degenerate_metric(ref: EdgeLengthMetric, eps: float, strict: bool = True) -> EdgeLengthMetric:
    """g_ε: collar edges unchanged, every other edge scaled by √eps.

    Raises:
        UnrealizableCellError: If (strict) a cell straddling ∂Ω loses its
            realization, which signals a mesh too coarse for this eps.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    return profiled_metric(ref, SmoothingProfile(eps=eps, delta=0.0), strict=strict)


def smoothed_metric(ref: EdgeLengthMetric, profile: SmoothingProfile,
                    depth: Optional[np.ndarray] = None, strict: bool = True) -> EdgeLengthMetric:
    """g_{δ,ε} = χ·g₀ with the smooth transition of ``profile``.

    Raises:
        ValueError: If δ is not below the deepest exterior point.
        UnrealizableCellError: If (strict) a cell has no Euclidean realization.
    """
    depth = collar_depth(ref) if depth is None else depth
    finite = depth[np.isfinite(depth)]
    if profile.delta > 0.0 and len(finite) and profile.delta >= finite.max():
        raise ValueError(
            f"delta={profile.delta:g} is not smaller than the exterior depth {finite.max():g}")
    return profiled_metric(ref, profile, depth, strict=strict)


def default_delta(ref: EdgeLengthMetric) -> float:
    """Transition width spanning a collar layer and every edge leaving the collars."""
    mesh = ref.mesh
    collar = mesh.collar_edge_mask
    layer = max((2.0 * c.gamma / c.layers for c in mesh.collars), default=0.0)
    touching = np.any(mesh.collar_vertices[mesh.edges], axis=1) & ~collar
    straddling = float(ref.lengths[touching].max()) if np.any(touching) else 0.0
    return max(layer, straddling)
