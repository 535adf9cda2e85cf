"""Shared helpers and exception types for nodal-forge."""

import hashlib
import json
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np


class MeshError(ValueError):
    """Raised when a mesh cannot be generated or violates its invariants.

    The ``violations`` attribute lists every invariant that failed, so callers
    (and the audit report) can show all of them at once.
    """

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        self.violations = violations or []
        if self.violations:
            message += "\nViolations:\n - " + "\n - ".join(self.violations)
        super().__init__(message)


class UnrealizableCellError(ValueError):
    """Raised when the edge lengths of a cell admit no Euclidean simplex."""

    def __init__(self, cell: int, squared_volume: float, message: Optional[str] = None):
        self.cell = int(cell)
        self.squared_volume = float(squared_volume)
        if not message:
            message = (
                f"Cell {self.cell} is not Euclidean-realizable "
                f"(squared volume {self.squared_volume:.3e})"
            )
        super().__init__(message)


class SingularSystemError(RuntimeError):
    """Raised when a linear system has no unique solution."""


class EigenConvergenceError(RuntimeError):
    """Raised when the iterative eigensolver misses its tolerance.

    ``residuals`` holds the best residual per requested pair.
    """

    def __init__(self, message: str, residuals: Optional[Sequence[float]] = None,
                 iterations: int = 0):
        self.residuals = [float(r) for r in (residuals if residuals is not None else [])]
        self.iterations = iterations
        super().__init__(message)


class ScenarioError(ValueError):
    """Raised when a scenario configuration is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"Invalid scenario field '{field}': {message}")


class ScenarioRunError(RuntimeError):
    """Wraps a module error with the scenario and eps it happened at."""

    def __init__(self, scenario: str, eps: Optional[float], cause: Exception):
        self.scenario = scenario
        self.eps = eps
        self.cause = cause
        where = f"scenario '{scenario}'" + (f" at eps={eps:g}" if eps is not None else "")
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")


def local_edges(n: int) -> List[Tuple[int, int]]:
    """Local vertex pairs of an n-simplex in lexicographic order (01, 02, ..., 12, ...)."""
    return list(combinations(range(n + 1), 2))


def local_faces(n: int, k: int) -> List[Tuple[int, ...]]:
    """Local k-vertex subsets of an n-simplex."""
    return list(combinations(range(n + 1), k))


def permutation_parity(rows: np.ndarray) -> np.ndarray:
    """Parity (+1 / -1) of each row of distinct integers relative to its sorted order."""
    rows = np.asarray(rows)
    inversions = np.zeros(rows.shape[0], dtype=np.int64)
    width = rows.shape[1]
    for i in range(width):
        for j in range(i + 1, width):
            inversions += rows[:, i] > rows[:, j]
    return np.where(inversions % 2 == 0, 1, -1)


def tie_break(u: np.ndarray, vertex_zero_shift: float) -> np.ndarray:
    """Move near-zero vertex values to +shift·‖u‖∞ so no vertex sits on the zero set.

    Raises:
        ValueError: If ``u`` vanishes identically.
    """
    u = np.asarray(u, dtype=float)
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    if scale == 0.0:
        raise ValueError("Function vanishes identically; its zero set is the whole mesh")
    shifted = u.copy()
    threshold = vertex_zero_shift * scale
    shifted[np.abs(u) < threshold] = threshold
    return shifted


def vertex_ranks(u: np.ndarray) -> np.ndarray:
    """Rank of each vertex under (value, index) lexicographic order.

    Equal values are ordered by vertex index, which acts as an infinitesimal
    index-ordered perturbation.
    """
    u = np.asarray(u, dtype=float)
    order = np.lexsort((np.arange(u.size), u))
    ranks = np.empty(u.size, dtype=np.int64)
    ranks[order] = np.arange(u.size)
    return ranks


def canonical_json(data: Any) -> str:
    """JSON text with sorted keys, used for hashing configurations."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def config_hash(data: Dict[str, Any]) -> str:
    """Short SHA-256 digest of a configuration mapping."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:16]


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_builtin(data: Any) -> Any:
    """Recursively convert numpy containers and scalars to plain Python values.

    NaN becomes None so the result is valid JSON and YAML.
    """
    if isinstance(data, dict):
        return {str(key): to_builtin(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_builtin(item) for item in data]
    if isinstance(data, np.ndarray):
        return to_builtin(data.tolist())
    if isinstance(data, np.bool_):
        return bool(data)
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, (float, np.floating)):
        value = float(data)
        return None if np.isnan(value) else value
    return data
