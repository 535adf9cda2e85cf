"""Lowest eigenpairs of K u = λ M u."""

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, lobpcg

from .fem import OperatorPair
from .utils import EigenConvergenceError, to_builtin

DENSE_LIMIT = 4000
DEFAULT_TOL = 1e-6
MAX_RESTARTS = 3


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Ascending eigenpairs with M-orthonormal vectors over all vertices.

    Constrained (Dirichlet) vertices carry 0 in every vector.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int = 0
    seed: int = 0
    method: str = "lobpcg"

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def relative_gaps(self) -> np.ndarray:
        """(λ_{k+1} - λ_k)/λ_{k+1} for consecutive pairs (0 when λ_{k+1} ≤ 0)."""
        lam = self.eigenvalues
        upper = lam[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            gaps = np.where(upper > 0, (upper - lam[:-1]) / upper, 0.0)
        return gaps

    @property
    def gap_report(self) -> float:
        gaps = self.relative_gaps()
        return float(gaps.min()) if len(gaps) else float("nan")

    def to_dict(self, include_vectors: bool = False) -> Dict[str, Any]:
        data = {
            "eigenvalues": self.eigenvalues,
            "residuals": self.residuals,
            "iterations": self.iterations,
            "seed": self.seed,
            "method": self.method,
            "gap_report": self.gap_report,
        }
        if include_vectors:
            data["vectors"] = self.vectors.T
        return to_builtin(data)


@dataclass(frozen=True)
class GuardOutcome:
    passed: bool
    gaps: List[float] = field(default_factory=list)
    failed_at: Optional[int] = None
    min_gap: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            "passed": self.passed,
            "gaps": self.gaps,
            "failed_at": self.failed_at,
            "min_gap": self.min_gap,
        })


def _normalize(vectors: np.ndarray, M) -> np.ndarray:
    """M-normalize each column and make its largest-magnitude entry positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    norms = np.sqrt(np.einsum("ij,ij->j", vectors, M @ vectors))
    vectors /= norms
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _residuals(K, M, eigenvalues: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """‖Ku - λMu‖ / (‖u‖ · max diag K), independent of the overall matrix scale."""
    scale = float(np.max(K.diagonal())) or 1.0
    defect = K @ vectors - (M @ vectors) * eigenvalues
    return np.linalg.norm(defect, axis=0) / (np.linalg.norm(vectors, axis=0) * scale)


def _rayleigh_ritz(K, M, basis: np.ndarray):
    A = basis.T @ (K @ basis)
    B = basis.T @ (M @ basis)
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    values, coefficients = scipy.linalg.eigh(A, B)
    return values, basis @ coefficients


def _check_mass(M) -> None:
    diagonal = M.diagonal()
    if np.any(diagonal <= 0.0):
        raise ValueError("Mass matrix is not positive definite on the free vertices")


def solve_lowest(ops: OperatorPair, count: int, tol: float = DEFAULT_TOL, seed: int = 0,
                 max_restarts: int = MAX_RESTARTS) -> EigenResult:
    """Lowest ``count`` eigenpairs by LOBPCG with a Jacobi preconditioner.

    The block carries a few guard vectors, starts from a seeded random basis
    and is finished by a Rayleigh–Ritz step. Runs that miss ``tol`` restart
    with a new seed and a larger iteration cap.

    Raises:
        ValueError: If ``count`` is too large for the system or M is indefinite.
        EigenConvergenceError: If no attempt reaches ``tol``.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    K, M = ops.reduced_stiffness, ops.reduced_mass
    size = K.shape[0]
    if count < 1 or count > size // 4:
        raise ValueError(f"count={count} must be between 1 and a quarter of the {size} free vertices")
    _check_mass(M)
    lumped = np.asarray(M.sum(axis=1)).ravel()
    diagonal = K.diagonal()
    shift = 1e-2 * diagonal.sum() / lumped.sum()
    inverse = 1.0 / (diagonal + shift * lumped)

    def jacobi(x):
        return inverse * x if x.ndim == 1 else inverse[:, None] * x

    preconditioner = LinearOperator((size, size), matvec=jacobi, matmat=jacobi, dtype=float)
    block = min(count + max(2, count // 2), size // 3)
    scale = float(np.max(diagonal)) or 1.0
    best_residuals = None
    total_iterations = 0
    for attempt in range(max_restarts + 1):
        rng = np.random.default_rng(seed + attempt)
        start = rng.standard_normal((size, block))
        max_iterations = int(50 * count * math.sqrt(size)) * (attempt + 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, basis, history = lobpcg(
                K, start, B=M, M=preconditioner, tol=0.1 * tol * scale, maxiter=max_iterations,
                largest=False, retLambdaHistory=True)
        total_iterations += len(history)
        values, vectors = _rayleigh_ritz(K, M, basis)
        values, vectors = values[:count], _normalize(vectors[:, :count], M)
        residuals = _residuals(K, M, values, vectors)
        if best_residuals is None or residuals.max() < best_residuals.max():
            best_residuals = residuals
        if np.all(residuals < tol):
            return EigenResult(
                eigenvalues=values,
                vectors=ops.expand(vectors),
                residuals=residuals,
                iterations=total_iterations,
                seed=seed,
                method="lobpcg",
            )
    raise EigenConvergenceError(
        f"LOBPCG did not reach tol={tol:g} after {max_restarts + 1} attempts "
        f"(best max residual {best_residuals.max():.3e})",
        residuals=best_residuals, iterations=total_iterations)


def dense_solve(ops: OperatorPair, count: int) -> EigenResult:
    """Dense generalized symmetric solve; the small-scale reference.

    Raises:
        ValueError: If the free system exceeds the dense size cap.
    """
    K, M = ops.reduced_stiffness, ops.reduced_mass
    size = K.shape[0]
    if size > DENSE_LIMIT:
        raise ValueError(f"Dense solve is capped at {DENSE_LIMIT} free vertices, got {size}")
    if not 1 <= count <= size:
        raise ValueError(f"count={count} out of range for {size} free vertices")
    _check_mass(M)
    values, vectors = scipy.linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, count - 1])
    vectors = _normalize(vectors, M)
    return EigenResult(
        eigenvalues=values,
        vectors=ops.expand(vectors),
        residuals=_residuals(K, M, values, vectors),
        iterations=0,
        seed=0,
        method="dense",
    )


def simplicity_guard(result: EigenResult, l: int, min_gap: float) -> GuardOutcome:
    """Check that λ_0..λ_{l-1} are separated from their successors by ``min_gap``.

    Gaps are relative, (λ_{k+1} - λ_k)/λ_{k+1}, for every k < l, so λ_l itself
    must be computed. A failure means ε should shrink or r should change.
    """
    if result.count < l + 1:
        raise ValueError(f"Guard needs at least {l + 1} pairs, got {result.count}")
    gaps = result.relative_gaps()[:l]
    failed = np.nonzero(gaps < min_gap)[0]
    return GuardOutcome(
        passed=len(failed) == 0,
        gaps=[float(g) for g in gaps],
        failed_at=int(failed[0]) if len(failed) else None,
        min_gap=min_gap,
    )
