"""Scenario sweeps: eps-sweeps on a fixed mesh, verdicts and convergence fits."""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .eigen import EigenResult, simplicity_guard, solve_lowest
from .fem import CollarMode, OperatorPair, UpperBoundReport, assemble, collar_modes, upper_bound_check
from .logger import SolveLogger
from .mesh import AuditReport, CollarSpec, SimplicialMesh, build_model_mesh, mesh_audit
from .metric import (EdgeLengthMetric, SmoothingProfile, collar_depth, default_delta, reference_metric,
                     smoothed_metric)
from .morse import classify_critical_vertices, morse_betti_check
from .nodal import (SIGMA_EULER, CensusExpectation, NodalComplex, component_census, expected_positions,
                    extract_zero_set, nodal_domains, perturbed_component_count, profile_error)
from .oracle import flat_torus_spectrum
from .scenario import Scenario, with_scaled_radius
from .utils import ScenarioError, ScenarioRunError, to_builtin

# a local log-log slope below this marks the discretization floor
FLOOR_SLOPE = 0.3
MIN_FIT_POINTS = 3
MIN_CONVERGENCE_ORDER = 0.4
# relative growth tolerated in quantities that must not increase as eps shrinks
TREND_SLACK = 0.02
RETRY_RADIUS_FACTOR = 0.8
REALIZATION = "conformal"

# Betti numbers of the closed inner side D̄ bounded by Σ
INNER_BETTI = {
    "sphere2": [1, 0, 0, 0],
    "circle": [1, 0, 0],
    "genus2": [1, 2, 0, 0],
}

Echo = Callable[[str], None]


def _silent(message: str) -> None:
    pass


def neumann_reference(collar: CollarSpec, l: int) -> Dict[str, List]:
    """Targets μ_k = k²π²/(4Γ²) and nodal positions of the first l interval modes."""
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    return {
        "mu": [collar.neumann_eigenvalue(k) for k in range(1, l + 1)],
        "positions": [expected_positions(k) for k in range(1, l + 1)],
    }


@dataclass
class SweepRecord:
    """One eigenpair at one eps, with its checks."""

    scenario: str
    config_hash: str
    seed: int
    eps: Optional[float]
    index: int
    eigenvalue: float
    target: float
    collar: Optional[int] = None
    mode: Optional[int] = None
    residual: float = 0.0
    display_index: Optional[int] = None
    census: Optional[Dict[str, Any]] = None
    components: Optional[List[Dict[str, Any]]] = None
    perturbed_count: Optional[int] = None
    nodal_domains: Optional[int] = None
    profile: Optional[Dict[str, float]] = None
    morse: Optional[Dict[str, Any]] = None
    upper_bound: Optional[float] = None
    runtime: float = 0.0

    @property
    def error(self) -> float:
        return abs(self.eigenvalue - self.target)

    @property
    def relative_error(self) -> Optional[float]:
        return self.error / self.target if self.target > 0 else None

    @property
    def census_passed(self) -> Optional[bool]:
        return None if self.census is None else bool(self.census["passed"])

    @property
    def courant(self) -> Optional[bool]:
        """Courant's bound: the k-th eigenfunction (from 0) has at most k+1 domains."""
        return None if self.nodal_domains is None else self.nodal_domains <= self.index + 1

    @property
    def stable(self) -> Optional[bool]:
        if self.perturbed_count is None or self.components is None:
            return None
        return self.perturbed_count == len(self.components)

    def to_dict(self) -> Dict[str, Any]:
        data = dict(self.__dict__)
        data.update(error=self.error, relative_error=self.relative_error, courant=self.courant,
                    stable=self.stable)
        return to_builtin(data)

    def csv_row(self) -> Dict[str, Any]:
        return {
            "k": self.display_index if self.display_index is not None else self.index,
            "eps": self.eps,
            "lambda": self.eigenvalue,
            "target": self.target,
            "error": self.error,
            "collar": self.collar,
            "census": self.census_passed,
            "components": None if self.components is None else len(self.components),
            "nodal_domains": self.nodal_domains,
            "profile_error": None if self.profile is None else self.profile["rel_l2_error"],
            "upper_bound": self.upper_bound,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ConvergenceFit:
    order: Optional[float]
    floor_eps: Optional[float]
    last_eps: Optional[float]
    points: int
    status: str = "ok"
    reason: Optional[str] = None

    @property
    def acceptable(self) -> bool:
        """Order at least MIN_CONVERGENCE_ORDER, or too little data to fit one.

        A sweep that reached its floor after at least one converging step is
        accepted; a stalled or diverging sweep is not.
        """
        if self.order is not None:
            return self.order >= MIN_CONVERGENCE_ORDER
        return self.status in ("too-few-points", "floor-dominated")

    def to_dict(self) -> Dict[str, Any]:
        return {**self.__dict__, "acceptable": self.acceptable}


def fit_order(eps: Sequence[float], errors: Sequence[float]) -> ConvergenceFit:
    """Log-log least-squares slope of error against eps over the pre-floor points.

    Points are taken from the largest eps downward; the floor starts at the
    first point whose local slope drops below FLOOR_SLOPE, or where the error
    vanishes. With fewer than MIN_FIT_POINTS pre-floor points no order is
    fitted and the status says why:

    - ``too-few-points``: the sweep itself is shorter than MIN_FIT_POINTS
    - ``stalled``: the error failed to drop by FLOOR_SLOPE on the first step
    - ``floor-dominated``: the floor came after at least one converging step
    """
    order = np.argsort(eps)[::-1]
    eps = np.asarray(eps, dtype=float)[order]
    errors = np.asarray(errors, dtype=float)[order]
    keep = 1 if len(eps) and errors[0] > 0 else 0
    floor_eps = None
    vanished = False
    local = None
    while keep and keep < len(eps):
        previous, current = errors[keep - 1], errors[keep]
        if current <= 0:
            floor_eps = float(eps[keep])
            vanished = True
            break
        local = math.log(previous / current) / math.log(eps[keep - 1] / eps[keep])
        if local < FLOOR_SLOPE:
            floor_eps = float(eps[keep])
            break
        keep += 1
    last_eps = float(eps[keep - 1]) if keep else None
    if keep >= MIN_FIT_POINTS:
        slope = np.polyfit(np.log(eps[:keep]), np.log(errors[:keep]), 1)[0]
        return ConvergenceFit(float(slope), floor_eps, last_eps, keep)
    if keep == 1 and floor_eps is not None and not vanished:
        return ConvergenceFit(None, floor_eps, last_eps, keep, "stalled",
                              f"local slope {local:.3g} below {FLOOR_SLOPE} at eps={floor_eps:g}")
    if len(eps) < MIN_FIT_POINTS:
        return ConvergenceFit(None, floor_eps, last_eps, keep, "too-few-points",
                              f"{len(eps)} eps values, a slope needs {MIN_FIT_POINTS}")
    reason = "error vanishes at the largest eps" if keep == 0 else \
        f"{keep} pre-floor points, floor at eps={floor_eps:g}"
    return ConvergenceFit(None, floor_eps, last_eps, keep, "floor-dominated", reason)


def fit_convergence(records: Sequence[SweepRecord]) -> Dict[int, ConvergenceFit]:
    """Convergence order of |λ_{k,ε} - μ_k| per eigen index with a positive target."""
    grouped: Dict[int, List[SweepRecord]] = {}
    for record in records:
        if record.eps is not None and record.target > 0:
            grouped.setdefault(record.index, []).append(record)
    return {
        index: fit_order([r.eps for r in group], [r.error for r in group])
        for index, group in sorted(grouped.items())
    }


@dataclass
class SweepResult:
    """Everything a scenario run produced."""

    scenario: Scenario
    config_hash: str
    audit: AuditReport
    records: List[SweepRecord] = field(default_factory=list)
    guards: List[Dict[str, Any]] = field(default_factory=list)
    upper_bounds: List[UpperBoundReport] = field(default_factory=list)
    fits: Dict[int, ConvergenceFit] = field(default_factory=dict)
    verdicts: Dict[str, bool] = field(default_factory=dict)
    delta: Optional[float] = None
    retried: bool = False
    radius_factor: float = 1.0
    mesh: Optional[SimplicialMesh] = None
    reference: Optional[EdgeLengthMetric] = None
    complexes: Dict[Tuple[int, float], NodalComplex] = field(default_factory=dict)
    operators: Dict[Optional[float], OperatorPair] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            "scenario": self.scenario.name,
            "config": self.scenario.to_dict(),
            "config_hash": self.config_hash,
            "seed": self.scenario.seed,
            "mesh_audit": self.audit.to_dict(),
            "delta": self.delta,
            "retried": self.retried,
            "radius_factor": self.radius_factor,
            "simplicity_guard": self.guards,
            "upper_bounds": [b.to_dict() for b in self.upper_bounds],
            "convergence": {str(k): fit.to_dict() for k, fit in self.fits.items()},
            "verdicts": self.verdicts,
            "passed": self.passed,
            "records": [r.to_dict() for r in self.records],
        })


def targets_for(collars: Sequence[CollarSpec], l: int) -> List[CollarMode]:
    """Constant modes of every collar plus the l lowest non-constant ones."""
    return collar_modes(collars, l + len(collars))


def _constrained(ops: OperatorPair) -> Optional[np.ndarray]:
    return ops.constrained if ops.constrained.size else None


def _component_collars(mesh: SimplicialMesh, nc: NodalComplex, cid: int) -> List[int]:
    cells = nc.piece_cells[nc.piece_component == cid]
    return sorted(int(c) for c in np.unique(mesh.region[cells]))


def _handlebody_morse(mesh, u, domains, collar: CollarSpec, seed: int) -> Dict[str, Any]:
    """Critical points of -|u| on the nodal domain on the inner side of Σ."""
    on_collar = np.nonzero(mesh.collar_index == collar.label)[0]
    inner = on_collar[np.argmin(mesh.collar_x[on_collar])]
    cell_mask = domains.domain_cells(mesh, domains.labels[inner])
    rng = np.random.default_rng(seed)
    scale = float(np.max(np.abs(u)))
    f = -np.abs(u) + 1e-9 * scale * rng.uniform(-1.0, 1.0, size=len(u))
    report = classify_critical_vertices(mesh, f, cell_mask)
    betti = INNER_BETTI.get(collar.sigma_model)
    if betti is not None and len(betti) == mesh.dim + 1:
        report = morse_betti_check(report, betti)
    # PL counts stand in for smooth ones only at this resolution
    return {**report.to_dict(), "mesh_vertices": mesh.n_vertices}


def _analyse_mode(sc: Scenario, mesh, metric, ops, result: EigenResult, index: int, mode: CollarMode,
                  eps: float, config: str, keep_nodal: bool, complexes) -> SweepRecord:
    u = result.vectors[:, index]
    constrained = _constrained(ops)
    collar = sc.collars[mode.collar]
    record = SweepRecord(
        scenario=sc.name, config_hash=config, seed=sc.seed, eps=eps, index=index,
        eigenvalue=float(result.eigenvalues[index]), target=mode.eigenvalue, collar=mode.collar,
        mode=mode.k, residual=float(result.residuals[index]),
        display_index=index + 1 if sc.dirichlet else index,
    )
    domains = nodal_domains(mesh, u, metric=metric, constrained=constrained, realization=REALIZATION)
    record.nodal_domains = domains.count
    if mode.k == 0:
        return record

    nc = extract_zero_set(mesh, u, metric=metric, constrained=constrained)
    expectation = CensusExpectation(
        count=mode.k,
        euler_char=SIGMA_EULER.get(collar.sigma_model),
        positions=expected_positions(mode.k),
        position_tol=sc.tolerances.position_tol,
        containment=not sc.separating or len(sc.collars) > 1,
    )
    census = component_census(nc, expectation)
    checks = dict(census.checks)
    checks["in_collar"] = all(
        cid is not None and mode.collar in _component_collars(mesh, nc, cid) for cid in census.matched)
    record.census = {**census.to_dict(), "checks": checks, "passed": all(checks.values())}
    record.components = [c.to_dict() for c in nc.components]
    record.perturbed_count = perturbed_component_count(mesh, u, sc.seed, constrained=constrained)
    record.profile = profile_error(mesh, u, collar, mode.k, metric, REALIZATION).to_dict()
    if sc.morse and mode.k == 1 and mode.collar == 0:
        record.morse = _handlebody_morse(mesh, u, domains, collar, sc.seed)
    if keep_nodal:
        complexes[(index, eps)] = nc
    return record


def _sweep(sc: Scenario, mesh: SimplicialMesh, ref: EdgeLengthMetric, result: SweepResult,
           solve_logger: Optional[SolveLogger], echo: Echo, keep_nodal: bool, keep_operators: bool) -> None:
    depth = collar_depth(ref)
    delta = sc.delta if sc.delta is not None else default_delta(ref)
    result.delta = delta
    targets = targets_for(sc.collars, sc.l)
    top = len(targets) - 1
    for eps in sc.eps_list:
        start = time.perf_counter()
        try:
            metric = smoothed_metric(ref, SmoothingProfile(eps=eps, delta=delta, order=sc.order), depth,
                                     strict=False)
            ops = assemble(mesh, metric, sc.bc, sc.mass_kind, REALIZATION)
            if keep_operators:
                result.operators[eps] = ops
            solved = solve_lowest(ops, len(targets) + 1, sc.tolerances.eig_tol, sc.seed)
            # every target and the pair above the last one must be simple
            guard = simplicity_guard(solved, len(targets), sc.tolerances.gap_min)
            bounds = None
            if sc.extension:
                bounds = upper_bound_check(mesh, metric, sc.collars, top, sc.bc, sc.mass_kind, REALIZATION)
                result.upper_bounds.append(bounds)
            records = [
                _analyse_mode(sc, mesh, metric, ops, solved, index, mode, eps, result.config_hash,
                              keep_nodal, result.complexes)
                for index, mode in enumerate(targets)
            ]
        except ScenarioRunError:
            raise
        except Exception as e:
            raise ScenarioRunError(sc.name, eps, e) from e
        elapsed = time.perf_counter() - start
        for record in records:
            record.runtime = elapsed
            if bounds is not None:
                record.upper_bound = bounds.bounds[record.index]
        result.records.extend(records)
        result.guards.append({"eps": eps, **guard.to_dict()})
        echo(f"eps={eps:g}: lambda={np.round(solved.eigenvalues[:len(targets)], 6).tolist()} "
             f"guard={'pass' if guard.passed else 'FAIL'} ({elapsed:.1f}s)")
        if solve_logger is not None:
            solve_logger.log_solve(
                f"eps_{eps:g}",
                request={"eps": eps, "delta": delta, "count": len(targets) + 1, "tol": sc.tolerances.eig_tol,
                         "seed": sc.seed, "size": int(ops.reduced_stiffness.shape[0])},
                response={**solved.to_dict(), "guard": guard.to_dict()},
            )


def _evaluation_record(records: List[SweepRecord], fit: Optional[ConvergenceFit]) -> SweepRecord:
    """Record at the smallest pre-floor eps (the smallest eps when no fit applies)."""
    if fit is not None and fit.last_eps is not None:
        for record in records:
            if record.eps == fit.last_eps:
                return record
    return min(records, key=lambda r: r.eps)


def _non_increasing(values: Sequence[float], slack: float = TREND_SLACK) -> bool:
    return all(b <= a + slack * abs(a) + 1e-12 for a, b in zip(values, values[1:]))


def _pre_floor(records: List[SweepRecord], fit: Optional[ConvergenceFit]) -> List[SweepRecord]:
    """Records sorted by eps descending, cut after the last pre-floor eps."""
    ordered = sorted(records, key=lambda r: r.eps, reverse=True)
    if fit is None or fit.last_eps is None:
        return ordered
    return [r for r in ordered if r.eps >= fit.last_eps]


def _upper_bound_holds(groups: Dict[int, List[SweepRecord]]) -> bool:
    """λ_k ≤ B_k everywhere; for positive targets B_k - μ_k stays positive and does not grow as eps shrinks."""
    for group in groups.values():
        bounded = sorted((r for r in group if r.upper_bound is not None), key=lambda r: r.eps, reverse=True)
        if not all(r.eigenvalue <= r.upper_bound * (1.0 + 1e-8) + 1e-10 for r in bounded):
            return False
        if bounded and bounded[0].target > 0:
            gaps = [r.upper_bound - r.target for r in bounded]
            if min(gaps) <= 0 or not _non_increasing(gaps):
                return False
    return True


def _verdicts(sc: Scenario, result: SweepResult) -> Dict[str, bool]:
    records = result.records
    verdicts = {
        "mesh_audit": result.audit.passed,
        "simplicity_guard": all(g["passed"] for g in result.guards),
        "courant": all(r.courant for r in records if r.courant is not None),
        "stability": all(r.stable for r in records if r.stable is not None),
    }
    by_index: Dict[int, List[SweepRecord]] = {}
    for record in records:
        by_index.setdefault(record.index, []).append(record)
    targets_ok, census_ok, profile_ok = True, True, True
    for index, group in by_index.items():
        fit = result.fits.get(index)
        final = _evaluation_record(group, fit)
        if final.target > 0:
            targets_ok &= final.relative_error <= sc.tolerances.target_tol
        if final.census is not None:
            census_ok &= bool(final.census_passed)
        if final.profile is not None:
            profiles = [r.profile["rel_l2_error"] for r in _pre_floor(group, fit) if r.profile is not None]
            profile_ok &= final.profile["rel_l2_error"] <= sc.tolerances.profile_tol and _non_increasing(profiles)
    verdicts.update(eigen_targets=targets_ok, census=census_ok, profile=profile_ok,
                    convergence_order=all(fit.acceptable for fit in result.fits.values()))
    if sc.extension:
        verdicts["upper_bound"] = _upper_bound_holds(by_index)
    if sc.morse:
        morse = [r.morse for r in records if r.morse is not None]
        verdicts["morse"] = bool(morse) and all(
            m["morse_pass"] is not False and m["degenerate"] == 0 for m in morse)
    return verdicts


def _flat_sanity(sc: Scenario, echo: Echo, solve_logger: Optional[SolveLogger],
                 keep_operators: bool = False) -> SweepResult:
    """Uniform metric without collars against the closed-form flat-torus spectrum."""
    mesh = build_model_mesh(sc.model, sc.n, sc.refinement, (), sc.embedding, sc.divisions)
    ref = reference_metric(mesh)
    result = SweepResult(scenario=sc, config_hash=sc.config_hash, audit=mesh_audit(mesh), mesh=mesh, reference=ref)
    count = 2 * sc.n + 2
    start = time.perf_counter()
    try:
        ops = assemble(mesh, ref, "closed", sc.mass_kind)
        if keep_operators:
            result.operators[None] = ops
        solved = solve_lowest(ops, count, sc.tolerances.eig_tol, sc.seed)
    except Exception as e:
        raise ScenarioRunError(sc.name, None, e) from e
    exact = flat_torus_spectrum(sc.n, count, mesh.period or 1.0)
    elapsed = time.perf_counter() - start
    for index in range(count):
        u = solved.vectors[:, index]
        result.records.append(SweepRecord(
            scenario=sc.name, config_hash=result.config_hash, seed=sc.seed, eps=None, index=index,
            eigenvalue=float(solved.eigenvalues[index]), target=exact[index],
            residual=float(solved.residuals[index]), display_index=index,
            nodal_domains=nodal_domains(mesh, u, metric=ref).count, runtime=elapsed))
    echo(f"flat torus: lambda={np.round(solved.eigenvalues, 6).tolist()} ({elapsed:.1f}s)")
    if solve_logger is not None:
        solve_logger.log_solve("flat", request={"count": count, "tol": sc.tolerances.eig_tol, "seed": sc.seed},
                               response=solved.to_dict())
    result.verdicts = {
        "mesh_audit": result.audit.passed,
        "flat_spectrum": all(r.relative_error <= sc.tolerances.target_tol for r in result.records if r.target > 0),
        "ground_state": abs(result.records[0].eigenvalue) <= 1e-6 * max(1.0, result.records[-1].eigenvalue),
    }
    return result


def run_scenario(sc: Scenario, solve_logger: Optional[SolveLogger] = None, echo: Optional[Echo] = None,
                 keep_nodal: bool = False, keep_operators: bool = False) -> SweepResult:
    """Run the eps-sweep of a scenario on one fixed mesh.

    A simplicity-guard failure triggers one rerun of the whole sweep with
    every collar radius reduced by 20%; the rerun is recorded.

    Raises:
        ScenarioError: If the scenario does not validate.
        ScenarioRunError: Wrapping any module error with scenario and eps.
    """
    echo = echo or _silent
    sc.validate()
    if not sc.collars:
        return _flat_sanity(sc, echo, solve_logger, keep_operators)
    try:
        mesh = build_model_mesh(sc.model, sc.n, sc.refinement, sc.collars, sc.embedding, sc.divisions)
        audit = mesh_audit(mesh)
    except Exception as e:
        raise ScenarioRunError(sc.name, None, e) from e
    echo(f"mesh: {audit.vertex_count} vertices, {audit.cell_count} cells, euler {audit.euler}")

    current = sc
    result = None
    for attempt in range(2):
        try:
            ref = reference_metric(mesh, current.collars)
        except Exception as e:
            raise ScenarioRunError(sc.name, None, e) from e
        result = SweepResult(scenario=current, config_hash=sc.config_hash, audit=audit, mesh=mesh, reference=ref,
                             retried=attempt > 0, radius_factor=RETRY_RADIUS_FACTOR ** attempt)
        _sweep(current, mesh, ref, result, solve_logger, echo, keep_nodal, keep_operators)
        if all(g["passed"] for g in result.guards) or attempt == 1:
            break
        echo(f"simplicity guard failed; retrying with r scaled by {RETRY_RADIUS_FACTOR}")
        current = with_scaled_radius(sc, RETRY_RADIUS_FACTOR)
    result.fits = fit_convergence(result.records)
    result.verdicts = _verdicts(current, result)
    return result


def multi_collar_scenario(sc: Scenario, solve_logger: Optional[SolveLogger] = None, echo: Optional[Echo] = None,
                          keep_nodal: bool = False, keep_operators: bool = False) -> SweepResult:
    """Sweep with several disjoint collars; each collar's cosine mode is checked in its own collar.

    Equal stretch constants are allowed and show up as a simplicity-guard failure.

    Raises:
        ScenarioError: If there is no collar.
        ScenarioRunError: If the collars overlap or a solve fails.
    """
    if not sc.collars:
        raise ScenarioError("collars", "a multi-collar sweep needs at least one collar")
    return run_scenario(sc, solve_logger, echo, keep_nodal, keep_operators)


def run(sc: Scenario, solve_logger: Optional[SolveLogger] = None, echo: Optional[Echo] = None,
        keep_nodal: bool = False, keep_operators: bool = False) -> SweepResult:
    if len(sc.collars) > 1:
        return multi_collar_scenario(sc, solve_logger, echo, keep_nodal, keep_operators)
    return run_scenario(sc, solve_logger, echo, keep_nodal, keep_operators)
