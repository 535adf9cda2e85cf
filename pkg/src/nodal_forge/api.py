"""API functions for nodal-forge.

This module provides exportable functions that can be used by applications
importing this library, providing the same functionality as the CLI.
"""

import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

from .lab import SweepResult, run
from .logger import RunLogger
from .oracle import OracleResult, run_oracle
from .report import write_report
from .scenario import Scenario, load_scenario


def run_lab(
    scenario: Union[str, Path, Scenario],
    overrides: Optional[Dict[str, Any]] = None,
    out: Optional[Union[str, Path]] = None,
    logdir: Optional[Union[str, Path]] = None,
    name: Optional[str] = None,
    emit_mesh: bool = False,
    emit_nodal: bool = False,
    emit_operators: bool = False,
    echo: Optional[Callable[[str], None]] = None,
) -> SweepResult:
    """
    Run a scenario sweep.

    This function provides the same functionality as ``nodal-forge run`` but can
    be called directly from Python code.

    Args:
        scenario: A built-in scenario name, a path to a YAML scenario file, or a Scenario.
        overrides: Optional dotted-key overrides (``{"tolerances.gap_min": 0.1}``).
        out: Optional directory for report.json, records.csv and summary.md.
        logdir: Optional directory for run logs.
        name: Optional name for the run, appended to the run directory name.
        emit_mesh: Also write the mesh and reference lengths to ``out``.
        emit_nodal: Also write every extracted nodal complex to ``out``.
        emit_operators: Also write K and M of every solve to ``out`` as COO text.
        echo: Optional progress callback.

    Returns:
        The sweep result with records, fits and verdicts.

    Raises:
        ScenarioError: If the scenario is invalid.
        ScenarioRunError: If a module fails during the sweep.
    """
    if isinstance(scenario, Scenario):
        sc = scenario.with_overrides(overrides) if overrides else scenario.validate()
    else:
        sc = load_scenario(str(scenario), overrides)
    out = str(out) if isinstance(out, Path) else out
    logdir = str(logdir) if isinstance(logdir, Path) else logdir

    solve_logger = None
    run_logger = None
    if logdir:
        os.makedirs(logdir, exist_ok=True)
        run_logger = RunLogger(logdir)
        run_id = run_logger.start_run(
            metadata={"scenario": sc.name, "config_hash": sc.config_hash, "seed": sc.seed},
            config=sc.to_dict(),
            name=name,
        )
        solve_logger = run_logger.get_solve_logger(run_id)

    try:
        result = run(sc, solve_logger=solve_logger, echo=echo, keep_nodal=emit_nodal,
                     keep_operators=emit_operators and bool(out))
    finally:
        if run_logger is not None:
            run_logger.end_run()

    if out:
        write_report(result, out, emit_mesh=emit_mesh, emit_nodal=emit_nodal, emit_operators=emit_operators)
    return result


def check_oracle(name: str) -> OracleResult:
    """Run a named analytic/dense cross-check (or ``"all"``)."""
    return run_oracle(name)
