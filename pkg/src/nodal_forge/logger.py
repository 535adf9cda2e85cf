import os
import re
import time
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

STAMP_FORMAT = "%Y-%m-%dT%H-%M-%S-%f"
UNSAFE_NAME_CHARS = re.compile(r'[\\/:*?"<>| ]')


def _utc_stamp() -> str:
    return datetime.now(timezone.utc).strftime(STAMP_FORMAT)


def _utc_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class ArrayAwareYAMLDumper(yaml.SafeDumper):
    """
    Safe dumper that understands numpy values.

    Arrays are written as nested lists and numpy scalars as their Python
    counterparts. Strings spanning several lines (tracebacks, summaries) use
    the literal block style.
    """


def _represent_str(dumper, value):
    style = '|' if '\n' in value else None
    return dumper.represent_scalar('tag:yaml.org,2002:str', value, style=style)


def _represent_ndarray(dumper, value):
    return dumper.represent_list(value.tolist())


ArrayAwareYAMLDumper.add_representer(str, _represent_str)
ArrayAwareYAMLDumper.add_representer(np.ndarray, _represent_ndarray)
ArrayAwareYAMLDumper.add_representer(np.bool_, lambda d, v: d.represent_bool(bool(v)))
ArrayAwareYAMLDumper.add_multi_representer(np.floating, lambda d, v: d.represent_float(float(v)))
ArrayAwareYAMLDumper.add_multi_representer(np.integer, lambda d, v: d.represent_int(int(v)))


def dump_yaml(data: Any, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        yaml.dump(data, f, Dumper=ArrayAwareYAMLDumper, default_flow_style=False,
                  sort_keys=False, allow_unicode=True)


class SolveLogger:
    """Writes one YAML file per eigen-solve: ``<tag>_<stamp>_<n>.log.yaml``.

    Without a directory every call is a no-op.
    """

    def __init__(self, log_dir: Optional[str] = None):
        self.log_dir = log_dir
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        self.log_counters: Dict[str, int] = {}
        self.solve_logs: Dict[str, List[str]] = {}

    def _next_path(self, tag: str) -> Optional[str]:
        if not self.log_dir:
            return None
        counter = self.log_counters.get(tag, 0)
        self.log_counters[tag] = counter + 1
        stamp = _utc_stamp()
        # keep stamps distinct for back-to-back solves
        time.sleep(0.001)
        return os.path.join(self.log_dir, f"{tag}_{stamp}_{counter}.log.yaml")

    def log_solve(self, tag: str, request: Dict[str, Any],
                  response: Optional[Dict[str, Any]] = None) -> Optional[str]:
        """Record what was asked of the solver and, if given, what it returned.

        Returns:
            The written path, or None when the logger has no directory.
        """
        path = self._next_path(tag)
        if path is None:
            return None
        entry: Dict[str, Any] = {"timestamp": _utc_iso(), "request": request}
        if response is not None:
            entry["response"] = response
        dump_yaml(entry, path)
        self.solve_logs.setdefault(tag, []).append(path)
        return path


class RunLogger:
    """One directory per scenario run under ``log_dir``.

    Each run holds ``config.yaml``, ``metadata.yaml`` and a ``solves/``
    directory fed by a :class:`SolveLogger`.
    """

    def __init__(self, log_dir: str):
        self.base_log_dir = log_dir
        os.makedirs(log_dir, exist_ok=True)
        self.current_run_id: Optional[str] = None
        self.run_loggers: Dict[str, SolveLogger] = {}

    @staticmethod
    def _new_run_id(name: Optional[str] = None) -> str:
        run_id = f"run_{_utc_stamp()}"
        return f"{run_id}_{UNSAFE_NAME_CHARS.sub('_', name)}" if name else run_id

    def _resolve(self, run_id: Optional[str]) -> str:
        run_id = run_id or self.current_run_id
        if run_id is None:
            raise ValueError("No run_id given and no run in progress")
        return run_id

    def run_dir(self, run_id: Optional[str] = None) -> str:
        return os.path.join(self.base_log_dir, self._resolve(run_id))

    def start_run(self, metadata: Optional[Dict[str, Any]] = None, config: Optional[Dict[str, Any]] = None,
                  name: Optional[str] = None) -> str:
        """Open a run directory and make it current.

        Args:
            metadata: Scenario name, config hash, seed and the like. A timestamp
                (and ``name``) is added before it is written.
            config: The resolved scenario configuration.
            name: Suffix for the directory name.

        Returns:
            The new run id.
        """
        run_id = self._new_run_id(name)
        run_dir = os.path.join(self.base_log_dir, run_id)
        solves_dir = os.path.join(run_dir, "solves")
        os.makedirs(solves_dir, exist_ok=True)
        self.run_loggers[run_id] = SolveLogger(solves_dir)
        self.current_run_id = run_id

        dump_yaml(config or {}, os.path.join(run_dir, "config.yaml"))
        if metadata is not None:
            stamped = {"timestamp": _utc_iso(), **metadata}
            if name:
                stamped["name"] = name
            dump_yaml(stamped, os.path.join(run_dir, "metadata.yaml"))
        return run_id

    def end_run(self) -> None:
        self.current_run_id = None

    def get_solve_logger(self, run_id: Optional[str] = None) -> SolveLogger:
        """Solve logger of ``run_id`` (default: the current run).

        Raises:
            ValueError: If no run is given or in progress.
            KeyError: If the run has no ``solves`` directory on disk.
        """
        run_id = self._resolve(run_id)
        if run_id not in self.run_loggers:
            solves_dir = os.path.join(self.base_log_dir, run_id, "solves")
            if not os.path.isdir(solves_dir):
                raise KeyError(f"Unknown run '{run_id}' under {self.base_log_dir}")
            self.run_loggers[run_id] = SolveLogger(solves_dir)
        return self.run_loggers[run_id]

    def list_runs(self) -> List[str]:
        if not os.path.isdir(self.base_log_dir):
            return []
        return sorted(d for d in os.listdir(self.base_log_dir)
                      if d.startswith("run_") and os.path.isdir(os.path.join(self.base_log_dir, d)))
