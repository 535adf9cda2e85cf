import csv
import json
import os
from typing import List

from jinja2 import Environment, FileSystemLoader

from .fem import export_operators
from .lab import SweepResult
from .mesh import save_mesh
from .utils import to_builtin

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates")
CSV_FIELDS = ["k", "eps", "lambda", "target", "error", "collar", "census", "components",
              "nodal_domains", "profile_error", "upper_bound", "config_hash", "seed"]


def create_environment() -> Environment:
    """Jinja environment for report templates (plain text, no HTML escaping)."""
    env = Environment(
        loader=FileSystemLoader(TEMPLATE_DIR),
        autoescape=False,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    env.filters["g"] = lambda value, digits=6: "-" if value is None else f"{value:.{digits}g}"
    env.filters["verdict"] = lambda value: "-" if value is None else ("pass" if value else "FAIL")
    return env


def render_summary(result: SweepResult) -> str:
    template = create_environment().get_template("summary.md.j2")
    return template.render(result=result, report=result.to_dict())


def write_report(result: SweepResult, out_dir: str, emit_mesh: bool = False, emit_nodal: bool = False,
                 emit_operators: bool = False) -> List[str]:
    """Write report.json, records.csv and summary.md (plus optional mesh, nodal and operator exports).

    Operators are only written for the solves the sweep kept (``keep_operators``).

    Returns:
        Paths of the written files.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "report.json")
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(result.to_dict(), f, indent=2, sort_keys=True)
    written.append(path)

    path = os.path.join(out_dir, "records.csv")
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for record in result.records:
            writer.writerow({key: "" if value is None else value for key, value in record.csv_row().items()})
    written.append(path)

    path = os.path.join(out_dir, "summary.md")
    with open(path, 'w', encoding='utf-8') as f:
        f.write(render_summary(result))
    written.append(path)

    if emit_mesh and result.mesh is not None:
        path = os.path.join(out_dir, "mesh.json")
        lengths = result.reference.to_dict() if result.reference is not None else None
        save_mesh(result.mesh, path, lengths)
        written.append(path)

    if emit_nodal:
        for (index, eps), complex_ in sorted(result.complexes.items()):
            path = os.path.join(out_dir, f"nodal_{index}_{eps:g}.json")
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(to_builtin(complex_.to_dict()), f)
            written.append(path)

    if emit_operators:
        for eps, ops in sorted(result.operators.items(), key=lambda item: -1.0 if item[0] is None else -item[0]):
            tag = "flat" if eps is None else f"{eps:g}"
            written.extend(export_operators(ops, os.path.join(out_dir, f"operators_{tag}")))
    return written
