import json
import os
import sys
from typing import List, Optional, Tuple

import click
import yaml

from .api import check_oracle, run_lab
from .oracle import ORACLES
from .report import render_summary
from .utils import ScenarioError, ScenarioRunError

EXIT_VERDICT_FAILED = 2
EXIT_INTERRUPTED = 130


def parse_key_value_arg(arg: str) -> tuple:
    """Parse a key=value argument into a tuple of (key, parsed_value).

    Special features:
    - Values starting with @ are treated as file references and the value becomes
      the parsed YAML content of the referenced file.
    - Other values are parsed as YAML.
    """
    if '=' not in arg:
        raise ValueError(f"Invalid key-value pair: {arg}. Format should be key=value")

    key, value_str = arg.split('=', 1)
    if not key:
        raise ValueError(f"Invalid key-value pair: {arg}. Key must not be empty")

    if value_str.startswith('@') and not (value_str.startswith("'@") or value_str.startswith('"@')):
        file_path = value_str[1:]
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                return key, yaml.safe_load(f)
        except (IOError, FileNotFoundError) as e:
            raise IOError(f"Error reading file referenced by {key}=@{file_path}: {str(e)}")

    try:
        return key, yaml.safe_load(value_str)
    except yaml.YAMLError:
        # Unparseable values stay strings
        return key, value_str


@click.group()
@click.version_option(package_name="nodal-forge")
def main():
    """Numerical experiments on nodal sets of Laplace eigenfunctions under collapsing metrics."""


@main.command(context_settings=dict(ignore_unknown_options=True))
@click.argument('scenario', type=str)
@click.option('--eps', 'eps_values', type=float, multiple=True,
              help='Override the eps sweep (repeatable, strictly decreasing)')
@click.option('--refine', type=int, help='Mesh refinement level')
@click.option('--seed', type=int, help='Seed of the eigensolver and perturbations')
@click.option('--out', '-o', type=click.Path(file_okay=False, writable=True),
              help='Directory for report.json, records.csv and summary.md (defaults to a summary on stdout)')
@click.option('--logdir', '-l', type=click.Path(file_okay=False),
              help='Directory for run logs')
@click.option('--name', '-n', type=str, help='Optional name for the run')
@click.option('--emit-mesh', is_flag=True, default=False, help='Also write the mesh and reference lengths')
@click.option('--emit-nodal', is_flag=True, default=False, help='Also write every extracted nodal complex')
@click.option('--emit-operators', is_flag=True, default=False,
              help='Also write the stiffness and mass matrices of every eps in COO form')
@click.option('--verbose', '-v', is_flag=True, default=False,
              help='Enable verbose output with per-eps progress')
@click.option('--quiet', '-q', is_flag=True, default=False,
              help='Suppress all non-error console output')
@click.argument('key_value_pairs', nargs=-1, type=click.UNPROCESSED)
def run(scenario: str, eps_values: Tuple[float, ...], refine: Optional[int], seed: Optional[int],
        out: Optional[str], logdir: Optional[str], name: Optional[str], emit_mesh: bool, emit_nodal: bool,
        emit_operators: bool, verbose: bool, quiet: bool, key_value_pairs: List[str]):
    """Run a scenario sweep.

    SCENARIO: A built-in scenario name or a YAML scenario file.

    KEY_VALUE_PAIRS: Optional key=value overrides of scenario fields, with dotted
    keys for nested fields. Values are parsed as YAML (e.g. l=2,
    tolerances.gap_min=0.1, collars.0.r=0.3); key=@file.yaml loads a value from a file.

    Exit status is 0 when every acceptance verdict passes, 2 when the run
    completes with a failed verdict and 1 on errors.

    Examples:
      nodal-forge run main_s3 --eps 0.2 --eps 0.1 --out results/
      nodal-forge run payne_ball refinement=1 --logdir logs/
      nodal-forge run my_scenario.yaml tolerances.gap_min=0.02
    """
    if verbose and quiet:
        click.echo("Error: --verbose and --quiet options cannot be used together", err=True)
        sys.exit(1)

    def verbose_echo(message):
        if verbose and not quiet:
            click.echo(f"[INFO] {message}", err=True)

    try:
        overrides = {}
        for kv_pair in key_value_pairs:
            try:
                key, value = parse_key_value_arg(kv_pair)
            except (ValueError, IOError) as e:
                click.echo(f"Error: {str(e)}", err=True)
                sys.exit(1)
            overrides[key] = value
            verbose_echo(f"Override: {key}={value}")
        if eps_values:
            overrides["eps_list"] = list(eps_values)
        if refine is not None:
            overrides["refinement"] = refine
        if seed is not None:
            overrides["seed"] = seed

        if out:
            try:
                os.makedirs(out, exist_ok=True)
            except OSError as e:
                click.echo(f"Error: Cannot create output directory {out}: {str(e)}", err=True)
                sys.exit(1)

        verbose_echo(f"Running scenario: {scenario}")
        try:
            result = run_lab(scenario, overrides, out=out, logdir=logdir, name=name,
                             emit_mesh=emit_mesh, emit_nodal=emit_nodal, emit_operators=emit_operators,
                             echo=verbose_echo)
        except ScenarioError as e:
            click.echo(f"Error: {str(e)}", err=True)
            sys.exit(1)
        except ScenarioRunError as e:
            click.echo(f"Error: {str(e)}", err=True)
            if verbose:
                import traceback
                click.echo("".join(traceback.format_exception(type(e.cause), e.cause, e.cause.__traceback__)), err=True)
            sys.exit(1)

        if out:
            verbose_echo(f"Report written to: {out}")
        elif not quiet:
            click.echo(render_summary(result))

        for check, passed in result.verdicts.items():
            verbose_echo(f"{check}: {'pass' if passed else 'FAIL'}")
        if not result.passed:
            if not quiet:
                failed = ", ".join(k for k, v in result.verdicts.items() if not v)
                click.echo(f"Failed verdicts: {failed}", err=True)
            sys.exit(EXIT_VERDICT_FAILED)
    except KeyboardInterrupt:
        click.echo("\nOperation cancelled by user", err=True)
        sys.exit(EXIT_INTERRUPTED)
    except Exception as e:
        click.echo(f"Error: An unexpected error occurred: {str(e)}", err=True)
        if verbose:
            import traceback
            click.echo(traceback.format_exc(), err=True)
        sys.exit(1)


@main.command()
@click.argument('test_name', type=click.Choice(sorted(ORACLES) + ["all"]))
@click.option('--quiet', '-q', is_flag=True, default=False, help='Suppress the result output')
def oracle(test_name: str, quiet: bool):
    """Run a dense or analytic cross-check.

    TEST_NAME: One of the oracle names, or "all".
    """
    try:
        result = check_oracle(test_name)
    except KeyboardInterrupt:
        click.echo("\nOperation cancelled by user", err=True)
        sys.exit(EXIT_INTERRUPTED)
    except Exception as e:
        click.echo(f"Error: Oracle '{test_name}' failed to run: {str(e)}", err=True)
        sys.exit(1)
    if not quiet:
        click.echo(json.dumps(result.to_dict(), indent=2))
    if not result.passed:
        sys.exit(EXIT_VERDICT_FAILED)


if __name__ == '__main__':
    main()
