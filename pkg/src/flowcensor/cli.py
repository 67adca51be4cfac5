"""Command line interface.

Exit codes: 0 success, 1 typing violations or failed run, 2 scenario load
errors, 3 property violations found by verify.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .lang import pretty, run_concrete
from .levels import TypeViolation
from .mediator import Session
from .observer import DEFAULT_PROPERTIES, check_properties
from .scenario import (Scenario, ScenarioError, load_scenario, load_view,
                       parse_state, save_view)
from .symexec import format_result, sym_exec
from .exectree import to_tree

BUDGET_ENV = "FLOWCENSOR_BUDGET"


def _load(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except ScenarioError as e:
        click.echo(f"load error: {e}", err=True)
        sys.exit(2)
    except TypeViolation as e:
        click.echo("type violations:", err=True)
        for v in e.violations:
            click.echo(f"  {v}", err=True)
        sys.exit(1)


def _parse_db(scenario: Scenario, text: str):
    try:
        return parse_state(scenario.schema, scenario.space, text, "--db")
    except ScenarioError as e:
        click.echo(f"load error: {e}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Mediated, policy-compliant execution of query programs."""


@main.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--emit-levels", is_flag=True, help="One line per variable and statement.")
def typecheck(scenario_path, emit_levels):
    """Type the scenario's programs and report realms and fragments."""
    scenario = _load(scenario_path)
    for name in sorted(scenario.programs):
        typed = scenario.programs[name]
        click.echo(f"program {name}: accepted")
        if emit_levels:
            for var in sorted(typed.program.variables):
                click.echo(f"  var {var}: {typed.level(var)}")
            for stmt in typed.program.statements:
                from .lang import stmt_text
                click.echo(f"  line {stmt.line} [{typed.stmt_levels[stmt.sid]}] {stmt_text(stmt)}")
        for fragment in typed.fragments:
            lines = ", ".join(str(s.line) for s in fragment.stmts)
            click.echo(f"  fragment {fragment.index}: lines {lines} "
                       f"-> {{{', '.join(fragment.assigned)}}}")


@main.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--program", default=None, help="Program name for multi-program scenarios.")
@click.option("--db", "db_text", required=True, help='Database row, e.g. "(id,a1,b2,c1)".')
@click.option("--trace", is_flag=True, help="Print one line per mediator step.")
@click.option("--trace-views", is_flag=True, help="Dump updated temporary views.")
@click.option("--trace-censor", is_flag=True, help="Dump censor decisions.")
@click.option("--disable-censor", is_flag=True, help="Forward declassified values raw.")
@click.option("--fresh-view", is_flag=True, help="Ignore a stored previous view.")
@click.option("--save-view", "save", is_flag=True, help="Persist the final view for the partner.")
def run(scenario_path, program, db_text, trace, trace_views, trace_censor,
        disable_censor, fresh_view, save):
    """Run one mediated request and print the reaction."""
    scenario = _load(scenario_path)
    db = _parse_db(scenario, db_text)
    view = None
    if not fresh_view and scenario.path is not None:
        try:
            view = load_view(scenario)
        except ScenarioError as e:
            click.echo(f"load error: {e}", err=True)
            sys.exit(2)
    session = Session(scenario, program, censor_enabled=not disable_censor)
    try:
        result = session.run(db, view)
    except Exception as e:
        click.echo(f"run failed: {e}", err=True)
        sys.exit(1)
    if trace or trace_views or trace_censor:
        click.echo(session.trace_text(result, views=trace_views, censor=trace_censor), nl=False)
    else:
        click.echo(str(result.reaction))
    if save:
        store = save_view(scenario, result.final.view)
        click.echo(f"saved view ({result.final.view.bit_count()} states) to {store}", err=True)


@main.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--program", default=None, help="Verify only this program.")
@click.option("--properties", default=None,
              help=f"Comma list among p1,p2,p3,p4,t1,t2,t3,corr (default: {','.join(DEFAULT_PROPERTIES)}).")
@click.option("--budget", type=int, default=None,
              help=f"State-space budget for exhaustive simulation (or ${BUDGET_ENV}).")
@click.option("--disable-censor", is_flag=True, help="Check the unprotected system instead.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def verify(scenario_path, program, properties, budget, disable_censor, fmt):
    """Exhaustively simulate every run and check the monitor's guarantees."""
    scenario = _load(scenario_path)
    budget = budget or int(os.environ.get(BUDGET_ENV, "1000"))
    selected = tuple(p.strip() for p in properties.split(",")) if properties else None
    names = [program] if program else sorted(scenario.programs)
    reports = []
    for name in names:
        try:
            reports.append(check_properties(scenario, name, censor_enabled=not disable_censor,
                                            properties=selected, max_states=budget))
        except ValueError as e:
            click.echo(f"verify error: {e}", err=True)
            sys.exit(2)
    if fmt == "json":
        click.echo(json.dumps([r.as_dict() for r in reports], indent=2))
    else:
        for r in reports:
            click.echo(r.text(), nl=False)
    if not all(r.passed for r in reports):
        sys.exit(3)


@main.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--program", default=None)
@click.option("--db", "db_text", required=True)
def oracle(scenario_path, program, db_text):
    """Uncensored reference run (declassification copies): the differential
    baseline for the mediated pipeline."""
    scenario = _load(scenario_path)
    db = _parse_db(scenario, db_text)
    typed = scenario.programs[scenario.program_name(program)]
    result = run_concrete(typed.program, scenario.args, scenario.schema, scenario.ops, db)
    click.echo(str(result.reaction))
    for var in sorted(result.mem):
        click.echo(f"  {var} = {result.mem[var]}", err=True)


@main.command(name="dump-symexec")
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--program", default=None)
def dump_symexec(scenario_path, program):
    """Symbolic expressions and symbol definitions per static fragment."""
    scenario = _load(scenario_path)
    names = [program] if program else sorted(scenario.programs)
    for name in names:
        typed = scenario.programs[scenario.program_name(name)]
        click.echo(f"program {name}")
        for fragment in typed.fragments:
            click.echo(f"fragment {fragment.index} "
                       f"(lines {', '.join(str(s.line) for s in fragment.stmts)})")
            dump = format_result(sym_exec(to_tree(fragment), typed))
            for line in dump.splitlines():
                click.echo(f"  {line}")


@main.command(name="show-program")
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--program", default=None)
def show_program(scenario_path, program):
    """Canonical pretty-printed form of a scenario program."""
    scenario = _load(scenario_path)
    typed = scenario.programs[scenario.program_name(program)]
    click.echo(pretty(typed.program), nl=False)


if __name__ == "__main__":
    main()
