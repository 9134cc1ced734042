"""Command-line surface over the assembly engine.

Exit status contract: 0 = ok/compliant, 1 = violations, blockers, or a
blocked edit, 2 = usage or IO errors. All output is deterministic.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from . import cases as case_universe
from . import constraints as engine
from . import model as m
from . import session as sessions
from .store import Repository, StoreError, generic_sha256
from .values import parse_value

_KINDS = {k.value: k for k in m.UnitKind}


class _Ctx:
    def __init__(self, repo: str, fmt: str):
        self.repo = Repository(repo)
        self.fmt = fmt


def _fail(message: str, code: int = 2) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _report_lines(report: engine.CheckReport) -> list[str]:
    lines = [
        f"violation {v.constraint_id} [{v.kind}]: {v.message}" for v in report.violations
    ]
    lines += [f"gap {g.kind} {g.subject}: {g.message}" for g in report.gaps]
    return lines


def _print_report(ctx: _Ctx, report: engine.CheckReport) -> None:
    if ctx.fmt == "json":
        from .store import report_to_json

        click.echo(json.dumps(report_to_json(report), indent=2, sort_keys=True))
    else:
        lines = _report_lines(report)
        if lines:
            for line in lines:
                click.echo(line)
        else:
            click.echo("no pathological features")


def _summary(report: engine.CheckReport) -> str:
    return f"{len(report.violations)} violation(s), {len(report.gaps)} gap(s)"


def _load_session(ctx: _Ctx, instance_id: str) -> tuple[sessions.AssemblySession, bool]:
    instance, finalized, warnings = ctx.repo.load_instance(instance_id)
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)
    doc = ctx.repo.load_generic(instance.generic_id)
    return sessions.attach_session(doc, instance), finalized


def _apply(ctx: _Ctx, instance_id: str, delta: engine.Delta) -> None:
    session, finalized = _load_session(ctx, instance_id)
    if finalized:
        _fail(f"instance {instance_id!r} is finalized and immutable")
    outcome = session.apply_edit(delta)
    if isinstance(outcome, sessions.Blocked):
        click.echo(f"blocked: {outcome.reason}")
        sys.exit(1)
    ctx.repo.save_instance(session.instance)
    if outcome.side_effects:
        click.echo("also included: " + " ".join(sorted(outcome.side_effects)))
    click.echo(_summary(outcome.report))


@click.group()
@click.option("--repo", default="./contracts", show_default=True, help="repository path")
@click.option(
    "--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True
)
@click.pass_context
def cli(ctx: click.Context, repo: str, fmt: str) -> None:
    """Constraint-driven contract assembly."""
    ctx.obj = _Ctx(repo, fmt)


def _wrap(func):
    """Convert engine/store faults into exit status 2 with a message."""
    import functools

    @functools.wraps(func)
    def inner(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (StoreError, m.ModelError, engine.EngineError, case_universe.CaseError,
                sessions.SessionError, OSError, ValueError) as exc:
            _fail(str(exc))

    return inner


@cli.command()
@click.argument("doc_id")
@click.option("--title", required=True)
@click.pass_obj
@_wrap
def init(ctx: _Ctx, doc_id: str, title: str) -> None:
    """Create a new generic document with an empty root."""
    ctx.repo.save_generic(m.new_document(doc_id, title))
    click.echo(f"initialized generic {doc_id}")


@cli.command("add-unit")
@click.option("--doc", "doc_id", required=True)
@click.option("--parent", required=True)
@click.option("--kind", type=click.Choice(sorted(_KINDS)), required=True)
@click.option("--heading", required=True)
@click.option("--position", type=int, default=None)
@click.option("--id", "unit_id", default=None)
@click.option("--role-tag", "role_tags", multiple=True)
@click.pass_obj
@_wrap
def add_unit(ctx, doc_id, parent, kind, heading, position, unit_id, role_tags):
    doc = ctx.repo.load_generic(doc_id)
    doc, new_id = m.add_unit(
        doc, parent, _KINDS[kind], heading, position, unit_id, frozenset(role_tags)
    )
    ctx.repo.save_generic(doc)
    click.echo(new_id)


@cli.command("add-version")
@click.option("--doc", "doc_id", required=True)
@click.option("--unit", required=True)
@click.option("--template", default=None, help="inline template text")
@click.option("--template-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--rationale", default="")
@click.option("--provenance", default="")
@click.option("--derived-from", default=None)
@click.option("--id", "version_id", default=None)
@click.option("--created-at", default="")
@click.pass_obj
@_wrap
def add_version(ctx, doc_id, unit, template, template_file, rationale, provenance,
                derived_from, version_id, created_at):
    if (template is None) == (template_file is None):
        _fail("provide exactly one of --template / --template-file")
    if template_file is not None:
        template = Path(template_file).read_text(encoding="utf-8")
    doc = ctx.repo.load_generic(doc_id)
    doc, new_id = m.add_version(
        doc, unit, template, rationale, provenance, derived_from, version_id, created_at
    )
    ctx.repo.save_generic(doc)
    click.echo(new_id)


@cli.command("declare-param")
@click.option("--doc", "doc_id", required=True)
@click.option("--name", required=True)
@click.option("--type", "ptype", type=click.Choice([p.value for p in m.ParamType]), required=True)
@click.option("--enum-values", default="", help="comma-separated values for enum parameters")
@click.option("--description", default="")
@click.pass_obj
@_wrap
def declare_param(ctx, doc_id, name, ptype, enum_values, description):
    doc = ctx.repo.load_generic(doc_id)
    values = tuple(v for v in enum_values.split(",") if v) if enum_values else ()
    decl = m.ParameterDecl(name, m.ParamType(ptype), values, description)
    ctx.repo.save_generic(m.declare_parameter(doc, decl))
    click.echo(name)


def _parse_atom(text: str) -> engine.Atom:
    if text.startswith("unit:"):
        return engine.UnitIncluded(text[5:])
    if text.startswith("version:"):
        return engine.VersionSelected(text[8:])
    raise engine.EngineError(f"bad atom {text!r} (want unit:<id> or version:<id>)")


@cli.command("add-constraint")
@click.option("--doc", "doc_id", required=True)
@click.option("--id", "cid", required=True)
@click.option("--kind", type=click.Choice(["requires", "excludes", "exactly-one", "param-rule"]),
              required=True)
@click.option("--antecedent", default=None, help="requires: unit:<id> or version:<id>")
@click.option("--consequent", default=None, help="requires: unit id")
@click.option("--a", "atom_a", default=None, help="excludes: first atom")
@click.option("--b", "atom_b", default=None, help="excludes: second atom")
@click.option("--group", default=None, help="exactly-one: comma-separated unit ids")
@click.option("--expr", default=None, help="param-rule surface expression")
@click.option("--message", default="")
@click.pass_obj
@_wrap
def add_constraint(ctx, doc_id, cid, kind, antecedent, consequent, atom_a, atom_b,
                   group, expr, message):
    doc = ctx.repo.load_generic(doc_id)
    if kind == "requires":
        if not antecedent or not consequent:
            _fail("requires needs --antecedent and --consequent")
        constraint = engine.Requires(
            id=cid, antecedent=_parse_atom(antecedent), consequent_unit=consequent,
            message=message,
        )
    elif kind == "excludes":
        if not atom_a or not atom_b:
            _fail("excludes needs --a and --b")
        constraint = engine.Excludes(
            id=cid, a=_parse_atom(atom_a), b=_parse_atom(atom_b), message=message
        )
    elif kind == "exactly-one":
        if not group:
            _fail("exactly-one needs --group")
        constraint = engine.ExactlyOne(
            id=cid, group=frozenset(u for u in group.split(",") if u), message=message
        )
    else:
        if not expr:
            _fail("param-rule needs --expr")
        constraint = engine.parse_param_rule(cid, expr, doc.parameters, message=message)
    from dataclasses import replace

    ctx.repo.save_generic(replace(doc, constraints=doc.constraints + (constraint,)))
    click.echo(cid)


@cli.command("new-instance")
@click.argument("instance_id")
@click.option("--doc", "doc_id", required=True)
@click.option("--mode", type=click.Choice(["notify", "enforce"]), default="notify",
              show_default=True)
@click.pass_obj
@_wrap
def new_instance(ctx, instance_id, doc_id, mode):
    doc = ctx.repo.load_generic(doc_id)
    session = sessions.new_session(doc, m.Mode(mode), instance_id)
    ctx.repo.save_instance(session.instance)
    click.echo(_summary(session.report))


@cli.command()
@click.argument("unit_id")
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def include(ctx, unit_id, instance_id):
    _apply(ctx, instance_id, engine.Include(unit_id))


@cli.command()
@click.argument("unit_id")
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def exclude(ctx, unit_id, instance_id):
    _apply(ctx, instance_id, engine.Exclude(unit_id))


@cli.command()
@click.argument("unit_id")
@click.argument("version_id")
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def select(ctx, unit_id, version_id, instance_id):
    _apply(ctx, instance_id, engine.Select(unit_id, version_id))


@cli.command()
@click.argument("name")
@click.argument("value")
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def bind(ctx, name, value, instance_id):
    instance, _, _ = ctx.repo.load_instance(instance_id)
    doc = ctx.repo.load_generic(instance.generic_id)
    decl = doc.parameter(name)
    typed = parse_value(value, decl.ptype, decl.enum_values)
    _apply(ctx, instance_id, engine.Bind(name, typed))


@cli.command()
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def check(ctx, instance_id):
    """Full constraint check; exit 1 when any violation or gap is found."""
    session, _ = _load_session(ctx, instance_id)
    _print_report(ctx, session.report)
    sys.exit(0 if session.report.clean else 1)


@cli.command("enforce-include")
@click.argument("unit_id")
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def enforce_include(ctx, unit_id, instance_id):
    """Include a unit with requirement closure, atomically."""
    session, finalized = _load_session(ctx, instance_id)
    if finalized:
        _fail(f"instance {instance_id!r} is finalized and immutable")
    outcome = session.checker.enforce_include(session.instance, unit_id)
    if isinstance(outcome, engine.Contradiction):
        click.echo(f"contradiction via constraint {outcome.constraint_id}:")
        for step in outcome.chain:
            via = step.constraint_id or "(requested)"
            click.echo(f"  {step.atom} via {via}")
        sys.exit(1)
    ctx.repo.save_instance(outcome.instance)
    report = session.checker.check_full(outcome.instance)
    if outcome.added:
        click.echo("included: " + " ".join(sorted(outcome.added)))
    click.echo(_summary(report))


@cli.command()
@click.option("--instance", "instance_id", required=True)
@click.pass_obj
@_wrap
def finalize(ctx, instance_id):
    """Freeze a complete, violation-free instance to its snapshot hash."""
    session, already = _load_session(ctx, instance_id)
    if already:
        _fail(f"instance {instance_id!r} is already finalized")
    outcome = session.finalize()
    if isinstance(outcome, list):
        for blocker in outcome:
            click.echo(f"blocker {blocker.kind} {blocker.subject}: {blocker.message}")
        sys.exit(1)
    ctx.repo.save_instance(outcome)
    click.echo(f"finalized (generic snapshot {outcome.generic_sha256[:12]})")


@cli.command()
@click.option("--instance", "instance_id", required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_wrap
def render(ctx, instance_id, out):
    """Collate the instance into contract text (draft watermark unless
    finalized)."""
    session, finalized = _load_session(ctx, instance_id)
    try:
        rendered = sessions.render_document(session.doc, session.instance, draft=not finalized)
    except sessions.RenderError as exc:
        click.echo(f"render error: {exc}", err=True)
        sys.exit(1)
    if out:
        Path(out).write_text(rendered.text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(rendered.text, nl=False)


@cli.command()
@click.argument("instance_a")
@click.argument("instance_b")
@click.pass_obj
@_wrap
def diff(ctx, instance_a, instance_b):
    a, _, _ = ctx.repo.load_instance(instance_a)
    b, _, _ = ctx.repo.load_instance(instance_b)
    for entry in sessions.diff(a, b):
        click.echo(
            f"{entry.kind} {entry.subject}: {entry.before or '-'} -> {entry.after or '-'}"
        )


@cli.command()
@click.option("--instance", "instance_id", required=True)
@click.option("--unit", required=True)
@click.option("--template", default=None)
@click.option("--template-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--rationale", required=True)
@click.option("--provenance", default="")
@click.option("--created-at", default="")
@click.pass_obj
@_wrap
def promote(ctx, instance_id, unit, template, template_file, rationale, provenance, created_at):
    """Promote edited text into a new generic-document version and select it."""
    if (template is None) == (template_file is None):
        _fail("provide exactly one of --template / --template-file")
    if template_file is not None:
        template = Path(template_file).read_text(encoding="utf-8")
    session, finalized = _load_session(ctx, instance_id)
    if finalized:
        _fail(f"instance {instance_id!r} is finalized and immutable")
    version_id = session.promote_version(unit, template, rationale, provenance, created_at)
    ctx.repo.save_generic(session.doc)
    ctx.repo.save_instance(session.instance)
    click.echo(version_id)
    click.echo(_summary(session.report))


@cli.command()
@click.option("--doc", "doc_id", required=True)
@click.pass_obj
@_wrap
def satisfiable(ctx, doc_id):
    """Search for a complete violation-free instance of the generic."""
    doc = ctx.repo.load_generic(doc_id)
    try:
        witness = engine.Checker(doc).satisfiable()
    except engine.TooLargeError as exc:
        _fail(str(exc))
    if witness is None:
        click.echo("unsatisfiable")
        sys.exit(1)
    click.echo("satisfiable")
    click.echo("included: " + " ".join(sorted(witness.included)))
    for unit_id in sorted(witness.selections):
        click.echo(f"select {unit_id} {witness.selections[unit_id]}")


@cli.command("check-cases")
@click.argument("rulefile", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
@_wrap
def check_cases(ctx, rulefile):
    """Universe-of-cases completeness and consistency check of a rule set."""
    factors, rules = case_universe.parse_rule_file(
        Path(rulefile).read_text(encoding="utf-8")
    )
    completeness = case_universe.check_completeness(factors, rules)
    consistency = case_universe.check_consistency(factors, rules)
    names = [f.name for f in factors]

    def show(case):
        return ", ".join(f"{n}={v}" for n, v in zip(names, case))

    if ctx.fmt == "json":
        click.echo(json.dumps({
            "universe": completeness.universe,
            "uncovered": {
                "total": completeness.total_uncovered,
                "examples": [dict(zip(names, c)) for c in completeness.examples],
            },
            "conflicts": {
                "total": consistency.total_conflicts,
                "examples": [
                    {"case": dict(zip(names, c)), "rules": list(rids)}
                    for c, rids in consistency.examples
                ],
            },
        }, indent=2, sort_keys=True))
    else:
        click.echo(f"universe: {completeness.universe} case(s)")
        for case in completeness.examples:
            click.echo(f"uncovered: {show(case)}")
        click.echo(f"uncovered total: {completeness.total_uncovered}")
        for case, rule_ids in consistency.examples:
            click.echo(f"conflict: {show(case)} between {', '.join(rule_ids)}")
        click.echo(f"conflict total: {consistency.total_conflicts}")
    sys.exit(0 if completeness.complete and consistency.consistent else 1)


def main() -> None:
    cli(prog_name="contractcad")


if __name__ == "__main__":
    main()
