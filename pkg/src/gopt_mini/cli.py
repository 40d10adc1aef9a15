"""Command-line driver.

Exit codes: 1 usage or unreadable input, 2 malformed query or input file,
3 unsatisfiable query (type inference), 4 optimization or execution failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import rbo
from .errors import (
    EvaluationError,
    ExecutionError,
    GoptError,
    GraphFormatError,
    IntegrityError,
    OptimizerError,
    PlanError,
    PropertyTypeError,
    QuerySyntaxError,
    RuleError,
    SchemaError,
    StatisticsError,
)
from .expr import EdgeRef, PathValue, VertexRef
from .gir import MatchPattern, to_pattern_graph
from .glogue import MAX_K, build_glogue
from .graph import extract_schema, load_graph, load_schema
from .parser import parse
from .pipeline import RunOptions, load_stats, optimize, run_gir
from .typeinfer import Invalid, infer_types

EXIT_USAGE, EXIT_PARSE, EXIT_INVALID, EXIT_EXEC = 1, 2, 3, 4


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump(data) -> str:
    return json.dumps(data, sort_keys=True, indent=1)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def value_json(value):
    if isinstance(value, VertexRef):
        return {"vertex": value.id}
    if isinstance(value, EdgeRef):
        return {"edge": value.id}
    if isinstance(value, PathValue):
        return {"path": {"vertices": list(value.vertices), "edges": list(value.edges)}}
    if isinstance(value, (list, tuple)):
        return [value_json(v) for v in value]
    return value


def records_jsonl(records, columns) -> str:
    lines = [json.dumps({c: value_json(r.get(c)) for c in columns}, separators=(",", ":")) for r in records]
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# input loading


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliFailure(f"cannot read {what} {path}: {exc.strerror}", EXIT_USAGE) from exc


def _load_inputs(graph_path, schema_path, extract):
    if schema_path is None and not extract:
        raise CliFailure("either --schema or --extract-schema is required", EXIT_USAGE)
    schema = None
    try:
        if schema_path is not None:
            _read(schema_path, "schema")
            schema = load_schema(schema_path)
        graph = None
        if graph_path is not None:
            _read(graph_path, "graph")
            graph = load_graph(graph_path, schema)
            if schema is None:
                schema = extract_schema(graph)
    except (GraphFormatError, IntegrityError, PropertyTypeError, SchemaError) as exc:
        raise CliFailure(str(exc), EXIT_PARSE) from exc
    if schema is None:
        raise CliFailure("--extract-schema needs --graph", EXIT_USAGE)
    return graph, schema


def _query_text(query: str) -> str:
    """``--query`` names a file; text that is not an existing path is the query itself."""
    p = Path(query)
    if p.is_file():
        return _read(query, "query")
    return query


def _parse(query: str, semantics: str):
    try:
        return parse(_query_text(query), semantics)
    except (QuerySyntaxError, PlanError) as exc:
        raise CliFailure(f"query error: {exc}", EXIT_PARSE) from exc


def _options(backend, semantics, rules, no_prune, distributed, stats_path) -> RunOptions:
    try:
        enabled = rbo.parse_rule_list(rules, rbo.RULE_NAMES)
    except RuleError as exc:
        raise CliFailure(str(exc), EXIT_USAGE) from exc
    stats = None
    if stats_path is not None:
        try:
            stats = load_stats(stats_path)
        except StatisticsError as exc:
            raise CliFailure(str(exc), EXIT_PARSE) from exc
    return RunOptions(backend, semantics, enabled, not no_prune, True if distributed else None, stats)


# ---------------------------------------------------------------------------
# commands

graph_opt = click.option("--graph", "graph_path", type=str, help="Graph JSON file.")
schema_opt = click.option("--schema", "schema_path", type=str, help="Schema JSON file.")
extract_opt = click.option("--extract-schema", is_flag=True, help="Derive the schema from the graph.")
query_opt = click.option("--query", required=True, help="Query file, or the query text itself.")
semantics_opt = click.option(
    "--semantics", type=click.Choice(["homomorphism", "edge_distinct"]), default="homomorphism", show_default=True
)


def plan_options(f):
    for opt in reversed(
        [
            click.option("--stats", "stats_path", type=str, help="Statistics file from build-stats."),
            click.option("--backend", type=click.Choice(["into", "intersect"]), default="into", show_default=True),
            click.option("--rules", default=None, help="Comma list of rules to enable, or -Name,... to disable."),
            click.option("--no-prune", is_flag=True, help="Exhaustive plan search."),
            click.option("--distributed", is_flag=True, help="Charge communication cost for every step."),
        ]
    ):
        f = opt(f)
    return f


@click.group()
def main() -> None:
    """Graph query optimization toolkit."""


@main.command("build-stats")
@graph_opt
@schema_opt
@click.option("--k", type=int, default=3, show_default=True, help=f"Largest motif size (1..{MAX_K}).")
@click.option("--out", required=True, help="Where to write the statistics file.")
def build_stats(graph_path, schema_path, k, out):
    """Count all small motifs of the graph."""
    if graph_path is None:
        raise CliFailure("--graph is required", EXIT_USAGE)
    if not 1 <= k <= MAX_K:
        raise CliFailure(f"--k must be between 1 and {MAX_K}", EXIT_USAGE)
    graph, _ = _load_inputs(graph_path, schema_path, True)
    glogue = build_glogue(graph, k)
    glogue.save(out)
    click.echo(f"patterns: {len(glogue)} k: {k}")


@main.command("infer-types")
@graph_opt
@schema_opt
@extract_opt
@query_opt
@semantics_opt
@click.option("--out", default=None)
def infer_types_cmd(graph_path, schema_path, extract_schema, query, semantics, out):
    """Narrow the type constraints of every pattern in the query."""
    _, schema = _load_inputs(graph_path, schema_path, extract_schema)
    plan = _parse(query, semantics)
    report = []
    invalid = False
    for nid, node in plan:
        if not isinstance(node.op, MatchPattern):
            continue
        res = infer_types(to_pattern_graph(node.op), schema)
        if isinstance(res, Invalid):
            invalid = True
            report.append({"node": nid, "valid": False, "alias": res.alias, "reason": res.reason})
        else:
            report.append({"node": nid, "valid": True, "iterations": res.iterations, "pattern": res.pattern.to_json()})
    _emit(_dump({"patterns": report}) + "\n", out)
    if invalid:
        raise CliFailure("unsatisfiable: a pattern admits no types under this schema", EXIT_INVALID)


@main.command("explain")
@graph_opt
@schema_opt
@extract_opt
@query_opt
@semantics_opt
@plan_options
@click.option("--out", default=None)
def explain(graph_path, schema_path, extract_schema, query, semantics, stats_path, backend, rules, no_prune, distributed, out):
    """Print the optimized plan with estimates and the rule trace."""
    _, schema = _load_inputs(graph_path, schema_path, extract_schema)
    plan = _parse(query, semantics)
    options = _options(backend, semantics, rules, no_prune, distributed, stats_path)
    if options.stats is None:
        click.echo("warning: no --stats given; pattern order is not cost-based", err=True)
    try:
        opt = optimize(plan, schema, options)
    except (OptimizerError, RuleError, StatisticsError) as exc:
        raise CliFailure(f"optimization failed: {exc}", EXIT_EXEC) from exc
    _emit(_dump(opt.explain()) + "\n", out)
    if opt.unsatisfiable:
        raise CliFailure("; ".join(opt.diagnostics), EXIT_INVALID)


@main.command("run")
@graph_opt
@schema_opt
@extract_opt
@query_opt
@semantics_opt
@plan_options
@click.option("--out", default=None, help="Result file (JSON lines); stdout when omitted.")
@click.option("--stats-out", default=None, help="Where to write execution statistics.")
def run(graph_path, schema_path, extract_schema, query, semantics, stats_path, backend, rules, no_prune, distributed, out, stats_out):
    """Optimize and execute the query."""
    if graph_path is None:
        raise CliFailure("--graph is required", EXIT_USAGE)
    graph, schema = _load_inputs(graph_path, schema_path, extract_schema)
    plan = _parse(query, semantics)
    options = _options(backend, semantics, rules, no_prune, distributed, stats_path)
    try:
        records, stats, opt = run_gir(plan, graph, schema, options)
    except (EvaluationError, ExecutionError, OptimizerError, RuleError, StatisticsError) as exc:
        raise CliFailure(f"execution failed: {exc}", EXIT_EXEC) from exc
    columns = opt.physical.columns if opt.physical is not None else []
    _emit(records_jsonl(records, columns), out)
    if stats_out:
        Path(stats_out).write_text(_dump(stats.to_json()) + "\n")
    if opt.unsatisfiable:
        raise CliFailure("; ".join(opt.diagnostics), EXIT_INVALID)


def run_cli(args=None) -> int:
    """Invoke the command group and return the process exit code."""
    try:
        main.main(args=args, prog_name="gopt-mini", standalone_mode=False)
    except CliFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except GoptError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_EXEC
    return 0


def entry() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    entry()
