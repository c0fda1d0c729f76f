"""Command-line driver: run workflows, query graphs, generate and benchmark workloads.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 evaluation error.
"""

from __future__ import annotations

import argparse
import cmd
import json
import os
import sys

from . import provgraph as pg
from . import provquery as pq
from . import workflowgen as gen
from .evalengine import EvaluationError
from .relmodel import SchemaError
from .workflow import (
    ExecutionError,
    Runner,
    WorkflowError,
    format_workflow_file,
    parse_workflow_file,
    read_input_sequence,
    read_instance_dir,
    write_instance_dir,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EVAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class _Ordered(argparse.Action):
    """Collect query flags in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        ops = getattr(namespace, "ops", None) or []
        ops.append((self.dest, values))
        namespace.ops = ops


def _ids(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated node ids, got {text!r}") from None


# -- run ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    with open(args.workflow, encoding="utf-8") as fh:
        wfile = parse_workflow_file(fh.read())
    wf, modules = wfile.workflow, wfile.modules
    if args.state_dir is None:
        state_rows = {}
    else:
        if not os.path.isdir(args.state_dir):
            raise WorkflowError(f"{args.state_dir}: state directory not found")
        state_rows = read_instance_dir(args.state_dir, wf, modules, kind="state")
    inputs = read_input_sequence(args.input_dir, wf, modules)
    if args.num_exec is not None:
        inputs = inputs[: args.num_exec]
    order = args.order.split(",") if args.order else None
    runner = Runner(wf, modules, wfile.registry(), provenance=not args.no_prov, order=order,
                    simplified_agg=args.simplified_agg)
    state = runner.initial_state(state_rows)
    stop = gen._has_output if args.stop_on_output else None
    log = runner.execute_sequence(inputs, state, stop=stop)
    for record in log.executions:
        write_instance_dir(os.path.join(args.out_dir, str(record.index)),
                           {n: {r: rel.rows for r, rel in rels.items()} for n, rels in record.outputs.items()})
    write_instance_dir(os.path.join(args.out_dir, "state"),
                       {m: {r: rel.rows for r, rel in rels.items()} for m, rels in log.final_state.items()})
    if log.graph is not None and args.graph:
        with open(args.graph, "wb") as fh:
            fh.write(pg.serialize(log.graph))
    print(f"{len(log.executions)} execution(s); outputs in {args.out_dir}"
          + (f"; graph {args.graph} ({len(log.graph)} nodes)" if log.graph is not None and args.graph else ""))
    return EXIT_OK


# -- query -------------------------------------------------------------------------


class QuerySession:
    """A loaded graph plus the current (possibly zoomed or reduced) result."""

    def __init__(self, graph: pg.ProvGraph):
        self.base = graph
        self.current = graph  # ProvGraph or ZoomView

    @property
    def graph(self) -> pg.ProvGraph:
        return pq.materialize(self.current)

    def apply(self, op: str, value, out=None):
        out = out or sys.stdout
        if op == "zoom_out":
            self.current = pq.zoom_out(self.current, value)
        elif op == "zoom_in":
            self.current = pq.zoom_in(self.current, value)
        elif op == "delete":
            self.current = pq.delete_propagate(self.graph, _ids(value)).graph
        elif op == "subgraph":
            self.current = pq.subgraph(self.graph, _ids(value)[0])
        elif op == "depends":
            node, seeds = value
            result = pq.depends_on(self.graph, _ids(node)[0], _ids(seeds))
            print("true" if result else "false", file=out)
            return None
        elif op == "stats":
            print(json.dumps(pg.stats(self.graph), sort_keys=True), file=out)
            return None
        else:
            raise UsageError(f"unknown query {op}")
        return self.current


def cmd_query(args) -> int:
    with open(args.graph, "rb") as fh:
        graph = pg.deserialize(fh.read())
    session = QuerySession(graph)
    ops = getattr(args, "ops", None) or []
    if not ops:
        raise UsageError("no query given")
    graph_valued = False
    for op, value in ops:
        if session.apply(op, value) is not None:
            graph_valued = True
    if graph_valued:
        data = pg.serialize(session.graph)
        if args.output:
            with open(args.output, "wb") as fh:
                fh.write(data)
        else:
            sys.stdout.write(data.decode("utf-8"))
    return EXIT_OK


class Shell(cmd.Cmd):
    intro = "Provenance query shell. Type help or ? for commands."
    prompt = "lipstick> "

    def __init__(self, graph: pg.ProvGraph, stdin=None, stdout=None):
        super().__init__(stdin=stdin, stdout=stdout)
        if stdin is not None:
            self.use_rawinput = False
        self.session = QuerySession(graph)

    def _run(self, op, value):
        try:
            self.session.apply(op, value, out=self.stdout)
        except (pg.GraphError, UsageError, ValueError) as exc:
            print(f"error: {exc}", file=self.stdout)

    def do_zoomout(self, arg):
        """zoomout MODULE: collapse every invocation of MODULE (glob allowed)."""
        self._run("zoom_out", arg.strip())

    def do_zoomin(self, arg):
        """zoomin MODULE: restore a collapsed module."""
        self._run("zoom_in", arg.strip())

    def do_delete(self, arg):
        """delete ID[,ID...]: propagate deletion of base facts."""
        self._run("delete", arg.strip())

    def do_subgraph(self, arg):
        """subgraph ID: ancestors, descendants and siblings of descendants."""
        self._run("subgraph", arg.strip())

    def do_depends(self, arg):
        """depends NODE SEED[,SEED...]: does NODE depend on the seeds?"""
        parts = arg.split()
        if len(parts) != 2:
            print("usage: depends NODE SEED[,SEED...]", file=self.stdout)
            return
        self._run("depends", tuple(parts))

    def do_stats(self, arg):
        """stats: node, edge and label counts of the current graph."""
        self._run("stats", None)

    def do_reset(self, arg):
        """reset: go back to the loaded graph."""
        self.session.current = self.session.base

    def do_save(self, arg):
        """save PATH: write the current graph."""
        with open(arg.strip(), "wb") as fh:
            fh.write(pg.serialize(self.session.graph))

    def do_quit(self, arg):
        """quit: leave the shell."""
        return True

    do_EOF = do_quit


def cmd_shell(args) -> int:
    with open(args.graph, "rb") as fh:
        graph = pg.deserialize(fh.read())
    Shell(graph).cmdloop()
    return EXIT_OK


# -- gen / bench ---------------------------------------------------------------------


def _generated(args) -> gen.GeneratedRun:
    if args.family == "dealerships":
        return gen.gen_dealerships(gen.DealershipParams(
            numCars=args.num_cars, numExec=args.num_exec, seed=args.seed, acceptLast=args.accept_last))
    return gen.gen_arctic(gen.ArcticParams(
        topology=args.topology, numStations=args.stations, fanout=args.fanout, selectivity=args.selectivity,
        numExec=args.num_exec, seed=args.seed))


def cmd_gen(args) -> int:
    try:
        run = _generated(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "workflow.wf"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_workflow_file(run.workflow_file()))
    write_instance_dir(os.path.join(args.out, "state"), run.state)
    for i, inp in enumerate(run.inputs):
        write_instance_dir(os.path.join(args.out, "inputs", str(i)), inp)
    print(f"wrote {run.family} workflow, state and {len(run.inputs)} input(s) to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        run = _generated(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = gen.run_benchmark(run, args.repetitions)
    text = report.to_csv(mean=args.mean)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _family_args(p):
    p.add_argument("family", choices=("dealerships", "arctic"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-exec", type=int, default=10)
    p.add_argument("--num-cars", type=int, default=2000)
    p.add_argument("--accept-last", action="store_true", help="dealerships: buyer accepts at the last execution")
    p.add_argument("--topology", choices=gen.TOPOLOGIES, default="parallel")
    p.add_argument("--stations", type=int, default=4)
    p.add_argument("--fanout", type=int, default=2)
    p.add_argument("--selectivity", choices=gen.SELECTIVITIES, default="month")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lipstick", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="execute a workflow definition file")
    p.add_argument("workflow")
    p.add_argument("--input-dir", required=True)
    p.add_argument("--state-dir")
    p.add_argument("--num-exec", type=int)
    p.add_argument("--no-prov", action="store_true", help="run without provenance tracking")
    p.add_argument("--graph", help="write the provenance graph here")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--order", help="comma-separated topological order of workflow nodes")
    p.add_argument("--simplified-agg", action="store_true", help="omit tensor and constant nodes")
    p.add_argument("--stop-on-output", action="store_true", help="stop after the first non-empty output")
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; runs are deterministic")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("query", help="query a provenance graph file; flags apply in order")
    p.add_argument("graph")
    p.add_argument("--zoom-out", dest="zoom_out", action=_Ordered, metavar="MODULE")
    p.add_argument("--zoom-in", dest="zoom_in", action=_Ordered, metavar="MODULE")
    p.add_argument("--delete", dest="delete", action=_Ordered, metavar="ID[,ID...]", nargs="?", const="")
    p.add_argument("--subgraph", dest="subgraph", action=_Ordered, metavar="ID")
    p.add_argument("--depends", dest="depends", action=_Ordered, nargs=2, metavar=("NODE", "SEED"))
    p.add_argument("--stats", dest="stats", action=_Ordered, nargs=0)
    p.add_argument("-o", "--output", help="write graph-valued results here instead of stdout")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("gen", help="generate a benchmark workflow with state and inputs")
    _family_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="time a generated workload with provenance on and off")
    _family_args(p)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--mean", action="store_true", help="one averaged row per provenance setting")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("shell", help="interactive queries over a graph file")
    p.add_argument("graph")
    p.set_defaults(func=cmd_shell)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"lipstick: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WorkflowError, SchemaError, pg.GraphError, OSError) as exc:
        print(f"lipstick: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ExecutionError, EvaluationError) as exc:
        print(f"lipstick: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
