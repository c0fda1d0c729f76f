"""Modules, workflows and their execution with coarse-grained provenance wiring.

A module is a 5-tuple of input, state and output schemas plus a state query
and an output query. A workflow is a DAG of module-labelled nodes whose edges
copy named relations from producer outputs to consumer inputs. Executing a
workflow walks the DAG in a topological order, evaluating each module on its
inputs and its module's current state.

Every invocation gets a ModuleInvocation node. Tuples entering the invocation
are wrapped in class-``i`` Times nodes (input tuple, invocation); state tuples
in class-``s`` Times nodes, created lazily on first use; output tuples in
class-``o`` Times nodes. Tuples arriving from outside the workflow first get
fresh class-``i`` tokens, initial state tuples class-``s`` tokens.
"""

from __future__ import annotations

import heapq
import importlib
import os
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from . import provgraph as pg
from .evalengine import (
    AnnotatedRelation,
    AnnotatedTuple,
    BBRegistry,
    Deferred,
    EvalEnv,
    EvaluationError,
    eval_program,
)
from .pigparse import PigProgram, PigSyntaxError, PigTypeError, format_program, parse, resolve_and_typecheck
from .relmodel import (
    Bag,
    Schema,
    SchemaError,
    canonicalize,
    coerce_row,
    format_bag_text,
    parse_bag_text,
    validate_against_schema,
)


class WorkflowError(ValueError):
    """Malformed module, workflow or instance data."""


class ExecutionError(RuntimeError):
    """A module failed while evaluating its queries."""

    def __init__(self, message, *, execution=None, node=None):
        where = []
        if execution is not None:
            where.append(f"execution {execution}")
        if node is not None:
            where.append(f"node {node}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.execution = execution
        self.node = node


# -- model ---------------------------------------------------------------------


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    s_in: tuple = ()
    s_state: tuple = ()
    s_out: tuple = ()
    q_state: PigProgram = PigProgram()
    q_out: PigProgram = PigProgram()

    @property
    def in_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.s_in)

    @property
    def state_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.s_state)

    @property
    def out_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.s_out)

    def schema(self, rel: str) -> Schema:
        for s in self.s_in + self.s_state + self.s_out:
            if s.name == rel:
                return s
        raise WorkflowError(f"module {self.name} has no relation {rel!r}")

    def typecheck(self, bb_schemas: Mapping[str, Schema] | None = None) -> dict[str, Schema]:
        """Check both queries; returns the schema of every alias they bind."""
        names = self.in_names + self.state_names + self.out_names
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise WorkflowError(f"module {self.name}: relation names not disjoint: {sorted(dup)}")
        env = {s.name: s for s in self.s_in + self.s_state}
        state = {s.name: s for s in self.s_state}
        try:
            after_state = resolve_and_typecheck(self.q_state, env, bb_schemas, reassignable=state)
            env.update(after_state)
            after_out = resolve_and_typecheck(self.q_out, env, bb_schemas)
        except PigTypeError as exc:
            raise WorkflowError(f"module {self.name}: {exc}") from None
        for s in self.s_out:
            got = after_out.get(s.name)
            if got is None:
                raise WorkflowError(f"module {self.name}: output {s.name} is not produced by QOUT")
            if not got.same_shape(s):
                raise WorkflowError(f"module {self.name}: QOUT gives {got}, declared {s}")
        return {**after_state, **after_out}


class Edge(NamedTuple):
    src: str
    dst: str
    relations: tuple


@dataclass
class Workflow:
    nodes: dict = field(default_factory=dict)  # node id -> module name
    edges: list = field(default_factory=list)
    inputs: tuple = ()
    outputs: tuple = ()

    def in_edges(self, node: str) -> list[Edge]:
        return [e for e in self.edges if e.dst == node]

    def out_edges(self, node: str) -> list[Edge]:
        return [e for e in self.edges if e.src == node]

    def nodes_of(self, module: str) -> list[str]:
        return sorted(n for n, m in self.nodes.items() if m == module)


class WorkflowReport(NamedTuple):
    ok: bool
    reason: str = ""
    where: str = ""

    def __bool__(self):
        return self.ok


def _has_cycle(wf: Workflow) -> str | None:
    color = {n: 0 for n in wf.nodes}
    succ = {n: [] for n in wf.nodes}
    for e in wf.edges:
        succ[e.src].append(e.dst)
    for start in sorted(wf.nodes):
        if color[start]:
            continue
        stack = [(start, iter(succ[start]))]
        color[start] = 1
        while stack:
            n, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[n] = 2
                stack.pop()
            elif color[nxt] == 1:
                return nxt
            elif color[nxt] == 0:
                color[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return None


def validate_workflow(wf: Workflow, modules: Mapping[str, ModuleSpec],
                      bb_schemas: Mapping[str, Schema] | None = None) -> WorkflowReport:
    """Check the DAG conditions on a workflow; reports the first violation."""
    if not wf.nodes:
        return WorkflowReport(False, "workflow has no nodes")
    for node, module in sorted(wf.nodes.items()):
        if module not in modules:
            return WorkflowReport(False, f"unknown module {module!r}", node)
    for mod in sorted({wf.nodes[n] for n in wf.nodes}):
        try:
            modules[mod].typecheck(bb_schemas)
        except WorkflowError as exc:
            return WorkflowReport(False, str(exc), mod)
    for e in wf.edges:
        where = f"{e.src} -> {e.dst}"
        if e.src not in wf.nodes or e.dst not in wf.nodes:
            return WorkflowReport(False, "edge endpoint is not a node", where)
        if e.src == e.dst:
            return WorkflowReport(False, "cycle through self-loop", where)
        if not e.relations:
            return WorkflowReport(False, "edge carries no relation", where)
        src, dst = modules[wf.nodes[e.src]], modules[wf.nodes[e.dst]]
        for rel in e.relations:
            if rel not in src.out_names:
                return WorkflowReport(False, f"{rel} is not an output of {src.name}", where)
            if rel not in dst.in_names:
                return WorkflowReport(False, f"{rel} is not an input of {dst.name}", where)
            if not src.schema(rel).same_shape(dst.schema(rel)):
                return WorkflowReport(False, f"{rel} schemas differ between {src.name} and {dst.name}", where)
    looped = _has_cycle(wf)
    if looped is not None:
        return WorkflowReport(False, "workflow graph has a cycle", looped)
    # weak connectivity
    adj = {n: set() for n in wf.nodes}
    for e in wf.edges:
        adj[e.src].add(e.dst)
        adj[e.dst].add(e.src)
    first = min(wf.nodes)
    seen, stack = {first}, [first]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    if len(seen) != len(wf.nodes):
        return WorkflowReport(False, "workflow is not connected", min(set(wf.nodes) - seen))
    for n in wf.inputs:
        if n not in wf.nodes:
            return WorkflowReport(False, "input node is not a node", n)
        if wf.in_edges(n):
            return WorkflowReport(False, "input node has incoming edges", n)
    for n in wf.outputs:
        if n not in wf.nodes:
            return WorkflowReport(False, "output node is not a node", n)
        if wf.out_edges(n):
            return WorkflowReport(False, "output node has outgoing edges", n)
    for n in sorted(wf.nodes):
        incoming = wf.in_edges(n)
        seen_rel: dict[str, str] = {}
        for e in incoming:
            for rel in e.relations:
                if rel in seen_rel:
                    return WorkflowReport(False, f"incoming edges from {seen_rel[rel]} and {e.src} both carry {rel}", n)
                seen_rel[rel] = e.src
        if n not in wf.inputs:
            missing = [r for r in modules[wf.nodes[n]].in_names if r not in seen_rel]
            if missing:
                return WorkflowReport(False, f"inputs {missing} receive no data", n)
    return WorkflowReport(True)


def topological_order(wf: Workflow, policy: Sequence[str] | None = None) -> list[str]:
    """Default: Kahn's algorithm breaking ties by ascending node name.

    An explicit ``policy`` order is checked for being topological.
    """
    if policy is not None:
        order = list(policy)
        if sorted(order) != sorted(wf.nodes):
            raise WorkflowError("order must list every workflow node exactly once")
        pos = {n: i for i, n in enumerate(order)}
        for e in wf.edges:
            if pos[e.src] > pos[e.dst]:
                raise WorkflowError(f"order places {e.dst} before its predecessor {e.src}")
        return order
    indeg = {n: 0 for n in wf.nodes}
    for e in wf.edges:
        indeg[e.dst] += 1
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for e in wf.out_edges(n):
            indeg[e.dst] -= 1
            if indeg[e.dst] == 0:
                heapq.heappush(heap, e.dst)
    if len(order) != len(wf.nodes):
        raise WorkflowError("workflow graph has a cycle")
    return order


# -- state and run records -------------------------------------------------------


class WorkflowState(dict):
    """Module name -> relation name -> AnnotatedRelation."""

    def rows(self) -> dict:
        return {m: {r: canonicalize(rel.rows) for r, rel in rels.items()} for m, rels in self.items()}

    def copy(self) -> "WorkflowState":
        return WorkflowState({m: dict(rels) for m, rels in self.items()})


class TokenSource(NamedTuple):
    """Where a base tuple came from: initial state or an execution's input."""

    origin: str  # "state" | "input"
    owner: str  # module name (state) or node id (input)
    relation: str
    row: tuple
    execution: int | None = None


@dataclass
class ExecutionRecord:
    index: int
    inputs: dict  # In node -> relation -> AnnotatedRelation
    pre_state: WorkflowState
    outputs: dict  # Out node -> relation -> AnnotatedRelation
    post_state: WorkflowState
    invocations: dict  # node -> (invocation index, invocation node id or None)
    produced: dict = field(default_factory=dict)  # node -> relation -> AnnotatedRelation

    def output_rows(self) -> dict:
        return {n: {r: canonicalize(rel.rows) for r, rel in rels.items()} for n, rels in self.outputs.items()}


@dataclass
class RunLog:
    executions: list = field(default_factory=list)
    graph: pg.ProvGraph | None = None
    initial_state: WorkflowState | None = None
    final_state: WorkflowState | None = None
    token_sources: dict = field(default_factory=dict)  # token node id -> TokenSource

    def __len__(self):
        return len(self.executions)


# -- execution ---------------------------------------------------------------------


def _settle_value(value):
    if isinstance(value, Bag) and value.nodes is not None:
        nodes = [n.settle() if isinstance(n, Deferred) else n for n in value.nodes]
        return Bag([tuple(_settle_value(v) for v in r) for r in value.rows], nodes)
    return value


def _settle(rel: AnnotatedRelation) -> AnnotatedRelation:
    tuples = []
    for t in rel.tuples:
        node = t.pnode.settle() if isinstance(t.pnode, Deferred) else t.pnode
        values = tuple(_settle_value(v) for v in t.values)
        tuples.append(AnnotatedTuple(values, node, t.vbind))
    return AnnotatedRelation(rel.schema, tuples, rel.instance_id)


def build_coarse(graph: pg.ProvGraph, module: str, node: str, index: int,
                 inputs: Mapping[str, AnnotatedRelation], state: Mapping[str, AnnotatedRelation]):
    """Create the invocation node and the class-i / class-s wrappers for one call.

    Returns ``(invocation node, wrapped inputs, wrapped state)``; state
    wrappers are :class:`Deferred` and become nodes only when used.
    """
    inv = graph.extend(pg.invocation(module, node, index), cls="m")
    wrapped_in = {}
    for rel, r in inputs.items():
        tuples = [
            AnnotatedTuple(t.values, graph.extend(pg.Label(pg.TIMES), (t.pnode, inv), cls="i"), t.vbind)
            for t in r.tuples
        ]
        wrapped_in[rel] = AnnotatedRelation(r.schema, tuples, r.instance_id)
    wrapped_state = {
        rel: AnnotatedRelation(r.schema, [t._replace(pnode=Deferred(t.pnode, inv)) for t in r.tuples], r.instance_id)
        for rel, r in state.items()
    }
    return inv, wrapped_in, wrapped_state


def wrap_outputs(graph: pg.ProvGraph, inv: int, rel: AnnotatedRelation, env: EvalEnv) -> AnnotatedRelation:
    tuples = [
        AnnotatedTuple(t.values, graph.extend(pg.Label(pg.TIMES), (env.nid(t.pnode), inv), cls="o"), t.vbind)
        for t in rel.tuples
    ]
    return _settle(AnnotatedRelation(rel.schema, tuples, rel.instance_id))


class Runner:
    """Executes a workflow repeatedly, threading module state and one graph."""

    def __init__(self, wf: Workflow, modules: Mapping[str, ModuleSpec], registry: BBRegistry | None = None,
                 *, provenance: bool = True, graph: pg.ProvGraph | None = None, order: Sequence[str] | None = None,
                 simplified_agg: bool = False, nested_bb_inputs: bool = False, check: bool = True):
        self.wf = wf
        self.modules = dict(modules)
        self.registry = registry if registry is not None else BBRegistry()
        if check:
            report = validate_workflow(wf, self.modules, self.registry.schemas)
            if not report:
                raise WorkflowError(f"invalid workflow at {report.where or '?'}: {report.reason}")
        self.graph = (graph if graph is not None else pg.ProvGraph()) if provenance else None
        self.order = topological_order(wf, order)
        self.simplified_agg = simplified_agg
        self.nested_bb_inputs = nested_bb_inputs
        self.invocation_counts = {n: 0 for n in wf.nodes}
        self.executions = 0
        self.token_sources: dict[int, TokenSource] = {}

    # -- instances -----------------------------------------------------------

    def _relation(self, schema: Schema, rows, instance_id: str, cls: str, source) -> AnnotatedRelation:
        rows = [coerce_row(tuple(r), schema) for r in (rows.rows if isinstance(rows, Bag) else rows)]
        report = validate_against_schema(rows, schema)
        if not report:
            raise WorkflowError(f"{instance_id}: {report.reason} at {report.path}")
        rows = canonicalize(rows)
        nodes = [None] * len(rows)
        if self.graph is not None:
            nodes = []
            for k, row in enumerate(rows):
                tok = self.graph.fresh_token(cls, f"{instance_id}#{k}")
                self.token_sources[tok] = source(row)
                self.graph.bind(instance_id, k, tok)
                nodes.append(tok)
        return AnnotatedRelation(schema, [AnnotatedTuple(r, n) for r, n in zip(rows, nodes)], instance_id)

    def initial_state(self, rows: Mapping[str, Mapping[str, Iterable]] | None = None) -> WorkflowState:
        """Build state for every module in the workflow; missing relations start empty.

        ``rows`` is keyed by module name (or by a workflow node id of that module).
        """
        rows = dict(rows or {})
        for key in list(rows):
            if key in self.wf.nodes and key not in self.modules:
                rows.setdefault(self.wf.nodes[key], {}).update(rows.pop(key))
        state = WorkflowState()
        for mod in sorted(set(self.wf.nodes.values())):
            spec = self.modules[mod]
            given = rows.pop(mod, {})
            unknown = set(given) - set(spec.state_names)
            if unknown:
                raise WorkflowError(f"module {mod} has no state relations {sorted(unknown)}")
            state[mod] = {
                s.name: self._relation(s, given.get(s.name, ()), f"state/{mod}.{s.name}", "s",
                                       lambda row, m=mod, r=s.name: TokenSource("state", m, r, row))
                for s in spec.s_state
            }
        if rows:
            raise WorkflowError(f"state given for modules outside the workflow: {sorted(rows)}")
        return state

    def _external_inputs(self, node: str, given: Mapping[str, Iterable], execution: int) -> dict:
        spec = self.modules[self.wf.nodes[node]]
        unknown = set(given) - set(spec.in_names)
        if unknown:
            raise WorkflowError(f"node {node} has no input relations {sorted(unknown)}")
        return {
            s.name: self._relation(s, given.get(s.name, ()), f"e{execution}/in/{node}.{s.name}", "i",
                                   lambda row, r=s.name: TokenSource("input", node, r, row, execution))
            for s in spec.s_in
        }

    # -- one invocation ---------------------------------------------------------

    def _invoke(self, node: str, inputs: dict, state: WorkflowState, execution: int):
        mod = self.wf.nodes[node]
        spec = self.modules[mod]
        index = self.invocation_counts[node]
        self.invocation_counts[node] += 1
        mod_state = state[mod]
        inv = None
        if self.graph is not None:
            inv, env_in, env_state = build_coarse(self.graph, mod, node, index, inputs, mod_state)
        else:
            env_in, env_state = dict(inputs), dict(mod_state)
        env = EvalEnv({**env_in, **env_state}, self.graph, self.registry, reassignable=spec.state_names,
                      simplified_agg=self.simplified_agg, nested_bb_inputs=self.nested_bb_inputs)
        try:
            eval_program(env, spec.q_state)
            eval_program(env, spec.q_out)
        except (EvaluationError, PigTypeError, SchemaError) as exc:
            raise ExecutionError(str(exc), execution=execution, node=node) from exc
        new_state = {}
        for s in spec.s_state:
            if s.name in env.reassigned:
                rel = _settle(env[s.name])
                rel = AnnotatedRelation(s, [t._replace(values=coerce_row(t.values, s)) for t in rel.tuples],
                                        f"e{execution}/state/{node}.{s.name}")
                if self.graph is not None and [t.pnode for t in rel.tuples] != [t.pnode for t in mod_state[s.name].tuples]:
                    for k, t in enumerate(rel.tuples):
                        self.graph.bind(rel.instance_id, k, t.pnode)
                new_state[s.name] = rel
            else:
                new_state[s.name] = mod_state[s.name]
        state[mod] = new_state
        outputs = {}
        for s in spec.s_out:
            rel = env[s.name]
            rel = AnnotatedRelation(s, [t._replace(values=coerce_row(t.values, s)) for t in rel.tuples],
                                    f"e{execution}/out/{node}.{s.name}")
            if self.graph is not None:
                rel = wrap_outputs(self.graph, inv, rel, env)
                for k, t in enumerate(rel.tuples):
                    self.graph.bind(rel.instance_id, k, t.pnode)
            outputs[s.name] = rel
        return outputs, (index, inv)

    # -- executions ----------------------------------------------------------------

    def execute_once(self, inputs: Mapping[str, Mapping[str, Iterable]], state: WorkflowState) -> ExecutionRecord:
        """One execution per the reference semantics of the chosen topological order.

        ``inputs`` maps each In node to its relation rows. ``state`` is not
        modified; the new state is in the returned record.
        """
        execution = self.executions
        self.executions += 1
        unknown = set(inputs) - set(self.wf.inputs)
        if unknown:
            raise WorkflowError(f"inputs given for non-input nodes {sorted(unknown)}")
        pre = state
        state = state.copy()
        pending: dict[str, dict] = {n: {} for n in self.wf.nodes}
        ext_inputs = {}
        produced = {}
        invocations = {}
        for node in self.order:
            if node in self.wf.inputs:
                ext_inputs[node] = self._external_inputs(node, inputs.get(node, {}), execution)
                node_inputs = ext_inputs[node]
            else:
                node_inputs = pending[node]
            outputs, invocations[node] = self._invoke(node, node_inputs, state, execution)
            produced[node] = outputs
            for e in self.wf.out_edges(node):
                dst_spec = self.modules[self.wf.nodes[e.dst]]
                for rel in e.relations:
                    target = dst_spec.schema(rel)
                    out = outputs[rel]
                    report = validate_against_schema(out.rows, target)
                    if not report:
                        raise WorkflowError(f"edge {node} -> {e.dst}: {rel} violates {target}: {report.reason}")
                    pending[e.dst][rel] = AnnotatedRelation(target, list(out.tuples), out.instance_id)
        outputs = {n: produced[n] for n in self.wf.outputs}
        return ExecutionRecord(execution, ext_inputs, pre, outputs, state, invocations, produced)

    def execute_sequence(self, inputs: Sequence[Mapping[str, Mapping[str, Iterable]]], state: WorkflowState,
                         *, stop: Callable[[ExecutionRecord], bool] | None = None) -> RunLog:
        """Run one execution per input, threading state; optionally stop early."""
        log = RunLog(graph=self.graph, initial_state=state, token_sources=self.token_sources)
        for inp in inputs:
            record = self.execute_once(inp, state)
            log.executions.append(record)
            state = record.post_state
            if stop is not None and stop(record):
                break
        log.final_state = state
        return log


def execute_once(wf, modules, inputs, state, runner: Runner) -> ExecutionRecord:
    return runner.execute_once(inputs, state)


def run_workflow(wf: Workflow, modules: Mapping[str, ModuleSpec], registry: BBRegistry | None,
                 state_rows: Mapping | None, inputs: Sequence[Mapping], *, provenance: bool = True,
                 order: Sequence[str] | None = None, stop=None, **flags) -> RunLog:
    """Convenience: build a runner, seed state, execute the input sequence."""
    runner = Runner(wf, modules, registry, provenance=provenance, order=order, **flags)
    state = runner.initial_state(state_rows)
    return runner.execute_sequence(inputs, state, stop=stop)


# -- workflow definition files ---------------------------------------------------------


class BBDecl(NamedTuple):
    name: str
    ref: str  # "package.module:callable"
    schema: Schema


def load_callable(ref: str) -> Callable:
    mod_name, _, attr = ref.partition(":")
    if not attr:
        raise WorkflowError(f"black-box reference {ref!r} must look like module:callable")
    try:
        obj = importlib.import_module(mod_name)
    except ImportError as exc:
        raise WorkflowError(f"cannot import {mod_name}: {exc}") from None
    for part in attr.split("."):
        try:
            obj = getattr(obj, part)
        except AttributeError:
            raise WorkflowError(f"{ref}: no attribute {part!r}") from None
    return obj


@dataclass
class WorkflowFile:
    modules: dict
    workflow: Workflow
    blackboxes: list = field(default_factory=list)

    def registry(self) -> BBRegistry:
        reg = BBRegistry()
        for decl in self.blackboxes:
            reg.register(decl.name, load_callable(decl.ref), decl.schema)
        return reg


_EDGE_RE = re.compile(r"^EDGE\s+(\S+)\s*->\s*(\S+)\s*:\s*(.+)$")
_NODE_RE = re.compile(r"^NODE\s+(\S+)\s*:\s*(\S+)$")


def parse_workflow_file(text: str) -> WorkflowFile:
    """Parse MODULE / BLACKBOX / WORKFLOW blocks (see README for the grammar)."""
    modules: dict[str, dict] = {}
    wf = Workflow()
    blackboxes = []
    lines = text.split("\n")
    current = None
    in_workflow = False
    i = 0

    def fail(msg, lineno):
        raise WorkflowError(f"line {lineno}: {msg}")

    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#") or line.startswith("--"):
            continue
        word = line.split(None, 1)[0].upper()
        if word == "MODULE":
            parts = line.split()
            if len(parts) != 2:
                fail("expected MODULE <name>", lineno)
            if parts[1] in modules:
                fail(f"module {parts[1]} defined twice", lineno)
            current = modules[parts[1]] = {"in": [], "state": [], "out": [], "qstate": "", "qout": "", "line": lineno}
            in_workflow = False
        elif word in ("INPUT", "STATE", "OUTPUT"):
            if current is None or in_workflow:
                fail(f"{word} outside a MODULE block", lineno)
            try:
                schema = Schema.parse(line.split(None, 1)[1])
            except (SchemaError, IndexError) as exc:
                fail(f"bad schema: {exc}", lineno)
            current[{"INPUT": "in", "STATE": "state", "OUTPUT": "out"}[word]].append(schema)
        elif word in ("QSTATE", "QOUT"):
            if current is None or in_workflow:
                fail(f"{word} outside a MODULE block", lineno)
            rest = line[len(word):].strip()
            if not rest.startswith("{"):
                fail(f"expected {{ after {word}", lineno)
            body = [rest[1:]]
            while "}" not in body[-1]:
                if i >= len(lines):
                    fail(f"unterminated {word} block", lineno)
                body.append(lines[i])
                i += 1
            last, _, trailing = body[-1].partition("}")
            if trailing.strip():
                fail(f"text after closing brace of {word}", i)
            body[-1] = last
            current["qstate" if word == "QSTATE" else "qout"] = ("\n" * (lineno - 1)) + "\n".join(body)
        elif word == "BLACKBOX":
            parts = line.split(None, 3)
            if len(parts) != 4:
                fail("expected BLACKBOX <name> <module:callable> <Schema>", lineno)
            try:
                blackboxes.append(BBDecl(parts[1], parts[2], Schema.parse(parts[3])))
            except SchemaError as exc:
                fail(f"bad schema: {exc}", lineno)
        elif word == "WORKFLOW":
            in_workflow = True
            current = None
        elif word in ("NODE", "EDGE", "IN", "OUT"):
            if not in_workflow:
                fail(f"{word} outside the WORKFLOW block", lineno)
            if word == "NODE":
                m = _NODE_RE.match(line)
                if not m:
                    fail("expected NODE <id> : <module>", lineno)
                if m.group(1) in wf.nodes:
                    fail(f"node {m.group(1)} declared twice", lineno)
                wf.nodes[m.group(1)] = m.group(2)
            elif word == "EDGE":
                m = _EDGE_RE.match(line)
                if not m:
                    fail("expected EDGE <id> -> <id> : <Rel>[,<Rel>...]", lineno)
                rels = tuple(r.strip() for r in m.group(3).split(","))
                if not all(rels):
                    fail("empty relation name", lineno)
                wf.edges.append(Edge(m.group(1), m.group(2), rels))
            elif word == "IN":
                wf.inputs += tuple(line.split()[1:])
            else:
                wf.outputs += tuple(line.split()[1:])
        else:
            fail(f"unknown directive {word}", lineno)

    specs = {}
    for name, m in modules.items():
        try:
            q_state = parse(m["qstate"])
            q_out = parse(m["qout"])
        except PigSyntaxError as exc:
            raise WorkflowError(f"module {name}: {exc}") from None
        specs[name] = ModuleSpec(name, tuple(m["in"]), tuple(m["state"]), tuple(m["out"]), q_state, q_out)
    return WorkflowFile(specs, wf, blackboxes)


def _indent(text: str) -> str:
    return "".join("  " + line + "\n" for line in text.splitlines())


def format_workflow_file(wfile: WorkflowFile) -> str:
    out = []
    for decl in wfile.blackboxes:
        out.append(f"BLACKBOX {decl.name} {decl.ref} {decl.schema}\n")
    if wfile.blackboxes:
        out.append("\n")
    for name in sorted(wfile.modules):
        spec = wfile.modules[name]
        out.append(f"MODULE {name}\n")
        for word, schemas in (("INPUT", spec.s_in), ("STATE", spec.s_state), ("OUTPUT", spec.s_out)):
            out.extend(f"{word} {s}\n" for s in schemas)
        out.append("QSTATE {\n" + _indent(format_program(spec.q_state)) + "}\n")
        out.append("QOUT {\n" + _indent(format_program(spec.q_out)) + "}\n\n")
    wf = wfile.workflow
    out.append("WORKFLOW\n")
    for node in sorted(wf.nodes):
        out.append(f"NODE {node} : {wf.nodes[node]}\n")
    for e in wf.edges:
        out.append(f"EDGE {e.src} -> {e.dst} : {','.join(e.relations)}\n")
    if wf.inputs:
        out.append("IN " + " ".join(wf.inputs) + "\n")
    if wf.outputs:
        out.append("OUT " + " ".join(wf.outputs) + "\n")
    return "".join(out)


# -- instance directories -----------------------------------------------------------


def read_instance_dir(path: str, wf: Workflow, modules: Mapping[str, ModuleSpec], *, kind: str) -> dict:
    """Read ``<node-or-module>.<Rel>.txt`` files.

    ``kind`` is "input" (keys: In node ids) or "state" (keys: module names;
    node ids are mapped to their module).
    """
    if not os.path.isdir(path):
        raise WorkflowError(f"{path}: not a directory")
    out: dict[str, dict] = {}
    for fname in sorted(os.listdir(path)):
        full = os.path.join(path, fname)
        if not fname.endswith(".txt") or not os.path.isfile(full):
            continue
        owner, dot, rel = fname[:-4].partition(".")
        if not dot:
            raise WorkflowError(f"{full}: expected <owner>.<Relation>.txt")
        if kind == "input":
            if owner not in wf.inputs:
                raise WorkflowError(f"{full}: {owner} is not an input node")
            spec = modules[wf.nodes[owner]]
            if rel not in spec.in_names:
                raise WorkflowError(f"{full}: {rel} is not an input of {spec.name}")
        else:
            if owner in wf.nodes:
                owner = wf.nodes[owner]
            if owner not in modules:
                raise WorkflowError(f"{full}: unknown node or module {owner}")
            spec = modules[owner]
            if rel not in spec.state_names:
                raise WorkflowError(f"{full}: {rel} is not a state relation of {owner}")
        with open(full, encoding="utf-8") as fh:
            try:
                bag = parse_bag_text(fh.read(), spec.schema(rel))
            except SchemaError as exc:
                raise WorkflowError(f"{full}: {exc}") from None
        out.setdefault(owner, {})[rel] = bag.rows
    return out


def read_input_sequence(path: str, wf: Workflow, modules: Mapping[str, ModuleSpec]) -> list[dict]:
    """Numbered subdirectories give one input per execution; flat files give one."""
    if not os.path.isdir(path):
        raise WorkflowError(f"{path}: not a directory")
    subdirs = sorted((d for d in os.listdir(path) if d.isdigit() and os.path.isdir(os.path.join(path, d))), key=int)
    if subdirs:
        return [read_instance_dir(os.path.join(path, d), wf, modules, kind="input") for d in subdirs]
    return [read_instance_dir(path, wf, modules, kind="input")]


def write_instance_dir(path: str, instances: Mapping[str, Mapping[str, Iterable]]) -> None:
    os.makedirs(path, exist_ok=True)
    for owner in sorted(instances):
        for rel in sorted(instances[owner]):
            rows = instances[owner][rel]
            rows = rows.rows if isinstance(rows, (Bag, AnnotatedRelation)) else rows
            with open(os.path.join(path, f"{owner}.{rel}.txt"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(format_bag_text(rows))
