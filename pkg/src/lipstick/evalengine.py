"""Evaluation of Pig Latin programs over provenance-annotated relations.

Each operator produces a new :class:`AnnotatedRelation` and extends the
provenance graph following the semiring reading of the operator: joint use
of tuples becomes a Times node, alternative derivations a Plus node and
duplicate elimination a Delta node over a Plus. FILTER, UNION and ORDER add
no nodes. When the environment has no graph, evaluation proceeds with
unannotated tuples.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from . import provgraph as pg
from .pigparse import (
    Cogroup,
    Comparison,
    Distinct,
    FieldRef,
    Filter,
    FlattenItem,
    ForeachAggregate,
    ForeachBB,
    ForeachProject,
    Group,
    Join,
    Literal,
    Order,
    PigProgram,
    PigTypeError,
    ProjItem,
    Union,
    output_schema,
    resolve_ref,
)
from .relmodel import Bag, Schema, coerce_row, row_key, validate_against_schema, value_key


class EvaluationError(RuntimeError):
    pass


class BlackBoxError(EvaluationError):
    pass


class Deferred:
    """State-tuple wrapper node created only when the tuple is actually used.

    A state tuple seen by a module invocation gets a class-``s`` Times node
    over its stored node and the invocation node. Most state tuples are never
    touched by a given invocation, so the node is materialized on demand.
    """

    __slots__ = ("base", "invocation", "node")

    def __init__(self, base: int, invocation: int):
        self.base = base
        self.invocation = invocation
        self.node = None

    def materialize(self, graph: pg.ProvGraph) -> int:
        if self.node is None:
            self.node = graph.extend(pg.Label(pg.TIMES), (self.base, self.invocation), cls="s")
        return self.node

    def settle(self) -> int:
        """Node to keep in module state: the wrapper if it exists, else the stored node."""
        return self.node if self.node is not None else self.base

    def __repr__(self):
        return f"Deferred({self.base}, inv={self.invocation}, node={self.node})"


class AnnotatedTuple(NamedTuple):
    values: tuple
    pnode: object = None  # node id, Deferred or None when provenance is off
    vbind: Mapping | None = None  # field position -> aggregate v-node


@dataclass
class AnnotatedRelation:
    schema: Schema
    tuples: list = field(default_factory=list)
    instance_id: str = ""

    def __len__(self):
        return len(self.tuples)

    @property
    def rows(self) -> list[tuple]:
        return [t.values for t in self.tuples]

    def bag(self) -> Bag:
        return Bag(self.rows, [t.pnode for t in self.tuples])

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence], nodes=None, instance_id: str = ""):
        rows = [coerce_row(r, schema) for r in rows]
        nodes = list(nodes) if nodes is not None else [None] * len(rows)
        tuples = [AnnotatedTuple(r, n) for r, n in zip(rows, nodes)]
        return cls(schema, _sorted_tuples(tuples), instance_id)


@dataclass
class BlackBox:
    """A registered user-defined function with its declared output schema."""

    name: str
    fn: Callable
    schema: Schema


class BBRegistry(dict):
    def register(self, name: str, fn: Callable, schema: Schema | str) -> BlackBox:
        if isinstance(schema, str):
            schema = Schema.parse(schema)
        bb = BlackBox(name, fn, schema)
        self[name] = bb
        return bb

    @property
    def schemas(self) -> dict[str, Schema]:
        return {name: bb.schema for name, bb in self.items()}


_CMP = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

AGG_FOLDS = {
    "SUM": lambda values: _fold(operator.add, values, 0),
    "COUNT": lambda values: len(values),
    "MIN": lambda values: _fold(min, values, None),
    "MAX": lambda values: _fold(max, values, None),
}


def _fold(fn, values, empty):
    values = list(values)
    if not values:
        return empty
    acc = values[0]
    for v in values[1:]:
        acc = fn(acc, v)
    return acc


def _sorted_tuples(tuples):
    # stable: equal rows keep their relative order
    return sorted(tuples, key=lambda t: row_key(t.values))


# Every operator emits its tuples in canonical order and relations built with
# AnnotatedRelation.from_rows are sorted, so operator inputs need no re-sort.


class EvalEnv:
    """Alias bindings plus the provenance graph under construction.

    Aliases are single-assignment, except names listed in ``reassignable``
    (module state relations), which may be redefined exactly once.
    """

    def __init__(
        self,
        relations: Mapping[str, AnnotatedRelation] | None = None,
        graph: pg.ProvGraph | None = None,
        registry: BBRegistry | None = None,
        *,
        reassignable: Iterable[str] = (),
        simplified_agg: bool = False,
        nested_bb_inputs: bool = False,
    ):
        self.relations: dict[str, AnnotatedRelation] = dict(relations or {})
        self.graph = graph
        self.registry = registry if registry is not None else BBRegistry()
        self.reassignable = set(reassignable)
        self.reassigned: set[str] = set()
        self.simplified_agg = simplified_agg
        self.nested_bb_inputs = nested_bb_inputs
        self._consts: dict = {}

    # -- graph helpers -----------------------------------------------------

    @property
    def tracking(self) -> bool:
        return self.graph is not None

    def nid(self, ref):
        if isinstance(ref, Deferred):
            return ref.materialize(self.graph)
        return ref

    def new_node(self, tag: str, preds, *, args: tuple = (), kind: str | None = None):
        if self.graph is None:
            return None
        return self.graph.extend(pg.Label(tag, args), [self.nid(p) for p in preds], kind=kind)

    def const_node(self, value):
        key = value_key(value)
        node = self._consts.get(key)
        if node is None:
            node = self.graph.extend(pg.const(value))
            self._consts[key] = node
        return node

    # -- bindings ------------------------------------------------------------

    def __getitem__(self, alias: str) -> AnnotatedRelation:
        try:
            return self.relations[alias]
        except KeyError:
            raise EvaluationError(f"unbound alias {alias!r}") from None

    def bind(self, alias: str, rel: AnnotatedRelation) -> None:
        if alias in self.relations:
            if alias not in self.reassignable or alias in self.reassigned:
                raise EvaluationError(f"alias {alias!r} already bound")
            self.reassigned.add(alias)
        self.relations[alias] = rel

    def schemas(self) -> dict[str, Schema]:
        return {name: rel.schema for name, rel in self.relations.items()}


# -- operators -------------------------------------------------------------------


def _project_values(t: AnnotatedTuple, items) -> tuple:
    out = []
    for kind, payload in items:
        out.append(payload if kind == "lit" else t.values[payload])
    return tuple(out)


def _compile_items(schema: Schema, items: Sequence[ProjItem]):
    compiled = []
    for item in items:
        if isinstance(item.expr, Literal):
            compiled.append(("lit", item.expr.value))
        else:
            path, _ = resolve_ref(schema, item.expr)
            compiled.append(("pos", path[0]))
    return compiled


def _remap_vbind(vbinds, compiled) -> dict | None:
    """Carry aggregate bindings through a projection when all sources agree."""
    out = {}
    for new_pos, (kind, old) in enumerate(compiled):
        if kind != "pos":
            continue
        nodes = {vb.get(old) if vb else None for vb in vbinds}
        if len(nodes) == 1 and None not in nodes:
            out[new_pos] = nodes.pop()
    return out or None


def op_foreach_project(env: EvalEnv, rel: AnnotatedRelation, items: Sequence[ProjItem], schema: Schema,
                       *, bag: bool = False) -> AnnotatedRelation:
    """Projection; equal projected values merge into one tuple under a Plus node.

    With ``bag=True`` every source tuple yields its own output tuple under a
    unary Plus node, preserving multiplicities.
    """
    compiled = _compile_items(rel.schema, items)
    source = rel.tuples
    if bag:
        produced = [(_project_values(t, compiled), [t]) for t in source]
        produced.sort(key=lambda p: row_key(p[0]))
    else:
        groups: dict = {}
        for t in source:
            values = _project_values(t, compiled)
            groups.setdefault(row_key(values), (values, []))[1].append(t)
        produced = [groups[k] for k in sorted(groups)]
    out = []
    for values, members in produced:
        node = env.new_node(pg.PLUS, [m.pnode for m in members]) if env.tracking else None
        out.append(AnnotatedTuple(coerce_row(values, schema), node, _remap_vbind([m.vbind for m in members], compiled)))
    return AnnotatedRelation(schema, out)


def _operand_fn(schema, operand):
    if isinstance(operand, Literal):
        value = operand.value
        return lambda t: value
    path, _ = resolve_ref(schema, operand)
    pos = path[0]
    return lambda t: t.values[pos]


def op_filter(env: EvalEnv, rel: AnnotatedRelation, cond: Sequence[Comparison], schema: Schema) -> AnnotatedRelation:
    """Selection; survivors keep their nodes and no node is added."""
    tests = [(_operand_fn(rel.schema, c.left), _CMP[c.op], _operand_fn(rel.schema, c.right)) for c in cond]
    out = [t for t in rel.tuples if all(op(left(t), right(t)) for left, op, right in tests)]
    return AnnotatedRelation(schema, out)


def _key_fn(schema, ref):
    path, _ = resolve_ref(schema, ref)
    pos = path[0]
    return lambda t: value_key(t.values[pos])


def op_join(env: EvalEnv, left: AnnotatedRelation, lkey: FieldRef, right: AnnotatedRelation, rkey: FieldRef,
            schema: Schema) -> AnnotatedRelation:
    """Equi-join; each matching pair yields a tuple under a Times node."""
    lk, rk = _key_fn(left.schema, lkey), _key_fn(right.schema, rkey)
    index: dict = {}
    for t in right.tuples:
        index.setdefault(rk(t), []).append(t)
    pairs = []
    for a in left.tuples:
        for b in index.get(lk(a), ()):
            pairs.append((a.values + b.values, a, b))
    # With the left side strictly increasing (and the right canonical) the
    # nested-loop order is already canonical; ORDER output or duplicate left
    # rows need the full sort.
    lkeys = [row_key(t.values) for t in left.tuples]
    rkeys = [row_key(t.values) for t in right.tuples]
    if any(x >= y for x, y in zip(lkeys, lkeys[1:])) or any(x > y for x, y in zip(rkeys, rkeys[1:])):
        pairs.sort(key=lambda p: row_key(p[0]))
    offset = left.schema.arity
    out = []
    for values, a, b in pairs:
        node = env.new_node(pg.TIMES, [a.pnode, b.pnode]) if env.tracking else None
        vbind = dict(a.vbind or {})
        vbind.update({offset + k: v for k, v in (b.vbind or {}).items()})
        out.append(AnnotatedTuple(values, node, vbind or None))
    return AnnotatedRelation(schema, out)


def _nested(members) -> Bag:
    return Bag([m.values for m in members], [m.pnode for m in members])


def op_group(env: EvalEnv, rel: AnnotatedRelation, key: FieldRef, schema: Schema) -> AnnotatedRelation:
    """One tuple per key: (key, bag of members) under Delta(Plus(members))."""
    return op_cogroup(env, [(rel, key)], schema)


def op_cogroup(env: EvalEnv, sources: Sequence[tuple[AnnotatedRelation, FieldRef]], schema: Schema) -> AnnotatedRelation:
    """Per key value: (key, one nested bag per source) under Delta(Plus(all members)).

    Nested tuples keep the nodes they had in their source relation.
    """
    buckets: dict = {}
    for i, (rel, key) in enumerate(sources):
        path, _ = resolve_ref(rel.schema, key)
        pos = path[0]
        for t in rel.tuples:
            value = t.values[pos]
            entry = buckets.setdefault(value_key(value), (value, [[] for _ in sources]))
            entry[1][i].append(t)
    out = []
    for k in sorted(buckets):
        value, per_source = buckets[k]
        node = None
        if env.tracking:
            members = [m.pnode for group in per_source for m in group]
            plus = env.new_node(pg.PLUS, members)
            node = env.new_node(pg.DELTA, [plus])
        row = (value,) + tuple(_nested(g) for g in per_source)
        out.append(AnnotatedTuple(coerce_row(row, schema), node))
    return AnnotatedRelation(schema, out)


def op_distinct(env: EvalEnv, rel: AnnotatedRelation, schema: Schema) -> AnnotatedRelation:
    """Duplicate elimination: one tuple per value under Delta(Plus(copies))."""
    groups: dict = {}
    for t in rel.tuples:
        groups.setdefault(row_key(t.values), []).append(t)
    out = []
    for k in sorted(groups):
        members = groups[k]
        node = None
        if env.tracking:
            plus = env.new_node(pg.PLUS, [m.pnode for m in members])
            node = env.new_node(pg.DELTA, [plus])
        out.append(AnnotatedTuple(members[0].values, node, _remap_vbind([m.vbind for m in members],
                                                                         [("pos", i) for i in range(schema.arity)])))
    return AnnotatedRelation(schema, out)


def op_union(env: EvalEnv, rels: Sequence[AnnotatedRelation], schema: Schema) -> AnnotatedRelation:
    """Bag union; tuples keep their nodes, duplicates are not merged."""
    first = rels[0].schema
    for rel in rels[1:]:
        if not first.same_shape(rel.schema):
            raise EvaluationError(f"UNION schema mismatch: {first} vs {rel.schema}")
    # same_shape guarantees identical kinds, so values need no coercion
    return AnnotatedRelation(schema, _sorted_tuples([t for rel in rels for t in rel.tuples]))


def op_order(env: EvalEnv, rel: AnnotatedRelation, key: FieldRef, schema: Schema,
             *, descending: bool = False) -> AnnotatedRelation:
    """Ordered copy of ``rel``; never touches the graph."""
    kf = _key_fn(rel.schema, key)
    ordered = sorted(rel.tuples, key=kf, reverse=descending)
    return AnnotatedRelation(schema, ordered)


def op_flatten_field(env: EvalEnv, rel: AnnotatedRelation, nested_field: FieldRef, schema: Schema,
                     keep: Sequence[ProjItem] = ()) -> AnnotatedRelation:
    """Unnest one bag field: one tuple per (outer, inner) pair under Times(outer, inner).

    ``keep`` lists the outer fields (or literals) placed before the inner fields.
    """
    path, _ = resolve_ref(rel.schema, nested_field)
    pos = path[0]
    compiled = _compile_items(rel.schema, keep)
    produced = []
    for t in rel.tuples:
        inner: Bag = t.values[pos]
        nodes = inner.nodes or (None,) * len(inner.rows)
        for row, inner_node in sorted(zip(inner.rows, nodes), key=lambda p: row_key(p[0])):
            produced.append((_project_values(t, compiled) + tuple(row), t, inner_node))
    produced.sort(key=lambda p: row_key(p[0]))
    out = []
    for values, t, inner_node in produced:
        node = env.new_node(pg.TIMES, [t.pnode, inner_node]) if env.tracking else None
        out.append(AnnotatedTuple(coerce_row(values, schema), node))
    return AnnotatedRelation(schema, out)


def op_foreach_aggregate(env: EvalEnv, rel: AnnotatedRelation, keys: Sequence[ProjItem], op: str,
                         agg_field: FieldRef, schema: Schema) -> AnnotatedRelation:
    """Aggregate a nested bag per input tuple.

    The output tuple sits under a unary Plus over the input tuple. The
    aggregate is a v-node ``Agg(op)`` fed by one Tensor per bag member, each
    pairing the member's p-node with a Const v-node of the aggregated value
    (1 for COUNT). In simplified mode the Agg node hangs directly off the
    member p-nodes.
    """
    compiled = _compile_items(rel.schema, keys)
    path, kind = resolve_ref(rel.schema, agg_field)
    bag_pos = path[0]
    inner_pos = path[1] if len(path) > 1 else (0 if op != "COUNT" else None)
    fold = AGG_FOLDS[op]
    out = []
    for t in rel.tuples:
        inner: Bag = t.values[bag_pos]
        nodes = inner.nodes or (None,) * len(inner.rows)
        members = sorted(zip(inner.rows, nodes), key=lambda p: row_key(p[0]))
        operands = [1 if op == "COUNT" else row[inner_pos] for row, _ in members]
        value = fold(operands)
        if value is None:
            raise EvaluationError(f"{op} over an empty bag in {rel.schema.name}")
        node = vbind = None
        if env.tracking:
            node = env.new_node(pg.PLUS, [t.pnode])
            if env.simplified_agg:
                agg = env.graph.extend(pg.Label(pg.AGG, (op,)), [env.nid(n) for _, n in members])
            else:
                tensors = [
                    env.graph.extend(pg.Label(pg.TENSOR), (env.nid(n), env.const_node(v)))
                    for (_, n), v in zip(members, operands)
                ]
                agg = env.graph.extend(pg.Label(pg.AGG, (op,)), tensors)
            vbind = {len(compiled): agg}
        out.append(AnnotatedTuple(coerce_row(_project_values(t, compiled) + (value,), schema), node, vbind))
    out.sort(key=lambda t: row_key(t.values))
    return AnnotatedRelation(schema, out)


def op_foreach_bb(env: EvalEnv, rel: AnnotatedRelation, bb_name: str, args: Sequence[FieldRef], schema: Schema,
                  *, flatten: bool = False) -> AnnotatedRelation:
    """Invoke a black box per input tuple.

    Each invocation records one ``BB(name)`` p-node whose predecessors are the
    input tuple's node, the nodes of any whole relations passed as arguments
    and, with ``nested_bb_inputs``, the nodes of tuples inside nested-bag
    arguments. Produced tuples all sit under that node.
    """
    try:
        bb = env.registry[bb_name]
    except KeyError:
        raise EvaluationError(f"black box {bb_name!r} is not registered") from None
    getters = []
    for arg in args:
        try:
            path, _ = resolve_ref(rel.schema, arg)
            getters.append(("field", path[0]))
        except TypeError:
            getters.append(("relation", env[arg.parts[0]].bag()))
    out = []
    for t in rel.tuples:
        values = [t.values[g] if kind == "field" else g for kind, g in getters]
        try:
            result = bb.fn(*values)
        except Exception as exc:
            raise BlackBoxError(f"{bb_name} failed on tuple {t.values!r}: {exc}") from exc
        rows = [coerce_row(tuple(r), bb.schema) for r in (result.rows if isinstance(result, Bag) else result)]
        report = validate_against_schema(rows, bb.schema)
        if not report.ok:
            raise BlackBoxError(f"{bb_name} output violates {bb.schema}: {report.reason} at {report.path}")
        node = None
        if env.tracking:
            preds = [t.pnode]
            for (kind, g), v in zip(getters, values):
                if kind == "relation" or (env.nested_bb_inputs and isinstance(v, Bag) and v.nodes):
                    preds.extend(n for n in v.nodes if n is not None)
            node = env.new_node(pg.BB, preds, args=(bb_name,), kind=pg.P)
        rows.sort(key=row_key)
        if flatten:
            out.extend(AnnotatedTuple(r, node) for r in rows)
        else:
            out.append(AnnotatedTuple((Bag(rows, [node] * len(rows)),), node))
    return AnnotatedRelation(schema, _sorted_tuples(out))


# -- programs --------------------------------------------------------------------


def eval_statement(env: EvalEnv, stmt) -> AnnotatedRelation:
    schemas = env.schemas()
    try:
        schema = output_schema(stmt, schemas, env.registry.schemas)
    except PigTypeError as exc:
        raise EvaluationError(str(exc)) from None
    if stmt.alias in env.reassignable and stmt.alias in env.relations:
        schema = Schema(stmt.alias, env[stmt.alias].schema.attrs)
    if isinstance(stmt, ForeachProject):
        src = env[stmt.src]
        flat = [i for i in stmt.items if isinstance(i, FlattenItem)]
        if flat:
            keep = [i for i in stmt.items if not isinstance(i, FlattenItem)]
            if stmt.items[-1] is not flat[0]:
                raise EvaluationError("FLATTEN must be the last GENERATE item")
            return op_flatten_field(env, src, flat[0].ref, schema, keep)
        return op_foreach_project(env, src, stmt.items, schema, bag=stmt.bag)
    if isinstance(stmt, ForeachAggregate):
        return op_foreach_aggregate(env, env[stmt.src], stmt.keys, stmt.agg.op, stmt.agg.ref, schema)
    if isinstance(stmt, ForeachBB):
        return op_foreach_bb(env, env[stmt.src], stmt.bb, stmt.args, schema, flatten=stmt.flatten)
    if isinstance(stmt, Filter):
        return op_filter(env, env[stmt.src], stmt.cond, schema)
    if isinstance(stmt, Join):
        return op_join(env, env[stmt.left], stmt.left_key, env[stmt.right], stmt.right_key, schema)
    if isinstance(stmt, Group):
        return op_group(env, env[stmt.src], stmt.key, schema)
    if isinstance(stmt, Cogroup):
        return op_cogroup(env, [(env[s], k) for s, k in stmt.sources], schema)
    if isinstance(stmt, Union):
        return op_union(env, [env[s] for s in stmt.sources], schema)
    if isinstance(stmt, Distinct):
        return op_distinct(env, env[stmt.src], schema)
    if isinstance(stmt, Order):
        return op_order(env, env[stmt.src], stmt.key, schema, descending=stmt.descending)
    raise EvaluationError(f"unsupported statement {stmt!r}")


def eval_program(env: EvalEnv, prog: PigProgram) -> EvalEnv:
    """Evaluate statements in order, binding each alias in ``env``."""
    for stmt in prog.statements:
        rel = eval_statement(env, stmt)
        rel.instance_id = stmt.alias
        env.bind(stmt.alias, rel)
    return env
