"""Queries over frozen provenance graphs.

ZoomOut collapses every invocation of selected modules into one Meta node,
ZoomIn undoes it. Deletion propagation treats a set of base facts as absent
and computes which nodes survive (and how aggregate values change);
dependency queries and subgraph extraction build on it. No query mutates the
graph it is given.
"""

from __future__ import annotations

import fnmatch
import heapq
from dataclasses import dataclass, field
from typing import Iterable

from . import provgraph as pg
from .evalengine import AGG_FOLDS, AnnotatedRelation
from .relmodel import canonicalize


class QueryError(pg.GraphError):
    pass


# -- zoom ------------------------------------------------------------------------


def invocation_modules(graph: pg.ProvGraph) -> set[str]:
    return {graph.nodes[n].label.args[0] for n in graph.invocations()}


def _select(graph: pg.ProvGraph, selector, known: Iterable[str] | None) -> set[str]:
    names = invocation_modules(graph) | set(known or ())
    patterns = [selector] if isinstance(selector, str) else list(selector)
    chosen = set()
    for pat in patterns:
        hits = {m for m in names if fnmatch.fnmatchcase(m, pat)}
        if not hits:
            raise QueryError(f"no module matches {pat!r}")
        chosen |= hits
    return chosen


def _boundary(graph: pg.ProvGraph, inv: int):
    wrappers = {"i": [], "s": [], "o": []}
    for s in graph.succs[inv]:
        cls = graph.nodes[s].cls
        if cls in wrappers:
            wrappers[cls].append(s)
    return wrappers


def invocation_internals(graph: pg.ProvGraph, inv: int) -> set[int]:
    """Plain nodes computed inside one invocation.

    Everything reachable forward from the invocation's input and state
    wrappers through plain nodes, everything reachable backward from its
    output wrappers through plain nodes, plus the Const operands of those
    Tensors.
    """
    wrappers = _boundary(graph, inv)
    inside: set[int] = set()
    stack = [s for w in wrappers["i"] + wrappers["s"] for s in graph.succs[w]]
    while stack:
        n = stack.pop()
        if n in inside or graph.nodes[n].cls != "plain":
            continue
        inside.add(n)
        stack.extend(graph.succs[n])
    stack = [p for w in wrappers["o"] for p in graph.preds[w]]
    while stack:
        n = stack.pop()
        if n in inside or graph.nodes[n].cls != "plain" or graph.nodes[n].label.tag == pg.INVOCATION:
            continue
        inside.add(n)
        stack.extend(graph.preds[n])
    consts = {p for n in inside if graph.nodes[n].label.tag == pg.TENSOR
              for p in graph.preds[n] if graph.nodes[p].label.tag == pg.CONST}
    return inside | consts


@dataclass
class ZoomView:
    """A base graph with some modules' invocations collapsed to Meta nodes."""

    base: pg.ProvGraph
    collapsed: frozenset = frozenset()
    known_modules: frozenset = frozenset()
    _graph: pg.ProvGraph | None = field(default=None, repr=False, compare=False)
    _hidden: dict | None = field(default=None, repr=False, compare=False)

    def _compute(self):
        if self._graph is not None:
            return
        base = self.base
        invs = sorted(n for n in base.invocations() if base.nodes[n].label.args[0] in self.collapsed)
        per_inv = {inv: invocation_internals(base, inv) for inv in invs}
        owners: dict[int, int] = {}
        shared = set()
        for inv, nodes in per_inv.items():
            for n in nodes:
                if n in owners:
                    shared.add(n)
                owners[n] = inv
        hidden = {inv: nodes - shared for inv, nodes in per_inv.items()}
        owner_of = {n: inv for inv, nodes in hidden.items() for n in nodes}
        next_id = max(base.nodes, default=-1) + 1
        meta_of = {inv: next_id + k for k, inv in enumerate(invs)}
        g = pg.ProvGraph(view=True)

        def target(n):
            inv = owner_of.get(n)
            return n if inv is None else meta_of[inv]

        view_preds: dict[int, list] = {}
        for n in base.nodes:
            if n in owner_of:
                continue
            preds, rerouted = [], set()
            for p in base.preds[n]:
                t = target(p)
                if t != p:
                    if t in rerouted:
                        continue
                    rerouted.add(t)
                preds.append(t)
            view_preds[n] = preds
        for inv in invs:
            m = meta_of[inv]
            w = _boundary(base, inv)
            preds = set(w["i"] + w["s"])
            for n in hidden[inv]:
                for p in base.preds[n]:
                    if p not in hidden[inv] and p != inv:
                        preds.add(target(p))
            preds.discard(m)
            view_preds[m] = sorted(preds)
        labels = {meta_of[inv]: base.nodes[inv].label for inv in invs}
        succs: dict[int, list] = {n: [] for n in view_preds}
        indeg = {}
        for n, ps in view_preds.items():
            indeg[n] = len(ps)
            for p in ps:
                succs[p].append(n)
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        while heap:
            n = heapq.heappop(heap)
            if n in labels:
                g.add_node(pg.ProvNode(n, pg.P, "meta", pg.meta(*labels[n].args)), view_preds[n])
            else:
                g.add_node(base.nodes[n], view_preds[n])
            for s in succs[n]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(heap, s)
        if len(g.nodes) != len(view_preds):
            raise QueryError("collapsing produced a cycle")
        g.bindings = {k: target(v) for k, v in base.bindings.items()}
        g._next_token = base._next_token
        self._graph = g
        self._hidden = hidden

    @property
    def graph(self) -> pg.ProvGraph:
        self._compute()
        return self._graph

    @property
    def hidden(self) -> set[int]:
        self._compute()
        return set().union(*self._hidden.values()) if self._hidden else set()

    def hidden_by_invocation(self) -> dict[int, set[int]]:
        self._compute()
        return {k: set(v) for k, v in self._hidden.items()}


def _as_view(graph_or_view) -> ZoomView:
    if isinstance(graph_or_view, ZoomView):
        return graph_or_view
    return ZoomView(graph_or_view)


def zoom_out(graph_or_view, selector, modules: Iterable[str] | None = None) -> ZoomView:
    """Collapse each invocation of the selected module(s) into a Meta node.

    ``selector`` is a module name, a glob pattern, or a collection of them.
    ``modules`` lists module names that are valid even without invocations.
    """
    view = _as_view(graph_or_view)
    known = frozenset(view.known_modules | set(modules or ()))
    chosen = _select(view.base, selector, known)
    return ZoomView(view.base, frozenset(view.collapsed | chosen), known)


def zoom_in(view: ZoomView | pg.ProvGraph, selector):
    """Restore the selected collapsed modules; returns the base graph once nothing is collapsed."""
    if not isinstance(view, ZoomView):
        raise QueryError("graph has no collapsed modules")
    patterns = [selector] if isinstance(selector, str) else list(selector)
    chosen = set()
    for pat in patterns:
        hits = {m for m in view.collapsed if fnmatch.fnmatchcase(m, pat)}
        if not hits:
            raise QueryError(f"{pat!r} is not collapsed in this view")
        chosen |= hits
    rest = frozenset(view.collapsed - chosen)
    if not rest:
        return view.base
    return ZoomView(view.base, rest, view.known_modules)


def materialize(graph_or_view) -> pg.ProvGraph:
    return graph_or_view.graph if isinstance(graph_or_view, ZoomView) else graph_or_view


# -- deletion propagation --------------------------------------------------------------


@dataclass
class DeletionResult:
    graph: pg.ProvGraph  # surviving nodes, ids preserved
    deleted: set
    agg_values: dict  # Agg node id -> recomputed value (None: no value left)

    def survives(self, node: int) -> bool:
        return node not in self.deleted


def _check_seed(graph: pg.ProvGraph, seed: int) -> None:
    node = graph.node(seed)
    if node.label.tag != pg.TOKEN and node.cls not in ("i", "s"):
        raise QueryError(f"node {seed} ({node.label}) is not a deletable base fact")


def _agg_value(graph: pg.ProvGraph, agg: int, deleted: set):
    op = graph.nodes[agg].label.args[0]
    alive = [p for p in graph.preds[agg] if p not in deleted]
    operands = []
    for t in alive:
        if graph.nodes[t].label.tag == pg.TENSOR:
            const = next(p for p in graph.preds[t] if graph.nodes[p].label.tag == pg.CONST)
            operands.append(graph.nodes[const].label.args[0])
        elif op == "COUNT":
            operands.append(1)  # simplified aggregate: member p-nodes directly
        else:
            return None
    if op == "COUNT":
        return len(operands)
    return AGG_FOLDS[op](operands)


_ANY = (pg.TIMES, pg.BB, pg.META)
_ALL = (pg.PLUS, pg.DELTA)


def deleted_closure(graph: pg.ProvGraph, seeds: Iterable[int]) -> set[int]:
    seeds = set(seeds)
    for s in seeds:
        _check_seed(graph, s)
    affected = set(seeds)
    for s in seeds:
        affected |= graph.descendants(s)
    deleted = set()
    for n in graph.topological_order(affected):
        if n in seeds:
            deleted.add(n)
            continue
        node = graph.nodes[n]
        tag = node.label.tag
        preds = graph.preds[n]
        if tag in _ANY:
            if any(p in deleted for p in preds):
                deleted.add(n)
        elif tag in _ALL:
            if preds and all(p in deleted for p in preds):
                deleted.add(n)
        elif tag == pg.TENSOR:
            if any(p in deleted and graph.nodes[p].kind == pg.P for p in preds):
                deleted.add(n)
        elif tag == pg.AGG:
            if preds and all(p in deleted for p in preds):
                deleted.add(n)
        # tokens that are not seeds, constants and invocations are never deleted
    return deleted


def delete_propagate(graph: pg.ProvGraph, seeds: Iterable[int]) -> DeletionResult:
    """Propagate the absence of ``seeds`` (tokens or class i/s nodes).

    Times, BB and Meta nodes die with any predecessor; Plus and Delta only
    when all predecessors die; a Tensor dies with its provenance operand; an
    Agg dies when all its Tensors die and is otherwise recomputed over the
    survivors.
    """
    seeds = set(seeds)
    deleted = deleted_closure(graph, seeds)
    affected_aggs = {s for d in deleted for s in graph.succs[d] if graph.nodes[s].label.tag == pg.AGG}
    agg_values = {a: _agg_value(graph, a, deleted) for a in sorted(affected_aggs)}
    for a in agg_values:
        if a in deleted and graph.nodes[a].label.args[0] in ("COUNT", "SUM"):
            agg_values[a] = 0
    survivors = [n for n in graph.nodes if n not in deleted]
    return DeletionResult(graph.induced(survivors), deleted, agg_values)


def _seed_set(seed) -> set[int]:
    return {seed} if isinstance(seed, int) else set(seed)


def depends_on(graph: pg.ProvGraph, node: int, seed) -> bool:
    """True iff ``node`` does not survive deleting ``seed`` (one id or a set)."""
    graph.node(node)
    return node in deleted_closure(graph, _seed_set(seed))


def subgraph(graph: pg.ProvGraph, node: int) -> pg.ProvGraph:
    """Ancestors, the node, descendants, and every predecessor of a descendant."""
    graph.node(node)
    desc = graph.descendants(node)
    keep = graph.ancestors(node) | {node} | desc
    for d in desc:
        keep.update(graph.preds[d])
    return graph.induced(keep)


def critical_tokens(graph: pg.ProvGraph, node: int, memo: dict | None = None) -> frozenset:
    """Tokens whose individual deletion removes ``node``.

    Single-pass alternative to one deletion propagation per token: joint use
    (Times, BB, Meta, Tensor) takes the union of its operands' critical sets,
    alternatives (Plus, Delta, Agg) the intersection.
    """
    memo = {} if memo is None else memo
    if node in memo:
        return memo[node]
    todo = [n for n in graph.topological_order(graph.ancestors(node) | {node}) if n not in memo]
    for n in todo:
        label = graph.nodes[n].label
        preds = graph.preds[n]
        if label.tag == pg.TOKEN:
            memo[n] = frozenset((n,))
        elif label.tag in _ANY:
            memo[n] = frozenset().union(*(memo[p] for p in preds))
        elif label.tag == pg.TENSOR:
            memo[n] = frozenset().union(*(memo[p] for p in preds if graph.nodes[p].kind == pg.P))
        elif label.tag in _ALL or label.tag == pg.AGG:
            sets = [memo[p] for p in preds]
            memo[n] = frozenset.intersection(*sets) if sets else frozenset()
        else:
            memo[n] = frozenset()
    return memo[node]


def dependency_fraction(graph: pg.ProvGraph, node: int, tokens: Iterable[int], memo: dict | None = None) -> float:
    tokens = set(tokens)
    if not tokens:
        return 0.0
    return len(critical_tokens(graph, node, memo) & tokens) / len(tokens)


def surviving_rows(result: DeletionResult, rel: AnnotatedRelation) -> list[tuple]:
    """Rows of ``rel`` that survive, with aggregate fields recomputed."""
    rows = []
    for t in rel.tuples:
        if t.pnode in result.deleted:
            continue
        values = list(t.values)
        for pos, agg in (t.vbind or {}).items():
            if agg in result.agg_values:
                values[pos] = result.agg_values[agg]
        rows.append(tuple(values))
    return canonicalize(rows)
