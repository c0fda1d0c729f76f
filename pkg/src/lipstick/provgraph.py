"""Provenance graph store, N[X] polynomial evaluation and file format.

Nodes are either p-nodes (provenance structure) or v-nodes (values such as
aggregates and constants). Every node carries a class tag: ``i``/``o``/``s``
for module input, output and state nodes, ``m`` for module invocations,
``meta`` for collapsed invocations in zoomed views and ``plain`` otherwise.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping
from urllib.parse import quote, unquote

from .relmodel import atom_kind, format_value

P, V = "P", "V"
CLASSES = ("i", "o", "s", "m", "plain", "meta")

TOKEN, PLUS, TIMES, DELTA = "token", "plus", "times", "delta"
TENSOR, AGG, BB, CONST = "tensor", "agg", "bb", "const"
INVOCATION, META = "inv", "meta"

_FIXED_KIND = {
    TOKEN: P, PLUS: P, TIMES: P, DELTA: P, INVOCATION: P, META: P,
    TENSOR: V, AGG: V, CONST: V,
}
_ARITY = {TOKEN: 2, PLUS: 0, TIMES: 0, DELTA: 0, TENSOR: 0, AGG: 1, BB: 1, CONST: 1, INVOCATION: 3, META: 3}

FORMAT_VERSION = 1


class GraphError(ValueError):
    pass


class GraphFormatError(GraphError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Label:
    tag: str
    args: tuple = ()

    def __str__(self):
        if not self.args:
            return self.tag
        return f"{self.tag}({', '.join(map(str, self.args))})"

    @property
    def key(self) -> str:
        """Short key used for statistics, e.g. ``agg:COUNT`` or ``bb:CalcBid``."""
        if self.tag in (AGG, BB):
            return f"{self.tag}:{self.args[0]}"
        return self.tag


def token(token_id: int, name: str = "") -> Label:
    return Label(TOKEN, (token_id, name))


def const(value) -> Label:
    return Label(CONST, (value,))


def invocation(module: str, node: str, index: int) -> Label:
    return Label(INVOCATION, (module, node, index))


def meta(module: str, node: str, index: int) -> Label:
    return Label(META, (module, node, index))


@dataclass(frozen=True)
class ProvNode:
    id: int
    kind: str
    cls: str
    label: Label


class ProvGraph:
    """Append-only DAG of provenance nodes.

    Predecessor lists are kept sorted and may repeat an id: ``t * t`` is a
    Times node with the same predecessor twice.
    """

    def __init__(self, *, view: bool = False):
        self.nodes: dict[int, ProvNode] = {}
        self.preds: dict[int, tuple[int, ...]] = {}
        self.succs: dict[int, list[int]] = {}
        self.bindings: dict[tuple[str, int], int] = {}
        self.view = view
        self._next_id = 0
        self._next_token = 0

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, node_id):
        return node_id in self.nodes

    @property
    def edge_count(self) -> int:
        return sum(len(p) for p in self.preds.values())

    def edges(self) -> list[tuple[int, int]]:
        return sorted((src, dst) for dst, ps in self.preds.items() for src in ps)

    def node(self, node_id: int) -> ProvNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise GraphError(f"unknown node id {node_id}") from None

    def add_node(self, node: ProvNode, preds: Iterable[int] = ()) -> int:
        """Insert a node with an explicit id (deserialization, views)."""
        if node.id in self.nodes:
            raise GraphError(f"duplicate node id {node.id}")
        preds = tuple(sorted(preds))
        for p in preds:
            if p not in self.nodes:
                raise GraphError(f"unknown predecessor {p} for node {node.id}")
        self.nodes[node.id] = node
        self.preds[node.id] = preds
        self.succs[node.id] = []
        for p in preds:
            self.succs[p].append(node.id)
        self._next_id = max(self._next_id, node.id + 1)
        if node.label.tag == TOKEN:
            self._next_token = max(self._next_token, node.label.args[0] + 1)
        return node.id

    def extend(self, label: Label, preds: Iterable[int] = (), *, kind: str | None = None, cls: str = "plain") -> int:
        """Append a node built from existing predecessors and return its id."""
        preds = tuple(preds)
        tag = label.tag
        if kind is None:
            kind = _FIXED_KIND.get(tag, P)
        elif tag in _FIXED_KIND and _FIXED_KIND[tag] != kind:
            raise GraphError(f"{tag} nodes are {_FIXED_KIND[tag]}-nodes")
        if cls not in CLASSES:
            raise GraphError(f"unknown node class {cls!r}")
        if tag == TOKEN and preds:
            raise GraphError("token nodes have no predecessors")
        if tag == DELTA and not preds:
            raise GraphError("delta needs at least one predecessor")
        if tag == TENSOR:
            if len(preds) != 2:
                raise GraphError("tensor needs exactly two predecessors")
            kinds = sorted(self.node(p).kind for p in preds)
            if kinds != [P, V]:
                raise GraphError("tensor pairs one p-node with one v-node")
        node = ProvNode(self._next_id, kind, cls, label)
        return self.add_node(node, preds)

    def fresh_token(self, cls: str, name: str = "") -> int:
        if cls not in ("i", "s"):
            raise GraphError("tokens are input (i) or state (s) nodes")
        label = token(self._next_token, name)
        return self.extend(label, (), cls=cls)

    def bind(self, relation_id: str, ordinal: int, node_id: int) -> None:
        if self.node(node_id).kind != P:
            raise GraphError(f"binding target {node_id} is not a p-node")
        self.bindings[(relation_id, ordinal)] = node_id

    def tokens(self) -> list[int]:
        return [n for n, node in self.nodes.items() if node.label.tag == TOKEN]

    def invocations(self) -> list[int]:
        return [n for n, node in self.nodes.items() if node.label.tag == INVOCATION]

    def ancestors(self, node_id: int) -> set[int]:
        seen = set()
        stack = list(self.preds[node_id])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.preds[n])
        return seen

    def descendants(self, node_id: int) -> set[int]:
        seen = set()
        stack = list(self.succs[node_id])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.succs[n])
        return seen

    def topological_order(self, subset: Iterable[int] | None = None) -> list[int]:
        """Kahn order over ``subset`` (default all nodes), ties by ascending id."""
        import heapq

        nodes = set(self.nodes if subset is None else subset)
        indeg = {n: sum(1 for p in self.preds[n] if p in nodes) for n in nodes}
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            n = heapq.heappop(heap)
            order.append(n)
            for s in self.succs[n]:
                if s in nodes:
                    indeg[s] -= 1
                    if indeg[s] == 0:
                        heapq.heappush(heap, s)
        if len(order) != len(nodes):
            raise GraphError("graph contains a cycle")
        return order

    def induced(self, keep: Iterable[int], *, view: bool | None = None) -> "ProvGraph":
        """Subgraph on ``keep`` with ids, labels and bindings preserved."""
        keep = set(keep)
        out = ProvGraph(view=self.view if view is None else view)
        for n in sorted(keep):
            out.add_node(self.nodes[n], [p for p in self.preds[n] if p in keep])
        out.bindings = {k: v for k, v in self.bindings.items() if v in keep}
        out._next_token = self._next_token
        return out

    def copy(self) -> "ProvGraph":
        return self.induced(self.nodes)


# -- statistics ----------------------------------------------------------------


def stats(graph: ProvGraph) -> dict:
    labels = Counter()
    classes = Counter()
    label_class = Counter()
    kinds = Counter()
    for node in graph.nodes.values():
        labels[node.label.key] += 1
        classes[node.cls] += 1
        kinds[node.kind] += 1
        label_class[f"{node.label.key}/{node.cls}"] += 1
    return {
        "nodes": len(graph.nodes),
        "edges": graph.edge_count,
        "bindings": len(graph.bindings),
        "by_label": dict(sorted(labels.items())),
        "by_class": dict(sorted(classes.items())),
        "by_kind": dict(sorted(kinds.items())),
        "by_label_class": dict(sorted(label_class.items())),
    }


# -- polynomials -----------------------------------------------------------------


class Polynomial:
    """Normalized element of N[X] extended with symbolic delta and black-box atoms.

    ``terms`` is a sorted tuple of ``(monomial, coefficient)``; a monomial is
    a sorted tuple of ``(atom, exponent)``. Atoms are ``("t", token_id)``,
    ``("d", terms)`` for delta applied to a polynomial and
    ``("b", name, (terms, ...))`` for an opaque black-box result.
    """

    __slots__ = ("terms",)

    def __init__(self, mapping: Mapping | None = None):
        mapping = mapping or {}
        self.terms = tuple(sorted((m, c) for m, c in mapping.items() if c))

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def one(cls):
        return cls({(): 1})

    @classmethod
    def atom(cls, atom):
        return cls({((atom, 1),): 1})

    @classmethod
    def token(cls, token_id: int):
        return cls.atom(("t", token_id))

    @classmethod
    def delta(cls, inner: "Polynomial"):
        if inner.is_zero():
            return cls.zero()
        return cls.atom(("d", inner.terms))

    @classmethod
    def black_box(cls, name: str, args: Iterable["Polynomial"]):
        args = tuple(args)
        if any(a.is_zero() for a in args):
            return cls.zero()
        return cls.atom(("b", name, tuple(sorted(a.terms for a in args))))

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        acc = dict(self.terms)
        for m, c in other.terms:
            acc[m] = acc.get(m, 0) + c
        return Polynomial(acc)

    def __mul__(self, other):
        acc = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                exps = dict(m1)
                for a, e in m2:
                    exps[a] = exps.get(a, 0) + e
                mono = tuple(sorted(exps.items()))
                acc[mono] = acc.get(mono, 0) + c1 * c2
        return Polynomial(acc)

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __repr__(self):
        return f"Polynomial({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        return " + ".join(_format_term(m, c) for m, c in self.terms)


def _format_atom(atom) -> str:
    if atom[0] == "t":
        return f"x{atom[1]}"
    if atom[0] == "d":
        return f"δ({Polynomial(dict(atom[1]))})"
    return f"{atom[1]}(" + ", ".join(str(Polynomial(dict(a))) for a in atom[2]) + ")"


def _format_term(mono, coeff) -> str:
    factors = [_format_atom(a) + (f"^{e}" if e > 1 else "") for a, e in mono]
    if coeff != 1 or not factors:
        factors.insert(0, str(coeff))
    return "·".join(factors)


def eval_polynomial(
    graph: ProvGraph,
    node_id: int,
    assignment: Mapping[int, Polynomial] | None = None,
    *,
    invocation_tokens: bool = False,
    _memo: dict | None = None,
) -> Polynomial:
    """Provenance polynomial denoted by a p-node.

    ``assignment`` maps token ids to replacement polynomials (e.g. zero for
    deleted tokens). Module invocation nodes evaluate to 1 unless
    ``invocation_tokens`` is set, in which case each is its own atom.
    """
    if graph.node(node_id).kind != P:
        raise GraphError(f"node {node_id} is a value node")
    assignment = assignment or {}
    memo = {} if _memo is None else _memo
    stack = [node_id]
    while stack:
        n = stack[-1]
        if n in memo:
            stack.pop()
            continue
        preds = [p for p in graph.preds[n] if graph.nodes[p].kind == P]
        missing = [p for p in preds if p not in memo]
        if missing:
            stack.extend(missing)
            continue
        stack.pop()
        node = graph.nodes[n]
        tag = node.label.tag
        values = [memo[p] for p in preds]
        if tag == TOKEN:
            tid = node.label.args[0]
            result = assignment.get(tid, Polynomial.token(tid))
        elif tag == PLUS:
            result = _sum(values)
        elif tag == TIMES:
            result = Polynomial.one()
            for v in values:
                result = result * v
        elif tag == DELTA:
            result = Polynomial.delta(_sum(values))
        elif tag == INVOCATION:
            result = Polynomial.atom(("m",) + tuple(node.label.args)) if invocation_tokens else Polynomial.one()
        elif tag == BB:
            result = Polynomial.black_box(node.label.args[0], values)
        elif tag == META:
            result = Polynomial.black_box("meta", values)
        else:
            raise GraphError(f"cannot evaluate {node.label} as provenance")
        memo[n] = result
    return memo[node_id]


def _sum(values):
    result = Polynomial.zero()
    for v in values:
        result = result + v
    return result


# -- serialization ---------------------------------------------------------------


def _enc(arg) -> str:
    s = str(arg)
    if s == "":
        return "%"
    return quote(s, safe="!\"#$&'()*+,-./:;<=>?@[\\]^_`{|}~")


def _dec(s: str) -> str:
    return "" if s == "%" else unquote(s)


def _label_args(label: Label) -> list[str]:
    tag, args = label.tag, label.args
    if tag == CONST:
        value = args[0]
        return [atom_kind(value), _enc(format_value(value) if not isinstance(value, str) else value)]
    if tag in (INVOCATION, META):
        return [_enc(args[0]), _enc(args[1]), str(args[2])]
    if tag == TOKEN:
        return [str(args[0]), _enc(args[1])]
    return [_enc(a) for a in args]


def _parse_label(tag: str, args: list[str], lineno: int) -> Label:
    if tag not in _ARITY:
        raise GraphFormatError(f"unknown label tag {tag!r}", lineno)
    expected = _ARITY[tag] + (1 if tag == CONST else 0)
    if len(args) != expected:
        raise GraphFormatError(f"{tag} takes {expected} arguments, got {len(args)}", lineno)
    try:
        if tag == TOKEN:
            return Label(TOKEN, (int(args[0]), _dec(args[1])))
        if tag == CONST:
            kind, raw = args[0], _dec(args[1])
            if kind == "int":
                value = int(raw)
            elif kind == "double":
                value = float(raw)
            elif kind == "boolean":
                value = raw == "true"
            elif kind == "chararray":
                value = raw
            else:
                raise ValueError(kind)
            return Label(CONST, (value,))
        if tag in (INVOCATION, META):
            return Label(tag, (_dec(args[0]), _dec(args[1]), int(args[2])))
    except ValueError as exc:
        raise GraphFormatError(f"bad label argument: {exc}", lineno) from None
    return Label(tag, tuple(_dec(a) for a in args))


def serialize(graph: ProvGraph) -> bytes:
    edges = graph.edges()
    bindings = sorted(graph.bindings.items())
    header = f"PG {FORMAT_VERSION} {len(graph.nodes)} {len(edges)} {len(bindings)}"
    if graph.view:
        header += " view"
    lines = [header]
    for n in sorted(graph.nodes):
        node = graph.nodes[n]
        lines.append(" ".join(["N", str(n), node.kind, node.cls, node.label.tag] + _label_args(node.label)))
    lines.extend(f"E {s} {d}" for s, d in edges)
    lines.extend(f"B {_enc(rel)} {ordinal} {n}" for (rel, ordinal), n in bindings)
    return ("\n".join(lines) + "\n").encode("utf-8")


def deserialize(data: bytes | str) -> ProvGraph:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise GraphFormatError("empty stream", 1)
    head = lines[0].split(" ")
    if len(head) not in (5, 6) or head[0] != "PG" or (len(head) == 6 and head[5] != "view"):
        raise GraphFormatError("bad header", 1)
    try:
        version, n_nodes, n_edges, n_bind = (int(x) for x in head[1:5])
    except ValueError:
        raise GraphFormatError("bad header counts", 1) from None
    if version != FORMAT_VERSION:
        raise GraphFormatError(f"unsupported version {version}", 1)
    if len(lines) - 1 != n_nodes + n_edges + n_bind:
        raise GraphFormatError(
            f"header announces {n_nodes + n_edges + n_bind} records, found {len(lines) - 1}", 1
        )
    graph = ProvGraph(view=len(head) == 6)
    pending: dict[int, list[int]] = {}
    parsed_nodes = []
    for offset, line in enumerate(lines[1:1 + n_nodes]):
        lineno = offset + 2
        parts = line.split(" ")
        if len(parts) < 5 or parts[0] != "N":
            raise GraphFormatError("expected node record", lineno)
        try:
            node_id = int(parts[1])
        except ValueError:
            raise GraphFormatError("bad node id", lineno) from None
        if parts[2] not in (P, V) or parts[3] not in CLASSES:
            raise GraphFormatError("bad node kind or class", lineno)
        label = _parse_label(parts[4], parts[5:], lineno)
        parsed_nodes.append(ProvNode(node_id, parts[2], parts[3], label))
        pending[node_id] = []
    base = 1 + n_nodes
    for offset, line in enumerate(lines[base:base + n_edges]):
        lineno = base + offset + 1
        parts = line.split(" ")
        if len(parts) != 3 or parts[0] != "E":
            raise GraphFormatError("expected edge record", lineno)
        try:
            src, dst = int(parts[1]), int(parts[2])
        except ValueError:
            raise GraphFormatError("bad edge endpoint", lineno) from None
        if src not in pending or dst not in pending:
            raise GraphFormatError(f"dangling edge {src} -> {dst}", lineno)
        pending[dst].append(src)
    # insert in topological order so add_node sees predecessors first
    by_id = {n.id: n for n in parsed_nodes}
    indeg = {n: len(set(ps)) for n, ps in pending.items()}
    succs: dict[int, set[int]] = {n: set() for n in pending}
    for dst, ps in pending.items():
        for src in ps:
            succs[src].add(dst)
    ready = sorted(n for n, d in indeg.items() if d == 0)
    import heapq

    heapq.heapify(ready)
    while ready:
        n = heapq.heappop(ready)
        graph.add_node(by_id[n], pending[n])
        for s in succs[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, s)
    if len(graph.nodes) != len(pending):
        raise GraphFormatError("edges form a cycle")
    base += n_edges
    for offset, line in enumerate(lines[base:base + n_bind]):
        lineno = base + offset + 1
        parts = line.split(" ")
        if len(parts) != 4 or parts[0] != "B":
            raise GraphFormatError("expected binding record", lineno)
        try:
            ordinal, node_id = int(parts[2]), int(parts[3])
        except ValueError:
            raise GraphFormatError("bad binding record", lineno) from None
        if node_id not in graph.nodes:
            raise GraphFormatError(f"binding to unknown node {node_id}", lineno)
        graph.bindings[(_dec(parts[1]), ordinal)] = node_id
    graph._next_id = max(graph.nodes, default=-1) + 1
    return graph
