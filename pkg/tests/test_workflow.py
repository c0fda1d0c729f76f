import heapq
import textwrap

import pytest

from lipstick import provgraph as pg
from lipstick import workflowgen as gen
from lipstick.relmodel import Schema
from lipstick.workflow import (
    Edge,
    ExecutionError,
    ModuleSpec,
    Runner,
    Workflow,
    WorkflowError,
    format_workflow_file,
    parse_workflow_file,
    read_input_sequence,
    read_instance_dir,
    run_workflow,
    topological_order,
    validate_workflow,
    write_instance_dir,
)
from lipstick.pigparse import parse

COUNTER = textwrap.dedent("""
    # orders of at least five units are logged and counted
    MODULE M_src
    INPUT Orders(Id:chararray, Qty:int)
    OUTPUT Big(Id:chararray, Qty:int)
    QSTATE { }
    QOUT { Big = FILTER Orders BY Qty >= 5; }

    MODULE M_log
    INPUT Big(Id:chararray, Qty:int)
    STATE Seen(Id:chararray, Qty:int)
    OUTPUT Total(K:chararray, N:int)
    QSTATE {
      Seen = UNION Seen, Big;
    }
    QOUT {
      One = FOREACH Seen GENERATE 'all' AS K, Id;
      G = GROUP One BY K;
      Total = FOREACH G GENERATE group AS K, COUNT(One) AS N;
    }

    WORKFLOW
    NODE src : M_src
    NODE log : M_log
    EDGE src -> log : Big
    IN src
    OUT log
""")


def counter():
    wfile = parse_workflow_file(COUNTER)
    return wfile.workflow, wfile.modules


def test_state_threads_across_executions():
    wf, modules = counter()
    inputs = [{"src": {"Orders": [("a", 7), ("b", 1)]}}, {"src": {"Orders": [("c", 9)]}}, {"src": {}}]
    log = run_workflow(wf, modules, None, {}, inputs)
    totals = [r.output_rows()["log"]["Total"] for r in log.executions]
    assert totals == [[("all", 1)], [("all", 2)], [("all", 2)]]
    assert log.final_state.rows()["M_log"]["Seen"] == [("a", 7), ("c", 9)]
    assert log.initial_state.rows()["M_log"]["Seen"] == []


def test_coarse_wiring_classes():
    wf, modules = counter()
    log = run_workflow(wf, modules, None, {"M_log": {"Seen": [("z", 5)]}}, [{"src": {"Orders": [("a", 7)]}}])
    g = log.graph
    invs = [g.node(n) for n in g.invocations()]
    assert sorted(n.label.args[0] for n in invs) == ["M_log", "M_src"]
    assert all(n.cls == "m" for n in invs)
    total = log.executions[0].outputs["log"]["Total"].tuples[0]
    assert g.node(total.pnode).cls == "o"
    # every i/s/o wrapper has the invocation among its predecessors
    inv_ids = set(g.invocations())
    for n in g.nodes.values():
        if n.cls in ("i", "s", "o") and n.label.tag == pg.TIMES:
            assert inv_ids & set(g.preds[n.id])
    assert ("e0/out/log.Total", 0) in g.bindings
    assert ("e0/in/src.Orders", 0) in g.bindings
    assert ("state/M_log.Seen", 0) in g.bindings


def test_provenance_off_gives_same_outputs():
    wf, modules = counter()
    inputs = [{"src": {"Orders": [("a", 7), ("b", 5)]}}]
    on = run_workflow(wf, modules, None, {}, inputs)
    off = run_workflow(wf, modules, None, {}, inputs, provenance=False)
    assert off.graph is None
    assert on.executions[0].output_rows() == off.executions[0].output_rows()


def _orders(wf, count):
    """A few distinct topological orders (ties broken in different ways)."""
    out = []
    for salt in range(count):
        indeg = {n: 0 for n in wf.nodes}
        for e in wf.edges:
            indeg[e.dst] += 1
        heap = [(hash((salt, n)) if salt else n, n) for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            _, n = heapq.heappop(heap)
            order.append(n)
            for e in wf.out_edges(n):
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    heapq.heappush(heap, (hash((salt, e.dst)) if salt else e.dst, e.dst))
        out.append(order)
    return out


def test_topological_orders_give_equivalent_runs():
    run = gen.gen_dealerships(gen.DealershipParams(numCars=40, numExec=3, seed=5))
    results = []
    for order in _orders(run.workflow, 4):
        log = run.run(order=order)
        results.append(([r.output_rows() for r in log.executions], log.final_state.rows(),
                         pg.stats(log.graph)["by_label_class"], log.graph.edge_count))
    assert all(r == results[0] for r in results[1:])


def test_explicit_order_must_be_topological():
    wf, _ = counter()
    assert topological_order(wf) == ["src", "log"]
    with pytest.raises(WorkflowError):
        topological_order(wf, ["log", "src"])
    with pytest.raises(WorkflowError):
        topological_order(wf, ["src"])


def _spec(name, ins=(), outs=(), q_out=""):
    s_in = tuple(Schema.parse(f"{r}(x:int)") for r in ins)
    s_out = tuple(Schema.parse(f"{r}(x:int)") for r in outs)
    return ModuleSpec(name, s_in, (), s_out, parse(""), parse(q_out))


def chain():
    mods = {
        "A": _spec("A", ["I"], ["X"], "X = FILTER I BY x > 0;"),
        "B": _spec("B", ["X"], ["Y"], "Y = DISTINCT X;"),
    }
    return mods


@pytest.mark.parametrize(
    "nodes, edges, ins, outs, reason",
    [
        ({}, [], (), (), "no nodes"),
        ({"a": "A", "b": "Nope"}, [], ("a",), ("b",), "unknown module"),
        ({"a": "A", "b": "B"}, [Edge("a", "b", ("Z",))], ("a",), ("b",), "not an output"),
        ({"a": "A", "b": "B"}, [Edge("a", "a", ("X",))], ("a",), ("b",), "self-loop"),
        ({"a": "A", "b": "B"}, [], ("a",), ("b",), "connected"),
        ({"a": "A", "b": "B"}, [Edge("a", "b", ("X",))], ("a", "b"), ("b",), "incoming"),
        ({"a": "A", "b": "B"}, [Edge("a", "b", ("X",))], ("a",), ("a",), "outgoing"),
    ],
)
def test_validation_failures(nodes, edges, ins, outs, reason):
    report = validate_workflow(Workflow(nodes, edges, ins, outs), chain())
    assert not report
    assert reason in report.reason


def test_cycle_is_rejected():
    mods = {
        "A": _spec("A", ["I"], ["X"], "X = FILTER I BY x > 0;"),
        "B": _spec("B", ["X"], ["Y"], "Y = DISTINCT X;"),
        "C": _spec("C", ["Y"], ["X", "Z"], "X = DISTINCT Y; Z = DISTINCT Y;"),
        "D": _spec("D", ["Z"], ["W"], "W = DISTINCT Z;"),
    }
    edges = [Edge("a", "b", ("X",)), Edge("b", "c", ("Y",)), Edge("c", "b2", ("X",)),
             Edge("b2", "c", ("Y",)), Edge("c", "d", ("Z",))]
    nodes = {"a": "A", "b": "B", "b2": "B", "c": "C", "d": "D"}
    report = validate_workflow(Workflow(nodes, edges, ("a",), ("d",)), mods)
    assert not report and "cycle" in report.reason


def test_validation_accepts_chain_and_rejects_bad_queries():
    wf = Workflow({"a": "A", "b": "B"}, [Edge("a", "b", ("X",))], ("a",), ("b",))
    assert validate_workflow(wf, chain())
    mods = chain()
    mods["B"] = _spec("B", ["X"], ["Y"], "Y = FILTER X BY nope > 0;")
    assert not validate_workflow(wf, mods)
    with pytest.raises(WorkflowError):
        Runner(wf, mods)


def test_missing_input_coverage_is_reported():
    mods = chain()
    mods["B"] = _spec("B", ["X", "W"], ["Y"], "Y = UNION X, W;")
    wf = Workflow({"a": "A", "b": "B"}, [Edge("a", "b", ("X",))], ("a",), ("b",))
    report = validate_workflow(wf, mods)
    assert not report and "W" in report.reason


def test_black_box_failure_names_execution_and_node():
    text = COUNTER.replace("Big = FILTER Orders BY Qty >= 5;",
                           "Big = FOREACH Orders GENERATE FLATTEN(Fail(Id, Qty));")
    text = "BLACKBOX Fail math:sqrt Big(Id:chararray, Qty:int)\n" + text
    wfile = parse_workflow_file(text)
    with pytest.raises(ExecutionError) as info:
        run_workflow(wfile.workflow, wfile.modules, wfile.registry(), {}, [{"src": {"Orders": [("a", 1)]}}])
    assert info.value.node == "src" and info.value.execution == 0


def test_unknown_state_or_input_owner_is_rejected():
    wf, modules = counter()
    runner = Runner(wf, modules)
    with pytest.raises(WorkflowError):
        runner.initial_state({"M_nope": {"Seen": []}})
    with pytest.raises(WorkflowError):
        runner.initial_state({"M_log": {"Nope": []}})
    state = runner.initial_state({"log": {"Seen": [("q", 5)]}})  # node ids map to modules
    assert state.rows()["M_log"]["Seen"] == [("q", 5)]
    with pytest.raises(WorkflowError):
        runner.execute_once({"log": {"Big": []}}, state)


# -- file formats ---------------------------------------------------------------


def test_workflow_file_roundtrip():
    for run in (gen.example_run(), gen.gen_dealerships(gen.DealershipParams(numCars=8, numExec=1)),
                gen.gen_arctic(gen.ArcticParams(topology="dense", numStations=4))):
        text = format_workflow_file(run.workflow_file())
        again = parse_workflow_file(text)
        assert format_workflow_file(again) == text
        assert again.modules == run.modules
        assert validate_workflow(again.workflow, again.modules, again.registry().schemas)


@pytest.mark.parametrize(
    "text, line",
    [
        ("MODULE\n", 1),
        ("\nINPUT R(a:int)\n", 2),
        ("MODULE M\nINPUT R(a:blob)\n", 2),
        ("MODULE M\nQOUT {\n  X = FILTER R BY a > 1;\n", 2),
        ("MODULE M\nFROB\n", 2),
        ("WORKFLOW\nNODE a\n", 2),
        ("WORKFLOW\nEDGE a -> b\n", 2),
        ("MODULE M\nMODULE M\n", 2),
    ],
)
def test_workflow_file_errors_carry_line_numbers(text, line):
    with pytest.raises(WorkflowError, match=f"line {line}"):
        parse_workflow_file(text)


def test_query_syntax_errors_report_file_lines():
    with pytest.raises(WorkflowError, match="line 3"):
        parse_workflow_file("MODULE M\nQOUT {\n  X = BOGUS R;\n}\n")


def test_instance_directories_roundtrip(tmp_path):
    wf, modules = counter()
    write_instance_dir(tmp_path / "state", {"M_log": {"Seen": [("b", 6), ("a", 5)]}})
    assert read_instance_dir(str(tmp_path / "state"), wf, modules, kind="state") == {
        "M_log": {"Seen": (("a", 5), ("b", 6))}
    }
    for i, rows in enumerate([[("a", 9)], [("b", 1)]]):
        write_instance_dir(tmp_path / "in" / str(i), {"src": {"Orders": rows}})
    seq = read_input_sequence(str(tmp_path / "in"), wf, modules)
    assert [s["src"]["Orders"] for s in seq] == [(("a", 9),), (("b", 1),)]
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "log.Orders.txt").write_text("a\t1\n")
    with pytest.raises(WorkflowError):
        read_instance_dir(str(tmp_path / "bad"), wf, modules, kind="input")
    with pytest.raises(WorkflowError):
        read_instance_dir(str(tmp_path / "nowhere"), wf, modules, kind="state")
