import pytest

from lipstick import provgraph as pg
from lipstick.evalengine import (
    AnnotatedRelation,
    BBRegistry,
    BlackBoxError,
    Deferred,
    EvalEnv,
    EvaluationError,
    eval_program,
)
from lipstick.pigparse import parse
from lipstick.provgraph import Polynomial
from lipstick.relmodel import Bag, Schema

CARS = Schema.parse("Cars(CarId:chararray, Model:chararray)")
REQ = Schema.parse("Req(UserId:chararray, Model:chararray)")


def setup(graph=True, **kw):
    g = pg.ProvGraph() if graph else None
    cars = [("C1", "Accord"), ("C2", "Civic"), ("C3", "Civic")]
    req = [("U1", "Civic"), ("U2", "Jazz")]
    toks = {}

    def rel(schema, rows, name):
        nodes = None
        if g is not None:
            nodes = [g.fresh_token("s" if name == "Cars" else "i", f"{name}#{k}") for k in range(len(rows))]
            toks.update({r: n for r, n in zip(rows, nodes)})
        return AnnotatedRelation.from_rows(schema, rows, nodes, name)

    env = EvalEnv({"Cars": rel(CARS, cars, "Cars"), "Req": rel(REQ, req, "Req")}, g, **kw)
    return env, g, toks


def poly(g, node):
    return pg.eval_polynomial(g, node)


def x(tok):
    return Polynomial.token(tok)


def run(env, text):
    return eval_program(env, parse(text))


def test_projection_merges_equal_values_under_plus():
    env, g, toks = setup()
    run(env, "M = FOREACH Cars GENERATE Model;")
    rows = env["M"].rows
    assert rows == [("Accord",), ("Civic",)]
    civic = env["M"].tuples[1].pnode
    assert g.node(civic).label.tag == pg.PLUS
    assert poly(g, civic) == x(toks[("C2", "Civic")]) + x(toks[("C3", "Civic")])


def test_bag_projection_keeps_multiplicities():
    env, _, _ = setup()
    run(env, "M = FOREACH Cars GENERATE Model BAG;")
    assert env["M"].rows == [("Accord",), ("Civic",), ("Civic",)]


def test_filter_adds_no_nodes():
    env, g, toks = setup()
    before = len(g)
    run(env, "F = FILTER Cars BY Model == 'Civic';")
    assert len(g) == before
    assert [t.pnode for t in env["F"].tuples] == [toks[("C2", "Civic")], toks[("C3", "Civic")]]


def test_join_uses_times_nodes():
    env, g, toks = setup()
    run(env, "J = JOIN Cars BY Model, Req BY Model;")
    assert env["J"].rows == [("C2", "Civic", "U1", "Civic"), ("C3", "Civic", "U1", "Civic")]
    t = env["J"].tuples[0]
    assert g.node(t.pnode).label.tag == pg.TIMES
    assert poly(g, t.pnode) == x(toks[("C2", "Civic")]) * x(toks[("U1", "Civic")])


def test_group_delta_and_nested_nodes():
    env, g, toks = setup()
    run(env, "G = GROUP Cars BY Model;")
    civic = env["G"].tuples[1]
    assert civic.values[1] == Bag([("C2", "Civic"), ("C3", "Civic")])
    assert set(civic.values[1].nodes) == {toks[("C2", "Civic")], toks[("C3", "Civic")]}
    assert g.node(civic.pnode).label.tag == pg.DELTA
    assert poly(g, civic.pnode) == Polynomial.delta(x(toks[("C2", "Civic")]) + x(toks[("C3", "Civic")]))


def test_cogroup_keeps_empty_bags():
    env, _, _ = setup()
    run(env, "C = COGROUP Cars BY Model, Req BY Model;")
    rows = {r[0]: r for r in env["C"].rows}
    assert rows["Jazz"][1] == Bag() and len(rows["Jazz"][2]) == 1
    assert rows["Accord"][2] == Bag()


def test_count_aggregate_builds_tensors():
    env, g, toks = setup()
    run(env, "G = GROUP Cars BY Model; N = FOREACH G GENERATE group AS Model, COUNT(Cars) AS Num;")
    assert env["N"].rows == [("Accord", 1), ("Civic", 2)]
    t = env["N"].tuples[1]
    agg = t.vbind[1]
    assert g.node(agg).label == pg.Label(pg.AGG, ("COUNT",))
    tensors = g.preds[agg]
    assert len(tensors) == 2 and all(g.node(n).label.tag == pg.TENSOR for n in tensors)
    consts = {p for n in tensors for p in g.preds[n] if g.node(p).label.tag == pg.CONST}
    assert len(consts) == 1  # the constant 1 is shared


def test_simplified_aggregate_skips_tensors():
    env, g, toks = setup(simplified_agg=True)
    run(env, "G = GROUP Cars BY Model; N = FOREACH G GENERATE group AS Model, COUNT(Cars) AS Num;")
    agg = env["N"].tuples[1].vbind[1]
    assert set(g.preds[agg]) == {toks[("C2", "Civic")], toks[("C3", "Civic")]}


def test_min_over_empty_bag_is_an_error():
    env, _, _ = setup()
    with pytest.raises(EvaluationError):
        run(env, """
            X = FOREACH Cars GENERATE Model, 1 AS One;
            C = COGROUP X BY Model, Req BY Model;
            Bad = FOREACH C GENERATE group AS Model, MIN(X.One) AS First;
        """)


def test_distinct_and_union():
    env, g, toks = setup()
    run(env, "M = FOREACH Cars GENERATE Model BAG; U = UNION M, M; D = DISTINCT U;")
    assert len(env["U"]) == 6
    assert env["D"].rows == [("Accord",), ("Civic",)]
    assert g.node(env["D"].tuples[0].pnode).label.tag == pg.DELTA


def test_flatten_pairs_outer_and_inner():
    env, g, toks = setup()
    run(env, "G = GROUP Cars BY Model; F = FOREACH G GENERATE group AS K, FLATTEN(Cars);")
    assert env["F"].rows == [("Accord", "C1", "Accord"), ("Civic", "C2", "Civic"), ("Civic", "C3", "Civic")]
    c2 = x(toks[("C2", "Civic")])
    group = Polynomial.delta(c2 + x(toks[("C3", "Civic")]))
    assert poly(g, env["F"].tuples[1].pnode) == group * c2


def test_order_keeps_nodes_and_sorts():
    env, g, _ = setup()
    before = len(g)
    run(env, "O = ORDER Cars BY CarId DESC;")
    assert [r[0] for r in env["O"].rows] == ["C3", "C2", "C1"]
    assert len(g) == before


def test_black_box_node_depends_on_relation_arguments():
    reg = BBRegistry()
    reg.register("Quote", lambda model, stock: [(model, float(len(stock)))], "Q(Model:chararray, N:double)")
    env, g, toks = setup(registry=reg)
    run(env, "B = FOREACH Req GENERATE FLATTEN(Quote(Model, Cars));")
    assert env["B"].rows == [("Civic", 3.0), ("Jazz", 3.0)]
    node = env["B"].tuples[0].pnode
    assert g.node(node).label == pg.Label(pg.BB, ("Quote",))
    assert set(toks.values()) - {toks[("U2", "Jazz")]} == set(g.preds[node])


def test_black_box_failures_are_reported():
    reg = BBRegistry()
    reg.register("Boom", lambda m: 1 / 0, "Q(N:double)")
    reg.register("Wrong", lambda m: [("not a number",)], "Q(N:double)")
    env, _, _ = setup(registry=reg)
    with pytest.raises(BlackBoxError, match="Boom"):
        run(env, "B = FOREACH Req GENERATE FLATTEN(Boom(Model));")
    with pytest.raises(BlackBoxError, match="violates"):
        run(env, "W = FOREACH Req GENERATE FLATTEN(Wrong(Model));")
    with pytest.raises(EvaluationError, match="not registered"):
        run(env, "Z = FOREACH Req GENERATE FLATTEN(Nope(Model));")


def test_single_assignment_and_one_state_reassignment():
    env, _, _ = setup(reassignable=["Cars"])
    run(env, "Cars = FILTER Cars BY Model == 'Civic';")
    assert len(env["Cars"]) == 2
    with pytest.raises(EvaluationError):
        run(env, "Cars = FILTER Cars BY Model == 'Civic';")
    with pytest.raises(EvaluationError):
        run(env, "Req = FILTER Req BY Model == 'Civic';")


def test_no_graph_mode_produces_same_values():
    text = """
        J = JOIN Cars BY Model, Req BY Model;
        G = GROUP J BY Req::Model;
        N = FOREACH G GENERATE group AS Model, COUNT(J) AS Num;
    """
    on, _, _ = setup()
    off, _, _ = setup(graph=False)
    run(on, text)
    run(off, text)
    assert on["N"].rows == off["N"].rows == [("Civic", 2)]
    assert all(t.pnode is None for t in off["N"].tuples)


def test_deferred_state_wrappers_materialize_once():
    g = pg.ProvGraph()
    tok = g.fresh_token("s")
    inv = g.extend(pg.invocation("M", "n", 0), cls="m")
    d = Deferred(tok, inv)
    assert d.settle() == tok
    node = d.materialize(g)
    assert d.materialize(g) == node and d.settle() == node
    assert g.node(node).cls == "s" and set(g.preds[node]) == {tok, inv}
