import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipstick import provgraph as pg
from lipstick.provgraph import GraphError, GraphFormatError, Label, Polynomial


def small_graph():
    g = pg.ProvGraph()
    a = g.fresh_token("s", "Cars#0")
    b = g.fresh_token("i", "Req#0")
    inv = g.extend(pg.invocation("M", "n1", 0), cls="m")
    wa = g.extend(Label(pg.TIMES), [a, inv], cls="s")
    wb = g.extend(Label(pg.TIMES), [b, inv], cls="i")
    j = g.extend(Label(pg.TIMES), [wa, wb])
    plus = g.extend(Label(pg.PLUS), [j])
    d = g.extend(Label(pg.DELTA), [plus])
    one = g.extend(pg.const(1))
    t = g.extend(Label(pg.TENSOR), [j, one])
    agg = g.extend(Label(pg.AGG, ("COUNT",)), [t])
    g.bind("Cars", 0, a)
    return g, dict(a=a, b=b, inv=inv, wa=wa, wb=wb, j=j, plus=plus, d=d, one=one, t=t, agg=agg)


def test_ids_are_sequential_and_kinds_fixed():
    g, n = small_graph()
    assert sorted(g.nodes) == list(range(len(g)))
    assert g.node(n["agg"]).kind == pg.V and g.node(n["d"]).kind == pg.P
    assert g.node(n["inv"]).cls == "m"
    assert g.tokens() == [n["a"], n["b"]]
    assert g.invocations() == [n["inv"]]


def test_structural_checks():
    g, n = small_graph()
    with pytest.raises(GraphError):
        g.extend(Label(pg.TENSOR), [n["j"], n["wa"]])
    with pytest.raises(GraphError):
        g.extend(Label(pg.DELTA), [])
    with pytest.raises(GraphError):
        g.extend(Label(pg.PLUS), [999])
    with pytest.raises(GraphError):
        g.extend(Label(pg.PLUS), [n["a"]], cls="bogus")
    with pytest.raises(GraphError):
        g.fresh_token("o")
    with pytest.raises(GraphError):
        g.bind("X", 0, n["agg"])
    with pytest.raises(GraphError):
        g.node(12345)


def test_reachability_and_order():
    g, n = small_graph()
    assert g.ancestors(n["j"]) == {n["a"], n["b"], n["inv"], n["wa"], n["wb"]}
    assert g.descendants(n["a"]) == {n["wa"], n["j"], n["plus"], n["d"], n["t"], n["agg"]}
    order = g.topological_order()
    pos = {x: i for i, x in enumerate(order)}
    assert all(pos[p] < pos[d] for p, d in g.edges())


def test_induced_preserves_ids_and_bindings():
    g, n = small_graph()
    sub = g.induced({n["a"], n["wa"], n["inv"]})
    assert sorted(sub.nodes) == sorted([n["a"], n["wa"], n["inv"]])
    assert sub.bindings == {("Cars", 0): n["a"]}
    assert sub.preds[n["wa"]] == tuple(sorted((n["a"], n["inv"])))


def test_stats_counts_labels_and_classes():
    g, _ = small_graph()
    s = pg.stats(g)
    assert s["nodes"] == len(g) and s["edges"] == g.edge_count
    assert s["by_label"]["times"] == 3
    assert s["by_label"]["agg:COUNT"] == 1
    assert s["by_class"]["m"] == 1


def test_polynomial_of_nodes():
    g, n = small_graph()
    x0, x1 = Polynomial.token(0), Polynomial.token(1)
    assert pg.eval_polynomial(g, n["j"]) == x0 * x1
    assert pg.eval_polynomial(g, n["d"]) == Polynomial.delta(x0 * x1)
    assert pg.eval_polynomial(g, n["d"], {0: Polynomial.zero()}).is_zero()
    inv = pg.eval_polynomial(g, n["wa"], invocation_tokens=True)
    assert inv != x0
    with pytest.raises(GraphError):
        pg.eval_polynomial(g, n["agg"])


def test_serialize_roundtrip_and_format():
    g, _ = small_graph()
    g.bind("odd name/with space", 3, 0)
    data = pg.serialize(g)
    assert data.startswith(b"PG 1 ")
    back = pg.deserialize(data)
    assert pg.serialize(back) == data
    assert back.bindings == g.bindings


def test_serialize_const_values_of_every_kind():
    g = pg.ProvGraph()
    for v in (3, 2.5, "a b\tc", True, ""):
        g.extend(pg.const(v))
    back = pg.deserialize(pg.serialize(g))
    assert [n.label.args[0] for n in back.nodes.values()] == [3, 2.5, "a b\tc", True, ""]


@pytest.mark.parametrize(
    "data",
    [
        b"",
        b"XX 1 0 0 0\n",
        b"PG 2 0 0 0\n",
        b"PG 1 1 0 0\n",
        b"PG 1 1 0 0\nN 0 P plain nosuchtag\n",
        b"PG 1 2 1 0\nN 0 P s token 0 a\nN 1 P plain plus\nE 0 7\n",
        b"PG 1 2 2 0\nN 0 P plain plus\nN 1 P plain plus\nE 0 1\nE 1 0\n",
    ],
)
def test_deserialize_rejects_malformed(data):
    with pytest.raises(GraphFormatError):
        pg.deserialize(data)


# -- semiring laws -------------------------------------------------------------

polys = st.builds(
    lambda terms: Polynomial({tuple(sorted({("t", t): e for t, e in mono}.items())): c for mono, c in terms}),
    st.lists(st.tuples(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 2)), max_size=3),
                       st.integers(1, 3)), max_size=3),
)


@settings(max_examples=60)
@given(polys, polys, polys)
def test_semiring_laws(a, b, c):
    zero, one = Polynomial.zero(), Polynomial.one()
    assert a + b == b + a and a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + zero == a and a * one == a and (a * zero).is_zero()


@given(polys)
def test_delta_of_zero_is_zero(a):
    assert Polynomial.delta(Polynomial.zero()).is_zero()
    assert Polynomial.delta(a).is_zero() == a.is_zero()
    assert Polynomial.black_box("f", [a, Polynomial.zero()]).is_zero()
