import random

import pytest

from annotated_oracle import random_program

from lipstick.pigparse import (
    Cogroup,
    Comparison,
    FieldRef,
    Filter,
    ForeachAggregate,
    ForeachBB,
    ForeachProject,
    Join,
    Literal,
    Order,
    PigSyntaxError,
    PigTypeError,
    Union,
    format_program,
    parse,
    resolve_and_typecheck,
)
from lipstick.relmodel import Schema

ENV = {
    "Cars": Schema.parse("Cars(CarId:chararray, Model:chararray)"),
    "Requests": Schema.parse("Requests(UserId:chararray, BidId:chararray, Model:chararray)"),
    "Sold": Schema.parse("Sold(CarId:chararray, BidId:chararray)"),
}
BB = {"Price": Schema.parse("Price(Model:chararray, Amount:double)")}


def test_parses_every_statement_kind():
    prog = parse("""
        -- comments are skipped
        A = FOREACH Cars GENERATE Model, 'x' AS Tag;
        B = FILTER Cars BY Model == 'Civic' AND CarId != 'C_1';
        C = JOIN Cars BY Model, Requests BY Model;
        D = GROUP Cars BY Model;
        E = COGROUP Cars BY Model, Requests BY Model;
        F = FOREACH D GENERATE group AS Model, COUNT(Cars) AS N;
        G = UNION Cars, Sold;
        H = DISTINCT Cars;
        I = ORDER Cars BY CarId DESC;
        J = FOREACH E GENERATE FLATTEN(Price(Model, Cars));
    """)
    kinds = [type(s) for s in prog.statements]
    assert kinds[:3] == [ForeachProject, Filter, Join]
    assert isinstance(prog.statements[4], Cogroup) and len(prog.statements[4].sources) == 2
    assert isinstance(prog.statements[5], ForeachAggregate) and prog.statements[5].agg.op == "COUNT"
    assert isinstance(prog.statements[6], Union)
    assert isinstance(prog.statements[8], Order) and prog.statements[8].descending
    bb = prog.statements[9]
    assert isinstance(bb, ForeachBB) and bb.flatten and bb.bb == "Price"
    assert prog.statements[1].cond == (
        Comparison(FieldRef(("Model",)), "==", Literal("Civic")),
        Comparison(FieldRef(("CarId",)), "!=", Literal("C_1")),
    )


def test_keywords_are_case_insensitive():
    assert parse("a = foreach Cars generate Model;") == parse("a = FOREACH Cars GENERATE Model;")


@pytest.mark.parametrize(
    "text, line",
    [
        ("A = FOREACH Cars GENERATE Model", 1),
        ("A = FOREACH Cars GENERATE Model;\nB = SELECT Cars;", 2),
        ("A = UNION Cars;", 1),
        ("A = FOREACH Cars GENERATE COUNT(Cars), Model;", 1),
        ("A = FILTER Cars BY Model ~ 'x';", 1),
    ],
)
def test_syntax_errors_carry_positions(text, line):
    with pytest.raises(PigSyntaxError) as info:
        parse(text)
    assert info.value.line == line


def test_format_parse_roundtrip_fixed():
    text = """
        A = FOREACH Cars GENERATE Model, 'it''s' AS Tag, 2.5 AS W, true AS Ok;
        B = FILTER A BY W >= 1 AND Ok;
        C = ORDER B BY Model ASC;
        D = FOREACH Cars GENERATE CarId BAG;
    """.replace("'it''s'", "'it\\'s'")
    prog = parse(text)
    assert parse(format_program(prog)) == prog


@pytest.mark.parametrize("seed", range(40))
def test_format_parse_roundtrip_random(seed):
    _, text, _ = random_program(random.Random(seed))
    prog = parse(text)
    assert parse(format_program(prog)) == prog


def test_typecheck_join_qualifies_only_colliding_names():
    out = resolve_and_typecheck(parse("J = JOIN Cars BY CarId, Sold BY CarId;"), ENV)
    assert out["J"].names == ("Cars::CarId", "Model", "Sold::CarId", "BidId")


def test_typecheck_group_and_aggregate():
    out = resolve_and_typecheck(parse("""
        G = GROUP Cars BY Model;
        N = FOREACH G GENERATE group AS Model, COUNT(Cars) AS NumAvail;
    """), ENV)
    assert isinstance(out["G"].types[1], Schema)
    assert out["N"].names == ("Model", "NumAvail") and out["N"].types == ("chararray", "int")


def test_typecheck_black_box_and_flatten():
    out = resolve_and_typecheck(parse("""
        G = COGROUP Requests BY Model, Cars BY Model;
        B = FOREACH G GENERATE FLATTEN(Price(group, Cars));
    """), ENV, BB)
    assert out["B"].same_shape(BB["Price"])


@pytest.mark.parametrize(
    "text",
    [
        "A = FOREACH Nope GENERATE Model;",
        "A = FOREACH Cars GENERATE Price;",
        "A = UNION Cars, Requests;",
        "G = GROUP Cars BY Model; A = FOREACH G GENERATE group, SUM(Cars.Model);",
        "A = FILTER Cars BY Model == 3;",
        "A = DISTINCT Cars; A = DISTINCT Cars;",
        "Cars = DISTINCT Cars;",
        "A = FOREACH Cars GENERATE FLATTEN(Unknown(Model));",
        "A = FOREACH Cars GENERATE 'x';",
    ],
)
def test_typecheck_rejects(text):
    with pytest.raises(PigTypeError):
        resolve_and_typecheck(parse(text), ENV, BB)


def test_state_relation_may_be_reassigned_once_with_same_shape():
    state = {"Sold": ENV["Sold"]}
    ok = parse("New = FILTER Sold BY BidId == 'B'; Sold = UNION Sold, New;")
    assert resolve_and_typecheck(ok, ENV, reassignable=state)["Sold"].name == "Sold"
    wrong = parse("Sold = FOREACH Sold GENERATE CarId;")
    with pytest.raises(PigTypeError):
        resolve_and_typecheck(wrong, ENV, reassignable=state)
