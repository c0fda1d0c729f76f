"""Random black-box-free two-module workflows for deletion tests."""

from __future__ import annotations

import random
from collections import Counter

from annotated_oracle import random_program

from lipstick.pigparse import PigTypeError, parse, resolve_and_typecheck
from lipstick.relmodel import Schema
from lipstick.workflow import Edge, ModuleSpec, Workflow, run_workflow

PAIR = "x:int, y:int"


def _module(name, ins, states, out, q_state_text, body, last, final_agg):
    env = {s.name: s for s in ins + states}
    tail = f"{out} = FOREACH {last} GENERATE $0 AS x, $LAST AS y;"
    if final_agg:
        fn, field = final_agg
        arg = "$1" if fn == "COUNT" else f"$1.${field}"
        tail = f"{name}Grp = GROUP {last} BY $0;\n{out} = FOREACH {name}Grp GENERATE $0 AS x, {fn}({arg}) AS y;"
    q_state = parse(q_state_text)
    after = resolve_and_typecheck(q_state, env, reassignable={s.name: s for s in states})
    env.update(after)
    prog_body = parse(body)
    arity = resolve_and_typecheck(prog_body, env)[last].arity if body.strip() else env[last].arity
    if final_agg:
        fn, field = final_agg
        tail = tail.replace(f"$1.${field}", f"$1.${min(field, arity - 1)}")
    q_out = parse(body + "\n" + tail.replace("$LAST", f"${min(1, arity - 1)}"))
    return ModuleSpec(name, ins, states, (Schema.parse(f"{out}({PAIR})"),), q_state, q_out)


def random_workflow(seed: int):
    """Module A reads input In and state Sa; C passes input In2 through; B reads both outputs and state Sb.

    Aggregates appear only as the last statement of B, so deletion can
    recompute them in place.
    """
    rng = random.Random(seed)
    while True:
        try:
            ins_a = (Schema.parse(f"In({PAIR})"),)
            st_a = (Schema.parse(f"Sa({PAIR})"),)
            qs_a = rng.choice(["", "Sa = UNION Sa, In;", "Keep = FILTER In BY x >= 2; Sa = UNION Sa, Keep;"])
            _, body_a, last_a = random_program(rng, 3, aggregates=False, base={"In": 2, "Sa": 2}, prefix="a")
            mod_a = _module("Ma", ins_a, st_a, "Oa", qs_a, body_a, last_a, None)
            ins_b = (Schema.parse(f"Oa({PAIR})"), Schema.parse(f"Oc({PAIR})"))
            st_b = (Schema.parse(f"Sb({PAIR})"),)
            qs_b = rng.choice(["", "Sb = UNION Sb, Oa;"])
            _, body_b, last_b = random_program(rng, 3, aggregates=False, base={"Oa": 2, "Oc": 2, "Sb": 2},
                                               prefix="b")
            agg = None
            if rng.random() < 0.6:
                agg = (rng.choice(["COUNT", "SUM", "MIN", "MAX"]), rng.randrange(2))
            mod_b = _module("Mb", ins_b, st_b, "Ob", qs_b, body_b, last_b, agg)
            break
        except PigTypeError:
            continue
    mod_c = ModuleSpec("Mc", (Schema.parse(f"In2({PAIR})"),), (), (Schema.parse(f"Oc({PAIR})"),),
                       parse(""), parse("Oc = FOREACH In2 GENERATE x, y;"))
    wf = Workflow({"a": "Ma", "b": "Mb", "c": "Mc"}, [Edge("a", "b", ("Oa",)), Edge("c", "b", ("Oc",))],
                  ("a", "c"), ("b",))
    modules = {"Ma": mod_a, "Mb": mod_b, "Mc": mod_c}

    def rows():
        return [(rng.randrange(4), rng.randrange(4)) for _ in range(rng.randint(0, 5))]

    state = {"Ma": {"Sa": rows()}, "Mb": {"Sb": rows()}}
    inputs = [{"a": {"In": rows()}, "c": {"In2": rows()}} for _ in range(rng.randint(1, 3))]
    return wf, modules, state, inputs


def without(state, inputs, sources):
    """Copies of ``state`` and ``inputs`` with the rows behind ``sources`` removed."""
    state = {m: {r: list(rows) for r, rows in rels.items()} for m, rels in state.items()}
    inputs = [{n: {r: list(rows) for r, rows in rels.items()} for n, rels in inp.items()} for inp in inputs]
    for src in sources:
        target = state[src.owner] if src.origin == "state" else inputs[src.execution][src.owner]
        rows = target[src.relation]
        match = next(i for i, r in enumerate(rows) if tuple(r) == tuple(src.row))
        del rows[match]
    return state, inputs


def rerun(wf, modules, state, inputs):
    return run_workflow(wf, modules, None, state, inputs, provenance=False)


def rows_of(rel):
    return Counter(tuple(r) for r in rel.rows)
