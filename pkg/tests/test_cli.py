import csv
import io
import json
from pathlib import Path

from lipstick import provgraph as pg
from lipstick import provquery as pq
from lipstick.cli import Shell, main

FIXTURE = Path(__file__).parent / "fixtures" / "example"


def run_fixture(tmp_path, *extra):
    graph = tmp_path / "g.pg"
    code = main(["run", str(FIXTURE / "workflow.wf"), "--input-dir", str(FIXTURE / "inputs"),
                 "--state-dir", str(FIXTURE / "state"), "--out-dir", str(tmp_path / "out"),
                 "--graph", str(graph), *extra])
    return code, graph


def test_run_writes_outputs_state_and_graph(tmp_path):
    code, graph = run_fixture(tmp_path)
    assert code == 0
    assert (tmp_path / "out" / "0" / "dealer1.Bids.txt").read_text() == "Civic\t20000.0\n"
    assert (tmp_path / "out" / "state" / "M_dealer1.Cars.txt").exists()
    g = pg.deserialize(graph.read_bytes())
    assert ("e0/out/dealer1.Bids", 0) in g.bindings


def test_run_without_provenance_writes_no_graph(tmp_path):
    code, graph = run_fixture(tmp_path, "--no-prov")
    assert code == 0 and not graph.exists()
    assert (tmp_path / "out" / "0" / "dealer1.Bids.txt").exists()


def test_run_error_exit_codes(tmp_path, capsys):
    args = ["run", str(FIXTURE / "workflow.wf"), "--input-dir", str(FIXTURE / "inputs"),
            "--out-dir", str(tmp_path / "out")]
    assert main(args + ["--state-dir", str(tmp_path / "missing")]) == 2
    assert main(args + ["--order", "nowhere"]) == 2
    bad = tmp_path / "bad.wf"
    bad.write_text("MODULE M\nFROB\n")
    assert main(["run", str(bad), "--input-dir", str(FIXTURE / "inputs")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["run"]) == 1
    assert main(["query", "g.pg", "--depends", "1"]) == 1
    assert main([]) == 1


def test_query_depends(tmp_path, capsys):
    _, graph = run_fixture(tmp_path)
    g = pg.deserialize(graph.read_bytes())
    out = g.bindings[("e0/out/dealer1.Bids", 0)]
    crit = pq.critical_tokens(g, out)
    other = next(t for t in g.tokens() if t not in crit)
    capsys.readouterr()
    assert main(["query", str(graph), "--depends", str(out), str(min(crit))]) == 0
    assert main(["query", str(graph), "--depends", str(out), str(other)]) == 0
    assert capsys.readouterr().out.split() == ["true", "false"]


def test_query_graph_results(tmp_path, capsys):
    _, graph = run_fixture(tmp_path)
    same = tmp_path / "same.pg"
    assert main(["query", str(graph), "--delete", "-o", str(same)]) == 0
    assert same.read_bytes() == graph.read_bytes()

    g = pg.deserialize(graph.read_bytes())
    lone = g.fresh_token("i", "nobody")
    graph.write_bytes(pg.serialize(g))
    sub = tmp_path / "sub.pg"
    assert main(["query", str(graph), "--subgraph", str(lone), "-o", str(sub)]) == 0
    assert list(pg.deserialize(sub.read_bytes()).nodes) == [lone]

    capsys.readouterr()
    assert main(["query", str(graph), "--zoom-out", "M_*", "--stats"]) == 0
    stats = json.loads(capsys.readouterr().out.splitlines()[0])
    assert stats["by_class"]["meta"] == 1 and "plain" not in stats["by_class"]


def test_query_errors(tmp_path):
    _, graph = run_fixture(tmp_path)
    assert main(["query", str(graph), "--subgraph", "99999"]) == 2
    assert main(["query", str(graph), "--zoom-out", "Nope"]) == 2
    assert main(["query", str(tmp_path / "nothing.pg"), "--stats"]) == 2
    junk = tmp_path / "junk.pg"
    junk.write_bytes(b"not a graph")
    assert main(["query", str(junk), "--stats"]) == 2


def test_gen_then_run(tmp_path):
    out = tmp_path / "arctic"
    assert main(["gen", "arctic", "--stations", "3", "--topology", "serial", "--num-exec", "2",
                 "--out", str(out)]) == 0
    assert main(["run", str(out / "workflow.wf"), "--input-dir", str(out / "inputs"),
                 "--state-dir", str(out / "state"), "--out-dir", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "1" / "out.Result.txt").exists()
    assert main(["gen", "dealerships", "--num-cars", "6", "--out", str(tmp_path / "d")]) == 1


def test_bench_csv(tmp_path):
    target = tmp_path / "bench.csv"
    assert main(["bench", "arctic", "--stations", "2", "--num-exec", "1", "--repetitions", "1",
                 "--mean", "--csv", str(target)]) == 0
    rows = list(csv.reader(io.StringIO(target.read_text())))
    assert rows[0][:3] == ["family", "topology", "modules"] and len(rows) == 3


def test_shell_session(tmp_path):
    _, graph = run_fixture(tmp_path)
    g = pg.deserialize(graph.read_bytes())
    saved = tmp_path / "zoomed.pg"
    script = io.StringIO(f"stats\nzoomout M_*\nsave {saved}\nzoomin Nope\ndepends 1\nreset\nquit\n")
    out = io.StringIO()
    Shell(g, stdin=script, stdout=out).cmdloop()
    text = out.getvalue()
    assert json.loads(text[text.index("{"):text.index("}\n") + 1])["nodes"] == len(g)
    assert pg.deserialize(saved.read_bytes()).view
    assert "error:" in text and "usage: depends" in text
