import json

import pytest

from specdep.builder import Channel, DelayMechanism, MicroOpKind
from specdep.cli import EXIT_CLEAN, EXIT_FINDINGS, EXIT_USAGE, UsageError, main, parse_threat_model
from specdep.dot import ROLE_COLORS, to_dot

from .conftest import CORPUS
from .dotcheck import DotError, parse_dot

V1 = str(CORPUS / "spectre_v1.sir")
FENCED = str(CORPUS / "fenced.sir")
MELTDOWN = str(CORPUS / "meltdown.sir")
V1_TM = "branch-prediction,mem,flush-reload"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_threat_model():
    tm = parse_threat_model("delayed-exception,mem+cache,flush-reload+prime-probe")
    assert tm.delay_mechanisms == {DelayMechanism.DELAYED_EXCEPTION}
    assert tm.secret_sources == {MicroOpKind.READ_MEMORY, MicroOpKind.READ_CACHE}
    assert tm.channels == set(Channel)
    assert parse_threat_model("tsx-abort,lfb").channels == {Channel.FLUSH_RELOAD}


@pytest.mark.parametrize("bad", ["branch-prediction", "warp-drive,mem", "tsx-abort,cache-fill", ",mem,flush-reload"])
def test_bad_threat_model(bad):
    with pytest.raises(UsageError):
        parse_threat_model(bad)


def test_analyze_spectre(capsys):
    code, out, _ = run(capsys, "analyze", V1, "--tm", V1_TM, "--format", "json")
    assert code == EXIT_FINDINGS
    report = json.loads(out)
    assert report["schema"] == 1
    assert len(report["findings"]) == 2
    for f in report["findings"]:
        assert f["variants"][0]["template"] == "Spectre v1"
        assert f["variants"][0]["quality"] == "exact"


def test_analyze_fenced_is_clean(capsys):
    code, out, _ = run(capsys, "analyze", FENCED, "--tm", V1_TM)
    assert code == EXIT_CLEAN
    assert "0 finding(s)" in out


def test_analyze_meltdown_with_defense(capsys):
    code, out, _ = run(
        capsys,
        "analyze",
        MELTDOWN,
        "--tm",
        "delayed-exception,mem+cache,flush-reload",
        "--defend",
        "prevent-access",
        "--format",
        "json",
    )
    assert code == EXIT_CLEAN
    (plan,) = json.loads(out)["plans"]
    assert plan["sufficient"]
    assert plan["inserted_edges"] == [
        ["i1 permission-check", "i1 read-memory", "security-dep"],
        ["i1 permission-check", "i1 read-cache", "security-dep"],
    ]


def test_defense_exit_status(capsys):
    code, _, _ = run(capsys, "analyze", V1, "--tm", V1_TM, "--defend", "prevent-send")
    assert code == EXIT_CLEAN
    code, _, _ = run(capsys, "analyze", MELTDOWN, "--preset", "lvi", "--defend", "clear-predictions")
    assert code == EXIT_FINDINGS


def test_text_report_quotes_table_wording(capsys):
    _, out, _ = run(capsys, "analyze", V1, "--tm", V1_TM)
    assert "Boundary-check branch resolution" in out
    assert "Read out-of-bounds memory" in out
    assert "CVE-2017-5753" in out


def test_parse_error_reports_file_and_line(tmp_path, capsys):
    bad = tmp_path / "bad.sir"
    bad.write_text(".region A\nr1 = load [B + 0]\n")
    code, _, err = run(capsys, "analyze", str(bad), "--tm", V1_TM)
    assert code == EXIT_USAGE
    assert f"{bad}:2: undeclared region B" in err


def test_usage_errors(capsys):
    assert run(capsys, "analyze", V1, "--tm", "nonsense")[0] == EXIT_USAGE
    assert run(capsys, "analyze", V1, "--tm", V1_TM, "--preset", "meltdown")[0] == EXIT_USAGE
    assert run(capsys, "analyze", V1, "--preset", "nope")[0] == EXIT_USAGE
    assert run(capsys, "analyze", "/no/such/file.sir")[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE


def test_json_is_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        run(capsys, "analyze", V1, MELTDOWN, "--tm", V1_TM, "--format", "json", "--out", str(path))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert isinstance(json.loads(outs[0]), list)


def test_graph_dot(capsys):
    code, out, _ = run(capsys, "graph", V1, "--tm", V1_TM)
    assert code == EXIT_CLEAN
    nodes, edges = parse_dot(out)
    assert len(nodes) == 9
    labels = {a["label"].strip('"') for a in nodes.values()}
    assert '3:i3 branch_cond r1, r2, skip' in labels
    assert not any("dashed" in e[2].get("style", "") for e in edges)


def test_graph_with_defense_adds_one_dashed_red_edge(capsys):
    _, out, _ = run(capsys, "graph", V1, "--tm", V1_TM, "--with-defense", "prevent-send")
    _, edges = parse_dot(out)
    dashed = [e for e in edges if e[2].get("style") == '"dashed"']
    assert len(dashed) == 1
    assert dashed[0][2]["color"] == '"red"'


def test_graph_empty_program(tmp_path, capsys):
    empty = tmp_path / "empty.sir"
    empty.write_text("; nothing here\n")
    _, out, _ = run(capsys, "graph", str(empty))
    assert out == 'digraph "empty" {\n}\n'
    assert parse_dot(out) == ({}, [])


def test_dot_role_colors(spectre_graph):
    nodes, _ = parse_dot(to_dot(spectre_graph))
    for n in range(len(spectre_graph)):
        assert nodes[f"n{n}"]["fillcolor"].strip('"') == ROLE_COLORS[spectre_graph.role(n)]


def test_dot_checker_rejects_garbage():
    for bad in ["graph {}", "digraph { a -> }", "digraph { a [x=] }", "digraph { a } b"]:
        with pytest.raises(DotError):
            parse_dot(bad)


def test_variants(capsys):
    code, out, _ = run(capsys, "variants", "--format", "json")
    assert code == EXIT_CLEAN
    rows = json.loads(out)
    names = {n for r in rows for n in r["known"]}
    assert len(names) == 18
    _, out, _ = run(capsys, "variants", "--novel-only", "--format", "json")
    novel = json.loads(out)
    assert novel and all(not r["known"] for r in novel)
    _, out, _ = run(capsys, "variants", "--tm", V1_TM, "--format", "json")
    (row,) = json.loads(out)
    assert row["known"][0] == "Spectre v1"


def test_catalog(capsys):
    _, out, _ = run(capsys, "catalog")
    assert len(out.strip().splitlines()) == 18
    _, out, _ = run(capsys, "catalog", "--format", "json")
    assert len(json.loads(out)) == 18
    _, out, _ = run(capsys, "catalog", "--name", "Foreshadow*")
    assert [line.split()[0] for line in out.strip().splitlines()] == [
        "Foreshadow",
        "Foreshadow-OS",
        "Foreshadow-VMM",
    ]
