from pathlib import Path

import pytest

from specdep.builder import DelayMechanism, MicroOpKind, ThreatModel, build_attack_graph
from specdep.ir import parse_program
from specdep.tsg import EdgeKind, Tsg

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"

SEVEN_EDGES = [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("C", "E"), ("D", "F"), ("E", "F"), ("F", "G")]


def seven_node_graph():
    g = Tsg()
    ids = {name: g.add_node(name) for name in "ABCDEFG"}
    for u, v in SEVEN_EDGES:
        g.add_edge(ids[u], ids[v], EdgeKind.DATA_DEP)
    return g, ids


def load(name: str):
    return parse_program((CORPUS / name).read_text())


SPECTRE_TM = ThreatModel(frozenset({DelayMechanism.BRANCH_PREDICTION}))
MELTDOWN_TM = ThreatModel(
    frozenset({DelayMechanism.DELAYED_EXCEPTION}),
    frozenset({MicroOpKind.READ_MEMORY, MicroOpKind.READ_CACHE}),
)


@pytest.fixture
def seven():
    return seven_node_graph()


@pytest.fixture
def spectre_graph():
    return build_attack_graph(load("spectre_v1.sir"), SPECTRE_TM)


@pytest.fixture
def meltdown_graph():
    return build_attack_graph(load("meltdown.sir"), MELTDOWN_TM)


def node_by_label(ag, fragment: str) -> int:
    hits = [n for n in range(len(ag)) if fragment in ag.label(n)]
    assert len(hits) == 1, (fragment, hits)
    return hits[0]


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("tests.test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance.RESULTS):
        title, ok = acceptance.RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
