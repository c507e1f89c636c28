import json

import pytest

from specdep.builder import (
    READ_KINDS,
    AccessPattern,
    AuthPattern,
    Channel,
    DelayMechanism,
    MicroOpKind,
    ThreatModel,
    build_attack_graph,
)
from specdep.catalog import (
    CATALOG_ENV,
    AttackVariantTemplate,
    CatalogError,
    builtin_catalog,
    enumerate_variants,
    find_templates,
    load_catalog,
    match_finding,
    match_patterns,
    preset_threat_model,
)
from specdep.defense import find_vulnerabilities
from specdep.ir import TargetClass

from .conftest import CORPUS, load

K = MicroOpKind
D = DelayMechanism

# CVE column of the known-attack table, where one is given
CVES = {
    "Spectre v1": "CVE-2017-5753",
    "Spectre v1.1": "CVE-2018-3693",
    "Spectre v2": "CVE-2017-5715",
    "Meltdown (Spectre v3)": "CVE-2017-5754",
    "Spectre v3a": "CVE-2018-3640",
    "Spectre v4": "CVE-2018-3639",
    "Spectre RSB": "CVE-2018-15572",
    "Foreshadow": "CVE-2018-3615",
    "Foreshadow-OS": "CVE-2018-3620",
    "Foreshadow-VMM": "CVE-2018-3646",
    "Lazy FP": "CVE-2018-3665",
}


def test_eighteen_templates():
    cat = builtin_catalog()
    assert len(cat) == 18
    assert len({t.name for t in cat}) == 18


def test_cves():
    for t in builtin_catalog():
        assert t.cve == CVES.get(t.name)


def test_table_wording():
    cat = load_catalog()
    assert cat.get("Spectre v4").authorization == "Store-load address dependency resolution"
    assert cat.get("LVI").access.startswith("Forward data from micro-architectural buffers")
    assert cat.get("Spectre v1").authorization == "Boundary-check branch resolution"
    assert cat.get("Meltdown (Spectre v3)").access == "Read from kernel memory"
    assert cat.get("Fallout").access == "Forward data from store buffer"


def test_spoiler_is_listed_as_unmodeled():
    cat = load_catalog()
    assert [u["name"] for u in cat.unmodeled] == ["Spoiler"]
    assert "Spoiler" not in {t.name for t in cat}


def test_template_round_trip():
    for t in builtin_catalog():
        assert AttackVariantTemplate.from_dict(json.loads(json.dumps(t.to_dict()))) == t


def test_name_filter():
    assert [t.name for t in find_templates("Foreshadow*")] == ["Foreshadow", "Foreshadow-OS", "Foreshadow-VMM"]


def test_gadget_finding_matches_spectre_v1(spectre_graph):
    for f in find_vulnerabilities(spectre_graph):
        assert [(m.template, m.match_quality) for m in match_finding(f)] == [("Spectre v1", "exact")]


def test_meltdown_memory_finding():
    ag = build_attack_graph(load("meltdown.sir"), ThreatModel({D.DELAYED_EXCEPTION}))
    f = find_vulnerabilities(ag)[0]
    assert [(m.template, m.match_quality) for m in match_finding(f)] == [("Meltdown (Spectre v3)", "exact")]


def test_fill_buffer_matches_ridl_and_zombieload():
    auth = AuthPattern("permission-check", "load")
    access = AccessPattern("read", K.READ_LINE_FILL_BUFFER, TargetClass.USER)
    assert match_patterns(auth, [access], builtin_catalog()) == [
        ("RIDL", "exact"),
        ("ZombieLoad", "exact"),
    ]


def test_partial_only_without_exact():
    auth = AuthPattern("cond-branch", "branch_cond")
    access = AccessPattern("read", K.READ_SPECIAL_REGISTER, None)
    got = match_patterns(auth, [access], builtin_catalog())
    assert got == [("Spectre v1", "partial"), ("Spectre v1.1", "partial")]
    assert match_patterns(AuthPattern("tsx-abort", "store"), [access], builtin_catalog()) == []


@pytest.mark.parametrize("template", builtin_catalog(), ids=lambda t: t.preset)
def test_fixture_reproduces_template(template):
    ag = build_attack_graph(load(f"catalog/{template.preset}.sir"), template.threat_model())
    findings = find_vulnerabilities(ag)
    assert findings
    assert any((template.name, "exact") in f.matched_variants for f in findings)


def _row(rows, d, s, c=Channel.FLUSH_RELOAD):
    hits = [r for r in rows if (r.delay, r.source, r.channel) == (d, s, c)]
    return hits[0] if hits else None


def test_enumeration_examples():
    rows = enumerate_variants()
    assert "Spectre v1" in _row(rows, D.BRANCH_PREDICTION, K.READ_MEMORY).known
    assert "Fallout" in _row(rows, D.DELAYED_EXCEPTION, K.READ_STORE_BUFFER).known
    assert _row(rows, D.LAZY_FPU_SWITCH, K.READ_LINE_FILL_BUFFER) is None


def test_enumeration_covers_catalog_and_finds_novel():
    rows = enumerate_variants()
    known = {n for r in rows for n in r.known}
    assert known == {t.name for t in builtin_catalog()}
    assert any(r.novel and r.status == "speculative combination" for r in rows)


def test_known_groups_stay_within_a_family():
    cat = load_catalog()
    for r in enumerate_variants():
        assert len({cat.get(n).family for n in r.known}) <= 1


def test_enumeration_order_is_lexicographic():
    rows = enumerate_variants()
    key = [(list(D).index(r.delay), READ_KINDS.index(r.source), list(Channel).index(r.channel)) for r in rows]
    assert key == sorted(key)


def test_enumeration_single_cell():
    tm = ThreatModel({D.BRANCH_PREDICTION}, {K.READ_MEMORY}, {Channel.FLUSH_RELOAD})
    (row,) = enumerate_variants(tm)
    assert row.known[0] == "Spectre v1"


def test_matrix_audit_has_every_cell_with_a_reason():
    cat = load_catalog()
    assert len(cat.cells) == len(D) * len(READ_KINDS)
    for (d, s), (allowed, reason) in cat.cells.items():
        assert reason
    excluded = {k for k, (ok, _) in cat.cells.items() if not ok}
    assert (D.LAZY_FPU_SWITCH, K.READ_LINE_FILL_BUFFER) in excluded
    assert (D.LAZY_FPU_SWITCH, K.READ_FP_REGISTER) not in excluded


def test_presets():
    assert preset_threat_model("meltdown").delay_mechanisms == {D.DELAYED_EXCEPTION}
    assert preset_threat_model("mds").secret_sources == {
        K.READ_LINE_FILL_BUFFER,
        K.READ_STORE_BUFFER,
        K.READ_LOAD_PORT,
    }
    with pytest.raises(KeyError):
        preset_threat_model("nope")


def test_env_override(tmp_path, monkeypatch):
    raw = json.loads((CORPUS.parent / "src/specdep/data/catalog.json").read_text())
    raw["templates"] = raw["templates"][:2]
    path = tmp_path / "cat.json"
    path.write_text(json.dumps(raw))
    monkeypatch.setenv(CATALOG_ENV, str(path))
    assert [t.name for t in builtin_catalog()] == ["Spectre v1", "Spectre v1.1"]
    raw["version"] = 99
    path.write_text(json.dumps(raw))
    with pytest.raises(CatalogError):
        load_catalog()
