import pytest
from hypothesis import given, settings, strategies as st

from specdep.ir import (
    AUTHORIZING_OPCODES,
    AnnotationKind,
    MemRef,
    Opcode,
    ParseError,
    Register,
    TargetClass,
    format_program,
    parse_program,
    validate_annotations,
)

from .conftest import CORPUS, load


def test_minimal_program():
    p = parse_program(".region A\nr1 = load [A + 0]")
    assert len(p.instructions) == 1
    ins = p.instructions[0]
    assert ins.opcode is Opcode.LOAD
    assert ins.dest == Register("r1")
    assert ins.mem == MemRef("A", 0)
    assert set(p.regions) == {"A"}


def test_undeclared_region():
    with pytest.raises(ParseError) as e:
        parse_program("r1 = load [B + 0]")
    assert e.value.line == 1
    assert e.value.message == "undeclared region B"


def test_gadget_gadget_has_eight_instructions():
    p = load("spectre_v1.sir")
    ops = [i.opcode for i in p.instructions]
    assert ops == [
        Opcode.CLFLUSH,
        Opcode.ARITH,
        Opcode.ARITH,
        Opcode.BRANCH_COND,
        Opcode.LOAD,
        Opcode.ARITH,
        Opcode.LOAD,
        Opcode.MEASURE,
    ]
    assert [i.index for i in p.instructions] == list(range(8))
    assert p.labels == {"check": 3, "skip": 7}
    assert p.secret_regions() == {"SecretRegion": TargetClass.USER}
    assert p.shared_regions() == {"ArrayA"}
    assert p.marked(AnnotationKind.DELAYED) == {3}
    assert set(p.mistrained_branches()) == {3}


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        (".region A\nr1 = frob [A + 0]", 2, "unknown opcode"),
        (".region A\nr1 = add r2", 2, "operand"),
        ("branch_cond r1, nowhere", 1, "nowhere"),
        ("a:\na:\nret", 2, "duplicate label"),
        (".region A\n.region A", 2, "duplicate region"),
        (".secret Nope", 1, "undeclared region Nope"),
        ("r99 = mov 1", 1, "r99"),
    ],
)
def test_parse_errors(text, line, fragment):
    with pytest.raises(ParseError) as e:
        parse_program(text)
    assert e.value.line == line
    assert fragment in e.value.message


def test_register_classes():
    assert Register("f3").is_fp
    assert not Register("r3").is_fp
    with pytest.raises(ValueError):
        Register("f16")


def test_comments_and_blank_lines():
    p = parse_program("# header\n\n.region A ; the only region\n  r1 = load [A + 8] # trailing\n")
    assert p.instructions[0].source_line == 4
    assert p.instructions[0].mem.offset == 8


def test_hex_and_leading_zero_offsets():
    p = parse_program(".region A\nr1 = load [A + 0x10]\nr2 = load [A + 08]")
    assert [i.mem.offset for i in p.instructions] == [16, 8]


def test_validate_clean_gadget():
    assert validate_annotations(load("spectre_v1.sir")) == []


def test_validate_unused_secret():
    p = parse_program(".region A\n.region S\n.secret S\nr1 = load [A + 0]")
    (w,) = validate_annotations(p)
    assert "secret region never accessed" in w.message
    assert w.line == 3


def test_authz_marker_on_arith_warns():
    p = parse_program("x: r1 = add r2, r3\n.authz x")
    (w,) = validate_annotations(p)
    assert "marker on non-authorizing opcode" in w.message


def _sample_instruction(op: Opcode) -> str:
    return {
        Opcode.LOAD: "r1 = load [A + 0]",
        Opcode.STORE: "store [A + 0], r1",
        Opcode.ARITH: "r1 = add r2, r3",
        Opcode.BRANCH_COND: "branch_cond r1, end",
        Opcode.BRANCH_IND: "branch_ind r1",
        Opcode.RET: "ret",
        Opcode.CLFLUSH: "clflush [A + 0]",
        Opcode.FENCE: "fence",
        Opcode.READ_SYSREG: "r1 = read_sysreg MSR_X",
        Opcode.READ_FPREG: "r1 = read_fpreg f0",
        Opcode.MEASURE: "measure [A + 0]",
    }[op]


@pytest.mark.parametrize("op", list(Opcode))
def test_marker_warning_is_complement_of_authorizing_set(op):
    text = f".region A\n.shared A\nm: {_sample_instruction(op)}\nend:\nclflush [A + 0]\n.authz m"
    warned = any(w.code == "non-authorizing-marker" for w in validate_annotations(parse_program(text)))
    assert warned == (op not in AUTHORIZING_OPCODES)


def test_mistrain_warnings():
    p = parse_program("x: r1 = mov 1\n.mistrain x\n.mistrain return")
    codes = sorted(w.code for w in validate_annotations(p))
    assert codes == ["mistrain-non-branch", "mistrain-unused"]


@pytest.mark.parametrize("path", sorted(CORPUS.rglob("*.sir")), ids=lambda p: p.name)
def test_round_trip_corpus(path):
    p = parse_program(path.read_text())
    again = parse_program(format_program(p))
    assert again == p
    assert format_program(again) == format_program(p)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("rf0123456789 =[]+,:;.#@abcdlosegnmtrxARBS\n")), max_size=80))
def test_parse_is_total(text):
    try:
        parse_program(text)
    except ParseError as e:
        assert e.line >= 1
