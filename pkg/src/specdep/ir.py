"""SpecIR: a small textual IR for speculative-execution gadgets.

A program is a straight-line list of instructions over symbolic memory
regions, plus directives that declare regions and annotate which of them hold
secrets, which are shared with a covert-channel receiver, which branches the
attacker mistrains, and which instructions carry a delayed authorization.

See ``docs/specir.md`` for the grammar.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Union

__all__ = [
    "Register",
    "MemRef",
    "RegionRef",
    "LabelRef",
    "SysReg",
    "Opcode",
    "Instruction",
    "Region",
    "AnnotationKind",
    "TargetClass",
    "Annotation",
    "Program",
    "ParseError",
    "AnnotationWarning",
    "parse_program",
    "format_program",
    "format_instruction",
    "validate_annotations",
    "AUTHORIZING_OPCODES",
    "ARITH_OPS",
    "PREDICTOR_KINDS",
]

_GPR = re.compile(r"r(?:[0-9]|[12][0-9]|3[01])\Z")
_FPR = re.compile(r"f(?:[0-9]|1[0-5])\Z")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_INT = re.compile(r"[+-]?(?:0[xX][0-9a-fA-F]+|[0-9]+)\Z")


def _to_int(tok: str) -> int:
    sign = -1 if tok.startswith("-") else 1
    body = tok.lstrip("+-")
    if body[:2].lower() == "0x":
        return sign * int(body[2:], 16)
    return sign * int(body, 10)


class ParseError(Exception):
    """Raised for malformed SpecIR; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.message = message
        self.line = line


@dataclass(frozen=True)
class Register:
    name: str

    def __post_init__(self):
        if not (_GPR.match(self.name) or _FPR.match(self.name)):
            raise ValueError(f"bad register name {self.name!r}")

    @property
    def is_fp(self) -> bool:
        return self.name.startswith("f")

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class MemRef:
    region: str
    offset: Union[int, Register] = 0

    def __str__(self):
        if isinstance(self.offset, Register):
            return f"[{self.region} + {self.offset}]"
        if self.offset < 0:
            return f"[{self.region} - {-self.offset}]"
        return f"[{self.region} + {self.offset}]"


@dataclass(frozen=True)
class RegionRef:
    """``@Region``: the base address of a region, usable as an arith operand."""

    region: str

    def __str__(self):
        return f"@{self.region}"


@dataclass(frozen=True)
class LabelRef:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class SysReg:
    name: str

    def __str__(self):
        return self.name


Operand = Union[Register, MemRef, RegionRef, LabelRef, SysReg, int]


class Opcode(enum.Enum):
    LOAD = "load"
    STORE = "store"
    ARITH = "arith"
    BRANCH_COND = "branch_cond"
    BRANCH_IND = "branch_ind"
    RET = "ret"
    CLFLUSH = "clflush"
    FENCE = "fence"
    READ_SYSREG = "read_sysreg"
    READ_FPREG = "read_fpreg"
    MEASURE = "measure"

    @property
    def is_branch(self) -> bool:
        return self in (Opcode.BRANCH_COND, Opcode.BRANCH_IND, Opcode.RET)


# arith mnemonic -> number of source operands
ARITH_OPS = {
    "mov": 1,
    "not": 1,
    "neg": 1,
    "add": 2,
    "sub": 2,
    "mul": 2,
    "and": 2,
    "or": 2,
    "xor": 2,
    "shl": 2,
    "shr": 2,
    "sar": 2,
}

# Opcodes that can host an authorization: branch resolution, hardware
# permission / fault checks on memory and special-register reads, and
# store-load disambiguation.
AUTHORIZING_OPCODES = frozenset(
    {
        Opcode.BRANCH_COND,
        Opcode.BRANCH_IND,
        Opcode.RET,
        Opcode.LOAD,
        Opcode.STORE,
        Opcode.READ_SYSREG,
        Opcode.READ_FPREG,
    }
)

PREDICTOR_KINDS = {
    "conditional": Opcode.BRANCH_COND,
    "indirect": Opcode.BRANCH_IND,
    "return": Opcode.RET,
}


@dataclass(frozen=True)
class Instruction:
    index: int
    opcode: Opcode
    dest: Register | None = None
    operands: tuple = ()
    op: str | None = None  # arith mnemonic
    source_line: int = field(default=0, compare=False)

    @property
    def mem(self) -> MemRef | None:
        for o in self.operands:
            if isinstance(o, MemRef):
                return o
        return None

    def address_registers(self) -> tuple[Register, ...]:
        m = self.mem
        if m is not None and isinstance(m.offset, Register):
            return (m.offset,)
        return ()

    def value_registers(self) -> tuple[Register, ...]:
        """Registers read as data (not as part of an address)."""
        return tuple(o for o in self.operands if isinstance(o, Register))

    def region_refs(self) -> tuple[str, ...]:
        return tuple(o.region for o in self.operands if isinstance(o, RegionRef))

    @property
    def label_target(self) -> str | None:
        for o in self.operands:
            if isinstance(o, LabelRef):
                return o.name
        return None

    def __str__(self):
        return format_instruction(self)


@dataclass(frozen=True)
class Region:
    name: str
    size: int | None = None
    source_line: int = field(default=0, compare=False)


class AnnotationKind(enum.Enum):
    SECRET_REGION = "secret"
    SHARED_REGION = "shared"
    MISTRAINED_PREDICTOR = "mistrain"
    AUTHORIZATION_MARKER = "authz"
    DELAYED = "delayed"


class TargetClass(enum.Enum):
    """Protection domain of a secret region."""

    USER = "user"
    KERNEL = "kernel"
    ENCLAVE = "enclave"
    VMM = "vmm"
    READONLY = "readonly"
    INJECTED = "injected"


@dataclass(frozen=True)
class Annotation:
    kind: AnnotationKind
    target: Union[str, int]
    target_class: TargetClass | None = None  # secret regions only
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]
    regions: dict[str, Region]
    annotations: tuple[Annotation, ...]
    labels: dict[str, int]

    def __len__(self):
        return len(self.instructions)

    def secret_regions(self) -> dict[str, TargetClass]:
        return {
            a.target: a.target_class or TargetClass.USER
            for a in self.annotations
            if a.kind is AnnotationKind.SECRET_REGION
        }

    def shared_regions(self) -> frozenset[str]:
        return frozenset(
            a.target for a in self.annotations if a.kind is AnnotationKind.SHARED_REGION
        )

    def resolve(self, target: Union[str, int]) -> int:
        """Instruction index for an annotation target (index or label)."""
        if isinstance(target, int):
            return target
        return self.labels[target]

    def marked(self, kind: AnnotationKind) -> frozenset[int]:
        out = set()
        for a in self.annotations:
            if a.kind is kind:
                idx = self.resolve(a.target)
                if idx < len(self.instructions):
                    out.add(idx)
        return frozenset(out)

    def mistrained_branches(self) -> dict[int, list[Annotation]]:
        """Branch index -> the ``.mistrain`` annotations that hit it."""
        out: dict[int, list[Annotation]] = {}
        for a in self.annotations:
            if a.kind is not AnnotationKind.MISTRAINED_PREDICTOR:
                continue
            if a.target in self.labels:
                idx = self.labels[a.target]
                if idx < len(self.instructions) and self.instructions[idx].opcode.is_branch:
                    out.setdefault(idx, []).append(a)
            else:
                opcode = PREDICTOR_KINDS[a.target]
                for ins in self.instructions:
                    if ins.opcode is opcode:
                        out.setdefault(ins.index, []).append(a)
        return out


# --------------------------------------------------------------------------
# parsing


def _strip_comment(line: str) -> str:
    for i, ch in enumerate(line):
        if ch in ";#":
            return line[:i]
    return line


def _split_operands(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    return parts


class _Parser:
    def __init__(self):
        self.instructions: list[Instruction] = []
        self.regions: dict[str, Region] = {}
        self.annotations: list[Annotation] = []
        self.labels: dict[str, int] = {}
        self.label_uses: list[tuple[str, int]] = []

    # operands -----------------------------------------------------------

    def register(self, tok: str, line: int) -> Register:
        if not (_GPR.match(tok) or _FPR.match(tok)):
            raise ParseError(f"expected register, got {tok!r}", line)
        return Register(tok)

    def gpr(self, tok: str, line: int) -> Register:
        reg = self.register(tok, line)
        if reg.is_fp:
            raise ParseError(f"expected general register, got {tok!r}", line)
        return reg

    def region(self, name: str, line: int) -> str:
        if not _IDENT.match(name):
            raise ParseError(f"bad region name {name!r}", line)
        if name not in self.regions:
            raise ParseError(f"undeclared region {name}", line)
        return name

    def memref(self, tok: str, line: int) -> MemRef:
        m = re.fullmatch(r"\[\s*([^\]+\-\s]+)\s*(?:([+-])\s*([^\]\s]+)\s*)?\]", tok)
        if not m:
            raise ParseError(f"expected memory operand, got {tok!r}", line)
        region = self.region(m.group(1), line)
        if m.group(2) is None:
            return MemRef(region, 0)
        sign, off = m.group(2), m.group(3)
        if _INT.match(off):
            value = _to_int(off)
            return MemRef(region, -value if sign == "-" else value)
        if sign == "-":
            raise ParseError("register offsets must be added", line)
        return MemRef(region, self.gpr(off, line))

    def value(self, tok: str, line: int):
        if tok.startswith("@"):
            return RegionRef(self.region(tok[1:], line))
        if _INT.match(tok):
            return _to_int(tok)
        return self.register(tok, line)

    def label_ref(self, tok: str, line: int) -> LabelRef:
        if not _IDENT.match(tok):
            raise ParseError(f"bad label {tok!r}", line)
        self.label_uses.append((tok, line))
        return LabelRef(tok)

    # statements ----------------------------------------------------------

    def directive(self, text: str, line: int):
        parts = text.split()
        name, args = parts[0], parts[1:]
        if name == ".region":
            if len(args) not in (1, 2):
                raise ParseError(".region takes NAME [SIZE]", line)
            if not _IDENT.match(args[0]):
                raise ParseError(f"bad region name {args[0]!r}", line)
            if args[0] in self.regions:
                raise ParseError(f"duplicate region {args[0]}", line)
            size = None
            if len(args) == 2:
                if not _INT.match(args[1]) or _to_int(args[1]) < 0:
                    raise ParseError(f"bad region size {args[1]!r}", line)
                size = _to_int(args[1])
            self.regions[args[0]] = Region(args[0], size, line)
        elif name == ".secret":
            if len(args) not in (1, 2):
                raise ParseError(".secret takes NAME [CLASS]", line)
            cls = None
            if len(args) == 2:
                try:
                    cls = TargetClass(args[1])
                except ValueError:
                    raise ParseError(f"unknown secret class {args[1]!r}", line) from None
            self.annotations.append(
                Annotation(AnnotationKind.SECRET_REGION, self.region(args[0], line), cls, line)
            )
        elif name == ".shared":
            if len(args) != 1:
                raise ParseError(".shared takes NAME", line)
            self.annotations.append(
                Annotation(AnnotationKind.SHARED_REGION, self.region(args[0], line), None, line)
            )
        elif name == ".mistrain":
            if len(args) != 1 or not _IDENT.match(args[0]):
                raise ParseError(".mistrain takes LABEL or predictor kind", line)
            self.annotations.append(
                Annotation(AnnotationKind.MISTRAINED_PREDICTOR, args[0], None, line)
            )
            if args[0] not in PREDICTOR_KINDS:
                self.label_uses.append((args[0], line))
        elif name in (".authz", ".delayed"):
            kind = (
                AnnotationKind.AUTHORIZATION_MARKER
                if name == ".authz"
                else AnnotationKind.DELAYED
            )
            if len(args) != 1:
                raise ParseError(f"{name} takes INDEX or LABEL", line)
            arg = args[0]
            if re.fullmatch(r"[0-9]+", arg):
                target: Union[str, int] = int(arg)
            elif _IDENT.match(arg):
                target = arg
                self.label_uses.append((arg, line))
            else:
                raise ParseError(f"bad {name} target {arg!r}", line)
            self.annotations.append(Annotation(kind, target, None, line))
        else:
            raise ParseError(f"unknown directive {name}", line)

    def instruction(self, text: str, line: int) -> Instruction:
        index = len(self.instructions)
        dest = None
        if "=" in text:
            lhs, rhs = text.split("=", 1)
            dest = self.gpr(lhs.strip(), line)
            text = rhs.strip()
        head, _, rest = text.partition(" ")
        mnemonic = head.strip()
        ops = _split_operands(rest.strip())

        def arity(n):
            if len(ops) != n:
                raise ParseError(f"{mnemonic} expects {n} operand(s), got {len(ops)}", line)

        def need_dest(flag=True):
            if flag and dest is None:
                raise ParseError(f"{mnemonic} needs a destination register", line)
            if not flag and dest is not None:
                raise ParseError(f"{mnemonic} takes no destination register", line)

        if mnemonic == "load":
            need_dest()
            arity(1)
            return Instruction(index, Opcode.LOAD, dest, (self.memref(ops[0], line),), None, line)
        if mnemonic == "store":
            need_dest(False)
            arity(2)
            mem = self.memref(ops[0], line)
            src = self.value(ops[1], line)
            if isinstance(src, RegionRef):
                raise ParseError("store source must be a register or immediate", line)
            return Instruction(index, Opcode.STORE, None, (mem, src), None, line)
        if mnemonic in ARITH_OPS:
            need_dest()
            arity(ARITH_OPS[mnemonic])
            vals = tuple(self.value(o, line) for o in ops)
            return Instruction(index, Opcode.ARITH, dest, vals, mnemonic, line)
        if mnemonic == "branch_cond":
            need_dest(False)
            if len(ops) not in (2, 3):
                raise ParseError(f"branch_cond expects 2 or 3 operands, got {len(ops)}", line)
            regs = tuple(self.gpr(o, line) for o in ops[:-1])
            return Instruction(
                index, Opcode.BRANCH_COND, None, regs + (self.label_ref(ops[-1], line),), None, line
            )
        if mnemonic == "branch_ind":
            need_dest(False)
            arity(1)
            return Instruction(index, Opcode.BRANCH_IND, None, (self.gpr(ops[0], line),), None, line)
        if mnemonic in ("ret", "fence"):
            need_dest(False)
            arity(0)
            return Instruction(index, Opcode(mnemonic), None, (), None, line)
        if mnemonic in ("clflush", "measure"):
            need_dest(False)
            arity(1)
            return Instruction(index, Opcode(mnemonic), None, (self.memref(ops[0], line),), None, line)
        if mnemonic == "read_sysreg":
            need_dest()
            arity(1)
            if not _IDENT.match(ops[0]):
                raise ParseError(f"bad system register {ops[0]!r}", line)
            return Instruction(index, Opcode.READ_SYSREG, dest, (SysReg(ops[0]),), None, line)
        if mnemonic == "read_fpreg":
            need_dest()
            arity(1)
            reg = self.register(ops[0], line)
            if not reg.is_fp:
                raise ParseError(f"read_fpreg needs an FP register, got {ops[0]!r}", line)
            return Instruction(index, Opcode.READ_FPREG, dest, (reg,), None, line)
        raise ParseError(f"unknown opcode {mnemonic!r}", line)

    def statement(self, text: str, line: int):
        if text.startswith("."):
            self.directive(text, line)
        else:
            self.instructions.append(self.instruction(text, line))

    def finish(self) -> Program:
        n = len(self.instructions)
        for name, line in self.label_uses:
            if name not in self.labels:
                raise ParseError(f"dangling label {name}", line)
        for a in self.annotations:
            if a.kind in (AnnotationKind.AUTHORIZATION_MARKER, AnnotationKind.DELAYED):
                idx = a.target if isinstance(a.target, int) else self.labels[a.target]
                if idx >= n:
                    raise ParseError(f".{a.kind.value} target {a.target} is not an instruction", a.source_line)
        return Program(tuple(self.instructions), dict(self.regions), tuple(self.annotations), dict(self.labels))


_LABEL = re.compile(r"([A-Za-z_][A-Za-z0-9_.]*)\s*:")


def parse_program(text: str) -> Program:
    """Parse SpecIR source text.

    Raises:
        ParseError: with the offending 1-based line number.
    """
    p = _Parser()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).strip()
        while True:
            m = _LABEL.match(body)
            if not m or body.startswith("."):
                break
            name = m.group(1)
            if name in p.labels:
                raise ParseError(f"duplicate label {name}", lineno)
            p.labels[name] = len(p.instructions)
            body = body[m.end():].strip()
        if body:
            p.statement(body, lineno)
    return p.finish()


# --------------------------------------------------------------------------
# printing


def format_instruction(ins: Instruction) -> str:
    ops = ", ".join(str(o) for o in ins.operands)
    mnemonic = ins.op if ins.opcode is Opcode.ARITH else ins.opcode.value
    text = f"{mnemonic} {ops}" if ops else mnemonic
    if ins.dest is not None:
        text = f"{ins.dest} = {text}"
    return text


def format_program(program: Program) -> str:
    """Render a Program back to SpecIR text that reparses to an equal Program."""
    lines = []
    for r in program.regions.values():
        lines.append(f".region {r.name}" + (f" {r.size}" if r.size is not None else ""))
    for a in program.annotations:
        text = f".{a.kind.value} {a.target}"
        if a.target_class is not None:
            text += f" {a.target_class.value}"
        lines.append(text)
    by_index: dict[int, list[str]] = {}
    for name, idx in program.labels.items():
        by_index.setdefault(idx, []).append(name)
    for ins in program.instructions:
        for name in by_index.get(ins.index, ()):
            lines.append(f"{name}:")
        lines.append(f"    {format_instruction(ins)}")
    for name in by_index.get(len(program.instructions), ()):
        lines.append(f"{name}:")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# annotation lint


@dataclass(frozen=True)
class AnnotationWarning:
    code: str
    message: str
    line: int


def _regions_touched(program: Program) -> set[str]:
    touched = set()
    for ins in program.instructions:
        m = ins.mem
        if m is not None:
            touched.add(m.region)
        touched.update(ins.region_refs())
    return touched


def validate_annotations(program: Program) -> list[AnnotationWarning]:
    """Report annotations that can never take part in an attack graph."""
    warnings = []
    touched = _regions_touched(program)
    n = len(program.instructions)
    for a in program.annotations:
        if a.kind is AnnotationKind.SECRET_REGION and a.target not in touched:
            warnings.append(
                AnnotationWarning("unused-secret", f"secret region never accessed: {a.target}", a.source_line)
            )
        elif a.kind is AnnotationKind.SHARED_REGION and a.target not in touched:
            warnings.append(
                AnnotationWarning("unused-shared", f"shared region never accessed: {a.target}", a.source_line)
            )
        elif a.kind in (AnnotationKind.AUTHORIZATION_MARKER, AnnotationKind.DELAYED):
            ins = program.instructions[program.resolve(a.target)]
            if ins.opcode not in AUTHORIZING_OPCODES:
                warnings.append(
                    AnnotationWarning(
                        "non-authorizing-marker",
                        f"marker on non-authorizing opcode: .{a.kind.value} {a.target} "
                        f"({format_instruction(ins)})",
                        a.source_line,
                    )
                )
        elif a.kind is AnnotationKind.MISTRAINED_PREDICTOR:
            if a.target in program.labels:
                idx = program.labels[a.target]
                if idx >= n or not program.instructions[idx].opcode.is_branch:
                    warnings.append(
                        AnnotationWarning(
                            "mistrain-non-branch", f"mistrain target is not a branch: {a.target}", a.source_line
                        )
                    )
            elif not any(i.opcode is PREDICTOR_KINDS[a.target] for i in program.instructions):
                warnings.append(
                    AnnotationWarning(
                        "mistrain-unused", f"no {a.target} branch to mistrain", a.source_line
                    )
                )
    return warnings
