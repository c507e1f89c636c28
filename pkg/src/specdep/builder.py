"""Attack-graph construction from SpecIR programs.

The builder turns a :class:`~specdep.ir.Program` into a TSG whose nodes are
instructions (or, for instructions whose authorization and access happen in
the same instruction, their micro-ops) and whose edges are the orderings the
hardware actually enforces under a given threat model. Orderings the hardware
skips while speculating are left out on purpose: a missing edge between an
authorization and an access is what the race detector looks for.

Edge derivation:

* register def -> use: ``DATA_DEP`` for value operands, ``ADDRESS_DEP`` for
  address operands (last definition wins);
* memory and micro-architectural state carried between instructions
  (flush -> later access of the region, store -> aliasing load, access ->
  later measure of the region, mistraining -> trained branch): ``ADDRESS_DEP``;
* ``fence``: every earlier node -> fence -> every later node (``FENCE_ORDER``);
* a branch whose prediction mechanism is not in the threat model commits
  before everything after it (``CONTROL_COMMIT``); a predicted branch gets
  no such edges, which leaves the speculation window unbounded;
* inside a decomposed instruction, ``MICRO_OP_ORDER`` edges; an authorization
  micro-op precedes the reads it guards only when it is not delayed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from .ir import (
    AnnotationKind,
    Instruction,
    Opcode,
    Program,
    Register,
    TargetClass,
    format_instruction,
)
from .tsg import EdgeKind, Tsg

__all__ = [
    "NodeRole",
    "ROLE_PRECEDENCE",
    "MicroOpKind",
    "MicroOp",
    "READ_KINDS",
    "LOAD_SOURCES",
    "AUTH_MICRO_OPS",
    "DelayMechanism",
    "Channel",
    "ThreatModel",
    "NodeMeta",
    "InstrNodes",
    "AttackGraph",
    "UnsupportedOpcode",
    "UnsupportedProgram",
    "AmbiguousRole",
    "AuthPattern",
    "AccessPattern",
    "authorization_pattern",
    "access_pattern",
    "build_attack_graph",
    "decompose_instruction",
    "classify_roles",
    "delay_mechanism_for",
]


class NodeRole(enum.Enum):
    SETUP = "Setup"
    AUTHORIZATION = "Authorization"
    SECRET_ACCESS = "SecretAccess"
    USE = "Use"
    SEND = "Send"
    RECEIVE = "Receive"
    PLAIN = "Plain"


ROLE_PRECEDENCE = (
    NodeRole.AUTHORIZATION,
    NodeRole.SECRET_ACCESS,
    NodeRole.SEND,
    NodeRole.USE,
    NodeRole.RECEIVE,
    NodeRole.SETUP,
    NodeRole.PLAIN,
)


class MicroOpKind(enum.Enum):
    TRANSLATE_ADDRESS = "translate-address"
    PERMISSION_CHECK = "permission-check"
    READ_MEMORY = "read-memory"
    READ_CACHE = "read-cache"
    READ_LINE_FILL_BUFFER = "read-line-fill-buffer"
    READ_STORE_BUFFER = "read-store-buffer"
    READ_LOAD_PORT = "read-load-port"
    READ_SPECIAL_REGISTER = "read-special-register"
    READ_FP_REGISTER = "read-fp-register"
    FORWARD_TO_REGISTER = "forward-to-register"
    CACHE_FILL = "cache-fill"
    BRANCH_RESOLVE = "branch-resolve"
    ADDRESS_DISAMBIGUATE = "address-disambiguate"
    TSX_ABORT_RESOLVE = "tsx-abort-resolve"


READ_KINDS = (
    MicroOpKind.READ_MEMORY,
    MicroOpKind.READ_CACHE,
    MicroOpKind.READ_LINE_FILL_BUFFER,
    MicroOpKind.READ_STORE_BUFFER,
    MicroOpKind.READ_LOAD_PORT,
    MicroOpKind.READ_SPECIAL_REGISTER,
    MicroOpKind.READ_FP_REGISTER,
)
LOAD_SOURCES = READ_KINDS[:5]
AUTH_MICRO_OPS = frozenset(
    {
        MicroOpKind.PERMISSION_CHECK,
        MicroOpKind.ADDRESS_DISAMBIGUATE,
        MicroOpKind.TSX_ABORT_RESOLVE,
        MicroOpKind.BRANCH_RESOLVE,
    }
)


@dataclass(frozen=True)
class MicroOp:
    parent: int
    kind: MicroOpKind


class DelayMechanism(enum.Enum):
    BRANCH_PREDICTION = "branch-prediction"
    INDIRECT_TARGET_PREDICTION = "indirect-target-prediction"
    RETURN_PREDICTION = "return-prediction"
    DELAYED_EXCEPTION = "delayed-exception"
    STORE_LOAD_DISAMBIGUATION = "store-load-disambiguation"
    LAZY_FPU_SWITCH = "lazy-fpu-switch"
    TSX_ABORT = "tsx-abort"


class Channel(enum.Enum):
    FLUSH_RELOAD = "flush-reload"
    PRIME_PROBE = "prime-probe"


_BRANCH_MECHANISM = {
    Opcode.BRANCH_COND: DelayMechanism.BRANCH_PREDICTION,
    Opcode.BRANCH_IND: DelayMechanism.INDIRECT_TARGET_PREDICTION,
    Opcode.RET: DelayMechanism.RETURN_PREDICTION,
}


def delay_mechanism_for(opcode: Opcode, kind: MicroOpKind | None) -> DelayMechanism | None:
    """Which delay mechanism lets an authorization of this shape resolve late."""
    if opcode in _BRANCH_MECHANISM:
        return _BRANCH_MECHANISM[opcode]
    if kind is MicroOpKind.ADDRESS_DISAMBIGUATE:
        return DelayMechanism.STORE_LOAD_DISAMBIGUATION
    if kind is MicroOpKind.TSX_ABORT_RESOLVE:
        return DelayMechanism.TSX_ABORT
    if kind is MicroOpKind.PERMISSION_CHECK:
        if opcode is Opcode.READ_FPREG:
            return DelayMechanism.LAZY_FPU_SWITCH
        return DelayMechanism.DELAYED_EXCEPTION
    return None


def _ordered(values, enum_cls) -> tuple:
    order = list(enum_cls)
    return tuple(sorted(values, key=order.index))


@dataclass(frozen=True)
class ThreatModel:
    """Which delays, secret sources and covert channels the analysis assumes."""

    delay_mechanisms: frozenset[DelayMechanism]
    secret_sources: frozenset[MicroOpKind] = frozenset({MicroOpKind.READ_MEMORY})
    channels: frozenset[Channel] = frozenset({Channel.FLUSH_RELOAD})

    def __post_init__(self):
        object.__setattr__(self, "delay_mechanisms", frozenset(self.delay_mechanisms))
        object.__setattr__(self, "secret_sources", frozenset(self.secret_sources))
        object.__setattr__(self, "channels", frozenset(self.channels))
        if not self.delay_mechanisms:
            raise ValueError("threat model needs at least one delay mechanism")
        if not self.channels:
            raise ValueError("threat model needs at least one covert channel")
        bad = [s for s in self.secret_sources if s not in READ_KINDS]
        if bad:
            raise ValueError(f"not a secret source: {bad}")

    @classmethod
    def full(cls) -> "ThreatModel":
        return cls(frozenset(DelayMechanism), frozenset(READ_KINDS), frozenset(Channel))

    def describe(self) -> str:
        parts = [
            "+".join(d.value for d in _ordered(self.delay_mechanisms, DelayMechanism)),
            "+".join(s.value for s in _ordered(self.secret_sources, MicroOpKind)) or "-",
            "+".join(c.value for c in _ordered(self.channels, Channel)),
        ]
        return ",".join(parts)

    def to_dict(self) -> dict:
        return {
            "delay_mechanisms": [d.value for d in _ordered(self.delay_mechanisms, DelayMechanism)],
            "secret_sources": [s.value for s in _ordered(self.secret_sources, MicroOpKind)],
            "channels": [c.value for c in _ordered(self.channels, Channel)],
        }


class UnsupportedOpcode(ValueError):
    pass


class UnsupportedProgram(ValueError):
    pass


class AmbiguousRole(ValueError):
    pass


@dataclass
class NodeMeta:
    instruction: int | None
    micro_op: MicroOp | None
    role: NodeRole = NodeRole.PLAIN
    synthetic: str | None = None  # "mistrain", "flush-predictor"
    matched_roles: frozenset[NodeRole] = frozenset()
    target: int | None = None  # branch a synthetic node feeds


@dataclass
class InstrNodes:
    """Where one instruction landed in the graph."""

    nodes: list[int]
    addr_in: int
    data_in: int
    def_node: int
    mem_touch: int
    address_sources: tuple[int, ...] = ()
    decomposed: bool = False


@dataclass
class AttackGraph:
    graph: Tsg
    node_meta: list[NodeMeta]
    program: Program
    threat_model: ThreatModel
    layout: dict[int, InstrNodes] = field(default_factory=dict)
    secret_targets: dict[int, TargetClass | None] = field(default_factory=dict)
    taint: dict[int, frozenset[int]] = field(default_factory=dict)

    def __len__(self):
        return len(self.graph)

    def role(self, n: int) -> NodeRole:
        return self.node_meta[n].role

    def nodes_with_role(self, role: NodeRole) -> list[int]:
        return [n for n, m in enumerate(self.node_meta) if m.role is role]

    def label(self, n: int) -> str:
        return self.graph.nodes[n].label

    def instruction_of(self, n: int) -> Instruction | None:
        i = self.node_meta[n].instruction
        return None if i is None else self.program.instructions[i]

    def micro_kind(self, n: int) -> MicroOpKind | None:
        m = self.node_meta[n].micro_op
        return None if m is None else m.kind

    def copy(self) -> "AttackGraph":
        return AttackGraph(
            self.graph.copy(),
            [replace(m) for m in self.node_meta],
            self.program,
            self.threat_model,
            dict(self.layout),
            dict(self.secret_targets),
            dict(self.taint),
        )


# ----------------------------------------------------------------------------
# decomposition


def decompose_instruction(ins: Instruction, tm: ThreatModel) -> list[MicroOp]:
    """Split a faulting-access instruction into its micro-architectural steps.

    Loads get one read per load-compatible secret source in ``tm`` (memory if
    there is none), stores get a permission check and the write, and special
    register reads get a privilege (or FPU-owner) check and the read.
    """
    i = ins.index
    K = MicroOpKind
    if ins.opcode is Opcode.LOAD:
        kinds = [K.TRANSLATE_ADDRESS, K.PERMISSION_CHECK]
        if DelayMechanism.STORE_LOAD_DISAMBIGUATION in tm.delay_mechanisms:
            kinds.append(K.ADDRESS_DISAMBIGUATE)
        if DelayMechanism.TSX_ABORT in tm.delay_mechanisms:
            kinds.append(K.TSX_ABORT_RESOLVE)
        reads = [s for s in LOAD_SOURCES if s in tm.secret_sources] or [K.READ_MEMORY]
        kinds += reads + [K.FORWARD_TO_REGISTER, K.CACHE_FILL]
    elif ins.opcode is Opcode.STORE:
        kinds = [K.TRANSLATE_ADDRESS, K.PERMISSION_CHECK, K.CACHE_FILL]
    elif ins.opcode is Opcode.READ_SYSREG:
        kinds = [K.PERMISSION_CHECK, K.READ_SPECIAL_REGISTER]
    elif ins.opcode is Opcode.READ_FPREG:
        kinds = [K.PERMISSION_CHECK, K.READ_FP_REGISTER]
    else:
        raise UnsupportedOpcode(f"cannot decompose {ins.opcode.value}")
    return [MicroOp(i, k) for k in kinds]


# ----------------------------------------------------------------------------
# program facts


def _secret_targets(program: Program) -> dict[int, TargetClass | None]:
    """Instructions that touch a secret, with the secret's protection class.

    A memory operand touches a secret region directly, or through an offset
    register that holds a pointer derived (via register dataflow) from
    ``@Region`` of a secret region. Special-register reads always do.
    """
    secrets = program.secret_regions()
    pointer: dict[Register, frozenset[str]] = {}
    out: dict[int, TargetClass | None] = {}
    for ins in program.instructions:
        mem = ins.mem
        if mem is not None:
            regions = {mem.region}
            if isinstance(mem.offset, Register):
                regions |= pointer.get(mem.offset, frozenset())
            hits = sorted(r for r in regions if r in secrets)
            if hits and ins.opcode in (Opcode.LOAD, Opcode.STORE):
                out[ins.index] = secrets[hits[0]]
        if ins.opcode in (Opcode.READ_SYSREG, Opcode.READ_FPREG):
            out[ins.index] = None
        if ins.dest is not None:
            if ins.opcode is Opcode.ARITH:
                prov = set(ins.region_refs())
                for r in ins.value_registers():
                    prov |= pointer.get(r, frozenset())
                pointer[ins.dest] = frozenset(prov)
            else:
                pointer[ins.dest] = frozenset()
    return out


def _aliases_earlier_store(program: Program, ins: Instruction) -> bool:
    return ins.opcode is Opcode.LOAD and any(
        p.opcode is Opcode.STORE and p.mem == ins.mem
        for p in program.instructions[: ins.index]
    )


# ----------------------------------------------------------------------------
# construction


def _label(ins: Instruction, kind: MicroOpKind | None = None) -> str:
    if kind is None:
        return f"i{ins.index} {format_instruction(ins)}"
    return f"i{ins.index} {kind.value}"


def build_attack_graph(program: Program, tm: ThreatModel) -> AttackGraph:
    """Build and role-classify the attack graph of ``program`` under ``tm``."""
    for ins in program.instructions:
        target = ins.label_target
        if target is not None and program.labels[target] <= ins.index:
            raise UnsupportedProgram(
                f"line {ins.source_line}: backward branch to {target}; loops are not supported"
            )
    g = Tsg()
    meta: list[NodeMeta] = []
    targets = _secret_targets(program)
    authz = program.marked(AnnotationKind.AUTHORIZATION_MARKER)
    delayed = program.marked(AnnotationKind.DELAYED)
    mechs = tm.delay_mechanisms
    D = DelayMechanism
    K = MicroOpKind
    layout: dict[int, InstrNodes] = {}

    def node(label, instr, micro=None, synthetic=None, target=None):
        n = g.add_node(label)
        meta.append(NodeMeta(instr, micro, synthetic=synthetic, target=target))
        return n

    for ins in program.instructions:
        i = ins.index
        marked = i in authz or i in delayed
        op = ins.opcode
        if op is Opcode.LOAD:
            decompose = (
                marked
                or (i in targets and (D.DELAYED_EXCEPTION in mechs or D.TSX_ABORT in mechs))
                or (D.STORE_LOAD_DISAMBIGUATION in mechs and _aliases_earlier_store(program, ins))
            )
        elif op is Opcode.STORE:
            decompose = marked
        elif op is Opcode.READ_SYSREG:
            decompose = marked or D.DELAYED_EXCEPTION in mechs
        elif op is Opcode.READ_FPREG:
            decompose = marked or D.LAZY_FPU_SWITCH in mechs
        else:
            decompose = False

        if not decompose:
            micro = None
            if op.is_branch:
                micro = MicroOp(i, K.BRANCH_RESOLVE)
            elif op in (Opcode.LOAD, Opcode.STORE) and ins.mem.region in program.shared_regions():
                micro = MicroOp(i, K.CACHE_FILL)
            n = node(_label(ins), i, micro)
            layout[i] = InstrNodes([n], n, n, n, n)
            continue

        mops = decompose_instruction(ins, tm)
        ids = {m.kind: node(_label(ins, m.kind), i, m) for m in mops}
        reads = [ids[k] for k in READ_KINDS if k in ids]
        ta = ids.get(K.TRANSLATE_ADDRESS)
        E = EdgeKind.MICRO_OP_ORDER
        if op is Opcode.LOAD:
            fwd, fill = ids[K.FORWARD_TO_REGISTER], ids[K.CACHE_FILL]
            g.add_edge(ta, ids[K.PERMISSION_CHECK], E)
            for r in reads:
                g.add_edge(ta, r, E)
                g.add_edge(r, fwd, E)
            g.add_edge(fwd, fill, E)
            guarded = reads
            layout[i] = InstrNodes(list(ids.values()), ta, ta, fwd, fill, decomposed=True)
        elif op is Opcode.STORE:
            fill = ids[K.CACHE_FILL]
            g.add_edge(ta, ids[K.PERMISSION_CHECK], E)
            g.add_edge(ta, fill, E)
            guarded = [fill]
            layout[i] = InstrNodes(list(ids.values()), ta, fill, fill, fill, decomposed=True)
        else:
            (read,) = reads
            guarded = reads
            layout[i] = InstrNodes(list(ids.values()), read, read, read, read, decomposed=True)

        # authorization micro-ops that resolve on time order the guarded steps
        for kind in (K.PERMISSION_CHECK, K.ADDRESS_DISAMBIGUATE, K.TSX_ABORT_RESOLVE):
            if kind not in ids:
                continue
            if kind is K.ADDRESS_DISAMBIGUATE:
                late = i in delayed or _aliases_earlier_store(program, ins)
                g.add_edge(ta, ids[kind], E)
            elif kind is K.TSX_ABORT_RESOLVE:
                late = True
            else:
                late = i in delayed or delay_mechanism_for(op, kind) in mechs
            if not late:
                for r in guarded:
                    g.add_edge(ids[kind], r, E)

    instrs = program.instructions

    # register dataflow
    last_def: dict[Register, int] = {}
    for ins in instrs:
        slot = layout[ins.index]
        srcs = []
        for r in ins.address_registers():
            if r in last_def:
                g.add_edge(last_def[r], slot.addr_in, EdgeKind.ADDRESS_DEP)
                srcs.append(last_def[r])
        slot.address_sources = tuple(srcs)
        for r in ins.value_registers():
            if r in last_def:
                g.add_edge(last_def[r], slot.data_in, EdgeKind.DATA_DEP)
        if ins.dest is not None:
            last_def[ins.dest] = slot.def_node

    # memory / cache state carried between instructions
    for ins in instrs:
        if ins.mem is None:
            continue
        slot = layout[ins.index]
        for prev in instrs[: ins.index]:
            if prev.mem is None or prev.mem.region != ins.mem.region:
                continue
            pslot = layout[prev.index]
            if prev.opcode is Opcode.CLFLUSH:
                g.add_edge(pslot.mem_touch, slot.addr_in, EdgeKind.ADDRESS_DEP)
            elif prev.opcode is Opcode.STORE and ins.opcode is Opcode.LOAD and prev.mem == ins.mem:
                ad = [n for n in slot.nodes if meta[n].micro_op and meta[n].micro_op.kind is K.ADDRESS_DISAMBIGUATE]
                if ad:
                    g.add_edge(pslot.mem_touch, ad[0], EdgeKind.ADDRESS_DEP)
                else:
                    g.add_edge(pslot.mem_touch, slot.addr_in, EdgeKind.ADDRESS_DEP)
            elif prev.opcode in (Opcode.LOAD, Opcode.STORE) and ins.opcode is Opcode.MEASURE:
                g.add_edge(pslot.mem_touch, slot.addr_in, EdgeKind.ADDRESS_DEP)

    # fences serialize everything around them
    for ins in instrs:
        if ins.opcode is not Opcode.FENCE:
            continue
        f = layout[ins.index].nodes[0]
        for other in instrs:
            if other.index == ins.index:
                continue
            for n in layout[other.index].nodes:
                if other.index < ins.index:
                    g.add_edge(n, f, EdgeKind.FENCE_ORDER)
                else:
                    g.add_edge(f, n, EdgeKind.FENCE_ORDER)

    # branches that are not predicted commit before what follows
    for ins in instrs:
        if not ins.opcode.is_branch:
            continue
        if _BRANCH_MECHANISM[ins.opcode] in mechs or ins.index in delayed:
            continue
        b = layout[ins.index].nodes[0]
        for later in instrs[ins.index + 1:]:
            for n in layout[later.index].nodes:
                g.add_edge(b, n, EdgeKind.CONTROL_COMMIT)

    # predictor mistraining feeds the trained branch
    for idx, _ in sorted(program.mistrained_branches().items()):
        b = layout[idx].nodes[0]
        m = node(f"mistrain i{idx}", None, synthetic="mistrain", target=idx)
        g.add_edge(m, b, EdgeKind.ADDRESS_DEP)

    ag = AttackGraph(g, meta, program, tm, layout, targets)
    return classify_roles(ag)


# ----------------------------------------------------------------------------
# roles


def _dataflow_closure(g: Tsg, seeds: dict[int, frozenset[int]]) -> dict[int, frozenset[int]]:
    """Propagate origin sets forward along DATA_DEP edges."""
    taint = dict(seeds)
    work = sorted(seeds)
    while work:
        x = work.pop()
        for y in g.successors(x):
            if not g.has_edge(x, y, EdgeKind.DATA_DEP):
                continue
            merged = taint.get(y, frozenset()) | taint[x]
            if merged != taint.get(y):
                taint[y] = merged
                work.append(y)
    return taint


def classify_roles(ag: AttackGraph, strict: bool = False) -> AttackGraph:
    """Assign each node one role, resolving overlaps by ``ROLE_PRECEDENCE``.

    With ``strict=True`` a node matching more than one role raises
    :class:`AmbiguousRole` instead.
    """
    prog = ag.program
    tm = ag.threat_model
    g = ag.graph
    K = MicroOpKind
    authz = prog.marked(AnnotationKind.AUTHORIZATION_MARKER)
    shared = prog.shared_regions()
    matches: list[set[NodeRole]] = [set() for _ in ag.node_meta]

    secret_nodes: set[int] = set()
    for n, m in enumerate(ag.node_meta):
        if m.instruction is None or m.instruction not in ag.secret_targets:
            continue
        ins = prog.instructions[m.instruction]
        kind = m.micro_op.kind if m.micro_op else None
        simple = not ag.layout[m.instruction].decomposed
        if simple and ins.opcode in (Opcode.LOAD, Opcode.STORE, Opcode.READ_SYSREG, Opcode.READ_FPREG):
            secret_nodes.add(n)
        elif kind in READ_KINDS or (ins.opcode is Opcode.STORE and kind is K.CACHE_FILL):
            secret_nodes.add(n)

    seeds: dict[int, frozenset[int]] = {n: frozenset({n}) for n in secret_nodes}
    for i, slot in ag.layout.items():
        if not slot.decomposed or slot.def_node in secret_nodes:
            continue
        origins = frozenset(n for n in slot.nodes if n in secret_nodes)
        if origins:
            seeds[slot.def_node] = origins
    taint = _dataflow_closure(g, seeds)

    for n, m in enumerate(ag.node_meta):
        r = matches[n]
        kind = m.micro_op.kind if m.micro_op else None
        if m.synthetic == "mistrain":
            r.add(NodeRole.SETUP)
            continue
        if m.synthetic is not None:
            continue
        ins = prog.instructions[m.instruction]
        slot = ag.layout[m.instruction]
        if kind in AUTH_MICRO_OPS or (not slot.decomposed and m.instruction in authz):
            r.add(NodeRole.AUTHORIZATION)
        if n in secret_nodes:
            r.add(NodeRole.SECRET_ACCESS)
        if n in taint and n not in seeds and ins.opcode is Opcode.ARITH:
            r.add(NodeRole.USE)
        if n == slot.mem_touch and ins.opcode in (Opcode.LOAD, Opcode.STORE):
            origins = frozenset().union(*(taint.get(s, frozenset()) for s in slot.address_sources))
            visible = (Channel.FLUSH_RELOAD in tm.channels and ins.mem.region in shared) or (
                Channel.PRIME_PROBE in tm.channels
            )
            if origins and visible:
                r.add(NodeRole.SEND)
                taint.setdefault(n, frozenset())
                taint[n] = taint[n] | origins
        if ins.opcode is Opcode.MEASURE and ins.mem.region in shared:
            r.add(NodeRole.RECEIVE)
        if ins.opcode is Opcode.CLFLUSH:
            r.add(NodeRole.SETUP)

    for n, m in enumerate(ag.node_meta):
        r = matches[n]
        if strict and len(r) > 1:
            raise AmbiguousRole(f"node {n} ({ag.label(n)}) matches {sorted(x.value for x in r)}")
        role = next((p for p in ROLE_PRECEDENCE if p in r), NodeRole.PLAIN)
        m.role = role
        m.matched_roles = frozenset(r)
        g.nodes[n].role = role
    ag.taint = taint
    return ag


# ----------------------------------------------------------------------------
# patterns used for catalog matching


@dataclass(frozen=True)
class AuthPattern:
    kind: str  # cond-branch, indirect-branch, return, permission-check, ...
    host: str  # opcode of the instruction the authorization belongs to


@dataclass(frozen=True)
class AccessPattern:
    op: str  # read or write
    source: MicroOpKind
    target: TargetClass | None


_AUTH_KIND = {
    Opcode.BRANCH_COND: "cond-branch",
    Opcode.BRANCH_IND: "indirect-branch",
    Opcode.RET: "return",
    MicroOpKind.PERMISSION_CHECK: "permission-check",
    MicroOpKind.ADDRESS_DISAMBIGUATE: "address-disambiguation",
    MicroOpKind.TSX_ABORT_RESOLVE: "tsx-abort",
}

_SIMPLE_SOURCE = {
    Opcode.LOAD: MicroOpKind.READ_MEMORY,
    Opcode.STORE: MicroOpKind.READ_MEMORY,
    Opcode.READ_SYSREG: MicroOpKind.READ_SPECIAL_REGISTER,
    Opcode.READ_FPREG: MicroOpKind.READ_FP_REGISTER,
}


def authorization_pattern(ag: AttackGraph, n: int) -> AuthPattern:
    ins = ag.instruction_of(n)
    kind = ag.micro_kind(n)
    if ins.opcode.is_branch:
        return AuthPattern(_AUTH_KIND[ins.opcode], ins.opcode.value)
    return AuthPattern(_AUTH_KIND.get(kind, "permission-check"), ins.opcode.value)


def access_pattern(ag: AttackGraph, n: int) -> AccessPattern:
    """Pattern of a SecretAccess node."""
    ins = ag.instruction_of(n)
    kind = ag.micro_kind(n)
    source = kind if kind in READ_KINDS else _SIMPLE_SOURCE[ins.opcode]
    op = "write" if ins.opcode is Opcode.STORE else "read"
    return AccessPattern(op, source, ag.secret_targets.get(ins.index))
