"""Race findings and security-dependency defenses.

A finding is an Authorization node racing with a node it is supposed to
guard. A defense plan inserts ``SECURITY_DEP`` edges (and, for clearing
predictions, a predictor-flush node) into a copy of the attack graph, then
re-runs detection on the copy to decide whether the plan is sufficient.

Protection goals used by :func:`verify_defense`:

* ``PREVENT_ACCESS``: no finding of any severity may remain.
* ``PREVENT_USE``, ``PREVENT_SEND``, ``CLEAR_PREDICTIONS``: no finding may
  keep a complete channel path (access, racing Send, Receive). Access-only
  races may remain, since the secret never reaches the receiver.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .builder import (
    READ_KINDS,
    AccessPattern,
    AttackGraph,
    AuthPattern,
    NodeMeta,
    NodeRole,
    access_pattern,
    authorization_pattern,
)
from .catalog import AttackVariantTemplate, builtin_catalog, match_patterns
from .tsg import EdgeKind, race_condition

__all__ = [
    "DefenseStrategy",
    "RaceFinding",
    "Verdict",
    "DefensePlan",
    "NoAuthorizationNode",
    "find_vulnerabilities",
    "apply_defense",
    "apply_plan",
    "verify_defense",
    "suggest_defenses",
    "empty_plan",
]


class NoAuthorizationNode(ValueError):
    pass


class DefenseStrategy(enum.Enum):
    PREVENT_ACCESS = "prevent-access"
    PREVENT_USE = "prevent-use"
    PREVENT_SEND = "prevent-send"
    CLEAR_PREDICTIONS = "clear-predictions"


_STRATEGY_ORDER = list(DefenseStrategy)


@dataclass(frozen=True)
class RaceFinding:
    authorization: int
    access: int
    access_role: NodeRole
    secret_sources: tuple[int, ...]
    channel_path: tuple[int, ...]
    auth_pattern: AuthPattern
    access_patterns: tuple[AccessPattern, ...]
    matched_variants: tuple[tuple[str, str], ...] = ()  # (template, quality)

    @property
    def severity(self) -> str:
        return "exfiltration" if self.channel_path else "access-only"

    @property
    def key(self) -> tuple[int, int]:
        return (self.authorization, self.access)


@dataclass(frozen=True)
class Verdict:
    sufficient: bool
    residual: tuple[RaceFinding, ...] = ()


@dataclass
class DefensePlan:
    strategy: DefenseStrategy
    inserted_edges: tuple[tuple[int, int], ...] = ()
    new_nodes: tuple[str, ...] = ()
    removed_edges: tuple[tuple[int, int], ...] = ()
    restored_edges: tuple[tuple[int, int], ...] = ()
    verdict: Verdict | None = None
    note: str | None = None
    graph: AttackGraph | None = field(default=None, compare=False, repr=False)

    @property
    def sufficient(self) -> bool:
        return bool(self.verdict and self.verdict.sufficient)

    @property
    def edge_count(self) -> int:
        return len(self.inserted_edges)


# ----------------------------------------------------------------------------
# detection


def _is_intra(ag: AttackGraph, a: int) -> bool:
    return ag.layout[ag.node_meta[a].instruction].decomposed


def _origin_instructions(ag: AttackGraph, n: int) -> set[int]:
    return {ag.node_meta[s].instruction for s in ag.taint.get(n, ())}


def _guards(ag: AttackGraph, a: int, n: int) -> bool:
    """Whether authorization ``a`` is the kind of check that should precede ``n``."""
    ia = ag.node_meta[a].instruction
    inn = ag.node_meta[n].instruction
    if ia is None or inn is None:
        return False
    if not _is_intra(ag, a):
        return inn > ia
    if ag.role(n) is NodeRole.SECRET_ACCESS:
        return inn == ia
    return ia in _origin_instructions(ag, n)


def _secret_sources(ag: AttackGraph, n: int) -> tuple[int, ...]:
    if ag.role(n) is NodeRole.SECRET_ACCESS:
        return (n,)
    return tuple(sorted(s for s in ag.taint.get(n, ()) if ag.role(s) is NodeRole.SECRET_ACCESS))


def _bfs_path(ag: AttackGraph, src: int, goal) -> tuple[int, ...]:
    """Shortest path from ``src`` to the lowest-id node satisfying ``goal``."""
    g = ag.graph
    prev = {src: None}
    q = deque([src])
    hits = []
    while q:
        x = q.popleft()
        if goal(x):
            hits.append(x)
        for y in g.successors(x):
            if y not in prev:
                prev[y] = x
                q.append(y)
    if not hits:
        return ()
    path = []
    x = min(hits)
    while x is not None:
        path.append(x)
        x = prev[x]
    return tuple(reversed(path))


def _channel_path(ag: AttackGraph, a: int, n: int) -> tuple[int, ...]:
    g = ag.graph
    reach = g.descendants(n) | {n}
    sends = sorted(
        s
        for s in reach
        if ag.role(s) is NodeRole.SEND and (s == n or race_condition(g, a, s))
    )
    for s in sends:
        tail = _bfs_path(ag, s, lambda x: ag.role(x) is NodeRole.RECEIVE)
        if tail:
            head = _bfs_path(ag, n, lambda x: x == s)
            return head[:-1] + tail
    return ()


def find_vulnerabilities(
    ag: AttackGraph,
    include_use: bool = False,
    catalog: Iterable[AttackVariantTemplate] | None = None,
) -> list[RaceFinding]:
    """Every applicable (authorization, access) pair that races.

    Candidates are SecretAccess and Send nodes (and Use nodes with
    ``include_use``). Findings are ordered by (authorization, access).
    """
    catalog = builtin_catalog() if catalog is None else list(catalog)
    g = ag.graph
    roles = {NodeRole.SECRET_ACCESS, NodeRole.SEND}
    if include_use:
        roles.add(NodeRole.USE)
    candidates = [n for n, m in enumerate(ag.node_meta) if m.role in roles]
    out = []
    for a in ag.nodes_with_role(NodeRole.AUTHORIZATION):
        for n in candidates:
            if not _guards(ag, a, n) or not race_condition(g, a, n):
                continue
            sources = _secret_sources(ag, n)
            auth = authorization_pattern(ag, a)
            accesses = tuple(access_pattern(ag, s) for s in sources)
            out.append(
                RaceFinding(
                    authorization=a,
                    access=n,
                    access_role=ag.role(n),
                    secret_sources=sources,
                    channel_path=_channel_path(ag, a, n),
                    auth_pattern=auth,
                    access_patterns=accesses,
                    matched_variants=tuple(match_patterns(auth, accesses, catalog)),
                )
            )
    return out


# ----------------------------------------------------------------------------
# plans


def empty_plan(strategy: DefenseStrategy = DefenseStrategy.PREVENT_ACCESS) -> DefensePlan:
    return DefensePlan(strategy)


def _flush_node(ag: AttackGraph, branch_instr: int) -> int | None:
    for n, m in enumerate(ag.node_meta):
        if m.synthetic == "flush-predictor" and m.target == branch_instr:
            return n
    return None


def apply_plan(ag: AttackGraph, plan: DefensePlan) -> AttackGraph:
    """A copy of ``ag`` with the plan's edits; applying twice equals once."""
    out = ag.copy()
    g = out.graph
    for label in plan.new_nodes:
        target = int(label.rsplit("i", 1)[1])
        if _flush_node(out, target) is None:
            n = g.add_node(label)
            out.node_meta.append(
                NodeMeta(None, None, NodeRole.PLAIN, synthetic="flush-predictor", target=target)
            )
            g.nodes[n].role = NodeRole.PLAIN
    for u, v in plan.removed_edges:
        g.remove_edge(u, v)
    for u, v in plan.restored_edges:
        if not g.has_path(v, u):
            g.add_edge(u, v, EdgeKind.CONTROL_COMMIT)
    for u, v in plan.inserted_edges:
        g.add_edge(u, v, EdgeKind.SECURITY_DEP)
    return out


def verify_defense(ag: AttackGraph, plan: DefensePlan) -> Verdict:
    """Re-run detection on ``ag`` with ``plan`` applied and judge the result."""
    after = apply_plan(ag, plan)
    findings = find_vulnerabilities(after)
    if plan.strategy is DefenseStrategy.PREVENT_ACCESS:
        residual = findings
    else:
        residual = [f for f in findings if f.channel_path]
    return Verdict(not residual, tuple(residual))


def _access_targets(ag: AttackGraph, findings, restrict_to) -> list[tuple[int, int]]:
    g = ag.graph
    edges = set()
    for f in findings:
        a = f.authorization
        for s in f.secret_sources:
            slot = ag.layout[ag.node_meta[s].instruction]
            siblings = [n for n in slot.nodes if ag.micro_kind(n) in READ_KINDS] if slot.decomposed else []
            for t in sorted({s, *siblings}):
                if _guards(ag, a, t) and race_condition(g, a, t):
                    edges.add((a, t))
    return _restrict(edges, restrict_to)


def _consumers(ag: AttackGraph, d: int) -> set[int]:
    """Nodes reading the register value defined at ``d``."""
    g = ag.graph
    out = {y for y in g.successors(d) if g.has_edge(d, y, EdgeKind.DATA_DEP)}
    for slot in ag.layout.values():
        if d in slot.address_sources:
            out.add(slot.addr_in)
    return out


def _use_targets(ag: AttackGraph, findings, restrict_to) -> list[tuple[int, int]]:
    g = ag.graph
    edges = set()
    for f in findings:
        a = f.authorization
        for s in f.secret_sources:
            d = ag.layout[ag.node_meta[s].instruction].def_node
            for c in _consumers(ag, d):
                if ag.node_meta[c].instruction is None:
                    continue
                if _guards_value(ag, a, c) and race_condition(g, a, c):
                    edges.add((a, c))
    return _restrict(edges, restrict_to)


def _guards_value(ag: AttackGraph, a: int, c: int) -> bool:
    if not _is_intra(ag, a):
        return ag.node_meta[c].instruction > ag.node_meta[a].instruction
    return True


def _send_targets(ag: AttackGraph, findings, restrict_to) -> list[tuple[int, int]]:
    g = ag.graph
    receivers = ag.nodes_with_role(NodeRole.RECEIVE)
    edges = set()
    for a in sorted({f.authorization for f in findings}):
        for s in ag.nodes_with_role(NodeRole.SEND):
            if not _guards(ag, a, s) or not race_condition(g, a, s):
                continue
            if any(g.has_path(s, r) for r in receivers):
                edges.add((a, s))
    return _restrict(edges, restrict_to)


def _restrict(edges, restrict_to):
    if restrict_to is not None:
        keep = set(restrict_to)
        edges = {e for e in edges if e[1] in keep}
    return sorted(edges)


def _mistrained_authorizations(ag: AttackGraph, findings) -> list[int]:
    trained = {m.target for m in ag.node_meta if m.synthetic == "mistrain"}
    out = set()
    for f in findings:
        meta = ag.node_meta[f.authorization]
        if meta.instruction in trained and ag.instruction_of(f.authorization).opcode.is_branch:
            out.add(f.authorization)
    return sorted(out)


def _clear_predictions(ag: AttackGraph, findings) -> DefensePlan:
    g = ag.graph
    branches = _mistrained_authorizations(ag, findings)
    new_nodes, inserted, removed, restored = [], [], [], []
    next_id = len(g)
    for b in branches:
        idx = ag.node_meta[b].instruction
        f = _flush_node(ag, idx)
        if f is None:
            f = next_id
            next_id += 1
            new_nodes.append(f"flush-predictor i{idx}")
        inserted.append((f, b))
        for n, m in enumerate(ag.node_meta):
            if m.synthetic == "mistrain" and m.target == idx and g.has_edge(n, b):
                removed.append((n, b))
        for n, m in enumerate(ag.node_meta):
            if m.instruction is not None and m.instruction > idx and not g.has_edge(b, n):
                restored.append((b, n))
    note = None if branches else "no mistrained predictor feeds a racing authorization"
    return DefensePlan(
        DefenseStrategy.CLEAR_PREDICTIONS,
        tuple(inserted),
        tuple(new_nodes),
        tuple(removed),
        tuple(restored),
        note=note,
    )


def apply_defense(
    ag: AttackGraph,
    strategy: DefenseStrategy,
    findings: list[RaceFinding] | None = None,
    restrict_to: Iterable[int] | None = None,
) -> DefensePlan:
    """Build, apply and verify one strategy's plan.

    ``restrict_to`` keeps only inserted edges whose target is in the given
    node set, which is how a deliberately partial plan is expressed.
    """
    if not ag.nodes_with_role(NodeRole.AUTHORIZATION):
        raise NoAuthorizationNode("graph has no Authorization node to anchor a defense on")
    findings = find_vulnerabilities(ag) if findings is None else findings
    note = None
    if strategy is DefenseStrategy.PREVENT_ACCESS:
        plan = DefensePlan(strategy, tuple(_access_targets(ag, findings, restrict_to)))
    elif strategy is DefenseStrategy.PREVENT_USE:
        plan = DefensePlan(strategy, tuple(_use_targets(ag, findings, restrict_to)))
    elif strategy is DefenseStrategy.PREVENT_SEND:
        edges = _send_targets(ag, findings, restrict_to)
        if not ag.nodes_with_role(NodeRole.RECEIVE):
            note = "no Receive node: nothing to exfiltrate through"
        plan = DefensePlan(strategy, tuple(edges), note=note)
    else:
        plan = _clear_predictions(ag, findings)
    # drop edges that would close a cycle in the target graph
    probe = ag.copy()
    for u, v in plan.restored_edges:
        if not probe.graph.has_path(v, u):
            probe.graph.add_edge(u, v, EdgeKind.CONTROL_COMMIT)
    kept = []
    for u, v in plan.inserted_edges:
        if u >= len(probe.graph) or v >= len(probe.graph) or not probe.graph.has_path(v, u):
            kept.append((u, v))
    plan.inserted_edges = tuple(kept)
    plan.graph = apply_plan(ag, plan)
    plan.verdict = verify_defense(ag, plan)
    return plan


def _applicable(ag: AttackGraph, findings) -> list[DefenseStrategy]:
    out = [DefenseStrategy.PREVENT_ACCESS]
    if _use_targets(ag, findings, None):
        out.append(DefenseStrategy.PREVENT_USE)
    out.append(DefenseStrategy.PREVENT_SEND)
    if _mistrained_authorizations(ag, findings):
        out.append(DefenseStrategy.CLEAR_PREDICTIONS)
    return out


def suggest_defenses(ag: AttackGraph, findings: list[RaceFinding] | None = None) -> list[DefensePlan]:
    """One verified plan per applicable strategy, cheapest sufficient first."""
    findings = find_vulnerabilities(ag) if findings is None else findings
    if not findings:
        return []
    plans = [apply_defense(ag, s, findings) for s in _applicable(ag, findings)]
    plans.sort(key=lambda p: (not p.sufficient, p.edge_count, _STRATEGY_ORDER.index(p.strategy)))
    return plans
