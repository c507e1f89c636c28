"""Graphviz DOT export of attack graphs."""

from __future__ import annotations

from .builder import AttackGraph, NodeRole
from .tsg import EdgeKind

__all__ = ["ROLE_COLORS", "EDGE_STYLES", "to_dot"]

ROLE_COLORS = {
    NodeRole.SETUP: "#d9d9d9",
    NodeRole.AUTHORIZATION: "#ffd966",
    NodeRole.SECRET_ACCESS: "#f4a6a6",
    NodeRole.USE: "#f9cb9c",
    NodeRole.SEND: "#9fc5e8",
    NodeRole.RECEIVE: "#b6d7a8",
    NodeRole.PLAIN: "#ffffff",
}

EDGE_STYLES = {
    EdgeKind.DATA_DEP: 'color="black"',
    EdgeKind.ADDRESS_DEP: 'color="blue"',
    EdgeKind.CONTROL_COMMIT: 'color="gray40", style="bold"',
    EdgeKind.FENCE_ORDER: 'color="gray40", style="dotted"',
    EdgeKind.MICRO_OP_ORDER: 'color="darkgreen"',
    EdgeKind.SECURITY_DEP: 'color="red", style="dashed"',
}


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(ag: AttackGraph, name: str = "attack_graph") -> str:
    g = ag.graph
    lines = [f"digraph {_quote(name)} {{"]
    if len(g):
        lines.append('  node [shape=box, style=filled, fontname="Helvetica"];')
    for n in range(len(g)):
        role = ag.role(n)
        label = f"{n}:{ag.label(n)}"
        lines.append(
            f"  n{n} [label={_quote(label)}, fillcolor={_quote(ROLE_COLORS[role])}, "
            f"tooltip={_quote(role.value)}];"
        )
    for u, v, kind in g.edges():
        lines.append(f"  n{u} -> n{v} [{EDGE_STYLES[kind]}, tooltip={_quote(kind.value)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
