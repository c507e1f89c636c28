"""Topological sort graphs: happens-before DAGs over operations.

An edge ``u -> v`` means ``u`` completes before ``v`` starts. A valid ordering
is a topological sort. Two distinct nodes race when some valid ordering puts
``u`` first and another puts ``v`` first, which is the case exactly when no
directed path joins them in either direction; ``race_condition`` decides races
by reachability and ``race_oracle`` by enumerating orderings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Sequence

__all__ = [
    "ORACLE_LIMIT",
    "EdgeKind",
    "Node",
    "Tsg",
    "RacePair",
    "TsgError",
    "CycleError",
    "SelfEdgeError",
    "PermutationError",
    "LimitError",
    "SameNodeError",
    "add_node",
    "add_edge",
    "is_valid_ordering",
    "enumerate_valid_orderings",
    "iter_valid_orderings",
    "has_path",
    "race_condition",
    "race_oracle",
    "oracle_race_matrix",
    "all_races",
    "ordering_with_first",
]

ORACLE_LIMIT = 10


class TsgError(Exception):
    pass


class CycleError(TsgError):
    pass


class SelfEdgeError(TsgError):
    pass


class PermutationError(TsgError):
    pass


class LimitError(TsgError):
    pass


class SameNodeError(TsgError):
    pass


class EdgeKind(enum.Enum):
    """Why an ordering edge exists. Kinds do not change ordering semantics."""

    DATA_DEP = "data-dep"
    ADDRESS_DEP = "address-dep"
    CONTROL_COMMIT = "control-commit"
    FENCE_ORDER = "fence-order"
    MICRO_OP_ORDER = "micro-op-order"
    SECURITY_DEP = "security-dep"


@dataclass
class Node:
    label: str
    role: Any = None


@dataclass(frozen=True)
class RacePair:
    a: int
    b: int
    witness_orderings: tuple[tuple[int, ...], tuple[int, ...]] | None = None


class Tsg:
    """A DAG of labelled nodes with kinded edges.

    Node ids are dense integers assigned in insertion order. Every mutation
    keeps the graph acyclic; a rejected ``add_edge`` leaves it unchanged.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._succ: list[dict[int, set[EdgeKind]]] = []
        self._pred: list[dict[int, set[EdgeKind]]] = []

    def __len__(self):
        return len(self.nodes)

    def copy(self) -> "Tsg":
        g = Tsg()
        g.nodes = [Node(n.label, n.role) for n in self.nodes]
        g._succ = [{k: set(v) for k, v in d.items()} for d in self._succ]
        g._pred = [{k: set(v) for k, v in d.items()} for d in self._pred]
        return g

    def _check(self, u: int):
        if not (isinstance(u, int) and 0 <= u < len(self.nodes)):
            raise IndexError(f"invalid node id {u!r}")

    def add_node(self, label: str, role: Any = None) -> int:
        self.nodes.append(Node(label, role))
        self._succ.append({})
        self._pred.append({})
        return len(self.nodes) - 1

    def add_edge(self, u: int, v: int, kind: EdgeKind) -> None:
        self._check(u)
        self._check(v)
        if u == v:
            raise SelfEdgeError(f"self edge on node {u}")
        kinds = self._succ[u].get(v)
        if kinds is not None:
            if kind in kinds:
                return
        elif self.has_path(v, u):
            raise CycleError(f"edge {u}->{v} would close a cycle")
        self._succ[u].setdefault(v, set()).add(kind)
        self._pred[v].setdefault(u, set()).add(kind)

    def remove_edge(self, u: int, v: int, kind: EdgeKind | None = None) -> None:
        """Drop the edge of ``kind`` (all kinds if None); missing edges are ignored."""
        kinds = self._succ[u].get(v)
        if not kinds:
            return
        if kind is None:
            kinds.clear()
        else:
            kinds.discard(kind)
        if not kinds:
            del self._succ[u][v]
            del self._pred[v][u]
        else:
            self._pred[v][u] = set(kinds)

    def edges(self) -> list[tuple[int, int, EdgeKind]]:
        """All (from, to, kind) triples in a fixed order."""
        out = []
        for u, targets in enumerate(self._succ):
            for v in sorted(targets):
                for kind in sorted(targets[v], key=lambda k: k.value):
                    out.append((u, v, kind))
        return out

    def has_edge(self, u: int, v: int, kind: EdgeKind | None = None) -> bool:
        kinds = self._succ[u].get(v)
        if not kinds:
            return False
        return kind is None or kind in kinds

    def successors(self, u: int) -> list[int]:
        return sorted(self._succ[u])

    def predecessors(self, u: int) -> list[int]:
        return sorted(self._pred[u])

    def has_path(self, u: int, v: int) -> bool:
        self._check(u)
        self._check(v)
        if u == v:
            return True
        seen = {u}
        stack = [u]
        while stack:
            x = stack.pop()
            for y in self._succ[x]:
                if y == v:
                    return True
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return False

    def descendants(self, u: int) -> set[int]:
        seen = set()
        stack = [u]
        while stack:
            x = stack.pop()
            for y in self._succ[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return seen

    def ancestors(self, u: int) -> set[int]:
        seen = set()
        stack = [u]
        while stack:
            x = stack.pop()
            for y in self._pred[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return seen


# Function-style API mirroring the methods.


def add_node(g: Tsg, label: str, role: Any = None) -> int:
    return g.add_node(label, role)


def add_edge(g: Tsg, u: int, v: int, kind: EdgeKind) -> None:
    g.add_edge(u, v, kind)


def has_path(g: Tsg, u: int, v: int) -> bool:
    return g.has_path(u, v)


def is_valid_ordering(g: Tsg, s: Sequence[int]) -> bool:
    """True iff every edge's source precedes its target in ``s``."""
    n = len(g)
    if len(s) != n or sorted(s) != list(range(n)):
        raise PermutationError("ordering must list every node exactly once")
    pos = {v: i for i, v in enumerate(s)}
    return all(pos[u] < pos[v] for u, v, _ in g.edges())


def iter_valid_orderings(g: Tsg) -> Iterator[tuple[int, ...]]:
    """Lazily yield all valid orderings in lexicographic order."""
    n = len(g)
    indeg = [len(g._pred[v]) for v in range(n)]
    succ = [list(g._succ[v]) for v in range(n)]
    prefix: list[int] = []
    placed = [False] * n

    def rec():
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for v in range(n):
            if placed[v] or indeg[v]:
                continue
            placed[v] = True
            prefix.append(v)
            for w in succ[v]:
                indeg[w] -= 1
            yield from rec()
            for w in succ[v]:
                indeg[w] += 1
            prefix.pop()
            placed[v] = False

    yield from rec()


def enumerate_valid_orderings(
    g: Tsg, cap: int | None = None, limit: int = ORACLE_LIMIT
) -> list[tuple[int, ...]]:
    """All valid orderings, lexicographic, truncated at ``cap``.

    Raises:
        LimitError: if the graph has more than ``limit`` nodes and no cap.
    """
    if cap is None and len(g) > limit:
        raise LimitError(f"{len(g)} nodes exceeds oracle limit {limit}")
    out = []
    for s in iter_valid_orderings(g):
        if cap is not None and len(out) >= cap:
            break
        out.append(s)
    return out


def race_condition(g: Tsg, u: int, v: int) -> bool:
    """Race iff neither node reaches the other."""
    if u == v:
        raise SameNodeError("a node does not race with itself")
    return not (g.has_path(u, v) or g.has_path(v, u))


def race_oracle(g: Tsg, u: int, v: int, limit: int = ORACLE_LIMIT) -> bool:
    """Race decided from the definition: two valid orderings disagree on (u, v)."""
    if u == v:
        raise SameNodeError("a node does not race with itself")
    g._check(u)
    g._check(v)
    if len(g) > limit:
        raise LimitError(f"{len(g)} nodes exceeds oracle limit {limit}")
    seen_uv = seen_vu = False
    for s in iter_valid_orderings(g):
        if s.index(u) < s.index(v):
            seen_uv = True
        else:
            seen_vu = True
        if seen_uv and seen_vu:
            return True
    return False


def oracle_race_matrix(g: Tsg, limit: int = ORACLE_LIMIT) -> list[list[bool]]:
    """``m[u][v]`` is the ordering-definition verdict for every pair at once.

    Valid orderings are walked as paths through the lattice of placed-node
    sets: orderings whose prefixes place the same set share every
    continuation, so each (placed set, next node) step is visited once
    instead of once per ordering. Placing ``x`` when ``S`` is already placed
    puts ``x`` before every node outside ``S | {x}`` in every completion,
    and every prefix of a valid ordering completes, so ``m[u][v]`` holds
    exactly when some valid ordering has ``u`` first and another ``v`` first.
    """
    n = len(g)
    if n > limit:
        raise LimitError(f"{n} nodes exceeds oracle limit {limit}")
    full = (1 << n) - 1
    need = [sum(1 << p for p in g._pred[v]) for v in range(n)]
    # before[u]: bitmask of nodes placed after u in some valid ordering
    before = [0] * n
    seen = {0}
    stack = [0]
    while stack:
        placed = stack.pop()
        for x in range(n):
            bit = 1 << x
            if placed & bit or need[x] & ~placed:
                continue
            nxt = placed | bit
            before[x] |= full & ~nxt
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return [
        [u != v and bool(before[u] >> v & 1) and bool(before[v] >> u & 1) for v in range(n)]
        for u in range(n)
    ]


def ordering_with_first(g: Tsg, x: int, y: int) -> tuple[int, ...]:
    """A valid ordering that puts ``x`` before ``y``; requires no path y->x.

    Schedules ``x`` and its ancestors ahead of everything else, lowest id first.
    """
    if g.has_path(y, x):
        raise ValueError(f"{y} reaches {x}; no ordering puts {x} first")
    front = g.ancestors(x) | {x}
    n = len(g)
    indeg = [len(g._pred[v]) for v in range(n)]
    out: list[int] = []
    ready = [v for v in range(n) if indeg[v] == 0]
    while ready:
        ready.sort(key=lambda v: (v not in front, v))
        v = ready.pop(0)
        out.append(v)
        for w in g._succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    return tuple(out)


def all_races(
    g: Tsg, among: Iterable[int] | None = None, limit: int = ORACLE_LIMIT
) -> list[RacePair]:
    """Every racing unordered pair (optionally within ``among``), a < b.

    Witness orderings are attached when the graph is within the oracle limit.
    """
    nodes = sorted(set(range(len(g)) if among is None else among))
    out = []
    for i, a in enumerate(nodes):
        reach = g.descendants(a)
        for b in nodes[i + 1:]:
            if b in reach or a in g.descendants(b):
                continue
            witness = None
            if len(g) <= limit:
                witness = (ordering_with_first(g, a, b), ordering_with_first(g, b, a))
            out.append(RacePair(a, b, witness))
    return out
