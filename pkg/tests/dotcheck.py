"""A small recursive-descent checker for the DOT subset the exporter emits.

Accepts ``digraph [ID] { stmt* }`` where a statement is a node, edge
(``->`` chains), attribute default (``graph|node|edge [..]``) or ``ID = ID``
assignment, each optionally followed by ``;``.
"""

import re

_TOKEN = re.compile(
    r'\s*(?:(?P<arrow>->)|(?P<punct>[{}\[\];,=])|(?P<str>"(?:[^"\\]|\\.)*")|(?P<id>[A-Za-z_0-9.#]+))'
)


class DotError(ValueError):
    pass


def tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise DotError(f"bad token at {pos}: {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0
        self.nodes = set()
        self.edges = []

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None, kind=None):
        k, v = self.peek()
        if k is None or (value is not None and v != value) or (kind is not None and k != kind):
            raise DotError(f"expected {value or kind}, got {v!r}")
        self.i += 1
        return v

    def ident(self):
        k, v = self.peek()
        if k not in ("id", "str"):
            raise DotError(f"expected identifier, got {v!r}")
        self.i += 1
        return v

    def attrs(self):
        out = {}
        self.take("[")
        while self.peek()[1] != "]":
            key = self.ident()
            self.take("=")
            out[key] = self.ident()
            if self.peek()[1] in (",", ";"):
                self.i += 1
        self.take("]")
        return out

    def stmt(self):
        first = self.ident()
        if first in ("graph", "node", "edge") and self.peek()[1] == "[":
            self.attrs()
        elif self.peek()[1] == "=":
            self.i += 1
            self.ident()
        else:
            chain = [first]
            while self.peek()[0] == "arrow":
                self.i += 1
                chain.append(self.ident())
            attrs = self.attrs() if self.peek()[1] == "[" else {}
            self.nodes.update(chain)
            for u, v in zip(chain, chain[1:]):
                self.edges.append((u, v, attrs))
            if len(chain) == 1:
                self.node_attrs[first] = attrs
        if self.peek()[1] == ";":
            self.i += 1

    def graph(self):
        self.node_attrs = {}
        self.take("digraph")
        if self.peek()[1] != "{":
            self.ident()
        self.take("{")
        while self.peek()[1] != "}":
            self.stmt()
        self.take("}")
        if self.i != len(self.toks):
            raise DotError("trailing tokens")
        return self


def parse_dot(text):
    """Returns (node attrs by id, edge list); raises DotError when malformed."""
    p = _Parser(tokenize(text)).graph()
    return p.node_attrs, p.edges
