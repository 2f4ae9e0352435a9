"""Graph and duplication-forest value types.

Both types are immutable once built. Every structural operation returns a
new value. Vertex ids are opaque tokens of visible ASCII; internal forest
nodes created here are named ``i<k>``.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping, NamedTuple

from .errors import (
    DuplicateIdError,
    NotACherryLeafError,
    ParseError,
    PreconditionError,
    UnknownVertexError,
    ValidationError,
)

__all__ = [
    "PpiGraph",
    "DuplicationForest",
    "Cherry",
    "neighbors",
    "contract_duplicate",
    "cherries",
    "contract_cherry",
    "expand_leaf",
    "pair_problems",
    "validate_pair",
    "parse_graph",
    "serialize_graph",
    "parse_forest",
    "serialize_forest",
]

_TOKEN = re.compile(r"[!-~]+\Z")


def _check_token(token):
    if not isinstance(token, str) or not _TOKEN.match(token):
        raise ValidationError(f"invalid id {token!r}: must be non-empty visible ASCII")


class PpiGraph:
    """Undirected simple graph stored as an adjacency map.

    Parameters
    ----------
    adjacency : mapping of id -> iterable of ids
        Must be symmetric and loop free; every neighbour must be a key.
    """

    __slots__ = ("_adj", "_hash")

    def __init__(self, adjacency: Mapping[str, Iterable[str]]):
        adj = {v: frozenset(ws) for v, ws in adjacency.items()}
        problems = []
        for v, ws in adj.items():
            _check_token(v)
            if v in ws:
                problems.append(f"self-loop at {v!r}")
            for w in ws:
                if w not in adj:
                    problems.append(f"neighbour {w!r} of {v!r} is not a vertex")
                elif v not in adj[w]:
                    problems.append(f"asymmetric edge {v!r}-{w!r}")
        if problems:
            raise ValidationError(problems)
        self._adj = adj
        self._hash = None

    @classmethod
    def from_edges(cls, vertices: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        adj: dict[str, set[str]] = {v: set() for v in vertices}
        for a, b in edges:
            for x in (a, b):
                if x not in adj:
                    raise UnknownVertexError(x)
            if a == b:
                raise ValidationError(f"self-loop at {a!r}")
            adj[a].add(b)
            adj[b].add(a)
        return cls(adj)

    @property
    def vertices(self) -> frozenset:
        return frozenset(self._adj)

    def neighbors(self, v: str) -> frozenset:
        try:
            return self._adj[v]
        except KeyError:
            raise UnknownVertexError(v) from None

    def has_edge(self, a: str, b: str) -> bool:
        return b in self.neighbors(a)

    def edges(self) -> list[tuple[str, str]]:
        """Sorted list of edges, each as ``(a, b)`` with ``a < b``."""
        return sorted((a, b) for a, ws in self._adj.items() for b in ws if a < b)

    def adjacency(self) -> dict[str, frozenset]:
        return dict(self._adj)

    def relabel(self, mapping: Mapping[str, str]) -> "PpiGraph":
        return PpiGraph({mapping[v]: [mapping[w] for w in ws] for v, ws in self._adj.items()})

    def __len__(self):
        return len(self._adj)

    def __contains__(self, v):
        return v in self._adj

    def __eq__(self, other):
        if not isinstance(other, PpiGraph):
            return NotImplemented
        return self._adj == other._adj

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._adj.items()))
        return self._hash

    def __repr__(self):
        iso = sorted(v for v, ws in self._adj.items() if not ws)
        body = ", ".join(f"{a}-{b}" for a, b in self.edges())
        if iso:
            body += (", " if body else "") + ", ".join(iso)
        return f"PpiGraph({{{body}}})"


class Cherry(NamedTuple):
    """Two sibling leaves; ``left < right``."""

    left: str
    right: str
    parent: str


class DuplicationForest:
    """Binary forest given by a parent map (``None`` marks a root).

    Children pairs are kept sorted so that equal forests compare and hash
    equal regardless of construction order.
    """

    __slots__ = ("_parent", "_children", "_hash")

    def __init__(self, parent: Mapping[str, str | None]):
        par = dict(parent)
        kids: dict[str, list[str]] = {n: [] for n in par}
        problems = []
        for n, p in par.items():
            _check_token(n)
            if p is None:
                continue
            if p not in par:
                problems.append(f"parent {p!r} of {n!r} is not a node")
            else:
                kids[p].append(n)
        for n, ks in kids.items():
            if len(ks) not in (0, 2):
                problems.append(f"node {n!r} has {len(ks)} children (binary forest needs 0 or 2)")
        if not problems:
            for n in par:
                seen = set()
                cur = n
                while cur is not None:
                    if cur in seen:
                        problems.append(f"cycle through {n!r}")
                        break
                    seen.add(cur)
                    cur = par[cur]
        if problems:
            raise ValidationError(problems)
        self._parent = par
        self._children = {n: tuple(sorted(ks)) for n, ks in kids.items()}
        self._hash = None

    @classmethod
    def singletons(cls, ids: Iterable[str]) -> "DuplicationForest":
        return cls({v: None for v in ids})

    @property
    def nodes(self) -> frozenset:
        return frozenset(self._parent)

    @property
    def leaves(self) -> frozenset:
        return frozenset(n for n, ks in self._children.items() if not ks)

    @property
    def internal_nodes(self) -> frozenset:
        return frozenset(n for n, ks in self._children.items() if ks)

    @property
    def roots(self) -> list[str]:
        return sorted(n for n, p in self._parent.items() if p is None)

    def parent(self, node: str) -> str | None:
        try:
            return self._parent[node]
        except KeyError:
            raise UnknownVertexError(node) from None

    def children(self, node: str) -> tuple:
        try:
            return self._children[node]
        except KeyError:
            raise UnknownVertexError(node) from None

    def parent_map(self) -> dict:
        return dict(self._parent)

    def is_leaf(self, node: str) -> bool:
        return not self.children(node)

    def sibling(self, node: str) -> str | None:
        p = self.parent(node)
        if p is None:
            return None
        a, b = self._children[p]
        return b if a == node else a

    def relabel(self, mapping: Mapping[str, str]) -> "DuplicationForest":
        def m(x):
            return mapping.get(x, x)

        return DuplicationForest({m(n): (None if p is None else m(p)) for n, p in self._parent.items()})

    def __len__(self):
        return len(self._parent)

    def __eq__(self, other):
        if not isinstance(other, DuplicationForest):
            return NotImplemented
        return self._parent == other._parent

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._parent.items()))
        return self._hash

    def __repr__(self):
        return f"DuplicationForest({serialize_forest(self).strip()!r})"


def neighbors(g: PpiGraph, v: str) -> frozenset:
    return g.neighbors(v)


def contract_duplicate(g: PpiGraph, u: str, v: str) -> PpiGraph:
    """Merge duplicate ``v`` into anchor ``u``.

    ``u`` inherits every neighbour of ``v`` except itself; any ``u``-``v``
    edge disappears with ``v``.
    """
    if u == v:
        raise PreconditionError("anchor and duplicate must differ")
    nu, nv = g.neighbors(u), g.neighbors(v)
    adj = g.adjacency()
    del adj[v]
    merged = (nu | nv) - {u, v}
    adj[u] = merged
    for w, ws in adj.items():
        if w == u:
            continue
        if v in ws or w in merged:
            ws = set(ws)
            ws.discard(v)
            if w in merged:
                ws.add(u)
            adj[w] = frozenset(ws)
    return PpiGraph(adj)


def cherries(f: DuplicationForest) -> list[Cherry]:
    """All cherries of ``f`` sorted by parent id."""
    out = []
    for n in sorted(f.internal_nodes):
        a, b = f.children(n)
        if f.is_leaf(a) and f.is_leaf(b):
            out.append(Cherry(a, b, n))
    return out


def contract_cherry(f: DuplicationForest, v: str) -> tuple[DuplicationForest, str]:
    """Collapse the cherry containing leaf ``v``; returns ``(forest, anchor)``.

    The former parent becomes a leaf carrying the sibling's id.
    """
    if v not in f.nodes or not f.is_leaf(v):
        raise NotACherryLeafError(f"{v!r} is not a leaf")
    u = f.sibling(v)
    if u is None or not f.is_leaf(u):
        raise NotACherryLeafError(f"{v!r} is not part of a cherry")
    parent = f.parent_map()
    p = parent[v]
    grand = parent[p]
    del parent[v], parent[p]
    parent[u] = grand
    return DuplicationForest(parent), u


def _fresh_internal_id(f: DuplicationForest) -> str:
    nodes = f.nodes
    k = len(f.internal_nodes) + 1
    while f"i{k}" in nodes:
        k += 1
    return f"i{k}"


def expand_leaf(f: DuplicationForest, u: str, v: str) -> DuplicationForest:
    """Replace leaf ``u`` by a cherry with leaves ``u`` and ``v``."""
    if u not in f.nodes:
        raise UnknownVertexError(u)
    if not f.is_leaf(u):
        raise NotACherryLeafError(f"{u!r} is not a leaf")
    if v in f.nodes:
        raise DuplicateIdError(f"node id {v!r} already in forest")
    _check_token(v)
    parent = f.parent_map()
    new = _fresh_internal_id(f)
    parent[new] = parent[u]
    parent[u] = new
    parent[v] = new
    return DuplicationForest(parent)


def pair_problems(g: PpiGraph, f: DuplicationForest) -> list[str]:
    """Every violated invariant of the pair ``(g, f)``; empty when valid."""
    problems = []
    leaves, verts = f.leaves, g.vertices
    if leaves != verts:
        missing = sorted(verts - leaves)
        extra = sorted(leaves - verts)
        msg = "leaf mismatch:"
        if missing:
            msg += f" vertices without leaf {missing}"
        if extra:
            msg += f" leaves without vertex {extra}"
        problems.append(msg)
    n_roots = len(f.roots)
    if n_roots != 2:
        problems.append(f"tree count: forest has {n_roots} trees, a two-node seed needs 2")
    n_int = len(f.internal_nodes)
    if n_int != len(g) - 2:
        problems.append(f"internal node count: {n_int} internal nodes, expected {len(g) - 2}")
    return problems


def validate_pair(g: PpiGraph, f: DuplicationForest) -> None:
    """Raise :class:`ValidationError` listing every violated invariant."""
    problems = pair_problems(g, f)
    if problems:
        raise ValidationError(problems)


# -- text formats ----------------------------------------------------------


def _lines(text):
    for no, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def parse_graph(text: str, source: str | None = None) -> PpiGraph:
    """Parse ``v <id>`` / ``e <id> <id>`` lines."""
    adj: dict[str, set[str]] = {}
    for no, parts in _lines(text):
        kind = parts[0]
        if kind == "v":
            if len(parts) != 2:
                raise ParseError("expected 'v <id>'", no, source)
            v = parts[1]
            if v in adj:
                raise ParseError(f"vertex {v!r} declared twice", no, source)
            adj[v] = set()
        elif kind == "e":
            if len(parts) != 3:
                raise ParseError("expected 'e <id> <id>'", no, source)
            a, b = parts[1], parts[2]
            for x in (a, b):
                if x not in adj:
                    raise ParseError(f"undeclared vertex {x!r}", no, source)
            if a == b:
                raise ParseError(f"self-loop at {a!r}", no, source)
            if b in adj[a]:
                raise ParseError(f"duplicate edge {a!r}-{b!r}", no, source)
            adj[a].add(b)
            adj[b].add(a)
        else:
            raise ParseError(f"unknown record type {kind!r}", no, source)
    return PpiGraph(adj)


def serialize_graph(g: PpiGraph) -> str:
    out = [f"v {v}\n" for v in sorted(g.vertices)]
    out += [f"e {a} {b}\n" for a, b in g.edges()]
    return "".join(out)


def parse_forest(text: str, source: str | None = None) -> DuplicationForest:
    """Parse ``n <node> <parent|->`` lines."""
    parent: dict[str, str | None] = {}
    where: dict[str, int] = {}
    for no, parts in _lines(text):
        if parts[0] != "n" or len(parts) != 3:
            raise ParseError("expected 'n <node-id> <parent-id|->'", no, source)
        node, p = parts[1], parts[2]
        if node in parent:
            raise ParseError(f"node {node!r} declared twice", no, source)
        parent[node] = None if p == "-" else p
        where[node] = no
    for node, p in parent.items():
        if p is not None and p not in parent:
            raise ParseError(f"undeclared parent {p!r}", where[node], source)
        if p == node:
            raise ParseError(f"node {node!r} is its own parent", where[node], source)
    return DuplicationForest(parent)


def serialize_forest(f: DuplicationForest) -> str:
    pm = f.parent_map()
    return "".join(f"n {n} {'-' if pm[n] is None else pm[n]}\n" for n in sorted(pm))
