"""Mixed prerequisite graph over knowledge points.

Directed edges mean "source is a prerequisite of target"; undirected edges
mean the two points are associated without a known direction. The directed
part is always acyclic. Values are immutable; every operation returns a
new graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .errors import CycleError, ParseError, ReverseEdgeError
from .model import KnowledgePoint

GRAPH_FORMAT_VERSION = 1

DIRECTED_SENTENCE = (
    "{u} is a prerequisite for {v}. If {v} is used, then {u} could also be used."
)
UNDIRECTED_SENTENCE = (
    "{u} and {v} are associated, but the direction of dependency is unclear. "
    "Either could be a prerequisite for the other."
)


def topological_order(k: int, directed: Iterable[tuple[int, int]]) -> list[int] | None:
    """Kahn topological sort; None when the directed edges contain a cycle."""
    succ: dict[int, list[int]] = {i: [] for i in range(k)}
    indeg = [0] * k
    for u, v in directed:
        succ[u].append(v)
        indeg[v] += 1
    ready = sorted(i for i in range(k) if indeg[i] == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in sorted(succ[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    return order if len(order) == k else None


@dataclass(frozen=True)
class Mcg:
    """Mixed graph: ordered knowledge points, directed and undirected edges.

    Edge endpoints are node indices. Undirected pairs are stored as
    (min, max) tuples.
    """

    nodes: tuple[KnowledgePoint, ...]
    directed: frozenset[tuple[int, int]] = frozenset()
    undirected: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "directed", frozenset(self.directed))
        und = frozenset((min(a, b), max(a, b)) for a, b in self.undirected)
        object.__setattr__(self, "undirected", und)
        k = len(self.nodes)

        keys = [p.key for p in self.nodes]
        if len(set(keys)) != k:
            dupes = sorted({x for x in keys if keys.count(x) > 1})
            raise ValueError(f"duplicate node keys: {dupes}")

        for u, v in self.directed | self.undirected:
            if not (0 <= u < k and 0 <= v < k):
                raise ValueError(f"edge ({u},{v}) out of range for {k} nodes")
            if u == v:
                raise ValueError(f"self-loop on node {u}")
        for u, v in self.directed:
            if (v, u) in self.directed:
                raise ValueError(f"both {u}->{v} and {v}->{u} present")
            if (min(u, v), max(u, v)) in self.undirected:
                raise ValueError(f"pair ({u},{v}) is both directed and undirected")
        if topological_order(k, self.directed) is None:
            raise CycleError("directed part of the graph contains a cycle")

    @property
    def k(self) -> int:
        return len(self.nodes)

    def key_index(self) -> dict[str, int]:
        return {p.key: i for i, p in enumerate(self.nodes)}

    def edge_count(self) -> int:
        return len(self.directed) + len(self.undirected)

    def has_edge(self, u: int, v: int) -> bool:
        """Any edge, of either kind, between u and v."""
        return (
            (u, v) in self.directed
            or (v, u) in self.directed
            or (min(u, v), max(u, v)) in self.undirected
        )


def empty_graph(points: Iterable[KnowledgePoint] = ()) -> Mcg:
    return Mcg(nodes=tuple(points))


def add_directed_edge(g: Mcg, u: int, v: int) -> Mcg:
    """Return g with the directed edge u->v added.

    An existing undirected {u,v} pair is upgraded to directed. Raises
    ReverseEdgeError if v->u is present and CycleError if the insertion
    would close a directed cycle.
    """
    if u == v:
        raise ValueError("self-loops are not allowed")
    if not (0 <= u < g.k and 0 <= v < g.k):
        raise ValueError(f"edge ({u},{v}) out of range for {g.k} nodes")
    if (v, u) in g.directed:
        raise ReverseEdgeError(f"{v}->{u} already present; cannot add {u}->{v}")
    if (u, v) in g.directed:
        return g
    if _reaches(g.directed, v, u):
        raise CycleError(f"adding {u}->{v} closes a directed cycle")
    return Mcg(
        nodes=g.nodes,
        directed=g.directed | {(u, v)},
        undirected=g.undirected - {(min(u, v), max(u, v))},
    )


def _reaches(directed: frozenset[tuple[int, int]], src: int, dst: int) -> bool:
    succ: dict[int, list[int]] = {}
    for a, b in directed:
        succ.setdefault(a, []).append(b)
    stack, seen = [src], {src}
    while stack:
        n = stack.pop()
        if n == dst:
            return True
        for m in succ.get(n, ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def extract_subgraph(g: Mcg, selected: Iterable[int]) -> Mcg:
    """Induced subgraph on ``selected``: an edge survives iff both endpoints do."""
    chosen = sorted(set(selected))
    for i in chosen:
        if not (0 <= i < g.k):
            raise ValueError(f"selected node {i} out of range for {g.k} nodes")
    remap = {old: new for new, old in enumerate(chosen)}
    keep = set(chosen)
    return Mcg(
        nodes=tuple(g.nodes[i] for i in chosen),
        directed=frozenset(
            (remap[u], remap[v]) for u, v in g.directed if u in keep and v in keep
        ),
        undirected=frozenset(
            (remap[u], remap[v]) for u, v in g.undirected if u in keep and v in keep
        ),
    )


@dataclass(frozen=True)
class Verbalization:
    """Numbered natural-language rendering of a graph for prompt injection."""

    elements: tuple[str, ...]
    relations: tuple[str, ...]

    def elements_text(self) -> str:
        return "\n".join(self.elements)

    def relations_text(self) -> str:
        return "\n".join(self.relations)


def verbalize(g: Mcg) -> Verbalization:
    """Render nodes and edges as numbered element / relation lines.

    Element numbering is 1-based and matches the factor indices the
    subgraph-matching prompt asks the model to echo back. Relations list
    directed edges first, then undirected, each ordered by node keys so
    that equal graphs verbalize identically regardless of node order.
    """
    elements = tuple(
        f"**{i + 1}.** {p.key}: {p.description}".rstrip()
        for i, p in enumerate(g.nodes)
    )
    directed_keys = sorted((g.nodes[u].key, g.nodes[v].key) for u, v in g.directed)
    undirected_keys = sorted(
        tuple(sorted((g.nodes[u].key, g.nodes[v].key))) for u, v in g.undirected
    )
    sentences = [DIRECTED_SENTENCE.format(u=u, v=v) for u, v in directed_keys]
    sentences += [UNDIRECTED_SENTENCE.format(u=u, v=v) for u, v in undirected_keys]
    relations = tuple(f"**{i + 1}.** {s}" for i, s in enumerate(sentences))
    return Verbalization(elements=elements, relations=relations)


def graphs_equal(a: Mcg, b: Mcg) -> bool:
    """Equality up to node order and descriptions.

    True iff the key sets match and the edge sets match under the
    key-induced alignment.
    """
    keys_a = {p.key for p in a.nodes}
    keys_b = {p.key for p in b.nodes}
    if keys_a != keys_b:
        return False
    return _edge_keys(a) == _edge_keys(b)


def _edge_keys(g: Mcg):
    directed = {(g.nodes[u].key, g.nodes[v].key) for u, v in g.directed}
    undirected = {
        frozenset((g.nodes[u].key, g.nodes[v].key)) for u, v in g.undirected
    }
    return directed, undirected


def serialize_graph(g: Mcg) -> str:
    """Versioned JSON document; deterministic bytes for a given graph."""
    doc = {
        "version": GRAPH_FORMAT_VERSION,
        "nodes": [{"key": p.key, "description": p.description} for p in g.nodes],
        "directed": sorted([u, v] for u, v in g.directed),
        "undirected": sorted([u, v] for u, v in g.undirected),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def deserialize_graph(data: str | bytes) -> Mcg:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid graph JSON: {e.msg}", position=e.pos) from e
    if not isinstance(doc, dict):
        raise ParseError("graph document must be a JSON object")
    if doc.get("version") != GRAPH_FORMAT_VERSION:
        raise ParseError(f"unsupported graph format version {doc.get('version')!r}")
    try:
        nodes = tuple(
            KnowledgePoint(key=n["key"], description=n.get("description", ""))
            for n in doc["nodes"]
        )
        directed = frozenset((int(u), int(v)) for u, v in doc.get("directed", []))
        undirected = frozenset((int(u), int(v)) for u, v in doc.get("undirected", []))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed graph document: {e}") from e
    try:
        return Mcg(nodes=nodes, directed=directed, undirected=undirected)
    except (ValueError, CycleError) as e:
        raise ParseError(f"graph document violates invariants: {e}") from e


def load_graph(path) -> Mcg:
    from pathlib import Path

    return deserialize_graph(Path(path).read_text(encoding="utf-8"))


def save_graph(g: Mcg, path) -> None:
    from pathlib import Path

    Path(path).write_text(serialize_graph(g), encoding="utf-8")


def _dot_quote(label: str) -> str:
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(g: Mcg) -> str:
    """Graphviz DOT text: undirected association edges carry dir=none."""
    lines = ["digraph mcg {"]
    for p in g.nodes:
        lines.append(f"  {_dot_quote(p.key)};")
    for u, v in sorted(g.directed):
        lines.append(f"  {_dot_quote(g.nodes[u].key)} -> {_dot_quote(g.nodes[v].key)};")
    for u, v in sorted(g.undirected):
        lines.append(
            f"  {_dot_quote(g.nodes[u].key)} -> {_dot_quote(g.nodes[v].key)} [dir=none];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
