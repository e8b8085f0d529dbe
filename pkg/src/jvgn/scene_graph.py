"""Language scene graphs: nodes (head + attributes), directed relation edges,
validation of the tree constraints, referent lookup and JSON (de)serialization.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


class SchemaError(ValueError):
    """A scene-graph document does not match the schema.

    ``path`` points at the offending element, e.g. ``edges[1].object``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SgNode:
    id: int
    head: tuple[str, ...]
    attributes: tuple[tuple[str, ...], ...] = ()

    def tokens(self) -> tuple[str, ...]:
        """Head tokens followed by every attribute token."""
        out = list(self.head)
        for attr in self.attributes:
            out.extend(attr)
        return tuple(out)


@dataclass(frozen=True)
class SgEdge:
    subject: int
    relation: tuple[str, ...]
    object: int


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[SgNode, ...]
    edges: tuple[SgEdge, ...] = ()
    referent: int = 0
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "_index", {n.id: n for n in self.nodes})

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> SgNode:
        return self._index[node_id]

    def in_degree(self, node_id: int) -> int:
        return sum(1 for e in self.edges if e.object == node_id)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def validate_graph(g: SceneGraph) -> ValidationReport:
    """Check every scene-graph invariant and collect the violations.

    Never raises: an invalid graph yields a report listing what is wrong,
    each violation naming the node or edge involved.
    """
    out: list[Violation] = []
    seen: set[int] = set()
    for n in g.nodes:
        if n.id in seen:
            out.append(Violation("duplicate-id", f"node {n.id} defined twice"))
        seen.add(n.id)
        if not n.head:
            out.append(Violation("empty-head", f"node {n.id} has an empty head"))
    if not g.nodes:
        out.append(Violation("empty-graph", "graph has no nodes"))
    if seen and seen != set(range(len(g.nodes))):
        out.append(Violation("id-range", f"node ids {sorted(seen)} are not 0..{len(g.nodes) - 1}"))

    uf = _UnionFind(seen)
    pairs: set[frozenset] = set()
    structural_ok = True
    for k, e in enumerate(g.edges):
        tag = f"edge {k} ({e.subject}->{e.object})"
        if not e.relation:
            out.append(Violation("empty-relation", f"{tag} has an empty relation"))
        if e.subject not in seen or e.object not in seen:
            out.append(Violation("missing-node", f"{tag} references an unknown node"))
            structural_ok = False
            continue
        if e.subject == e.object:
            out.append(Violation("self-loop", f"{tag} is a self-loop"))
            structural_ok = False
            continue
        pair = frozenset((e.subject, e.object))
        if pair in pairs:
            out.append(Violation("duplicate-edge", f"{tag} duplicates another edge on the same pair"))
            structural_ok = False
            continue
        pairs.add(pair)
        if not uf.union(e.subject, e.object):
            out.append(Violation("cycle", f"{tag} closes a cycle"))

    roots = {uf.find(x) for x in seen}
    if len(roots) > 1:
        comps: dict[int, list[int]] = {}
        for x in sorted(seen):
            comps.setdefault(uf.find(x), []).append(x)
        desc = "; ".join(str(c) for c in comps.values())
        out.append(Violation("disconnected", f"{len(roots)} components: {desc}"))
    if structural_ok and seen and len(g.edges) != len(seen) - 1:
        out.append(Violation("edge-count", f"{len(g.edges)} edges for {len(seen)} nodes"))

    if g.referent not in seen:
        out.append(Violation("referent-missing", f"referent {g.referent} is not a node"))
    elif g.in_degree(g.referent) > 0:
        out.append(Violation("referent-indegree", f"referent {g.referent} is the object of an edge"))
    return ValidationReport(tuple(out))


def referent_of(g: SceneGraph) -> int:
    """The node with in-degree zero; ties go to the earliest node in source order."""
    indeg = {n.id: 0 for n in g.nodes}
    for e in g.edges:
        if e.object in indeg:
            indeg[e.object] += 1
    # nodes are stored in parse order, which is source order
    for n in g.nodes:
        if indeg[n.id] == 0:
            return n.id
    raise ValueError("no node has in-degree zero; the graph contains a cycle")


def with_referent(g: SceneGraph) -> SceneGraph:
    return SceneGraph(g.nodes, g.edges, referent_of(g))


# --- JSON -------------------------------------------------------------------

def to_dict(g: SceneGraph) -> dict[str, Any]:
    return {
        "nodes": [
            {"id": n.id, "head": list(n.head), "attributes": [list(a) for a in n.attributes]}
            for n in sorted(g.nodes, key=lambda n: n.id)
        ],
        "edges": [
            {"subject": e.subject, "relation": list(e.relation), "object": e.object}
            for e in g.edges
        ],
        "referent": g.referent,
    }


def dumps(g: SceneGraph, indent: int | None = None) -> str:
    """Normalized serialization: nodes by id, sorted keys, compact separators."""
    if indent is None:
        return json.dumps(to_dict(g), sort_keys=True, separators=(",", ":"))
    return json.dumps(to_dict(g), sort_keys=True, indent=indent)


def _tokens(value, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(t, str) for t in value):
        raise SchemaError(path, "expected a list of strings")
    return tuple(value)


def _int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(path, "expected an integer")
    return value


def from_dict(doc: Any, check: bool = True) -> SceneGraph:
    """Build a SceneGraph from a parsed JSON document.

    Raises SchemaError for shape problems and, when ``check`` is set, for any
    validate_graph violation (path ``$``).
    """
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    for key in ("nodes", "edges", "referent"):
        if key not in doc:
            raise SchemaError(f"$.{key}", "missing")
    if not isinstance(doc["nodes"], list):
        raise SchemaError("$.nodes", "expected a list")
    if not isinstance(doc["edges"], list):
        raise SchemaError("$.edges", "expected a list")

    nodes = []
    for i, nd in enumerate(doc["nodes"]):
        p = f"$.nodes[{i}]"
        if not isinstance(nd, dict):
            raise SchemaError(p, "expected an object")
        for key in ("id", "head"):
            if key not in nd:
                raise SchemaError(f"{p}.{key}", "missing")
        attrs = nd.get("attributes", [])
        if not isinstance(attrs, list):
            raise SchemaError(f"{p}.attributes", "expected a list")
        head = _tokens(nd["head"], f"{p}.head")
        if not head:
            raise SchemaError(f"{p}.head", "must be non-empty")
        nodes.append(SgNode(
            id=_int(nd["id"], f"{p}.id"),
            head=head,
            attributes=tuple(_tokens(a, f"{p}.attributes[{j}]") for j, a in enumerate(attrs)),
        ))
    ids = {n.id for n in nodes}

    edges = []
    for i, ed in enumerate(doc["edges"]):
        p = f"$.edges[{i}]"
        if not isinstance(ed, dict):
            raise SchemaError(p, "expected an object")
        for key in ("subject", "relation", "object"):
            if key not in ed:
                raise SchemaError(f"{p}.{key}", "missing")
        s = _int(ed["subject"], f"{p}.subject")
        o = _int(ed["object"], f"{p}.object")
        for name, v in (("subject", s), ("object", o)):
            if v not in ids:
                raise SchemaError(f"{p}.{name}", f"unknown node id {v}")
        rel = _tokens(ed["relation"], f"{p}.relation")
        if not rel:
            raise SchemaError(f"{p}.relation", "must be non-empty")
        edges.append(SgEdge(s, rel, o))

    g = SceneGraph(tuple(sorted(nodes, key=lambda n: n.id)), tuple(edges),
                   _int(doc["referent"], "$.referent"))
    if check:
        report = validate_graph(g)
        if not report.ok:
            raise SchemaError("$", "; ".join(f"{v.kind}: {v.detail}" for v in report.violations))
    return g


def loads(data: str | bytes, check: bool = True) -> SceneGraph:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from exc
    return from_dict(doc, check=check)
