"""In-memory knowledge graph store with metapath subgraph queries.

Graphs are loaded from snapshot files (JSON Lines or TSV triples) and are
immutable afterwards.  Traversal treats edges as undirected but every hop
records the direction in which the underlying edge was crossed, so that
verbalization can reproduce the original orientation.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import KGLoadError, NoSuchNodeError

logger = logging.getLogger(__name__)

FORWARD = "forward"
REVERSE = "reverse"

FORMAT_JSONL = "triples-jsonl"
FORMAT_TSV = "triples-tsv"


@dataclass(frozen=True)
class NodeRecord:
    """A single entity: opaque id, display name, and a type label."""

    id: str
    name: str
    node_type: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("node id must be non-empty")
        if not self.name or not self.node_type:
            raise ValueError(f"node {self.id!r}: name and node_type must be non-empty")


@dataclass(frozen=True)
class EdgeRecord:
    """A directed labeled edge between two node ids."""

    head: str
    relation: str
    tail: str

    def __post_init__(self):
        if not self.relation:
            raise ValueError(f"edge {self.head!r}->{self.tail!r}: relation must be non-empty")


@dataclass(frozen=True)
class MetapathSubgraph:
    """A simple path between a variable pair.

    Carries the node id / name / type sequences plus the label and crossing
    direction of every hop.  The first node is always the first variable of
    the query pair and the last node the second.
    """

    node_ids: tuple[str, ...]
    node_names: tuple[str, ...]
    node_types: tuple[str, ...]
    edge_labels: tuple[str, ...]
    edge_directions: tuple[str, ...]

    def __post_init__(self):
        n = len(self.node_ids)
        if n < 2:
            raise ValueError("a metapath subgraph needs at least two nodes")
        if len(self.node_names) != n or len(self.node_types) != n:
            raise ValueError("node_names and node_types must match node_ids in length")
        if len(self.edge_labels) != n - 1 or len(self.edge_directions) != n - 1:
            raise ValueError("edge_labels/edge_directions must have one entry per hop")
        if len(set(self.node_ids)) != n:
            raise ValueError("path must be simple (no repeated node ids)")
        for d in self.edge_directions:
            if d not in (FORWARD, REVERSE):
                raise ValueError(f"unknown edge direction {d!r}")

    def __len__(self) -> int:
        return len(self.edge_labels)

    def sort_key(self):
        return (self.node_ids, tuple(zip(self.edge_labels, self.edge_directions)))

    def to_dict(self) -> dict:
        return {
            "node_ids": list(self.node_ids),
            "node_names": list(self.node_names),
            "node_types": list(self.node_types),
            "edge_labels": list(self.edge_labels),
            "edge_directions": list(self.edge_directions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetapathSubgraph":
        return cls(
            node_ids=tuple(d["node_ids"]),
            node_names=tuple(d["node_names"]),
            node_types=tuple(d["node_types"]),
            edge_labels=tuple(d["edge_labels"]),
            edge_directions=tuple(d["edge_directions"]),
        )


@dataclass(frozen=True)
class LoadReport:
    """Counts reported by a graph load."""

    nodes: int
    edges: int
    duplicates_dropped: int


class KnowledgeGraph:
    """Typed, directed, relation-labeled multigraph; read-only after load.

    ``name_index`` maps lowercased names to node ids (a multimap: name
    collisions keep every id), ``type_index`` maps node types to id sets.
    Safe to share across threads once constructed.
    """

    def __init__(self, nodes: Iterable[NodeRecord], edges: Iterable[EdgeRecord],
                 duplicates_dropped: int = 0):
        node_map: dict[str, NodeRecord] = {}
        for node in nodes:
            if node.id in node_map and node_map[node.id] != node:
                raise KGLoadError(
                    f"node id {node.id!r} declared twice with conflicting name/type")
            node_map[node.id] = node

        seen: set[tuple[str, str, str]] = set()
        edge_list: list[EdgeRecord] = []
        for edge in edges:
            for endpoint in (edge.head, edge.tail):
                if endpoint not in node_map:
                    raise KGLoadError(f"edge endpoint references undeclared node id {endpoint!r}")
            key = (edge.head, edge.relation, edge.tail)
            if key in seen:
                duplicates_dropped += 1
                continue
            seen.add(key)
            edge_list.append(edge)

        self._nodes = node_map
        self._edges = tuple(edge_list)

        name_index: dict[str, list[str]] = {}
        type_index: dict[str, set[str]] = {}
        for node in node_map.values():
            name_index.setdefault(node.name.lower(), []).append(node.id)
            type_index.setdefault(node.node_type, set()).add(node.id)
        self._name_index = {k: tuple(sorted(v)) for k, v in name_index.items()}
        self._type_index = {k: frozenset(v) for k, v in type_index.items()}

        # Undirected adjacency; each entry remembers the crossing direction.
        adj: dict[str, list[tuple[str, str, str]]] = {}
        for edge in edge_list:
            adj.setdefault(edge.head, []).append((edge.tail, edge.relation, FORWARD))
            adj.setdefault(edge.tail, []).append((edge.head, edge.relation, REVERSE))
        self._adjacency = {k: tuple(sorted(v)) for k, v in adj.items()}

        self.load_report = LoadReport(
            nodes=len(node_map), edges=len(edge_list), duplicates_dropped=duplicates_dropped)

    @property
    def nodes(self) -> dict[str, NodeRecord]:
        return dict(self._nodes)

    @property
    def edges(self) -> tuple[EdgeRecord, ...]:
        return self._edges

    @property
    def name_index(self) -> dict[str, tuple[str, ...]]:
        return dict(self._name_index)

    @property
    def type_index(self) -> dict[str, frozenset]:
        return dict(self._type_index)

    def node(self, node_id: str) -> NodeRecord:
        return self._nodes[node_id]

    def neighbors(self, node_id: str) -> tuple[tuple[str, str, str], ...]:
        """(neighbor id, relation, direction) triples, sorted."""
        return self._adjacency.get(node_id, ())

    def resolve(self, name: str) -> tuple[str, ...]:
        """All node ids whose name matches case-insensitively."""
        ids = self._name_index.get(name.lower())
        if not ids:
            raise NoSuchNodeError(f"no node named {name!r}")
        return ids


def _parse_endpoint(raw, lineno: int, path) -> tuple[str, Optional[str], Optional[str]]:
    """Returns (id, name, type); name/type are None for a bare reference."""
    if isinstance(raw, str):
        return raw, None, None
    if isinstance(raw, dict) and "id" in raw:
        node_id = raw["id"]
        name = raw.get("name")
        node_type = raw.get("type")
        if name is not None or node_type is not None:
            if not name or not node_type:
                raise KGLoadError(
                    f"{path}:{lineno}: node {node_id!r} needs both name and type")
            return node_id, name, node_type
        return node_id, None, None
    raise KGLoadError(f"{path}:{lineno}: endpoint must be an id string or an object with 'id'")


def _load_jsonl(path: Path):
    declared: dict[str, tuple[str, str]] = {}
    referenced: list[str] = []
    edges: list[EdgeRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KGLoadError(f"{path}:{lineno}: malformed line: {exc.msg}") from exc
            if not isinstance(obj, dict) or "head" not in obj or "tail" not in obj:
                raise KGLoadError(f"{path}:{lineno}: each line needs head, relation, tail")
            relation = obj.get("relation")
            if not relation or not isinstance(relation, str):
                raise KGLoadError(f"{path}:{lineno}: relation must be a non-empty string")
            endpoints = []
            for raw in (obj["head"], obj["tail"]):
                node_id, name, node_type = _parse_endpoint(raw, lineno, path)
                if name is not None:
                    prev = declared.get(node_id)
                    if prev is not None and prev != (name, node_type):
                        raise KGLoadError(
                            f"{path}:{lineno}: node id {node_id!r} redeclared with "
                            f"conflicting name/type")
                    declared[node_id] = (name, node_type)
                else:
                    referenced.append(node_id)
                endpoints.append(node_id)
            edges.append(EdgeRecord(head=endpoints[0], relation=relation, tail=endpoints[1]))
    return declared, referenced, edges


def _load_tsv(path: Path):
    declared: dict[str, tuple[str, str]] = {}
    referenced: list[str] = []
    edges: list[EdgeRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 7:
                raise KGLoadError(
                    f"{path}:{lineno}: malformed line: expected 7 tab-separated fields, "
                    f"got {len(fields)}")
            head_id, head_name, head_type, relation, tail_id, tail_name, tail_type = fields
            if not relation:
                raise KGLoadError(f"{path}:{lineno}: relation must be non-empty")
            for node_id, name, node_type in ((head_id, head_name, head_type),
                                             (tail_id, tail_name, tail_type)):
                if name or node_type:
                    if not name or not node_type:
                        raise KGLoadError(
                            f"{path}:{lineno}: node {node_id!r} needs both name and type")
                    prev = declared.get(node_id)
                    if prev is not None and prev != (name, node_type):
                        raise KGLoadError(
                            f"{path}:{lineno}: node id {node_id!r} redeclared with "
                            f"conflicting name/type")
                    declared[node_id] = (name, node_type)
                else:
                    referenced.append(node_id)
            edges.append(EdgeRecord(head=head_id, relation=relation, tail=tail_id))
    return declared, referenced, edges


def load_kg(path, format: str = FORMAT_JSONL) -> KnowledgeGraph:
    """Load a graph snapshot; the result is immutable.

    Endpoints may be bare id references as long as the id is declared with
    name and type somewhere in the file; an id that is only ever referenced
    raises :class:`KGLoadError` naming it.
    """
    path = Path(path)
    if not path.exists():
        raise KGLoadError(f"knowledge graph file not found: {path}")
    if format == FORMAT_JSONL:
        declared, referenced, edges = _load_jsonl(path)
    elif format == FORMAT_TSV:
        declared, referenced, edges = _load_tsv(path)
    else:
        raise KGLoadError(f"unknown KG file format {format!r}")

    missing = sorted(set(referenced) - set(declared))
    if missing:
        raise KGLoadError(f"edge endpoint references undeclared node id {missing[0]!r}")

    nodes = [NodeRecord(id=i, name=n, node_type=t) for i, (n, t) in sorted(declared.items())]
    graph = KnowledgeGraph(nodes, edges)
    logger.info("loaded %s: %d nodes, %d edges, %d duplicate triples dropped",
                path, graph.load_report.nodes, graph.load_report.edges,
                graph.load_report.duplicates_dropped)
    return graph


def _bfs_distances(kg: KnowledgeGraph, sources: Sequence[str]) -> dict[str, int]:
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        u = queue.popleft()
        for v, _rel, _direction in kg.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _hop_options(kg: KnowledgeGraph, u: str, v: str) -> list[tuple[str, str]]:
    """All (relation, direction) pairs connecting u to v, sorted."""
    return sorted((rel, direction) for w, rel, direction in kg.neighbors(u) if w == v)


def _expand_node_path(kg: KnowledgeGraph, id_path: Sequence[str],
                      hop_options: Sequence[Sequence[tuple[str, str]]]) -> list[MetapathSubgraph]:
    """One subgraph per combination of parallel edges along the node path."""
    names = tuple(kg.node(i).name for i in id_path)
    types = tuple(kg.node(i).node_type for i in id_path)
    out = []
    for combo in itertools.product(*hop_options):
        out.append(MetapathSubgraph(
            node_ids=tuple(id_path),
            node_names=names,
            node_types=types,
            edge_labels=tuple(rel for rel, _ in combo),
            edge_directions=tuple(direction for _, direction in combo),
        ))
    return out


def _sample_indices(n: int, k: int, seed: int) -> list[int]:
    """Uniform k-subset of range(n), deterministic in seed, in ascending order."""
    rng = random.Random(seed)
    return sorted(rng.sample(range(n), k))


def enumerate_subgraphs(kg: KnowledgeGraph, pair: tuple[str, str], max_hops: int,
                        limit: Optional[int] = None, seed: int = 0) -> list[MetapathSubgraph]:
    """All shortest paths between the pair, ignoring edge direction.

    Only paths of the minimal connecting length are returned, and only when
    that length is within ``max_hops``.  Parallel edges yield one subgraph
    per relation/direction combination.  Results are ordered
    lexicographically by node-id sequence (then hop labels); when there are
    more than ``limit``, a seeded uniform sample of that order is taken.
    """
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1")
    a, b = pair
    a_ids = kg.resolve(a)
    b_ids = kg.resolve(b)

    dist_b = _bfs_distances(kg, b_ids)
    reachable = [dist_b[s] for s in a_ids if s in dist_b]
    if not reachable:
        return []
    shortest = min(reachable)
    if shortest == 0 or shortest > max_hops:
        # A zero-length "path" (shared node) carries no relational evidence.
        return []

    b_id_set = set(b_ids)
    results: list[MetapathSubgraph] = []

    def extend(path: list[str], depth: int):
        u = path[-1]
        if depth == shortest:
            if u in b_id_set:
                options = [_hop_options(kg, path[i], path[i + 1]) for i in range(len(path) - 1)]
                results.extend(_expand_node_path(kg, path, options))
            return
        for v, _rel, _direction in kg.neighbors(u):
            # Nodes on a shortest path sit at strictly decreasing remaining
            # distance, which also guarantees the path is simple.
            if dist_b.get(v) == shortest - depth - 1:
                if v not in path:
                    path.append(v)
                    extend(path, depth + 1)
                    path.pop()

    seen_starts = set()
    for start in a_ids:
        if start in seen_starts:
            continue
        seen_starts.add(start)
        if dist_b.get(start) == shortest:
            extend([start], 0)

    # Deduplicate hop combinations discovered via different starts (cannot
    # happen for distinct start ids, but keeps the contract airtight).
    unique = {s.sort_key(): s for s in results}
    ordered = [unique[k] for k in sorted(unique)]
    if limit is not None and len(ordered) > limit:
        ordered = [ordered[i] for i in _sample_indices(len(ordered), limit, seed)]
    return ordered


def pattern_query(kg: KnowledgeGraph, pair: tuple[str, str], type_pattern: Sequence[str],
                  relation_pattern: Optional[Sequence[str]] = None) -> list[MetapathSubgraph]:
    """All simple paths whose node-type sequence equals ``type_pattern``.

    Edge direction is ignored for matching; when ``relation_pattern`` is
    given, hop ``i`` must carry exactly that relation label.  Results are in
    lexicographic node-id order.
    """
    if len(type_pattern) < 2:
        raise ValueError("type_pattern must name at least two node types")
    if relation_pattern is not None and len(relation_pattern) != len(type_pattern) - 1:
        raise ValueError("relation_pattern must have one entry per hop")
    a, b = pair
    a_ids = [i for i in kg.resolve(a) if kg.node(i).node_type == type_pattern[0]]
    b_id_set = {i for i in kg.resolve(b) if kg.node(i).node_type == type_pattern[-1]}
    if not a_ids or not b_id_set:
        return []

    n_hops = len(type_pattern) - 1
    results: list[MetapathSubgraph] = []

    def extend(path: list[str], depth: int):
        u = path[-1]
        if depth == n_hops:
            if u in b_id_set:
                options = []
                for i in range(len(path) - 1):
                    hops = _hop_options(kg, path[i], path[i + 1])
                    if relation_pattern is not None:
                        hops = [h for h in hops if h[0] == relation_pattern[i]]
                    options.append(hops)
                if all(options):
                    results.extend(_expand_node_path(kg, path, options))
            return
        wanted_type = type_pattern[depth + 1]
        for v, _rel, _direction in kg.neighbors(u):
            if v not in path and kg.node(v).node_type == wanted_type:
                path.append(v)
                extend(path, depth + 1)
                path.pop()

    for start in sorted(set(a_ids)):
        extend([start], 0)

    unique = {s.sort_key(): s for s in results}
    return [unique[k] for k in sorted(unique)]


def sample_subgraphs(subgraphs: Sequence[MetapathSubgraph], k: int,
                     seed: int = 0) -> list[MetapathSubgraph]:
    """Uniform sample of at most k subgraphs, preserving input order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(subgraphs) <= k:
        return list(subgraphs)
    return [subgraphs[i] for i in _sample_indices(len(subgraphs), k, seed)]
