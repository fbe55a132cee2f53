"""Topological maps: nodes with planar positions, undirected weighted edges."""

from __future__ import annotations

import heapq
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

# Edge lengths may not undercut the straight-line distance by more than this,
# otherwise the Euclidean A* heuristic stops being admissible.
LENGTH_SLACK = 1e-9


class MapError(ValueError):
    """Raised for malformed or invalid map documents."""


Traversable = Union[None, Callable[[int], bool], Sequence[bool], np.ndarray]


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    edges: tuple[int, ...]
    length: float

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class TopologicalMap:
    """Immutable undirected simple graph.

    ``positions`` has shape (n, 2); ``endpoints`` has shape (m, 2) with
    ``endpoints[e] = (u, v)``, ``u < v`` not required.
    """

    positions: np.ndarray
    endpoints: np.ndarray
    lengths: np.ndarray
    name: str = ""
    _incident: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    def __post_init__(self):
        for arr in (self.positions, self.endpoints, self.lengths):
            arr.setflags(write=False)
        incident: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e, (u, v) in enumerate(self.endpoints.tolist()):
            incident[u].append(e)
            incident[v].append(e)
        object.__setattr__(self, "_incident", tuple(tuple(x) for x in incident))

    @property
    def n_nodes(self) -> int:
        return int(self.positions.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.endpoints.shape[0])

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @property
    def mean_edge_length(self) -> float:
        return float(self.lengths.mean())

    def incident(self, v: int) -> tuple[int, ...]:
        """Edge ids incident to node ``v`` in ascending order (no validation)."""
        return self._incident[v]

    def other_end(self, e: int, v: int) -> int:
        u, w = self.endpoints[e]
        return int(w) if u == v else int(u)

    def edge_between(self, u: int, v: int) -> int | None:
        for e in self._incident[u]:
            if self.other_end(e, u) == v:
                return e
        return None

    def euclidean(self, u: int, v: int) -> float:
        d = self.positions[u] - self.positions[v]
        return math.hypot(float(d[0]), float(d[1]))

    def path_from_nodes(self, nodes: Sequence[int]) -> Path:
        edges = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            e = self.edge_between(a, b)
            if e is None:
                raise MapError(f"nodes {a} and {b} are not adjacent")
            edges.append(e)
        length = float(sum(self.lengths[e] for e in edges))
        return Path(tuple(int(n) for n in nodes), tuple(edges), length)

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "nodes": [
                {"id": i, "x": float(x), "y": float(y)}
                for i, (x, y) in enumerate(self.positions.tolist())
            ],
            "edges": [
                {"id": e, "u": int(u), "v": int(v), "length": float(self.lengths[e])}
                for e, (u, v) in enumerate(self.endpoints.tolist())
            ],
        }


def _check_dense(items: list, kind: str) -> None:
    ids = []
    for item in items:
        if "id" not in item:
            raise MapError(f"{kind} entry without id: {item!r}")
        ids.append(item["id"])
    for i, got in enumerate(sorted(ids)):
        if got != i:
            raise MapError(f"{kind} ids must be dense 0..{len(ids) - 1}; offending id {got}")


def load_map(source: Union[str, os.PathLike, dict]) -> TopologicalMap:
    """Build a validated map from a document, a JSON string, or a file path."""
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        if isinstance(source, os.PathLike) or not text.lstrip().startswith("{"):
            with open(source) as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MapError(f"malformed map document: {exc}") from None
    if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
        raise MapError("map document needs top-level 'nodes' and 'edges'")

    nodes, edges = list(doc["nodes"]), list(doc["edges"])
    if not nodes:
        raise MapError("map has no nodes")
    _check_dense(nodes, "node")
    _check_dense(edges, "edge")

    positions = np.zeros((len(nodes), 2))
    for nd in nodes:
        try:
            positions[nd["id"]] = (float(nd["x"]), float(nd["y"]))
        except (KeyError, TypeError, ValueError):
            raise MapError(f"node {nd.get('id')}: needs numeric x and y") from None

    endpoints = np.zeros((len(edges), 2), dtype=np.int64)
    lengths = np.zeros(len(edges))
    seen: dict[tuple[int, int], int] = {}
    for ed in sorted(edges, key=lambda d: d["id"]):
        eid = ed["id"]
        try:
            u, v = int(ed["u"]), int(ed["v"])
        except (KeyError, TypeError, ValueError):
            raise MapError(f"edge {eid}: needs integer endpoints u and v") from None
        for w in (u, v):
            if not 0 <= w < len(nodes):
                raise MapError(f"edge {eid}: unknown node {w}")
        if u == v:
            raise MapError(f"edge {eid}: self-loop at node {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise MapError(f"edge {eid}: duplicate of edge {seen[key]} between {u} and {v}")
        seen[key] = eid
        straight = float(np.hypot(*(positions[u] - positions[v])))
        length = ed.get("length")
        length = straight if length is None else float(length)
        if not length > 0:
            raise MapError(f"edge {eid}: length must be positive, got {length}")
        if length < straight - LENGTH_SLACK:
            raise MapError(
                f"edge {eid}: length {length} shorter than endpoint distance {straight}"
            )
        endpoints[eid] = (u, v)
        lengths[eid] = length

    m = TopologicalMap(positions, endpoints, lengths, name=str(doc.get("name", "")))
    unreached = _unreached_nodes(m)
    if unreached:
        raise MapError(f"map is disconnected; node {unreached[0]} unreachable from node 0")
    return m


def _unreached_nodes(m: TopologicalMap) -> list[int]:
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for e in m.incident(u):
            w = m.other_end(e, u)
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return [v for v in range(m.n_nodes) if v not in seen]


def save_map(m: TopologicalMap, path: Union[str, os.PathLike]) -> None:
    with open(path, "w") as fh:
        json.dump(m.to_document(), fh, indent=1)


def adjacent_edges(m: TopologicalMap, v: int) -> set[int]:
    """Edges incident to node ``v``."""
    if not 0 <= v < m.n_nodes:
        raise MapError(f"invalid node id {v}")
    return set(m.incident(v))


def _edge_filter(m: TopologicalMap, traversable: Traversable) -> Callable[[int], bool]:
    if traversable is None:
        return lambda e: True
    if callable(traversable):
        return traversable
    mask = np.asarray(traversable, dtype=bool)
    if mask.shape != (m.n_edges,):
        raise MapError(f"traversable mask has shape {mask.shape}, expected ({m.n_edges},)")
    return lambda e: bool(mask[e])


def shortest_path(
    m: TopologicalMap, start: int, goal: int, traversable: Traversable = None
) -> Path | None:
    """A* over edges accepted by ``traversable``; ``None`` when unreachable.

    Among equal-length optimal paths the lexicographically smallest node
    sequence is returned. ``traversable`` is a predicate on edge ids, a
    boolean mask, or ``None`` for the full graph.
    """
    for v in (start, goal):
        if not 0 <= v < m.n_nodes:
            raise MapError(f"invalid node id {v}")
    ok = _edge_filter(m, traversable)
    gx, gy = m.positions[goal]
    heur = np.hypot(m.positions[:, 0] - gx, m.positions[:, 1] - gy).tolist()

    lengths = m.lengths.tolist()
    heap: list[tuple[float, tuple[int, ...], float]] = [(heur[start], (start,), 0.0)]
    settled: set[int] = set()
    while heap:
        _, nodes, g = heapq.heappop(heap)
        u = nodes[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == goal:
            return m.path_from_nodes(nodes)
        for e in m.incident(u):
            if not ok(e):
                continue
            w = m.other_end(e, u)
            if w in settled:
                continue
            g2 = g + lengths[e]
            heapq.heappush(heap, (g2 + heur[w], nodes + (w,), g2))
    return None


def distances_to(m: TopologicalMap, goal: int, traversable: Traversable = None) -> np.ndarray:
    """Dijkstra distances from every node to ``goal`` (``inf`` if cut off)."""
    ok = _edge_filter(m, traversable)
    dist = np.full(m.n_nodes, np.inf)
    dist[goal] = 0.0
    lengths = m.lengths.tolist()
    heap = [(0.0, goal)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for e in m.incident(u):
            if not ok(e):
                continue
            w = m.other_end(e, u)
            nd = d + lengths[e]
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def reachable(m: TopologicalMap, start: int, goal: int, traversable: Traversable = None) -> bool:
    ok = _edge_filter(m, traversable)
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        if u == goal:
            return True
        for e in m.incident(u):
            if ok(e):
                w = m.other_end(e, u)
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return False


def from_edge_list(
    positions: Iterable[Sequence[float]],
    edges: Iterable[Sequence[int]],
    lengths: Sequence[float] | None = None,
    name: str = "",
) -> TopologicalMap:
    """Convenience constructor going through the same validation as ``load_map``."""
    doc = {
        "name": name,
        "nodes": [{"id": i, "x": p[0], "y": p[1]} for i, p in enumerate(positions)],
        "edges": [{"id": i, "u": u, "v": v} for i, (u, v) in enumerate(edges)],
    }
    if lengths is not None:
        for ed, ln in zip(doc["edges"], lengths):
            ed["length"] = ln
    return load_map(doc)


def builtin_map(name: str) -> TopologicalMap:
    """Load one of the bundled fixtures: grid9, small_office, medium_office,
    large_office, hospital."""
    from importlib import resources

    ref = resources.files("patternnav") / "data" / "maps" / f"{name}.json"
    if not ref.is_file():
        raise MapError(f"no bundled map named {name!r}")
    return load_map(json.loads(ref.read_text()))
