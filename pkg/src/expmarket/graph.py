"""The topometric experience map: nodes, directed pose edges, content digests.

A graph's state digest is a SHA-256 over the sorted per-item hashes of its
nodes and edges, so equal content produces equal digests no matter what
order it was built in. The digest covers the versioned content only:
``path_memory`` is a local localisation counter that each agent bumps
independently, so it is deliberately excluded (otherwise two agents holding
identical traded content would never agree on a state).

The digest of the empty graph is SHA-256 of the empty string:
``e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

import numpy as np

from .ids import NodeId, RobotId
from .pose import Pose

StateDigest = bytes

EMPTY_GRAPH_DIGEST: StateDigest = hashlib.sha256(b"").digest()


@dataclass(frozen=True)
class Node:
    """A place node: appearance descriptor plus quality metadata.

    ``path_memory`` counts how often the localiser matched this node; it is
    mutable agent-local state (carried on the record for convenience) and is
    not part of the content digest.
    """

    id: NodeId
    descriptor: tuple[float, ...]
    inlier_count: int = 0
    fabmap_score: float = 0.0
    path_memory: int = 0
    product: int = 0
    creator: RobotId = 0
    foray: int = 0

    def content_bytes(self) -> bytes:
        """Digest-relevant payload (excludes path_memory)."""
        return b"".join(
            (
                self.id.bytes,
                struct.pack("<I", len(self.descriptor)),
                struct.pack(f"<{len(self.descriptor)}d", *self.descriptor),
                struct.pack("<q", self.inlier_count),
                struct.pack("<d", self.fabmap_score),
                struct.pack("<i", self.product),
                struct.pack("<i", self.creator),
                struct.pack("<i", self.foray),
            )
        )


@dataclass(frozen=True)
class Edge:
    """Directed edge carrying the 6DoF relative pose between two places."""

    src: NodeId
    dst: NodeId
    pose: Pose

    def content_bytes(self) -> bytes:
        return self.src.bytes + self.dst.bytes + self.pose.to_bytes()


@dataclass(frozen=True)
class Observation:
    """One synthetic frame: what the robot sees at a route position."""

    descriptor: tuple[float, ...]
    true_position: float
    timestamp: float
    product: int


def _node_item_hash(node: Node) -> bytes:
    return hashlib.sha256(b"N" + node.content_bytes()).digest()


def _edge_item_hash(edge: Edge) -> bytes:
    return hashlib.sha256(b"E" + edge.content_bytes()).digest()


class Graph:
    """Mutable node/edge store with in- and out-adjacency and a digest cache.

    Instances are confined to one owning agent; the patch layer exposes the
    value-semantics API (apply returns a fresh graph).
    """

    def __init__(self) -> None:
        self._nodes: dict[NodeId, Node] = {}
        self._out: dict[NodeId, dict[NodeId, Edge]] = {}
        self._in: dict[NodeId, set[NodeId]] = {}
        self._item_hashes: dict[tuple, bytes] = {}
        self._digest: StateDigest | None = EMPTY_GRAPH_DIGEST
        self._desc_index: tuple[list[NodeId], np.ndarray] | None = None

    # -- content access -------------------------------------------------

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self._nodes

    def node(self, node_id: NodeId) -> Node:
        return self._nodes[node_id]

    def node_ids(self) -> set[NodeId]:
        return set(self._nodes)

    def nodes(self) -> Iterator[Node]:
        return iter(self._nodes.values())

    def edge_count(self) -> int:
        return sum(len(m) for m in self._out.values())

    def edges(self) -> Iterator[Edge]:
        for out in self._out.values():
            yield from out.values()

    def has_edge(self, src: NodeId, dst: NodeId) -> bool:
        return dst in self._out.get(src, ())

    def edge(self, src: NodeId, dst: NodeId) -> Edge:
        return self._out[src][dst]

    def out_edges(self, node_id: NodeId) -> list[Edge]:
        return list(self._out.get(node_id, {}).values())

    def in_edges(self, node_id: NodeId) -> list[Edge]:
        return [self._out[src][node_id] for src in self._in.get(node_id, ())]

    # -- mutation (used by the patch layer and the owning agent) ---------

    def insert_node(self, node: Node) -> None:
        if node.id in self._nodes:
            raise ValueError(f"duplicate node {node.id}")
        self._nodes[node.id] = node
        self._out.setdefault(node.id, {})
        self._in.setdefault(node.id, set())
        self._dirty()

    def remove_node(self, node_id: NodeId) -> Node:
        """Remove a node; its incident edges must already be gone."""
        if self._out.get(node_id) or self._in.get(node_id):
            raise ValueError(f"node {node_id} still has incident edges")
        node = self._nodes.pop(node_id)
        self._out.pop(node_id, None)
        self._in.pop(node_id, None)
        self._dirty()
        return node

    def insert_edge(self, edge: Edge) -> None:
        if edge.src == edge.dst:
            raise ValueError("self loop")
        if edge.src not in self._nodes or edge.dst not in self._nodes:
            raise ValueError(f"dangling edge {edge.src}->{edge.dst}")
        if edge.dst in self._out[edge.src]:
            raise ValueError(f"duplicate edge {edge.src}->{edge.dst}")
        self._out[edge.src][edge.dst] = edge
        self._in[edge.dst].add(edge.src)
        self._dirty()

    def remove_edge(self, src: NodeId, dst: NodeId) -> Edge:
        edge = self._out[src].pop(dst)
        self._in[dst].discard(src)
        self._dirty()
        return edge

    def bump_path_memory(self, node_id: NodeId) -> None:
        """Record a successful localisation against this node (local state)."""
        node = self._nodes[node_id]
        self._nodes[node_id] = replace(node, path_memory=node.path_memory + 1)
        # digest unaffected: path_memory is not versioned content

    def copy(self) -> "Graph":
        g = Graph()
        g._nodes = dict(self._nodes)
        g._out = {k: dict(v) for k, v in self._out.items()}
        g._in = {k: set(v) for k, v in self._in.items()}
        g._item_hashes = dict(self._item_hashes)
        g._digest = self._digest
        return g

    # -- digests ----------------------------------------------------------

    def _dirty(self) -> None:
        self._digest = None
        self._desc_index = None

    def digest(self) -> StateDigest:
        if self._digest is None:
            self._digest = self._recompute_digest()
        return self._digest

    def _recompute_digest(self) -> StateDigest:
        hashes = []
        cache = self._item_hashes
        for node in self._nodes.values():
            key = ("n", node.id, node.descriptor, node.inlier_count,
                   node.fabmap_score, node.product, node.creator, node.foray)
            h = cache.get(key)
            if h is None:
                h = cache[key] = _node_item_hash(node)
            hashes.append(h)
        for out in self._out.values():
            for edge in out.values():
                key = ("e", edge.src, edge.dst, edge.pose)
                h = cache.get(key)
                if h is None:
                    h = cache[key] = _edge_item_hash(edge)
                hashes.append(h)
        hashes.sort()
        return hashlib.sha256(b"".join(hashes)).digest()

    def descriptor_index(self) -> tuple[list[NodeId], np.ndarray]:
        """Node ids (ascending) and their descriptors as a matrix (cached)."""
        if self._desc_index is None:
            ids = sorted(self._nodes)
            if ids:
                mat = np.array([self._nodes[i].descriptor for i in ids], dtype=np.float64)
            else:
                mat = np.empty((0, 0), dtype=np.float64)
            self._desc_index = (ids, mat)
        return self._desc_index


def state_digest(graph: Graph) -> StateDigest:
    """Permutation-invariant 256-bit digest of a graph's versioned content."""
    return graph.digest()


def compute_digest_from_scratch(graph: Graph) -> StateDigest:
    """Uncached recomputation, for coherence checks."""
    return graph._recompute_digest()


def graph_from_content(nodes: Iterable[Node], edges: Iterable[Edge]) -> Graph:
    g = Graph()
    for n in nodes:
        g.insert_node(n)
    for e in edges:
        g.insert_edge(e)
    return g


class UnknownNode(KeyError):
    pass


def neighbourhood(graph: Graph, seed: NodeId, depth: int) -> set[NodeId]:
    """Breadth-first ball of ``depth`` hops around ``seed``, both directions."""
    if seed not in graph:
        raise UnknownNode(seed)
    seen = {seed}
    frontier = [seed]
    for _ in range(depth):
        nxt = []
        for nid in frontier:
            for other in list(graph._out.get(nid, ())) + list(graph._in.get(nid, ())):
                if other not in seen:
                    seen.add(other)
                    nxt.append(other)
        if not nxt:
            break
        frontier = nxt
    return seen


def connected_components(graph: Graph) -> list[set[NodeId]]:
    """Partition of the node set under undirected edge connectivity."""
    unvisited = set(graph._nodes)
    parts: list[set[NodeId]] = []
    while unvisited:
        start = unvisited.pop()
        comp = {start}
        stack = [start]
        while stack:
            nid = stack.pop()
            for other in list(graph._out.get(nid, ())) + list(graph._in.get(nid, ())):
                if other in unvisited:
                    unvisited.discard(other)
                    comp.add(other)
                    stack.append(other)
        parts.append(comp)
    return parts


def export_text(graph: Graph) -> str:
    """Line-oriented dump: one node or edge per line, tab-separated."""
    lines = []
    for nid in sorted(graph._nodes):
        n = graph._nodes[nid]
        desc = ",".join(repr(v) for v in n.descriptor)
        lines.append(
            f"node\t{n.id}\t{desc}\t{n.inlier_count}\t{n.fabmap_score!r}"
            f"\t{n.path_memory}\t{n.product}\t{n.creator}\t{n.foray}"
        )
    for src in sorted(graph._out):
        for dst in sorted(graph._out[src]):
            e = graph._out[src][dst]
            pose = ",".join(repr(v) for v in (e.pose.tx, e.pose.ty, e.pose.tz,
                                              e.pose.qw, e.pose.qx, e.pose.qy, e.pose.qz))
            lines.append(f"edge\t{src}\t{dst}\t{pose}")
    return "\n".join(lines) + ("\n" if lines else "")
