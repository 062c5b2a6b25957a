"""In-memory AD graph model and conversions to/from matrix form.

ADGraph is the canonical representation every other module works on: an
immutable typed DAG plus per-node attribute maps. GraphTensors is the
padded matrix encoding consumed by the network (node-type indices, the
adjacency matrix under a topological row ordering, its transpose, and a
real-row mask).
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CapacityError,
    CycleError,
    EmptyGraphError,
    GraphValidationError,
    MalformedInputError,
)
from .schema import NODE_TYPE_INDEX, NODE_TYPES, NodeType, coerce_node_type

logger = logging.getLogger(__name__)

# Relation kinds from collector exports that become edges: containment and
# group membership. ACL-style kinds (GenericAll, Owns, ...) are ignored.
_CONTAINMENT_KINDS = {"contains"}
# Kinds stated child-first ("u1 MemberOf g1"); flipped to container -> member.
_REVERSED_MEMBERSHIP_KINDS = {"memberof"}
_MEMBERSHIP_KINDS = {"member", "hasmember"}


@dataclass(frozen=True)
class Node:
    """One directory object: opaque id, object class, attribute map."""

    node_id: str
    node_type: NodeType
    attributes: Mapping[str, str] = field(default_factory=dict)


class ADGraph:
    """Immutable directed acyclic graph of AD objects.

    Invariants enforced at construction: at least one node, unique node
    ids, no self loops, every edge endpoint present, and acyclicity.
    Duplicate edges in the input collapse into one.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[tuple[str, str]]):
        self._nodes: tuple[Node, ...] = tuple(nodes)
        if not self._nodes:
            raise EmptyGraphError("a graph must contain at least one node")
        self._by_id: dict[str, Node] = {}
        for node in self._nodes:
            if node.node_id in self._by_id:
                raise GraphValidationError(f"duplicate node id {node.node_id!r}")
            self._by_id[node.node_id] = node

        edge_set: set[tuple[str, str]] = set()
        for src, dst in edges:
            if src == dst:
                raise GraphValidationError(f"self-loop on {src!r}")
            if src not in self._by_id or dst not in self._by_id:
                raise GraphValidationError(f"edge ({src!r}, {dst!r}) references a missing node")
            edge_set.add((src, dst))
        self._edges: frozenset[tuple[str, str]] = frozenset(edge_set)

        self._successors: dict[str, tuple[str, ...]] = {}
        self._predecessors: dict[str, tuple[str, ...]] = {}
        succ: dict[str, list[str]] = {n.node_id: [] for n in self._nodes}
        pred: dict[str, list[str]] = {n.node_id: [] for n in self._nodes}
        for src, dst in sorted(self._edges):
            succ[src].append(dst)
            pred[dst].append(src)
        for nid in succ:
            self._successors[nid] = tuple(succ[nid])
            self._predecessors[nid] = tuple(pred[nid])

        # Raises CycleError if the edge relation is not a DAG.
        self._topo_order: tuple[str, ...] = tuple(_kahn_order(self))

    @property
    def nodes(self) -> tuple[Node, ...]:
        return self._nodes

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return self._edges

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.node_id for n in self._nodes)

    def node(self, node_id: str) -> Node:
        return self._by_id[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._by_id

    def successors(self, node_id: str) -> tuple[str, ...]:
        return self._successors[node_id]

    def predecessors(self, node_id: str) -> tuple[str, ...]:
        return self._predecessors[node_id]

    def in_degree(self, node_id: str) -> int:
        return len(self._predecessors[node_id])

    def out_degree(self, node_id: str) -> int:
        return len(self._successors[node_id])

    def degree(self, node_id: str) -> int:
        return self.in_degree(node_id) + self.out_degree(node_id)

    def nodes_of_type(self, node_type: NodeType) -> tuple[Node, ...]:
        return tuple(n for n in self._nodes if n.node_type == node_type)

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._topo_order

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ADGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edges == other._edges

    __hash__ = None  # attribute maps make node-level hashing unreliable

    def __repr__(self) -> str:
        return f"ADGraph(nodes={len(self._nodes)}, edges={len(self._edges)})"


@dataclass(frozen=True)
class GraphTensors:
    """Padded matrix encoding of one graph under its topological order.

    ``adj[i, j] == 1`` iff there is an edge from the j-th to the i-th node
    of the ordering (so ``adj`` is strictly lower triangular on real rows).
    ``adj_t`` is its transpose, ``mask`` flags real rows, ``order`` maps row
    index to node id and ``n`` counts real nodes.
    """

    type_indices: np.ndarray  # (n_pad,) int64
    adj: np.ndarray  # (n_pad, n_pad) float32, binary
    adj_t: np.ndarray  # (n_pad, n_pad) float32, binary
    mask: np.ndarray  # (n_pad,) float32, binary
    order: tuple[str, ...]
    n: int

    @property
    def n_pad(self) -> int:
        return int(self.mask.shape[0])

    def one_hot(self) -> np.ndarray:
        """Node types as a (n_pad, num_types) one-hot matrix, padded rows zero."""
        out = np.zeros((self.n_pad, len(NODE_TYPES)), dtype=np.float32)
        rows = np.arange(self.n, dtype=np.int64)
        out[rows, self.type_indices[: self.n]] = 1.0
        return out


def topological_sort(graph: ADGraph) -> list[str]:
    """Deterministic topological order of ``graph``.

    Kahn's algorithm with the ready set kept as a heap of node ids, so ties
    always break toward the smaller id and repeated calls agree. ADGraph
    construction already runs this once; the cached order is reused.
    """
    return list(graph.topological_order)


def _kahn_order(graph: ADGraph) -> list[str]:
    indegree = {nid: graph.in_degree(nid) for nid in graph.node_ids}
    ready = [nid for nid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for succ in graph.successors(nid):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                heapq.heappush(ready, succ)
    if len(order) != len(graph):
        raise CycleError("edge relation contains a cycle")
    return order


def to_matrices(graph: ADGraph, n_pad: int) -> GraphTensors:
    """Encode ``graph`` as padded matrices with ``n_pad`` rows."""
    n = len(graph)
    if n_pad < n:
        raise CapacityError(f"n_pad={n_pad} is smaller than the node count {n}")
    order = graph.topological_order
    index = {nid: i for i, nid in enumerate(order)}

    type_indices = np.zeros(n_pad, dtype=np.int64)
    for i, nid in enumerate(order):
        type_indices[i] = NODE_TYPE_INDEX[graph.node(nid).node_type]

    adj = np.zeros((n_pad, n_pad), dtype=np.float32)
    for src, dst in graph.edges:
        adj[index[dst], index[src]] = 1.0

    mask = np.zeros(n_pad, dtype=np.float32)
    mask[:n] = 1.0
    return GraphTensors(
        type_indices=type_indices,
        adj=adj,
        adj_t=adj.T.copy(),
        mask=mask,
        order=tuple(order),
        n=n,
    )


def from_matrices(tensors: GraphTensors, nodes: Sequence[Node] | None = None) -> ADGraph:
    """Rebuild a graph from its matrix encoding (inverse of :func:`to_matrices`).

    When ``nodes`` is omitted, attribute maps are empty and node types come
    from ``type_indices``.
    """
    n = tensors.n
    if nodes is None:
        nodes = [
            Node(tensors.order[i], NODE_TYPES[int(tensors.type_indices[i])]) for i in range(n)
        ]
    targets, sources = np.nonzero(tensors.adj[:n, :n])
    edges = [(tensors.order[int(j)], tensors.order[int(i)]) for i, j in zip(targets, sources)]
    return ADGraph(nodes, edges)


@dataclass(frozen=True)
class ExtensionOutcome:
    """Result of grafting candidate nodes onto a graph by thresholded scores."""

    graph: ADGraph
    kept_ids: tuple[str, ...]
    discarded_ids: tuple[str, ...]
    added_edges: tuple[tuple[str, str], ...]


def from_extension(
    graph: ADGraph,
    new_node_types: Sequence[NodeType],
    edge_scores: np.ndarray,
    threshold: float,
    id_prefix: str = "honeyuser",
) -> ExtensionOutcome:
    """Attach new sink nodes to ``graph`` wherever an edge score clears ``threshold``.

    ``edge_scores`` has one row per candidate node and one column per
    original node, columns following ``graph.topological_order``. Candidates
    whose whole row stays below the threshold are discarded. New nodes only
    ever receive in-edges, so the result stays acyclic.
    """
    scores = np.asarray(edge_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"edge_scores must be 2-D, got shape {scores.shape}")
    if scores.shape != (len(new_node_types), len(graph)):
        raise ValueError(
            f"edge_scores shape {scores.shape} does not match "
            f"({len(new_node_types)}, {len(graph)})"
        )
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ValueError("edge scores must lie in [0, 1]")

    existing = set(graph.node_ids)
    new_ids: list[str] = []
    counter = 0
    for _ in new_node_types:
        while f"{id_prefix}_{counter:03d}" in existing:
            counter += 1
        nid = f"{id_prefix}_{counter:03d}"
        existing.add(nid)
        new_ids.append(nid)
        counter += 1

    order = graph.topological_order
    nodes = list(graph.nodes)
    edges = list(graph.edges)
    kept: list[str] = []
    discarded: list[str] = []
    added: list[tuple[str, str]] = []
    for row, (nid, ntype) in enumerate(zip(new_ids, new_node_types)):
        sources = [order[j] for j in np.nonzero(scores[row] >= threshold)[0]]
        if not sources:
            discarded.append(nid)
            continue
        nodes.append(Node(nid, ntype))
        kept.append(nid)
        for src in sources:
            edges.append((src, nid))
            added.append((src, nid))

    return ExtensionOutcome(
        graph=ADGraph(nodes, edges),
        kept_ids=tuple(kept),
        discarded_ids=tuple(discarded),
        added_edges=tuple(added),
    )


# --- native JSON interchange -------------------------------------------------

def graph_to_json(graph: ADGraph) -> str:
    """Serialize to the native interchange document (stable byte output)."""
    doc = {
        "nodes": [
            {
                "id": n.node_id,
                "type": n.node_type.value,
                "attributes": dict(sorted(n.attributes.items())),
            }
            for n in graph.nodes
        ],
        "edges": [list(e) for e in sorted(graph.edges)],
    }
    return json.dumps(doc, indent=2) + "\n"


def graph_from_json(text: str) -> ADGraph:
    """Parse the native interchange document produced by :func:`graph_to_json`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
        raise MalformedInputError("document must contain 'nodes' and 'edges'")
    nodes = []
    for rec in doc["nodes"]:
        try:
            nodes.append(
                Node(str(rec["id"]), NodeType(rec["type"]), dict(rec.get("attributes", {})))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInputError(f"bad node record {rec!r}: {exc}") from exc
    edges = []
    for rec in doc["edges"]:
        if not isinstance(rec, (list, tuple)) or len(rec) != 2:
            raise MalformedInputError(f"bad edge record {rec!r}")
        edges.append((str(rec[0]), str(rec[1])))
    return ADGraph(nodes, edges)


# --- collector export ingestion ----------------------------------------------

def parse_sharphound(export_text: str) -> ADGraph:
    """Build an ADGraph from a SharpHound/BloodHound-style JSON export.

    Keeps only objects whose type maps onto the five retained classes and
    only containment/membership edges between kept objects. Back-edges
    closing a cycle are dropped in deterministic DFS order and logged.
    """
    try:
        doc = json.loads(export_text)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"export is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedInputError("export must be a JSON object")
    raw_nodes = doc.get("nodes")
    raw_edges = doc.get("edges", [])
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise MalformedInputError("export must carry 'nodes' and 'edges' lists")

    nodes: list[Node] = []
    seen: set[str] = set()
    for rec in raw_nodes:
        if not isinstance(rec, dict):
            raise MalformedInputError(f"bad node record {rec!r}")
        node_id = rec.get("id", rec.get("name"))
        if node_id is None:
            raise MalformedInputError(f"node record without id or name: {rec!r}")
        node_id = str(node_id)
        ntype = coerce_node_type(str(rec.get("type", "")))
        if ntype is None:
            logger.debug("filtering node %s of unretained type %r", node_id, rec.get("type"))
            continue
        if node_id in seen:
            continue
        seen.add(node_id)
        attributes = {str(k): str(v) for k, v in dict(rec.get("properties", rec.get("attributes", {}))).items()}
        if "name" in rec and "name" not in attributes:
            attributes["name"] = str(rec["name"])
        nodes.append(Node(node_id, ntype, attributes))

    if not nodes:
        raise EmptyGraphError("export contains no retained nodes")

    edges: set[tuple[str, str]] = set()
    for rec in raw_edges:
        if isinstance(rec, dict):
            src = rec.get("source", rec.get("src", rec.get("start")))
            dst = rec.get("target", rec.get("dst", rec.get("end")))
            kind = str(rec.get("kind", rec.get("label", ""))).lower()
        elif isinstance(rec, (list, tuple)) and len(rec) >= 2:
            src, dst = rec[0], rec[1]
            kind = str(rec[2]).lower() if len(rec) > 2 else ""
        else:
            raise MalformedInputError(f"bad edge record {rec!r}")
        if src is None or dst is None:
            raise MalformedInputError(f"edge record missing endpoints: {rec!r}")
        src, dst = str(src), str(dst)
        if kind in _REVERSED_MEMBERSHIP_KINDS:
            src, dst = dst, src
        elif kind and kind not in _CONTAINMENT_KINDS and kind not in _MEMBERSHIP_KINDS:
            logger.debug("ignoring edge kind %r between %s and %s", kind, src, dst)
            continue
        if src == dst or src not in seen or dst not in seen:
            continue
        edges.add((src, dst))

    kept_edges = _drop_cycle_edges(sorted(n.node_id for n in nodes), edges)
    return ADGraph(nodes, kept_edges)


def _drop_cycle_edges(
    node_ids: Sequence[str], edges: set[tuple[str, str]]
) -> list[tuple[str, str]]:
    """Remove the back-edges met during a DFS over id-sorted nodes and neighbors."""
    succ: dict[str, list[str]] = {nid: [] for nid in node_ids}
    for src, dst in sorted(edges):
        succ[src].append(dst)

    WHITE, GREY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in node_ids}
    dropped: list[tuple[str, str]] = []

    # Iterative DFS; (node, iterator) frames so deep chains cannot overflow.
    for root in node_ids:
        if color[root] != WHITE:
            continue
        color[root] = GREY
        stack = [(root, iter(succ[root]))]
        while stack:
            nid, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GREY:
                    dropped.append((nid, nxt))
                elif color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[nid] = BLACK
                stack.pop()

    if dropped:
        logger.warning("dropped %d cycle-closing edge(s): %s", len(dropped), dropped)
        return [e for e in edges if e not in set(dropped)]
    return list(edges)
