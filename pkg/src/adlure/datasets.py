"""Synthetic AD-like DAG datasets.

Graphs are built layered instead of by rejection sampling: place the
Domain root, grow an OU/Group hierarchy, hang Users and Computers off it,
then add extra schema-valid edges until a drawn edge count is reached.
That guarantees acyclicity, connectivity from the root, and edge validity
by construction. Statistics (node/edge counts per nominal size) are
calibrated against real AD structures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleSpecError, MalformedInputError
from .graph import ADGraph, Node, graph_from_json, graph_to_json
from .schema import NodeType, is_valid_edge

# (mean node count, mean edge count) per nominal size, from real-AD estimates.
STANDARD_SIZES: dict[int, tuple[float, float]] = {
    15: (12.51, 19.02),
    50: (39.88, 65.49),
    150: (115.11, 192.49),
    500: (353.36, 600.17),
}

_ID_PREFIX = {
    NodeType.DOMAIN: "domain",
    NodeType.ORGANIZATIONAL_UNIT: "ou",
    NodeType.GROUP: "group",
    NodeType.USER: "user",
    NodeType.COMPUTER: "computer",
}

TRAIN, VALIDATION, TEST = "train", "validation", "test"
_SPLITS = (TRAIN, VALIDATION, TEST)


def default_type_proportions(graph_size: int) -> dict[NodeType, float]:
    """One Domain root per graph; OU 10%, Group 15%, Computer 15%, User rest."""
    domain = 1.0 / graph_size
    rest = 1.0 - domain
    props = {
        NodeType.DOMAIN: domain,
        NodeType.ORGANIZATIONAL_UNIT: 0.10 * rest,
        NodeType.GROUP: 0.15 * rest,
        NodeType.COMPUTER: 0.15 * rest,
    }
    props[NodeType.USER] = 1.0 - sum(props.values())
    return props


@dataclass(frozen=True)
class DatasetSpec:
    """Parameters controlling synthetic graph generation."""

    graph_size: int
    n_samples: int
    edge_count_mean: float
    edge_count_std: float
    type_proportions: dict[NodeType, float] = field(default_factory=dict)
    seed: int = 0
    # Node-count law: round(Normal(mean, std)) clamped to [min(5, size), size].
    # Defaults follow the observed ~0.8 real-to-nominal node ratio.
    node_count_mean: float | None = None
    node_count_std: float | None = None

    def __post_init__(self):
        if self.graph_size < 2:
            raise ValueError(f"graph_size must be >= 2, got {self.graph_size}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.edge_count_std < 0:
            raise ValueError("edge_count_std must be >= 0")
        if not self.type_proportions:
            object.__setattr__(self, "type_proportions", default_type_proportions(self.graph_size))
        total = sum(self.type_proportions.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"type proportions must sum to 1, got {total}")
        if self.type_proportions.get(NodeType.DOMAIN, 0.0) <= 0.0:
            raise ValueError("type proportions must reserve mass for the Domain root")
        if any(p < 0 for p in self.type_proportions.values()):
            raise ValueError("type proportions must be non-negative")

    @property
    def effective_node_count_mean(self) -> float:
        return self.node_count_mean if self.node_count_mean is not None else 0.8 * self.graph_size

    @property
    def effective_node_count_std(self) -> float:
        return self.node_count_std if self.node_count_std is not None else 0.05 * self.graph_size


def standard_spec(size: int, n_samples: int = 2000, seed: int = 0) -> DatasetSpec:
    """Spec calibrated so generated datasets match the real-AD statistics."""
    if size not in STANDARD_SIZES:
        raise ValueError(f"size must be one of {sorted(STANDARD_SIZES)}, got {size}")
    mean_nodes, mean_edges = STANDARD_SIZES[size]
    return DatasetSpec(
        graph_size=size,
        n_samples=n_samples,
        edge_count_mean=mean_edges,
        edge_count_std=0.15 * mean_edges,
        seed=seed,
        node_count_mean=mean_nodes,
        node_count_std=0.05 * size,
    )


@dataclass(frozen=True)
class Dataset:
    """Generated graphs plus per-graph train/validation/test labels."""

    graphs: tuple[ADGraph, ...]
    split_labels: tuple[str, ...]
    spec: DatasetSpec | None = None

    def __post_init__(self):
        if len(self.graphs) != len(self.split_labels):
            raise ValueError("one split label per graph is required")
        bad = {s for s in self.split_labels if s not in _SPLITS}
        if bad:
            raise ValueError(f"unknown split labels: {sorted(bad)}")

    def subset(self, label: str) -> tuple[ADGraph, ...]:
        return tuple(g for g, s in zip(self.graphs, self.split_labels) if s == label)

    @property
    def train_graphs(self) -> tuple[ADGraph, ...]:
        return self.subset(TRAIN)

    @property
    def validation_graphs(self) -> tuple[ADGraph, ...]:
        return self.subset(VALIDATION)

    @property
    def test_graphs(self) -> tuple[ADGraph, ...]:
        return self.subset(TEST)

    @property
    def max_nodes(self) -> int:
        return max(len(g) for g in self.graphs)

    def stats(self) -> dict[str, float]:
        return {
            "n_graphs": len(self.graphs),
            "mean_nodes": float(np.mean([len(g) for g in self.graphs])),
            "mean_edges": float(np.mean([len(g.edges) for g in self.graphs])),
        }


def _draw_node_count(spec: DatasetSpec, rng: np.random.Generator) -> int:
    lo = min(5, spec.graph_size)
    hi = spec.graph_size
    n = int(round(rng.normal(spec.effective_node_count_mean, spec.effective_node_count_std)))
    return int(np.clip(n, lo, hi))


def _draw_edge_count(spec: DatasetSpec, n: int, rng: np.random.Generator) -> int:
    lo, hi = n - 1, n * (n - 1) // 2
    if spec.edge_count_std == 0:
        return int(np.clip(round(spec.edge_count_mean), lo, hi))
    for _ in range(1000):
        e = int(round(rng.normal(spec.edge_count_mean, spec.edge_count_std)))
        if lo <= e <= hi:
            return e
    return int(np.clip(round(spec.edge_count_mean), lo, hi))


def _allocate_counts(spec: DatasetSpec, n_rest: int) -> dict[NodeType, int]:
    """Largest-remainder allocation of the non-Domain nodes."""
    types = [t for t in NodeType if t is not NodeType.DOMAIN]
    weights = np.array([spec.type_proportions.get(t, 0.0) for t in types], dtype=float)
    if weights.sum() <= 0:
        raise InfeasibleSpecError("no mass assigned to non-Domain node types")
    weights = weights / weights.sum()
    raw = weights * n_rest
    counts = np.floor(raw).astype(int)
    remainder = raw - counts
    for idx in np.argsort(-remainder)[: n_rest - counts.sum()]:
        counts[idx] += 1
    alloc = dict(zip(types, (int(c) for c in counts)))

    leaves = alloc[NodeType.USER] + alloc[NodeType.COMPUTER]
    containers = alloc[NodeType.ORGANIZATIONAL_UNIT] + alloc[NodeType.GROUP]
    if leaves > 0 and containers == 0:
        ou_mass = spec.type_proportions.get(NodeType.ORGANIZATIONAL_UNIT, 0.0)
        group_mass = spec.type_proportions.get(NodeType.GROUP, 0.0)
        if ou_mass + group_mass <= 0:
            raise InfeasibleSpecError(
                "users/computers need an OU or Group to attach to, but the spec "
                "assigns no mass to either"
            )
        # Rounding starved the containers: convert one leaf into a Group.
        donor = NodeType.USER if alloc[NodeType.USER] >= alloc[NodeType.COMPUTER] else NodeType.COMPUTER
        alloc[donor] -= 1
        alloc[NodeType.GROUP] += 1
    return alloc


def generate_graph(spec: DatasetSpec, rng: np.random.Generator) -> ADGraph:
    """Generate one schema-valid AD-like DAG.

    Exactly one Domain root, every node reachable from it, every edge legal
    under :func:`adlure.schema.is_valid_edge`, edge count drawn from the
    spec's truncated Normal.
    """
    n = _draw_node_count(spec, rng)
    alloc = _allocate_counts(spec, n - 1)

    ids: dict[NodeType, list[str]] = {t: [] for t in NodeType}
    nodes: list[Node] = []
    counter = 0

    def add_node(ntype: NodeType, attributes: dict[str, str] | None = None) -> str:
        nonlocal counter
        nid = f"{_ID_PREFIX[ntype]}_{counter:04d}"
        counter += 1
        ids[ntype].append(nid)
        nodes.append(Node(nid, ntype, attributes or {}))
        return nid

    domain = add_node(NodeType.DOMAIN, {"name": "example.local"})
    edges: list[tuple[str, str]] = []

    # Spine: a spanning tree laid down in creation order stays acyclic and
    # keeps every node reachable from the Domain root.
    for _ in range(alloc[NodeType.ORGANIZATIONAL_UNIT]):
        parents = [domain] + ids[NodeType.ORGANIZATIONAL_UNIT]
        parent = parents[rng.integers(len(parents))]
        edges.append((parent, add_node(NodeType.ORGANIZATIONAL_UNIT)))
    for _ in range(alloc[NodeType.GROUP]):
        parents = [domain] + ids[NodeType.ORGANIZATIONAL_UNIT] + ids[NodeType.GROUP]
        parent = parents[rng.integers(len(parents))]
        edges.append((parent, add_node(NodeType.GROUP)))
    containers = ids[NodeType.ORGANIZATIONAL_UNIT] + ids[NodeType.GROUP]
    for ntype in (NodeType.USER, NodeType.COMPUTER):
        for _ in range(alloc[ntype]):
            parent = containers[rng.integers(len(containers))] if containers else domain
            if parent == domain:
                raise InfeasibleSpecError("no container available for leaf nodes")
            edges.append((parent, add_node(ntype)))

    target_edges = _draw_edge_count(spec, n, rng)
    existing = set(edges)
    candidates = [
        pair for pair in _forward_valid_pairs(ids) if pair not in existing
    ]
    extra = min(target_edges - len(edges), len(candidates))
    if extra > 0:
        chosen = rng.choice(len(candidates), size=extra, replace=False)
        edges.extend(candidates[int(i)] for i in chosen)

    return ADGraph(nodes, edges)


def _forward_valid_pairs(ids: dict[NodeType, list[str]]) -> list[tuple[str, str]]:
    """All schema-valid pairs that point forward in creation order."""
    domain = ids[NodeType.DOMAIN][0]
    ous = ids[NodeType.ORGANIZATIONAL_UNIT]
    groups = ids[NodeType.GROUP]
    leaves = ids[NodeType.USER] + ids[NodeType.COMPUTER]
    pairs: list[tuple[str, str]] = []
    pairs.extend((domain, x) for x in ous + groups)
    pairs.extend((ous[i], ous[j]) for i in range(len(ous)) for j in range(i + 1, len(ous)))
    pairs.extend((ou, g) for ou in ous for g in groups)
    pairs.extend((groups[i], groups[j]) for i in range(len(groups)) for j in range(i + 1, len(groups)))
    pairs.extend((src, leaf) for src in ous + groups for leaf in leaves)
    return pairs


def estimate_spec(samples: Sequence[ADGraph]) -> DatasetSpec:
    """Recover generation parameters from sample graphs (population statistics)."""
    if len(samples) < 2:
        raise ValueError(f"need at least 2 sample graphs, got {len(samples)}")
    node_counts = np.array([len(g) for g in samples], dtype=float)
    edge_counts = np.array([len(g.edges) for g in samples], dtype=float)
    type_counts = {t: 0 for t in NodeType}
    for g in samples:
        for node in g.nodes:
            type_counts[node.node_type] += 1
    total = sum(type_counts.values())
    proportions = {t: c / total for t, c in type_counts.items()}
    return DatasetSpec(
        graph_size=int(round(node_counts.mean())),
        n_samples=len(samples),
        edge_count_mean=float(edge_counts.mean()),
        edge_count_std=float(edge_counts.std()),
        type_proportions=proportions,
        node_count_mean=float(node_counts.mean()),
        node_count_std=float(node_counts.std()),
    )


def assign_splits(
    n: int, rng: np.random.Generator, validation_fraction: float = 1.0 / 8.0
) -> tuple[np.ndarray, list[str]]:
    """Shuffled permutation plus labels: 4/5 train+validation, 1/5 test."""
    perm = rng.permutation(n)
    n_test = int(round(n / 5.0))
    n_tv = n - n_test
    n_val = int(round(n_tv * validation_fraction))
    if n_tv > 0 and n_val >= n_tv:
        n_val = n_tv - 1
    labels = [TRAIN] * (n_tv - n_val) + [VALIDATION] * n_val + [TEST] * n_test
    return perm, labels


def generate_dataset(spec: DatasetSpec, validation_fraction: float = 1.0 / 8.0) -> Dataset:
    """Generate ``spec.n_samples`` graphs with shuffled split assignment."""
    root = np.random.SeedSequence(spec.seed)
    graph_seeds = root.spawn(spec.n_samples + 1)
    graphs = [generate_graph(spec, np.random.default_rng(s)) for s in graph_seeds[:-1]]
    split_rng = np.random.default_rng(graph_seeds[-1])
    perm, labels = assign_splits(spec.n_samples, split_rng, validation_fraction)
    shuffled = tuple(graphs[int(i)] for i in perm)
    return Dataset(graphs=shuffled, split_labels=tuple(labels), spec=spec)


# --- grid analog ---------------------------------------------------------------

def generate_grid_graph(n_rows: int, n_cols: int) -> ADGraph:
    """Directed 2-D grid: edges point right and down, all nodes one type."""
    if n_rows < 1 or n_cols < 1:
        raise ValueError("grid sides must be >= 1")
    nodes = [
        Node(f"g{r:02d}x{c:02d}", NodeType.USER) for r in range(n_rows) for c in range(n_cols)
    ]
    edges = []
    for r in range(n_rows):
        for c in range(n_cols):
            if r + 1 < n_rows:
                edges.append((f"g{r:02d}x{c:02d}", f"g{r + 1:02d}x{c:02d}"))
            if c + 1 < n_cols:
                edges.append((f"g{r:02d}x{c:02d}", f"g{r:02d}x{c + 1:02d}"))
    return ADGraph(nodes, edges)


def generate_grid_dataset(
    n_samples: int,
    side_range: tuple[int, int] = (5, 8),
    seed: int = 0,
    validation_fraction: float = 1.0 / 8.0,
) -> Dataset:
    """Dataset of directed grids with sides drawn uniformly from ``side_range``."""
    rng = np.random.default_rng(seed)
    lo, hi = side_range
    graphs = [
        generate_grid_graph(int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)))
        for _ in range(n_samples)
    ]
    perm, labels = assign_splits(n_samples, rng, validation_fraction)
    return Dataset(
        graphs=tuple(graphs[int(i)] for i in perm),
        split_labels=tuple(labels),
        spec=None,
    )


# --- on-disk layout ------------------------------------------------------------

def spec_to_dict(spec: DatasetSpec) -> dict:
    return {
        "graph_size": spec.graph_size,
        "n_samples": spec.n_samples,
        "edge_count_mean": spec.edge_count_mean,
        "edge_count_std": spec.edge_count_std,
        "type_proportions": {t.value: p for t, p in spec.type_proportions.items()},
        "seed": spec.seed,
        "node_count_mean": spec.node_count_mean,
        "node_count_std": spec.node_count_std,
    }


def spec_from_dict(doc: dict) -> DatasetSpec:
    try:
        return DatasetSpec(
            graph_size=int(doc["graph_size"]),
            n_samples=int(doc["n_samples"]),
            edge_count_mean=float(doc["edge_count_mean"]),
            edge_count_std=float(doc["edge_count_std"]),
            type_proportions={NodeType(k): float(v) for k, v in doc["type_proportions"].items()},
            seed=int(doc["seed"]),
            node_count_mean=doc.get("node_count_mean"),
            node_count_std=doc.get("node_count_std"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"bad dataset spec: {exc}") from exc


def save_dataset(dataset: Dataset, out_dir: str | Path, force: bool = False) -> Path:
    """Write graphs plus a manifest; refuses to overwrite unless ``force``."""
    out = Path(out_dir)
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not force:
        raise FileExistsError(f"{manifest_path} already exists (use force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    splits: dict[str, str] = {}
    for i, (graph, label) in enumerate(zip(dataset.graphs, dataset.split_labels)):
        fname = f"graph_{i:05d}.json"
        (out / fname).write_text(graph_to_json(graph), encoding="utf-8")
        splits[fname] = label
    manifest = {
        "format_version": 1,
        "spec": spec_to_dict(dataset.spec) if dataset.spec is not None else None,
        "splits": splits,
        "stats": dataset.stats(),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def load_dataset(in_dir: str | Path) -> Dataset:
    """Read a dataset directory written by :func:`save_dataset`."""
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise MalformedInputError(f"{manifest_path} not found")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        splits = manifest["splits"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise MalformedInputError(f"bad manifest: {exc}") from exc
    graphs: list[ADGraph] = []
    labels: list[str] = []
    for fname in sorted(splits):
        graphs.append(graph_from_json((src / fname).read_text(encoding="utf-8")))
        labels.append(splits[fname])
    spec = spec_from_dict(manifest["spec"]) if manifest.get("spec") else None
    return Dataset(graphs=tuple(graphs), split_labels=tuple(labels), spec=spec)
