"""Quantitative evaluation of reconstruction and extension quality.

Reconstruction is judged element-wise between the true and predicted
adjacency matrices over masked strictly-lower-triangular entries
(precision, recall, F1, PR-AUC). Extension quality uses the Edge Validity
Ratio (fraction of a new node's incoming edges that are legal in AD), the
Mean Edge Count Ratio (min/max ratio between the mean in-degree of
original User nodes and of the new nodes) and the first Wasserstein
distance between node-degree distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import wasserstein_distance

from .graph import ADGraph
from .schema import NodeType, is_valid_edge


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn
        )


def _pair_mask(mask: np.ndarray) -> np.ndarray:
    """Compared entries: strictly lower triangular with both endpoints real."""
    m = np.asarray(mask, dtype=bool)
    outer = np.outer(m, m)
    return np.tril(outer, k=-1)


def confusion(
    a_true: np.ndarray, a_pred: np.ndarray, mask: np.ndarray
) -> ConfusionCounts:
    """Element-wise confusion counts over the masked lower-triangular entries."""
    t = np.asarray(a_true)
    p = np.asarray(a_pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {p.shape}")
    pm = _pair_mask(mask)
    if pm.shape != t.shape:
        raise ValueError(f"mask implies shape {pm.shape}, matrices have {t.shape}")
    t = t > 0.5
    p = p > 0.5
    return ConfusionCounts(
        tp=int(np.sum(pm & t & p)),
        tn=int(np.sum(pm & ~t & ~p)),
        fp=int(np.sum(pm & ~t & p)),
        fn=int(np.sum(pm & t & ~p)),
    )


def prf1(counts: ConfusionCounts) -> tuple[float, float, float]:
    """Precision, recall, F1; undefined ratios (0/0) fall back to 0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


def pr_curve(
    a_true: np.ndarray, scores: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision/recall at every distinct score threshold, descending.

    Returns (precision, recall, thresholds) with the conventional
    (recall=0, precision=1) anchor prepended.
    """
    pm = _pair_mask(mask)
    y = (np.asarray(a_true) > 0.5)[pm]
    s = np.asarray(scores, dtype=np.float64)[pm]
    return pr_curve_from_samples(y, s)


def pr_curve_from_samples(
    y: np.ndarray, s: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=bool).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise ValueError("labels and scores must align")
    n_pos = int(y.sum())
    if y.size == 0 or n_pos == 0:
        return np.array([1.0]), np.array([0.0]), np.array([])

    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # Last index of each run of equal scores = metrics at that threshold.
    last_of_run = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp = tp[last_of_run]
    fp = fp[last_of_run]
    thresholds = s_sorted[last_of_run]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return np.r_[1.0, precision], np.r_[0.0, recall], thresholds


def pr_auc(a_true: np.ndarray, scores: np.ndarray, mask: np.ndarray) -> float:
    """Trapezoidal area under the precision-recall curve."""
    precision, recall, _ = pr_curve(a_true, scores, mask)
    return float(np.trapezoid(precision, recall))


def pr_auc_from_samples(y: np.ndarray, s: np.ndarray) -> float:
    precision, recall, _ = pr_curve_from_samples(y, s)
    return float(np.trapezoid(precision, recall))


# -- extension metrics --------------------------------------------------------

def edge_validity_ratio(
    extended: ADGraph, new_nodes: Iterable[str]
) -> tuple[float, dict[str, float]]:
    """Mean fraction of schema-valid incoming edges over the new nodes."""
    ids = sorted(new_nodes)
    if not ids:
        raise ValueError("new_nodes must not be empty")
    per_node: dict[str, float] = {}
    for nid in ids:
        node_type = extended.node(nid).node_type
        preds = extended.predecessors(nid)
        if not preds:
            raise ValueError(f"new node {nid!r} has no incoming edges; discard it upstream")
        valid = sum(
            1 for p in preds if is_valid_edge(extended.node(p).node_type, node_type)
        )
        per_node[nid] = valid / len(preds)
    return float(np.mean(list(per_node.values()))), per_node


def mean_edge_count_ratio(
    original: ADGraph, extended: ADGraph, new_nodes: Iterable[str]
) -> float:
    """min/max ratio of mean in-degree: original User nodes vs new nodes."""
    ids = sorted(new_nodes)
    if not ids:
        raise ValueError("new_nodes must not be empty")
    users = original.nodes_of_type(NodeType.USER)
    if not users:
        raise ValueError("original graph has no User nodes")
    delta_original = float(np.mean([original.in_degree(u.node_id) for u in users]))
    delta_generated = float(np.mean([extended.in_degree(nid) for nid in ids]))
    low, high = sorted((delta_original, delta_generated))
    if high == 0.0:
        return 1.0
    return low / high


def node_degrees(graph: ADGraph, nodes: Iterable[str] | None = None) -> np.ndarray:
    """Total (in + out) degrees, for the whole graph or a node subset."""
    ids = graph.node_ids if nodes is None else tuple(sorted(nodes))
    return np.array([graph.degree(nid) for nid in ids], dtype=np.float64)


def degree_wasserstein(
    g1: ADGraph | Sequence[float], g2: ADGraph | Sequence[float]
) -> float:
    """First Wasserstein distance between two node-degree distributions.

    Arguments may be graphs (all node degrees) or precomputed degree
    samples (e.g. for a node subset).
    """
    d1 = node_degrees(g1) if isinstance(g1, ADGraph) else np.asarray(g1, dtype=np.float64)
    d2 = node_degrees(g2) if isinstance(g2, ADGraph) else np.asarray(g2, dtype=np.float64)
    if d1.size == 0 or d2.size == 0:
        raise ValueError("degree samples must be non-empty")
    return float(wasserstein_distance(d1, d2))


# -- aggregated reports --------------------------------------------------------

def pooled_confusion(model, graphs: Sequence[ADGraph]) -> ConfusionCounts:
    """Confusion counts pooled over every compared entry of every graph."""
    from .graph import to_matrices

    counts = ConfusionCounts(0, 0, 0, 0)
    for graph in graphs:
        tensors = to_matrices(graph, len(graph))
        scores = model.reconstruct(graph)
        pred = scores >= model.edge_threshold
        counts = counts + confusion(tensors.adj, pred, tensors.mask)
    return counts


def reconstruction_report(model, graphs: Sequence[ADGraph]) -> dict:
    """Pooled precision/recall/F1/PR-AUC plus per-graph means."""
    from .graph import to_matrices

    counts = ConfusionCounts(0, 0, 0, 0)
    all_y: list[np.ndarray] = []
    all_s: list[np.ndarray] = []
    per_graph = {"precision": [], "recall": [], "f1": []}
    for graph in graphs:
        tensors = to_matrices(graph, len(graph))
        scores = model.reconstruct(graph)
        pred = scores >= model.edge_threshold
        c = confusion(tensors.adj, pred, tensors.mask)
        counts = counts + c
        for key, value in zip(("precision", "recall", "f1"), prf1(c)):
            per_graph[key].append(value)
        pm = _pair_mask(tensors.mask)
        all_y.append((tensors.adj > 0.5)[pm])
        all_s.append(scores[pm])
    precision, recall, f1 = prf1(counts)
    y = np.concatenate(all_y)
    s = np.concatenate(all_s)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "pr_auc": pr_auc_from_samples(y, s),
        "counts": {"tp": counts.tp, "tn": counts.tn, "fp": counts.fp, "fn": counts.fn},
        "per_graph_means": {k: float(np.mean(v)) for k, v in per_graph.items()},
        "pr_samples": (y, s),
    }


def extension_report(original: ADGraph, extended: ADGraph, new_nodes: Iterable[str]) -> dict:
    """All extension metrics for one original/extended pair."""
    ids = tuple(sorted(new_nodes))
    if not ids:
        return {
            "evr": None,
            "mecr": None,
            "wasserstein_new": None,
            "wasserstein_all": float(degree_wasserstein(original, extended)),
            "n_new": 0,
        }
    evr, per_node = edge_validity_ratio(extended, ids)
    new_degrees = np.array([extended.degree(nid) for nid in ids], dtype=np.float64)
    return {
        "evr": evr,
        "evr_per_node": per_node,
        "mecr": mean_edge_count_ratio(original, extended, ids),
        "wasserstein_new": float(degree_wasserstein(node_degrees(original), new_degrees)),
        "wasserstein_all": float(degree_wasserstein(original, extended)),
        "n_new": len(ids),
    }
