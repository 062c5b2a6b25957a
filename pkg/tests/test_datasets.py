from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from scipy import stats

from adlure.datasets import (
    Dataset,
    DatasetSpec,
    assign_splits,
    estimate_spec,
    generate_dataset,
    generate_graph,
    generate_grid_dataset,
    generate_grid_graph,
    load_dataset,
    save_dataset,
    standard_spec,
)
from adlure.errors import InfeasibleSpecError
from adlure.graph import ADGraph, Node, graph_to_json
from adlure.schema import NodeType, is_valid_edge

# The AD containment/membership relation, written out pair by pair.
ALLOWED = {
    (NodeType.DOMAIN, NodeType.ORGANIZATIONAL_UNIT),
    (NodeType.DOMAIN, NodeType.GROUP),
    (NodeType.ORGANIZATIONAL_UNIT, NodeType.ORGANIZATIONAL_UNIT),
    (NodeType.ORGANIZATIONAL_UNIT, NodeType.USER),
    (NodeType.ORGANIZATIONAL_UNIT, NodeType.COMPUTER),
    (NodeType.ORGANIZATIONAL_UNIT, NodeType.GROUP),
    (NodeType.GROUP, NodeType.USER),
    (NodeType.GROUP, NodeType.COMPUTER),
    (NodeType.GROUP, NodeType.GROUP),
}


class TestIsValidEdge:
    def test_group_to_user(self):
        assert is_valid_edge(NodeType.GROUP, NodeType.USER)

    def test_user_contains_nothing(self):
        assert not is_valid_edge(NodeType.USER, NodeType.DOMAIN)
        assert all(not is_valid_edge(NodeType.USER, t) for t in NodeType)

    def test_exhaustive_table(self):
        for src, dst in itertools.product(NodeType, NodeType):
            assert is_valid_edge(src, dst) == ((src, dst) in ALLOWED)


def _connectivity_from_root(graph: ADGraph) -> bool:
    domains = graph.nodes_of_type(NodeType.DOMAIN)
    if len(domains) != 1:
        return False
    seen = {domains[0].node_id}
    frontier = [domains[0].node_id]
    while frontier:
        nid = frontier.pop()
        for s in graph.successors(nid):
            if s not in seen:
                seen.add(s)
                frontier.append(s)
    return len(seen) == len(graph)


class TestGenerateGraph:
    @pytest.mark.parametrize("size", [15, 50])
    def test_structural_invariants_hold(self, size):
        spec = standard_spec(size, n_samples=1, seed=0)
        rng = np.random.default_rng(123)
        for _ in range(500):
            g = generate_graph(spec, rng)
            assert len(g.nodes_of_type(NodeType.DOMAIN)) == 1
            assert _connectivity_from_root(g)
            for src, dst in g.edges:
                assert is_valid_edge(g.node(src).node_type, g.node(dst).node_type)

    def test_tree_when_edge_mean_is_minimum(self):
        spec = DatasetSpec(
            graph_size=12,
            n_samples=1,
            edge_count_mean=9,
            edge_count_std=0.0,
            node_count_mean=10,
            node_count_std=0.0,
        )
        rng = np.random.default_rng(0)
        for _ in range(25):
            g = generate_graph(spec, rng)
            assert len(g) == 10
            assert len(g.edges) == 9  # spanning tree

    def test_deterministic_given_seed(self):
        spec = standard_spec(15, n_samples=1, seed=9)
        a = generate_graph(spec, np.random.default_rng(42))
        b = generate_graph(spec, np.random.default_rng(42))
        assert graph_to_json(a) == graph_to_json(b)

    def test_infeasible_proportions_raise(self):
        spec = DatasetSpec(
            graph_size=10,
            n_samples=1,
            edge_count_mean=9,
            edge_count_std=0.0,
            type_proportions={
                NodeType.DOMAIN: 0.1,
                NodeType.USER: 0.9,
                NodeType.ORGANIZATIONAL_UNIT: 0.0,
                NodeType.GROUP: 0.0,
                NodeType.COMPUTER: 0.0,
            },
        )
        with pytest.raises(InfeasibleSpecError):
            generate_graph(spec, np.random.default_rng(0))

    def test_edge_counts_follow_truncated_normal(self):
        spec = standard_spec(15, n_samples=1, seed=0)
        rng = np.random.default_rng(2024)
        counts = np.array([len(generate_graph(spec, rng).edges) for _ in range(2000)], dtype=float)
        # Empirical CDF against the truncated Normal CDF, continuity-corrected
        # because counts are integers. Truncation bounds use the mean node count.
        n = spec.effective_node_count_mean
        lo, hi = n - 1, n * (n - 1) / 2
        a = (lo - spec.edge_count_mean) / spec.edge_count_std
        b = (hi - spec.edge_count_mean) / spec.edge_count_std
        dist = stats.truncnorm(a, b, loc=spec.edge_count_mean, scale=spec.edge_count_std)
        xs = np.arange(counts.min(), counts.max() + 1)
        empirical = np.searchsorted(np.sort(counts), xs, side="right") / counts.size
        ks = np.abs(empirical - dist.cdf(xs + 0.5)).max()
        assert ks < 0.1


class TestEstimateSpec:
    def _graph_with_edges(self, k: int) -> ADGraph:
        nodes = [Node("d", NodeType.DOMAIN), Node("ou", NodeType.ORGANIZATIONAL_UNIT)]
        edges = [("d", "ou")]
        for i in range(k - 1):
            nodes.append(Node(f"u{i:02d}", NodeType.USER))
            edges.append(("ou", f"u{i:02d}"))
        return ADGraph(nodes, edges)

    def test_two_point_statistics(self):
        spec = estimate_spec([self._graph_with_edges(10), self._graph_with_edges(20)])
        assert spec.edge_count_mean == 15.0
        assert spec.edge_count_std == 5.0  # population standard deviation

    def test_identical_graphs_zero_std(self):
        g = self._graph_with_edges(12)
        spec = estimate_spec([g, g, g])
        assert spec.edge_count_std == 0.0

    def test_requires_two_samples(self):
        with pytest.raises(ValueError):
            estimate_spec([self._graph_with_edges(5)])

    def test_generate_then_estimate_closure(self):
        true_spec = standard_spec(15, n_samples=50, seed=5)
        ds = generate_dataset(true_spec)
        recovered = estimate_spec(list(ds.graphs))
        se_edges = true_spec.edge_count_std / np.sqrt(50)
        assert abs(recovered.edge_count_mean - true_spec.edge_count_mean) <= 2 * se_edges + 1e-9
        se_nodes = true_spec.effective_node_count_std / np.sqrt(50)
        assert abs(recovered.node_count_mean - true_spec.effective_node_count_mean) <= 2 * se_nodes + 1e-9
        assert recovered.type_proportions[NodeType.USER] > 0.4


class TestSplits:
    def test_proportions_2000(self):
        perm, labels = assign_splits(2000, np.random.default_rng(0))
        assert len(perm) == 2000
        assert labels.count("test") == 400
        assert labels.count("train") + labels.count("validation") == 1600
        assert labels.count("validation") == 200

    def test_five_samples(self):
        _, labels = assign_splits(5, np.random.default_rng(0))
        assert labels.count("test") == 1
        assert labels.count("train") + labels.count("validation") == 4

    def test_same_seed_same_assignment(self):
        d1 = generate_dataset(standard_spec(15, n_samples=20, seed=3))
        d2 = generate_dataset(standard_spec(15, n_samples=20, seed=3))
        assert d1.split_labels == d2.split_labels
        assert all(graph_to_json(a) == graph_to_json(b) for a, b in zip(d1.graphs, d2.graphs))


class TestGrid:
    def test_grid_structure(self):
        g = generate_grid_graph(3, 4)
        assert len(g) == 12
        assert len(g.edges) == 3 * 3 + 2 * 4  # rightward + downward
        assert {n.node_type for n in g.nodes} == {NodeType.USER}

    def test_grid_dataset_splits(self):
        ds = generate_grid_dataset(40, side_range=(3, 5), seed=1)
        assert len(ds.graphs) == 40
        assert ds.split_labels.count("test") == 8
        assert ds.spec is None


class TestSerialization:
    def test_round_trip(self, tmp_path):
        ds = generate_dataset(standard_spec(15, n_samples=10, seed=2))
        save_dataset(ds, tmp_path / "d")
        loaded = load_dataset(tmp_path / "d")
        assert loaded.split_labels == ds.split_labels
        assert [graph_to_json(g) for g in loaded.graphs] == [graph_to_json(g) for g in ds.graphs]
        assert loaded.spec == ds.spec

    def test_manifest_is_stable(self, tmp_path):
        ds = generate_dataset(standard_spec(15, n_samples=6, seed=4))
        save_dataset(ds, tmp_path / "a")
        save_dataset(ds, tmp_path / "b")
        a = (tmp_path / "a" / "manifest.json").read_bytes()
        b = (tmp_path / "b" / "manifest.json").read_bytes()
        assert a == b

    def test_refuses_overwrite_without_force(self, tmp_path):
        ds = generate_dataset(standard_spec(15, n_samples=4, seed=4))
        save_dataset(ds, tmp_path / "d")
        with pytest.raises(FileExistsError):
            save_dataset(ds, tmp_path / "d")
        save_dataset(ds, tmp_path / "d", force=True)

    def test_manifest_carries_stats(self, tmp_path):
        ds = generate_dataset(standard_spec(15, n_samples=6, seed=4))
        save_dataset(ds, tmp_path / "d")
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert set(manifest["stats"]) == {"n_graphs", "mean_nodes", "mean_edges"}


class TestDatasetSpecValidation:
    def test_bad_values(self):
        with pytest.raises(ValueError):
            DatasetSpec(graph_size=1, n_samples=1, edge_count_mean=1, edge_count_std=0)
        with pytest.raises(ValueError):
            DatasetSpec(graph_size=5, n_samples=0, edge_count_mean=1, edge_count_std=0)
        with pytest.raises(ValueError):
            DatasetSpec(graph_size=5, n_samples=1, edge_count_mean=1, edge_count_std=-1)

    def test_proportions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DatasetSpec(
                graph_size=5,
                n_samples=1,
                edge_count_mean=4,
                edge_count_std=0,
                type_proportions={NodeType.DOMAIN: 0.5, NodeType.USER: 0.2},
            )

    def test_dataset_label_validation(self):
        g = generate_grid_graph(2, 2)
        with pytest.raises(ValueError):
            Dataset(graphs=(g,), split_labels=("nope",))
