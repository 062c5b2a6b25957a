from __future__ import annotations

import numpy as np
import pytest
import torch

from adlure.graph import ADGraph, Node
from adlure.model import DagRnnVaeNet, ModelConfig
from adlure.model.network import named_arrays
from adlure.schema import NodeType


@pytest.fixture
def chain_graph() -> ADGraph:
    nodes = [
        Node("a", NodeType.DOMAIN),
        Node("b", NodeType.ORGANIZATIONAL_UNIT),
        Node("c", NodeType.USER),
    ]
    return ADGraph(nodes, [("a", "b"), ("b", "c")])


@pytest.fixture
def diamond_graph() -> ADGraph:
    nodes = [
        Node("a", NodeType.DOMAIN),
        Node("b", NodeType.ORGANIZATIONAL_UNIT),
        Node("c", NodeType.GROUP),
        Node("d", NodeType.USER),
    ]
    return ADGraph(nodes, [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")])


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        embed_dim=3,
        gru_units=2,
        musigma_hidden=3,
        latent_dim=2,
        decoder_hidden=(4, 3),
        batch_size=4,
        epochs=2,
        seed=0,
    )


@pytest.fixture
def tiny_net(tiny_config) -> DagRnnVaeNet:
    torch.manual_seed(tiny_config.seed)
    return DagRnnVaeNet(tiny_config).double()


def net_params(net: DagRnnVaeNet) -> dict[str, np.ndarray]:
    return {k: v.astype(np.float64) for k, v in named_arrays(net).items()}


def random_dag(rng: np.random.Generator, n: int, edge_prob: float = 0.4) -> ADGraph:
    """Random typed DAG: edges only from earlier to later under a hidden order."""
    order = rng.permutation(n)
    ids = [f"n{k:02d}" for k in range(n)]
    types = [NodeType(list(NodeType)[int(rng.integers(5))]) for _ in range(n)]
    nodes = [Node(ids[k], types[k]) for k in range(n)]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                edges.append((ids[order[i]], ids[order[j]]))
    return ADGraph(nodes, edges)
