"""adlure: learn Active Directory graph structure, extend it with honeyusers.

A bidirectional DAG-RNN variational autoencoder encodes the topology of an
AD object graph; sampling its latent space places fake user accounts where
real ones would plausibly sit. The package also ships a synthetic dataset
generator calibrated against real AD statistics, attribute synthesis with
LDIF/PowerShell deployment artifacts, and an evaluation harness.
"""

from .attributes import (
    HoneyuserRecord,
    build_dn,
    export_ldif,
    export_provisioning_script,
    generate_attributes,
)
from .datasets import (
    Dataset,
    DatasetSpec,
    estimate_spec,
    generate_dataset,
    generate_graph,
    generate_grid_dataset,
    generate_grid_graph,
    load_dataset,
    save_dataset,
    standard_spec,
)
from .evaluation import (
    ConfusionCounts,
    confusion,
    degree_wasserstein,
    edge_validity_ratio,
    mean_edge_count_ratio,
    pr_auc,
    pr_curve,
    prf1,
)
from .graph import (
    ADGraph,
    GraphTensors,
    Node,
    from_extension,
    graph_from_json,
    graph_to_json,
    parse_sharphound,
    to_matrices,
    topological_sort,
)
from .model import DagRnnVAE, ModelConfig
from .namebank import DEFAULT_CORPUS, NameCorpus
from .schema import NodeType, is_valid_edge

__version__ = "0.1.0"

__all__ = [
    "ADGraph",
    "ConfusionCounts",
    "DagRnnVAE",
    "Dataset",
    "DatasetSpec",
    "DEFAULT_CORPUS",
    "GraphTensors",
    "HoneyuserRecord",
    "ModelConfig",
    "NameCorpus",
    "Node",
    "NodeType",
    "build_dn",
    "confusion",
    "degree_wasserstein",
    "edge_validity_ratio",
    "estimate_spec",
    "export_ldif",
    "export_provisioning_script",
    "from_extension",
    "generate_attributes",
    "generate_dataset",
    "generate_graph",
    "generate_grid_dataset",
    "generate_grid_graph",
    "graph_from_json",
    "graph_to_json",
    "is_valid_edge",
    "load_dataset",
    "mean_edge_count_ratio",
    "parse_sharphound",
    "pr_auc",
    "pr_curve",
    "prf1",
    "save_dataset",
    "standard_spec",
    "to_matrices",
    "topological_sort",
]
