"""Supply-chain risk scoring on hierarchical product graphs.

A heterogeneous supply graph (products, listed companies, investors) is
reduced to a homogeneous product graph with partitioned features; biased
nodes get their missing financial features completed from neighbors with
centrality-weighted calibration, message passing projects cross-domain
messages through the domain gap, and per-domain heads score product risk.
"""

from .supply import (
    CBGraph,
    CompanyRecord,
    GraphError,
    ProductSubgraph,
    SupplyGraph,
    aggregate_product_features,
    assign_cb_labels,
    build_cb_graph,
    extract_product_subgraphs,
    load_supply_graph,
    save_supply_graph,
)
from .synth import CompanyGraph, GenConfig, JoinMode, dataset_stats, \
    derive_company_graph, generate_supply_graph, stats_table
from .centrality import (
    CentralityVector,
    PowerIterationError,
    SpectralVector,
    betweenness_centrality,
    closeness_centrality,
    degree_centrality,
    eigenvector_centrality,
    hop_distances,
    laplacian_top_eigenvector,
)
from .metrics import DegenerateLabels, auc_score, f1_score
from .training import (
    RunReport,
    SplitError,
    TrainConfig,
    TrainingDiverged,
    ablate,
    mlp_baseline,
    monte_carlo,
    split_dataset,
    sweep,
    train_once,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
