"""Eigenvector-centrality ranking with unsupervised graph neural networks."""

__version__ = "0.1.0"

from .graph import Graph, GeneratorSpec, generate, load_edge_list, spmv  # noqa: E402
from .eigen import ECScores, dense_eigen_oracle, power_iteration_ec  # noqa: E402
from .training import (  # noqa: E402
    Checkpoint,
    LossVariant,
    TrainConfig,
    infer_scores,
    train_csl,
    train_cul,
)
from .metrics import EvalReport, evaluate, mann_whitney_u, rank_nodes, top_n_percent  # noqa: E402

__all__ = [
    "Checkpoint", "ECScores", "EvalReport", "GeneratorSpec", "Graph", "LossVariant", "TrainConfig",
    "dense_eigen_oracle", "evaluate", "generate", "infer_scores", "load_edge_list", "mann_whitney_u",
    "power_iteration_ec", "rank_nodes", "spmv", "top_n_percent", "train_csl", "train_cul",
]
