"""Bayesian spatial Dirichlet process clustered heterogeneous regression."""

from spatialdp.graph import (
    UNREACHABLE,
    SpatialDataset,
    SpatialWeights,
    graph_distances,
    great_circle_distances,
    weight_matrix,
)
from spatialdp.inference import (
    ClusterSummary,
    cluster_summary,
    dahl_configuration,
    hpd_interval,
    mode_configuration,
    waic,
)
from spatialdp.metrics import estimation_metrics, rand_index
from spatialdp.model import ChainState, Hyperparameters
from spatialdp.sampler import SamplerConfig, Trace, run_chain
from spatialdp.stick import KernelSpec, SticksAndKnots, assignment_probs, kernel_value

__version__ = "0.1.0"

__all__ = [
    "UNREACHABLE",
    "ChainState",
    "ClusterSummary",
    "Hyperparameters",
    "KernelSpec",
    "SamplerConfig",
    "SpatialDataset",
    "SpatialWeights",
    "SticksAndKnots",
    "Trace",
    "assignment_probs",
    "cluster_summary",
    "dahl_configuration",
    "estimation_metrics",
    "graph_distances",
    "great_circle_distances",
    "hpd_interval",
    "kernel_value",
    "mode_configuration",
    "rand_index",
    "run_chain",
    "waic",
    "weight_matrix",
]
