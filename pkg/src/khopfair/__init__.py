"""k-hop fairness measurement and mitigation for link prediction."""

__version__ = "0.1.0"

from .exceptions import DomainGapError, GraphFormatError, MetricUndefinedError, NonFiniteError
from .graph import AttributedGraph, from_adjacency, load_graph, load_graph_files, split_edges, validate
from .khop import HopSet, KHopIndex, khop_bfs, khop_index, khop_levels, khop_power, khop_recursive, meaningful_hops
from .metrics import (ScoreMatrix, assortativity, auc, dp_decomposition, dyadic_metrics, group_exposure,
                      nb, nb_binary, nb_profile, nf)
from .toygen import gen_sbm, gen_star, gen_toy, oracle
from .losses import RelaxationConfig, relaxed_nb_loss, relaxed_nf_loss
from .mitigate import (MitigationResult, alpha_sweep, bias_trajectory_correlation, post_process,
                       pre_process_continuous, rewire_add_edges)
from .estimators import ContinuousRewirer, EdgeAdditionRewirer, KHopBiasProfile, KHopFairPostProcessor

__all__ = [
    "AttributedGraph", "ContinuousRewirer", "DomainGapError", "EdgeAdditionRewirer", "GraphFormatError",
    "HopSet", "KHopBiasProfile", "KHopFairPostProcessor", "KHopIndex", "MetricUndefinedError",
    "MitigationResult", "NonFiniteError", "RelaxationConfig", "ScoreMatrix", "alpha_sweep",
    "assortativity", "auc", "bias_trajectory_correlation", "dp_decomposition", "dyadic_metrics",
    "from_adjacency", "gen_sbm", "gen_star", "gen_toy", "group_exposure", "khop_bfs", "khop_index",
    "khop_levels", "khop_power", "khop_recursive", "load_graph", "load_graph_files", "meaningful_hops",
    "nb", "nb_binary", "nb_profile", "nf", "oracle", "post_process", "pre_process_continuous",
    "relaxed_nb_loss", "relaxed_nf_loss", "rewire_add_edges", "split_edges", "validate",
]
