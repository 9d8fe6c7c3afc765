"""Sparse piecewise-constant regression over a graph with a low-rank horseshoe prior."""

from .graph import Graph, load_graph, minimum_spanning_forest, sample_forest_prior
from .inference import (
    ChainOutput,
    coclustering_matrix,
    dahl_point_estimate,
    k_distribution,
    mspe,
    posterior_median_beta,
    rand_index,
)
from .linalg import CholState, NotPositiveDefiniteError, collapsed_loglik
from .model import Dataset, Hyperparams, ModelState, build_state, initial_state, validate_state
from .partition import (
    Partition,
    Projection,
    SpanningForest,
    induce_partition,
    merge,
    projection_matrix,
    resample_forest_compatible,
    split,
)
from .sampler import MoveRecord, Schedule, run_chain, run_chains, step_partition

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "load_graph",
    "minimum_spanning_forest",
    "sample_forest_prior",
    "SpanningForest",
    "Partition",
    "Projection",
    "induce_partition",
    "projection_matrix",
    "split",
    "merge",
    "resample_forest_compatible",
    "CholState",
    "NotPositiveDefiniteError",
    "collapsed_loglik",
    "Dataset",
    "Hyperparams",
    "ModelState",
    "build_state",
    "initial_state",
    "validate_state",
    "MoveRecord",
    "Schedule",
    "step_partition",
    "run_chain",
    "run_chains",
    "ChainOutput",
    "coclustering_matrix",
    "dahl_point_estimate",
    "posterior_median_beta",
    "rand_index",
    "mspe",
    "k_distribution",
]
