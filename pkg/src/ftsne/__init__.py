"""Stochastic neighbour embedding under general f-divergences."""

from ._threads import get_num_threads, set_num_threads
from .affinity import (
    AffinityMatrix,
    ConditionalAffinity,
    Dataset,
    DegenerateInputError,
    conditional_affinities,
    joint_affinities,
    latent_affinity,
    student_conditional,
)
from .datagen import SyntheticSpec, gaussian_blobs, generate, swiss_roll
from .divergence import Divergence, parse_divergence, primal_divergence
from .metrics import (
    BinaryNeighborhood,
    RetrievalCurves,
    binary_divergence,
    epsilon_grid,
    knn_kfn_curve,
    pr_curve_xy,
    pr_curve_zy,
)
from .primal import Embedding, NumericalAbort, OptimizerSchedule, primal_gradient, primal_loss, run_primal
from .variational import MinimaxConfig, UnsupportedConfiguration, run_variational

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "BinaryNeighborhood",
    "ConditionalAffinity",
    "Dataset",
    "DegenerateInputError",
    "Divergence",
    "Embedding",
    "MinimaxConfig",
    "NumericalAbort",
    "OptimizerSchedule",
    "RetrievalCurves",
    "SyntheticSpec",
    "UnsupportedConfiguration",
    "binary_divergence",
    "conditional_affinities",
    "epsilon_grid",
    "gaussian_blobs",
    "generate",
    "get_num_threads",
    "joint_affinities",
    "knn_kfn_curve",
    "latent_affinity",
    "parse_divergence",
    "pr_curve_xy",
    "pr_curve_zy",
    "primal_divergence",
    "primal_gradient",
    "primal_loss",
    "run_primal",
    "run_variational",
    "set_num_threads",
    "student_conditional",
]
