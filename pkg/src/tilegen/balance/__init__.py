"""Dataset balancing: episode features, clustering, nonnegative least squares
over cluster centroids, and integer reweighted selection."""

from .features import aggregate_features, featurize, target_distribution
from .cluster import kmeans
from .nnls import nnls_solve
from .select import BalanceResult, integerize, sample_balanced

__all__ = [
    "aggregate_features",
    "featurize",
    "target_distribution",
    "kmeans",
    "nnls_solve",
    "BalanceResult",
    "integerize",
    "sample_balanced",
]
