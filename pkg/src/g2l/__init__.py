"""Geometric pseudo-labels from extremal Cayley-Menger simplex content."""
from .features import (
    AnchorSet,
    DataError,
    Dataset,
    FeatureVector,
    Representative,
    aggregate_kmeans,
    aggregate_mean,
    dataset_divergence,
    distance,
    kl_divergence,
    label_entropy,
    load_vectors,
)
from .geometry import cm_coefficient, cm_matrix, simplex_content
from .labeling import (
    Labeler,
    Policy,
    PseudoLabel,
    count_policies,
    count_policies_by_length,
    find_extremal_simplex,
    label_dataset,
    label_item,
    parse_policy,
)

__version__ = "0.1.0"
