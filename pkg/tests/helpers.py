import numpy as np

from g2l.features import AnchorSet, Dataset, FeatureVector, Representative


def make_anchors(matrix, names=None, metric="euclidean"):
    matrix = np.asarray(matrix, dtype=float)
    names = names or [f"a{i:02d}" for i in range(len(matrix))]
    reps = tuple(
        Representative(n, 0, n, FeatureVector(n, row)) for n, row in zip(names, matrix)
    )
    return AnchorSet(reps, metric)


def make_dataset(matrix, name="t"):
    matrix = np.asarray(matrix, dtype=float)
    return Dataset(name, tuple(f"{name}{i}" for i in range(len(matrix))), matrix)


def oracle_inputs(anchors):
    """Vectors, names and keys in the anchor set's own order."""
    return list(anchors.matrix), anchors.names, anchors.keys
