"""Cayley-Menger simplex content from pairwise squared distances.

A d-simplex with vertices 0..d has squared content ``det(M) / a_d`` where
``M`` is the bordered matrix of squared distances and
``a_d = (-1)**(d+1) * 2**d * (d!)**2``.  Determinants are computed with a
partial-pivot LU factorisation that is vectorised over a batch of matrices,
so that every candidate extension of a simplex can be scored in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEGENERACY_TOL",
    "INT64_MAX",
    "CMResult",
    "validate_distance_matrix",
    "cm_matrix",
    "cm_coefficient",
    "lu_det",
    "squared_contents",
    "degeneracy_thresholds",
    "clamp_degenerate",
    "simplex_content",
]

# A d-simplex is degenerate when its squared content is at most
# DEGENERACY_TOL * L**(2d), L being its longest edge.  Being relative to the
# simplex's own scale, the test gives the same answer for s*X as for X.
DEGENERACY_TOL = 1e-12

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class CMResult:
    dimension: int
    determinant: float
    squared_content: float
    content: float
    degenerate: bool
    raw_squared_content: float


def validate_distance_matrix(dist, tol: float = 1e-12) -> np.ndarray:
    """Check that ``dist`` is a square, symmetric, zero-diagonal, nonnegative grid.

    ``tol`` is relative to the largest entry.  Returns a float64 copy.
    """
    d = np.array(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if d.shape[0] < 2:
        raise ValueError("distance matrix needs at least 2 vertices")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix has non-finite entries")
    scale = tol * max(1.0, float(np.abs(d).max()))
    if np.any(d < 0):
        i, j = np.argwhere(d < 0)[0]
        raise ValueError(f"negative squared distance at ({i}, {j}): {d[i, j]}")
    if np.any(np.abs(np.diag(d)) > scale):
        i = int(np.argmax(np.abs(np.diag(d))))
        raise ValueError(f"nonzero diagonal at ({i}, {i}): {d[i, i]}")
    asym = np.abs(d - d.T)
    if np.any(asym > scale):
        i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
        raise ValueError(f"distance matrix is not symmetric at ({i}, {j})")
    return d


def cm_matrix(dist) -> np.ndarray:
    """Border a (d+1)x(d+1) squared-distance matrix into the (d+2)x(d+2) CM matrix.

    >>> cm_matrix([[0, 9], [9, 0]]).tolist()
    [[0.0, 1.0, 1.0], [1.0, 0.0, 9.0], [1.0, 9.0, 0.0]]
    """
    d = validate_distance_matrix(dist)
    return _border(d)


def _border(d: np.ndarray) -> np.ndarray:
    # works on a single matrix or a stack (..., m, m)
    m = d.shape[-1]
    out = np.ones(d.shape[:-2] + (m + 1, m + 1), dtype=np.float64)
    out[..., 0, 0] = 0.0
    out[..., 1:, 1:] = d
    return out


def cm_coefficient(d: int) -> int:
    """Exact ``(-1)**(d+1) * 2**d * (d!)**2``.

    Raises ``OverflowError`` when the magnitude no longer fits a signed 64-bit
    integer (d >= 12).
    """
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
        raise TypeError(f"dimension must be an integer, got {type(d).__name__}")
    d = int(d)
    if d <= 0:
        raise ValueError(f"dimension must be >= 1, got {d}")
    magnitude = (1 << d) * math.factorial(d) ** 2
    if magnitude > INT64_MAX:
        raise OverflowError(f"a_{d} = {magnitude} exceeds the 64-bit integer range")
    return magnitude if d % 2 == 1 else -magnitude


def lu_det(mats) -> np.ndarray | float:
    """Determinant by Gaussian elimination with partial pivoting.

    Accepts one square matrix or a stack of shape ``(b, m, m)``; the stack is
    factorised in lockstep, one column at a time.
    """
    a = np.array(mats, dtype=np.float64)
    single = a.ndim == 2
    if single:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    b, m, _ = a.shape
    det = np.ones(b)
    batch = np.arange(b)
    for k in range(m):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if swap.any():
            idx, src = batch[swap], piv[swap]
            top = a[idx, k, :].copy()
            a[idx, k, :] = a[idx, src, :]
            a[idx, src, :] = top
            det[swap] = -det[swap]
        pivot = a[:, k, k]
        det *= pivot
        if k + 1 == m:
            break
        live = pivot != 0.0
        factors = np.zeros((b, m - k - 1))
        factors[live] = a[live, k + 1:, k] / pivot[live, None]
        a[:, k + 1:, k:] -= factors[:, :, None] * a[:, None, k, k:]
    return float(det[0]) if single else det


def squared_contents(dists: np.ndarray) -> np.ndarray:
    """Raw (unclamped) squared contents for a stack of squared-distance matrices.

    No validation is done here; this is the inner loop of the labeler.
    """
    dists = np.asarray(dists, dtype=np.float64)
    dim = dists.shape[-1] - 1
    return lu_det(_border(dists)) / cm_coefficient(dim)


def degeneracy_thresholds(dists: np.ndarray) -> np.ndarray:
    """``DEGENERACY_TOL * max_edge_sq**d`` for each matrix in a stack."""
    dists = np.asarray(dists, dtype=np.float64)
    dim = dists.shape[-1] - 1
    return DEGENERACY_TOL * dists.max(axis=(-2, -1)) ** dim


def clamp_degenerate(raw, dists) -> np.ndarray:
    """Zero out squared contents at or below the degeneracy threshold."""
    raw = np.asarray(raw, dtype=np.float64)
    return np.where(raw <= degeneracy_thresholds(dists), 0.0, raw)


def simplex_content(dist) -> CMResult:
    """Content of the simplex whose squared edge lengths are ``dist``.

    Numerically negative or near-zero squared content (see
    ``DEGENERACY_TOL``) is reported as 0 with ``degenerate=True``; this happens
    for affinely dependent vertices and for metrics that do not embed in a
    Euclidean space.
    """
    d = validate_distance_matrix(dist)
    dim = d.shape[0] - 1
    det = lu_det(_border(d))
    raw = det / cm_coefficient(dim)
    degenerate = raw <= float(degeneracy_thresholds(d))
    sq = 0.0 if degenerate else raw
    return CMResult(
        dimension=dim,
        determinant=det,
        squared_content=sq,
        content=math.sqrt(sq),
        degenerate=bool(degenerate),
        raw_squared_content=raw,
    )
