"""Reference implementations used only by the tests.

None of these import the package's geometry or metric code.  Contents come
from Gram determinants or from a numpy-determinant Cayley-Menger variant;
distances come from scipy.
"""
import math
from itertools import combinations

import numpy as np
from scipy.spatial import distance as spd

# labeling contract constants (duplicated on purpose)
DEGENERACY_TOL = 1e-12
TIE_RTOL = 1e-9


def heron(a, b, c):
    s = (a + b + c) / 2
    return math.sqrt(s * (s - a) * (s - b) * (s - c))


def gram_content(points):
    """Content of the simplex spanned by the rows of ``points``."""
    p = np.asarray(points, dtype=float)
    edges = p[1:] - p[0]
    d = len(edges)
    g = edges @ edges.T
    return math.sqrt(max(np.linalg.det(g), 0.0)) / math.factorial(d)


def gram_sq_content_from_sq_dists(sq):
    """Squared content from squared distances via the Gram matrix at vertex 0."""
    sq = np.asarray(sq, dtype=float)
    d = sq.shape[0] - 1
    g = np.empty((d, d))
    for i in range(1, d + 1):
        for j in range(1, d + 1):
            g[i - 1, j - 1] = 0.5 * (sq[0, i] + sq[0, j] - sq[i, j])
    return np.linalg.det(g) / math.factorial(d) ** 2


def cm_sq_content_from_sq_dists(sq):
    """Squared content from a bordered determinant, coefficient from factorials."""
    sq = np.asarray(sq, dtype=float)
    n = sq.shape[0]
    d = n - 1
    m = np.ones((n + 1, n + 1))
    m[0, 0] = 0.0
    m[1:, 1:] = sq
    coeff = (-1) ** (d + 1) * 2**d * math.factorial(d) ** 2
    return np.linalg.det(m) / coeff


def metric_dist(a, b, metric):
    if metric == "euclidean":
        return spd.euclidean(a, b)
    if metric == "cityblock":
        return spd.cityblock(a, b)
    if metric == "sqrt_js":
        return spd.jensenshannon(a, b, base=2)
    raise ValueError(metric)


def _pick(vals, order, mode, skip=None):
    pool = [i for i in order if i != skip]
    ext = min(vals[i] for i in pool) if mode == "min" else max(vals[i] for i in pool)
    tied = [i for i in pool if abs(vals[i] - ext) <= TIE_RTOL * abs(ext)]
    return tied[0]


def brute_force_label(target, anchor_vectors, names, keys, policy, metric="euclidean",
                      content=cm_sq_content_from_sq_dists):
    """Greedy labeler that recomputes every candidate simplex from scratch.

    ``keys`` are the (source, rep_index) pairs; candidates are visited in
    ascending key order so ties resolve the same way as the contract says.
    """
    order = sorted(range(len(names)), key=lambda i: keys[i])
    verts = [np.asarray(target, float)]
    used = set()
    out = []
    for decision in policy:
        cands = [i for i in order if i not in used]
        vals = {}
        for i in cands:
            pts = verts + [np.asarray(anchor_vectors[i], float)]
            sq = np.array([[metric_dist(a, b, metric) ** 2 for b in pts] for a in pts])
            v = content(sq)
            vals[i] = 0.0 if v <= DEGENERACY_TOL * sq.max() ** len(verts) else v
        lo = _pick(vals, cands, "min")
        hi = _pick(vals, cands, "max")
        if decision == "c":
            rec, add = [lo], lo
        elif decision == "f":
            rec, add = [hi], hi
        elif decision == "C":
            rec, add = [lo, hi if hi != lo else _pick(vals, cands, "max", skip=lo)], lo
        else:
            rec, add = [hi, lo if lo != hi else _pick(vals, cands, "min", skip=hi)], hi
        used.update(rec)
        out.extend(names[i] for i in rec)
        verts.append(np.asarray(anchor_vectors[add], float))
    return tuple(out)


def brute_extremal_subset(vectors, names, d, mode):
    best, best_v = None, None
    for sub in combinations(range(len(names)), d + 1):
        pts = np.array([vectors[i] for i in sub], dtype=float)
        v = gram_content(pts) ** 2
        longest = max(np.sum((a - b) ** 2) for a, b in combinations(pts, 2))
        v = 0.0 if v <= DEGENERACY_TOL * longest**d else v
        if best is None or (v < best_v if mode == "min" else v > best_v) and abs(v - best_v) > TIE_RTOL * abs(best_v):
            best, best_v = sub, v
    return [names[i] for i in best], best_v
