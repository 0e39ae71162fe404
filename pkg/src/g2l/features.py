"""Feature vectors, anchor sets, metrics, divergence and label entropy."""
from __future__ import annotations

import csv
import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "METRICS",
    "DataError",
    "NegativeComponentWarning",
    "FeatureVector",
    "Dataset",
    "Representative",
    "AnchorSet",
    "load_vectors",
    "write_vectors",
    "aggregate_mean",
    "aggregate_kmeans",
    "distance",
    "pairwise_sq_distances",
    "normalize",
    "kl_divergence",
    "dataset_divergence",
    "label_entropy",
]

METRICS = ("euclidean", "cityblock", "sqrt_js")

# elements per chunk when broadcasting pairwise differences
_CHUNK = 1 << 22


class DataError(ValueError):
    """Malformed input data (files, vectors, anchor sets)."""


class NegativeComponentWarning(UserWarning):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureVector:
    id: str
    components: np.ndarray

    def __post_init__(self):
        comps = _frozen(self.components)
        if comps.ndim != 1 or comps.size < 1:
            raise DataError(f"vector {self.id!r} must be 1-D and nonempty")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components.size


@dataclass(frozen=True, eq=False)
class Dataset:
    """Named collection of equal-length vectors, stored as one row matrix."""

    name: str
    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        mat = _frozen(self.matrix)
        if mat.ndim != 2:
            raise DataError(f"dataset {self.name!r}: matrix must be 2-D")
        if mat.shape[1] < 1:
            raise DataError(f"dataset {self.name!r}: vectors must have n >= 1")
        if len(self.ids) != mat.shape[0]:
            raise DataError(f"dataset {self.name!r}: {len(self.ids)} ids for {mat.shape[0]} rows")
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_vectors(cls, name: str, vectors: Sequence[FeatureVector]) -> "Dataset":
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise DataError(f"dataset {name!r}: mixed dimensionality {sorted(dims)}")
        n = dims.pop() if dims else 1
        mat = np.array([v.components for v in vectors], dtype=np.float64).reshape(len(vectors), n)
        return cls(name, tuple(v.id for v in vectors), mat)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vectors(self) -> list[FeatureVector]:
        return [FeatureVector(i, row) for i, row in zip(self.ids, self.matrix)]


@dataclass(frozen=True)
class Representative:
    source_name: str
    rep_index: int
    qualified_name: str
    vector: FeatureVector

    @property
    def key(self) -> tuple[str, int]:
        return (self.source_name, self.rep_index)


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Immutable set of named representatives.

    Representatives are kept sorted by ``(source_name, rep_index)``; the
    labeler relies on this order for its tie-breaking.
    """

    representatives: tuple[Representative, ...]
    metric: str = "euclidean"
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise DataError(f"unknown metric {self.metric!r}; expected one of {METRICS}")
        reps = tuple(sorted(self.representatives, key=lambda r: r.key))
        if len(reps) < 2:
            raise DataError("an anchor set needs at least 2 representatives")
        keys = [r.key for r in reps]
        if len(set(keys)) != len(keys):
            dup = next(k for k, c in Counter(keys).items() if c > 1)
            raise DataError(f"duplicate representative {dup}")
        names = [r.qualified_name for r in reps]
        if len(set(names)) != len(names):
            dup = next(k for k, c in Counter(names).items() if c > 1)
            raise DataError(f"duplicate qualified name {dup!r}")
        dims = {r.vector.dim for r in reps}
        if len(dims) != 1:
            raise DataError(f"representatives have mixed dimensionality {sorted(dims)}")
        object.__setattr__(self, "representatives", reps)
        object.__setattr__(self, "matrix", _frozen([r.vector.components for r in reps]))

    def __len__(self) -> int:
        return len(self.representatives)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def names(self) -> list[str]:
        return [r.qualified_name for r in self.representatives]

    @property
    def keys(self) -> list[tuple[str, int]]:
        return [r.key for r in self.representatives]

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "representatives": [
                {
                    "source": r.source_name,
                    "rep_index": r.rep_index,
                    "qualified_name": r.qualified_name,
                    "v": r.vector.components.tolist(),
                }
                for r in self.representatives
            ],
        }

    @classmethod
    def from_json(cls, obj: dict, metric: str | None = None) -> "AnchorSet":
        try:
            reps = [
                Representative(
                    source_name=str(r["source"]),
                    rep_index=int(r.get("rep_index", 0)),
                    qualified_name=str(r.get("qualified_name", r["source"])),
                    vector=FeatureVector(str(r.get("qualified_name", r["source"])), r["v"]),
                )
                for r in obj["representatives"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed anchor set: {exc}") from exc
        return cls(tuple(reps), metric or obj.get("metric", "euclidean"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, metric: str | None = None) -> "AnchorSet":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(obj, metric)

    def with_metric(self, metric: str) -> "AnchorSet":
        return AnchorSet(self.representatives, metric)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_row(fields: Sequence[str], where: str) -> list[float]:
    out = []
    for col, s in enumerate(fields):
        try:
            out.append(float(s))
        except ValueError:
            raise DataError(f"{where}: non-numeric component {s!r} in column {col}") from None
    return out


def _load_csv(path: Path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    first_line, first = rows[0]
    header = first[0].strip().lower() == "id" or not all(_is_number(c) for c in first[1:])
    if header:
        has_id = first[0].strip().lower() == "id"
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    else:
        has_id = not _is_number(first[0])
    ids, data = [], []
    width = None
    for k, (line, r) in enumerate(rows):
        where = f"{path}: row {line}"
        comps = r[1:] if has_id else r
        if width is None:
            width = len(comps)
            if width < 1:
                raise DataError(f"{where}: no components")
        elif len(comps) != width:
            raise DataError(f"{where}: ragged row with {len(comps)} components, expected {width}")
        ids.append(r[0].strip() if has_id else f"row_{k}")
        data.append(_parse_row([c.strip() for c in comps], where))
    return ids, data


def _load_jsonl(path: Path) -> tuple[list[str], list[list[float]]]:
    ids, data = [], []
    width = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}: row {line_no}"
            try:
                rec = json.loads(line)
                v = rec["v"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{where}: malformed record ({exc})") from None
            if not isinstance(v, list):
                raise DataError(f"{where}: field 'v' must be an array")
            if width is None:
                width = len(v)
                if width < 1:
                    raise DataError(f"{where}: no components")
            elif len(v) != width:
                raise DataError(f"{where}: ragged row with {len(v)} components, expected {width}")
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise DataError(f"{where}: non-numeric component")
            ids.append(str(rec["id"]) if "id" in rec else f"row_{len(ids)}")
            data.append([float(x) for x in v])
    if not data:
        raise DataError(f"{path}: empty file")
    return ids, data


def load_vectors(path, fmt: str | None = None, name: str | None = None) -> Dataset:
    """Read a CSV or JSONL vector file into a :class:`Dataset`.

    CSV: optional header; the first column holds ids when the header names it
    ``id`` or, without a header, when it is non-numeric. Otherwise ids are
    generated as ``row_0``, ``row_1``, ...  JSONL: one ``{"id": ..., "v": [...]}``
    object per line.  Row order is preserved.
    """
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv")
    if fmt == "csv":
        ids, data = _load_csv(path)
    elif fmt == "jsonl":
        ids, data = _load_jsonl(path)
    else:
        raise ValueError(f"unknown vector format {fmt!r}")
    return Dataset(name or path.stem, tuple(ids), np.array(data, dtype=np.float64))


def write_vectors(ds: Dataset, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv")
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + [f"v{j}" for j in range(ds.dim)])
            for i, row in zip(ds.ids, ds.matrix):
                w.writerow([i] + [repr(float(x)) for x in row])
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for i, row in zip(ds.ids, ds.matrix):
                fh.write(json.dumps({"id": i, "v": row.tolist()}) + "\n")
    else:
        raise ValueError(f"unknown vector format {fmt!r}")


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------


def _exact_mean(x: np.ndarray) -> np.ndarray:
    # column sort fixes the summation order, so row permutations give identical bits
    return np.sort(x, axis=0).sum(axis=0) / x.shape[0]


def aggregate_mean(ds: Dataset, sample_fraction: float = 1.0, seed: int = 0) -> Representative:
    """Mean vector over a seeded uniform sample of ``ceil(fraction * count)`` rows."""
    if len(ds) == 0:
        raise DataError(f"dataset {ds.name!r} is empty")
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError(f"sample_fraction must be in (0, 1], got {sample_fraction}")
    x = ds.matrix
    if sample_fraction < 1.0:
        size = math.ceil(sample_fraction * len(ds))
        idx = np.random.default_rng(seed).choice(len(ds), size=size, replace=False)
        x = x[np.sort(idx)]
    mean = _exact_mean(x)
    return Representative(ds.name, 0, ds.name, FeatureVector(ds.name, mean))


def aggregate_kmeans(ds: Dataset, k: int, seed: int = 0, max_iters: int = 100) -> list[Representative]:
    """Lloyd's k-means with seeded farthest-first initialisation.

    Representatives come back ordered by descending cluster size (ties by
    cluster creation order) and are named ``<source>_<rank>``; with ``k == 1``
    the single representative keeps the bare source name.
    """
    n = len(ds)
    if k <= 0:
        raise ValueError(f"k must be >= 1, got {k}")
    if n == 0:
        raise DataError(f"dataset {ds.name!r} is empty")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} vectors of {ds.name!r}")
    x = ds.matrix
    rng = np.random.default_rng(seed)
    seeds = [int(rng.integers(n))]
    nearest = ((x - x[seeds[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(nearest))
        seeds.append(nxt)
        nearest = np.minimum(nearest, ((x - x[nxt]) ** 2).sum(axis=1))
    centers = x[seeds].copy()

    assign = None
    for _ in range(max_iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    sizes = np.bincount(assign, minlength=k)
    order = sorted(range(k), key=lambda j: (-sizes[j], j))
    reps = []
    for rank, j in enumerate(order):
        qname = ds.name if k == 1 else f"{ds.name}_{rank}"
        reps.append(Representative(ds.name, rank, qname, FeatureVector(qname, centers[j])))
    return reps


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------


def _check_js_rows(x: np.ndarray, what: str) -> np.ndarray:
    if np.any(x < 0):
        raise ValueError(f"sqrt_js needs nonnegative components ({what})")
    s = x.sum(axis=-1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError(f"sqrt_js needs a positive component sum ({what})")
    return x / s


def _xlog2(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = p * np.log2(p / m)
    return np.where(p > 0, t, 0.0)


def pairwise_sq_distances(x, y, metric: str = "euclidean") -> np.ndarray:
    """Matrix of squared distances between the rows of ``x`` and ``y``.

    For ``sqrt_js`` the squared distance is the base-2 Jensen-Shannon
    divergence of the normalised rows.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if metric == "sqrt_js":
        x = _check_js_rows(x, "left operand")
        y = _check_js_rows(y, "right operand")
    out = np.empty((x.shape[0], y.shape[0]))
    step = max(1, _CHUNK // max(1, y.shape[0] * x.shape[1]))
    for lo in range(0, x.shape[0], step):
        a = x[lo:lo + step, None, :]
        b = y[None, :, :]
        if metric == "euclidean":
            out[lo:lo + step] = ((a - b) ** 2).sum(axis=2)
        elif metric == "cityblock":
            out[lo:lo + step] = np.abs(a - b).sum(axis=2) ** 2
        else:
            m = 0.5 * (a + b)
            js = 0.5 * (_xlog2(a, m).sum(axis=2) + _xlog2(b, m).sum(axis=2))
            out[lo:lo + step] = np.maximum(js, 0.0)
    return out


def distance(a, b, metric: str = "euclidean") -> float:
    """Distance between two vectors under ``euclidean``, ``cityblock`` or ``sqrt_js``."""
    a = a.components if isinstance(a, FeatureVector) else np.asarray(a, dtype=np.float64)
    b = b.components if isinstance(b, FeatureVector) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return math.sqrt(pairwise_sq_distances(a, b, metric)[0, 0])


# --------------------------------------------------------------------------
# information measures
# --------------------------------------------------------------------------


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("cannot normalise a vector with negative components")
    s = v.sum()
    if not s > 0:
        raise ValueError("cannot normalise a vector with zero sum")
    return v / s


def kl_divergence(p, q, epsilon: float = 1e-10) -> float:
    """KL(p || q) in bits after adding ``epsilon`` to every component and renormalising."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a probability vector")
    ps = (p + epsilon) / (p + epsilon).sum()
    qs = (q + epsilon) / (q + epsilon).sum()
    return float(max(np.sum(ps * np.log2(ps / qs)), 0.0))


def _as_distribution(mean: np.ndarray, name: str) -> np.ndarray:
    if np.any(mean < 0):
        warnings.warn(
            f"{name}: {int(np.sum(mean < 0))} negative mean components clamped to 0",
            NegativeComponentWarning,
            stacklevel=3,
        )
        mean = np.maximum(mean, 0.0)
    if not mean.sum() > 0:
        raise DataError(f"{name}: mean vector is all zero after clamping")
    return mean / mean.sum()


def dataset_divergence(
    target: Dataset,
    reference: Dataset,
    sample_fraction: float = 1.0,
    seed: int = 0,
    epsilon: float = 1e-10,
) -> float:
    """KL divergence (bits) of the normalised mean of ``target`` from that of ``reference``."""
    if target.dim != reference.dim:
        raise ValueError(f"dimension mismatch: {target.dim} vs {reference.dim}")
    p = _as_distribution(aggregate_mean(target, sample_fraction, seed).vector.components, target.name)
    q = _as_distribution(aggregate_mean(reference, sample_fraction, seed).vector.components, reference.name)
    return kl_divergence(p, q, epsilon)


def label_entropy(labels: Iterable) -> float:
    """Shannon entropy (bits) of the empirical distribution of whole label sequences.

    Accepts pseudo-labels (anything with a ``names`` attribute) or plain
    sequences of names.
    """
    counts = Counter(tuple(getattr(lab, "names", lab)) for lab in labels)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("label_entropy needs at least one label")
    p = np.array(list(counts.values()), dtype=np.float64) / total
    return float(max(-np.sum(p * np.log2(p)), 0.0))
