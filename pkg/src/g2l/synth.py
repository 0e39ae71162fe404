"""Seeded synthetic clusters of nonnegative feature vectors."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import DataError, Dataset

__all__ = [
    "ClusterSpec",
    "generate",
    "outlier_scenario",
    "load_specs",
    "save_specs",
]


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    center: tuple[float, ...]
    sigma: float
    count: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in np.ravel(self.center)))
        if not self.name:
            raise DataError("cluster name must be nonempty")
        if not self.sigma > 0:
            raise DataError(f"cluster {self.name!r}: sigma must be positive, got {self.sigma}")
        if int(self.count) != self.count or self.count < 1:
            raise DataError(f"cluster {self.name!r}: count must be a positive integer, got {self.count}")

    def to_json(self) -> dict:
        return {"name": self.name, "center": list(self.center), "sigma": self.sigma, "count": self.count}


def generate(specs, dim: int, seed: int = 0) -> tuple[list[Dataset], Dataset]:
    """Isotropic Gaussian samples per cluster, clamped at zero.

    Returns one dataset per cluster (named after it, ids ``<name>_<i>``) and
    their concatenation, named ``combined``.
    """
    if dim < 1:
        raise DataError(f"dim must be >= 1, got {dim}")
    specs = list(specs)
    if not specs:
        raise DataError("need at least one cluster spec")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DataError("cluster names must be unique")
    rng = np.random.default_rng(seed)
    parts = []
    for s in specs:
        if len(s.center) != dim:
            raise DataError(f"cluster {s.name!r}: center has {len(s.center)} components, expected {dim}")
        x = np.asarray(s.center) + s.sigma * rng.standard_normal((s.count, dim))
        np.maximum(x, 0.0, out=x)
        parts.append(Dataset(s.name, tuple(f"{s.name}_{i}" for i in range(s.count)), x))
    combined = Dataset(
        "combined",
        tuple(i for p in parts for i in p.ids),
        np.vstack([p.matrix for p in parts]),
    )
    return parts, combined


def _perp(j: int, dim: int) -> np.ndarray:
    # unit vectors orthogonal to each other and to (1, ..., 1)
    e = np.zeros(dim)
    e[2 * j], e[2 * j + 1] = 1.0, -1.0
    return e / np.sqrt(2.0)


def outlier_scenario(
    dim: int = 256,
    count: int = 40,
    sigma: float = 1.0,
    n_ring: int = 12,
    ring_radius: float = 8.0,
    bridge_fractions=(0.2, 0.3, 0.4),
    bridge_offsets=(1.0, 2.0, 3.0),
    base_level: float = 6.0,
    outlier_distance: float = 50.0,
) -> list[ClusterSpec]:
    """A 15-cluster core plus one far outlier cluster (16 clusters by default).

    All distances are in units of ``sigma``.  The outlier sits
    ``outlier_distance`` from a base point along the all-ones diagonal.  The
    core is ``n_ring`` clusters at ``ring_radius`` from the base point in
    mutually orthogonal directions perpendicular to that axis, plus one
    "bridge" cluster per entry of ``bridge_fractions``, placed that fraction
    of the way towards the outlier and pushed off-axis by the matching
    ``bridge_offsets`` entry.  Bridges stay closer to the core than to the
    outlier, so the outlier is the farthest cluster from every core cluster.

    The bridges are the outlier's nearest neighbours for every core target,
    which is what makes farthest-then-closest policies collapse onto a single
    label.  ``base_level`` keeps centers far enough from zero that clamping
    rarely bites.
    """
    if len(bridge_fractions) != len(bridge_offsets):
        raise DataError("bridge_fractions and bridge_offsets differ in length")
    if dim < 2 * (n_ring + len(bridge_fractions)):
        raise DataError(f"dim={dim} too small for {n_ring + len(bridge_fractions)} orthogonal offsets")
    axis = np.ones(dim) / np.sqrt(dim)
    base = np.full(dim, base_level * sigma)
    specs = []
    for j in range(n_ring):
        center = base + ring_radius * sigma * _perp(j, dim)
        specs.append(ClusterSpec(f"core{j:02d}", center, sigma, count))
    for j, (frac, off) in enumerate(zip(bridge_fractions, bridge_offsets)):
        center = base + frac * outlier_distance * sigma * axis + off * sigma * _perp(n_ring + j, dim)
        specs.append(ClusterSpec(f"bridge{j}", center, sigma, count))
    specs.append(ClusterSpec("outlier", base + outlier_distance * sigma * axis, sigma, count))
    return specs


def load_specs(path) -> tuple[list[ClusterSpec], int | None]:
    """Read a cluster spec file: ``{"dim": n, "clusters": [{name, center, sigma, count}, ...]}``."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        specs = [ClusterSpec(c["name"], tuple(c["center"]), float(c["sigma"]), int(c["count"])) for c in obj["clusters"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed cluster spec file ({exc})") from exc
    return specs, obj.get("dim")


def save_specs(specs, path, dim: int | None = None) -> None:
    obj = {"clusters": [s.to_json() for s in specs]}
    if dim is not None:
        obj["dim"] = dim
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
