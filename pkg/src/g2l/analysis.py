"""Policy sweeps, entropy heatmaps and pseudo-label count tables.

Policies of length d are laid out on a 2^d x 2^d grid with one-based
positions.  Reading ``row - 1`` and ``col - 1`` as d-bit numbers (most
significant bit = first letter), the column bit picks closest/farthest and
the row bit picks the single-name or two-name form of each letter.  Row 1
therefore runs ``cc..c`` to ``ff..f`` and the last row ``CC..C`` to
``FF..F``; the 2x2 pattern [[c, f], [C, F]] repeats at every scale.
"""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import AnchorSet, Dataset, label_entropy
from .labeling import Labeler, parse_policy, resolve_threads

__all__ = [
    "MAX_SWEEP_D",
    "SweepResult",
    "LabelCountTable",
    "policy_at",
    "position_of",
    "enumerate_policies",
    "sweep",
    "label_count_table",
    "export_heatmap",
]

MAX_SWEEP_D = 8


def _check_d(d: int) -> None:
    if not 1 <= d <= MAX_SWEEP_D:
        raise ValueError(f"d must be in [1, {MAX_SWEEP_D}], got {d}")


def policy_at(row: int, col: int, d: int) -> str:
    """Policy at one-based grid position ``(row, col)``; ``(1, 1)`` is the top left."""
    _check_d(d)
    side = 1 << d
    if not (1 <= row <= side and 1 <= col <= side):
        raise IndexError(f"({row}, {col}) outside the {side}x{side} grid")
    r, c = row - 1, col - 1
    chars = []
    for i in range(d):
        bit = d - 1 - i
        chars.append("cfCF"[((c >> bit) & 1) + 2 * ((r >> bit) & 1)])
    return "".join(chars)


def position_of(policy) -> tuple[int, int]:
    """Inverse of :func:`policy_at` (one-based)."""
    text = str(parse_policy(policy))
    row = col = 0
    for ch in text:
        row = (row << 1) | (ch in "CF")
        col = (col << 1) | (ch in "fF")
    return row + 1, col + 1


def enumerate_policies(d: int) -> list[str]:
    """All 4**d policies in row-major grid order."""
    _check_d(d)
    side = 1 << d
    return [policy_at(r, c, d) for r in range(1, side + 1) for c in range(1, side + 1)]


@dataclass
class SweepResult:
    d: int
    grid: np.ndarray  # entropies in bits, NaN where missing
    unique_counts: dict[str, int]
    missing: dict[str, str] = field(default_factory=dict)
    item_errors: dict[str, str] = field(default_factory=dict)
    n_labeled: int = 0

    def policy_at(self, row: int, col: int) -> str:
        return policy_at(row, col, self.d)

    def entropy(self, policy) -> float:
        r, c = position_of(policy)
        return float(self.grid[r - 1, c - 1])

    @property
    def policies(self) -> list[list[str]]:
        side = 1 << self.d
        return [[policy_at(r, c, self.d) for c in range(1, side + 1)] for r in range(1, side + 1)]


def sweep(targets: Dataset, anchors: AnchorSet, d: int, threads: int | None = None) -> SweepResult:
    """Label every target under all 4**d policies and map label entropy onto the grid.

    Each target's policy tree is walked once (see :meth:`Labeler.label_tree`).
    Policies needing more representatives than the anchor set has become
    missing cells; targets that cannot be labeled at all are reported in
    ``item_errors`` and left out.
    """
    _check_d(d)
    labeler = Labeler(anchors)
    if len(targets) and targets.dim != anchors.dim:
        raise ValueError(f"dimension mismatch: targets have {targets.dim} components, anchors have {anchors.dim}")

    def one(i):
        try:
            return labeler.label_tree(targets.matrix[i], d), None
        except (ValueError, ArithmeticError) as exc:
            return None, str(exc)

    workers = resolve_threads(threads)
    if workers > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(len(targets))))
    else:
        results = [one(i) for i in range(len(targets))]

    per_policy: dict[str, list] = defaultdict(list)
    item_errors = {}
    n_labeled = 0
    for i, (tree, err) in enumerate(results):
        if err is not None:
            item_errors[targets.ids[i]] = err
            continue
        n_labeled += 1
        for pol, lab in tree.items():
            per_policy[pol].append(lab.names)

    side = 1 << d
    grid = np.full((side, side), np.nan)
    counts, missing = {}, {}
    for pol in enumerate_policies(d):
        labels = per_policy.get(pol)
        if not labels:
            need = parse_policy(pol).label_length
            if n_labeled and need > len(anchors):
                missing[pol] = f"needs {need} representatives, anchor set has {len(anchors)}"
            else:
                missing[pol] = "no labeled targets"
            continue
        r, c = position_of(pol)
        grid[r - 1, c - 1] = label_entropy(labels)
        counts[pol] = len(set(labels))
    return SweepResult(d, grid, counts, missing, item_errors, n_labeled)


@dataclass
class LabelCountTable:
    rows: list[tuple[str, int]]

    def as_dict(self) -> dict[str, int]:
        return dict(self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "count"])
            w.writerows(self.rows)


def label_count_table(targets: Dataset, anchors: AnchorSet, policies, threads: int | None = None) -> LabelCountTable:
    """Number of distinct pseudo-labels per policy, sorted ascending (ties by policy)."""
    labeler = Labeler(anchors)
    rows = []
    for pol in policies:
        pol = parse_policy(pol)
        batch = labeler.label_batch(targets, pol, threads)
        distinct = {lab.names for lab in batch.labels if lab is not None}
        if not distinct:
            raise ValueError(f"policy {pol}: no target could be labeled")
        rows.append((str(pol), len(distinct)))
    rows.sort(key=lambda r: (r[1], r[0]))
    return LabelCountTable(rows)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def export_heatmap(result: SweepResult, path, fmt: str = "csv") -> list[Path]:
    """Write the entropy grid as CSV (plus a policy index) or as a binary PGM.

    Missing cells are empty in the CSV and 0 in the PGM; when there are any,
    a ``<stem>.errors.json`` sidecar lists them.  Returns the written paths.
    """
    path = Path(path)
    if not path.parent.exists():
        raise FileNotFoundError(f"directory {path.parent} does not exist")
    written = []
    grid = result.grid
    side = grid.shape[0]
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in grid:
                w.writerow([_fmt(x) for x in row])
        index = path.with_name(path.stem + ".policies.csv")
        with open(index, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "policy"])
            for r in range(1, side + 1):
                for c in range(1, side + 1):
                    w.writerow([r, c, policy_at(r, c, result.d)])
        written += [path, index]
    elif fmt == "pgm":
        finite = grid[np.isfinite(grid)]
        pix = np.zeros(grid.shape, dtype=np.uint8)
        if finite.size:
            lo, hi = finite.min(), finite.max()
            if hi > lo:
                scaled = np.round(255.0 * (grid - lo) / (hi - lo))
                pix = np.where(np.isfinite(grid), scaled, 0).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{side} {side}\n255\n".encode("ascii"))
            fh.write(pix.tobytes())
        written.append(path)
    else:
        raise ValueError(f"unknown heatmap format {fmt!r}")
    if result.missing:
        side_path = path.with_name(path.stem + ".errors.json")
        side_path.write_text(json.dumps({"missing": result.missing}, indent=2) + "\n", encoding="utf-8")
        written.append(side_path)
    return written
