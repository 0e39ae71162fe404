"""Greedy pseudo-labeling by extremal simplex content.

A target vector starts as a 0-simplex.  At each dimension every unused
representative is tried as the next vertex, the candidate simplices are scored
by squared Cayley-Menger content, and the policy letter decides what happens:

    c  record the minimiser, extend the simplex with it
    f  record the maximiser, extend with it
    C  record minimiser then maximiser, extend with the minimiser
    F  record maximiser then minimiser, extend with the maximiser

Representatives recorded in a label are never offered again.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .features import AnchorSet, Dataset, FeatureVector, pairwise_sq_distances
from .geometry import clamp_degenerate, squared_contents

__all__ = [
    "DECISIONS",
    "TIE_RTOL",
    "PolicyError",
    "InsufficientCandidatesError",
    "Policy",
    "PseudoLabel",
    "SimplexState",
    "ItemError",
    "BatchResult",
    "Labeler",
    "parse_policy",
    "label_item",
    "label_dataset",
    "count_policies",
    "count_policies_by_length",
    "find_extremal_simplex",
]

DECISIONS = "cfCF"

# candidates whose squared content is within this relative distance of the
# extreme are tied; ties go to the smallest (source_name, rep_index)
TIE_RTOL = 1e-9


class PolicyError(ValueError):
    pass


class InsufficientCandidatesError(ValueError):
    pass


@dataclass(frozen=True)
class Policy:
    decisions: str

    @property
    def d_max(self) -> int:
        return len(self.decisions)

    @property
    def label_length(self) -> int:
        return self.d_max + sum(ch in "CF" for ch in self.decisions)

    def __str__(self) -> str:
        return self.decisions

    def __iter__(self):
        return iter(self.decisions)


def parse_policy(text) -> Policy:
    """Parse a policy string such as ``"Cfff"``."""
    if isinstance(text, Policy):
        return text
    if not isinstance(text, str) or not text:
        raise PolicyError("policy must be a nonempty string over {c, f, C, F}")
    for pos, ch in enumerate(text):
        if ch not in DECISIONS:
            raise PolicyError(f"illegal policy character {ch!r} at position {pos + 1}")
    return Policy(text)


@dataclass(frozen=True)
class PseudoLabel:
    names: tuple[str, ...]
    chosen: tuple[tuple[str, int], ...]
    contents: tuple[float, ...]

    def to_json(self, item_id: str, policy) -> dict:
        return {
            "id": item_id,
            "policy": str(policy),
            "names": list(self.names),
            "chosen": [[s, i] for s, i in self.chosen],
            "contents": list(self.contents),
        }


class SimplexState:
    """Current simplex of one target: vertex indices plus their squared distances.

    Vertex 0 is the target; vertex ``j >= 1`` is representative ``j - 1``.
    ``lookup`` is the full (N+1)x(N+1) squared-distance table for the target
    and all N representatives, so extending the simplex only copies one new
    row.  Instances are immutable; :meth:`extended` returns a new state.
    """

    __slots__ = ("lookup", "vertices", "sq")

    def __init__(self, lookup: np.ndarray, vertices=(0,), sq: np.ndarray | None = None):
        self.lookup = lookup
        self.vertices = tuple(vertices)
        self.sq = np.zeros((1, 1)) if sq is None else sq

    @property
    def dimension(self) -> int:
        return len(self.vertices) - 1

    def candidate_matrices(self, cands: np.ndarray) -> np.ndarray:
        m = len(self.vertices)
        out = np.zeros((len(cands), m + 1, m + 1))
        out[:, :m, :m] = self.sq
        row = self.lookup[np.ix_(cands, self.vertices)]
        out[:, m, :m] = row
        out[:, :m, m] = row
        return out

    def extended(self, v: int) -> "SimplexState":
        m = len(self.vertices)
        sq = np.zeros((m + 1, m + 1))
        sq[:m, :m] = self.sq
        row = self.lookup[v, list(self.vertices)]
        sq[m, :m] = row
        sq[:m, m] = row
        return SimplexState(self.lookup, self.vertices + (v,), sq)


def _score(state: SimplexState, cands: np.ndarray) -> np.ndarray:
    mats = state.candidate_matrices(cands)
    return clamp_degenerate(squared_contents(mats), mats)


def _argext(vals: np.ndarray, mode: str, skip: int = -1) -> int:
    """Position of the extreme value; first (lexicographically smallest) among ties."""
    if skip >= 0:
        vals = vals.copy()
        vals[skip] = np.inf if mode == "min" else -np.inf
    ext = vals.min() if mode == "min" else vals.max()
    return int(np.flatnonzero(np.abs(vals - ext) <= TIE_RTOL * abs(ext))[0])


@dataclass(frozen=True)
class _Step:
    cands: np.ndarray  # vertex indices, ascending
    vals: np.ndarray
    lo: int  # positions into cands
    hi: int
    hi_without_lo: int
    lo_without_hi: int


def _evaluate(state: SimplexState, cands: np.ndarray) -> _Step:
    vals = _score(state, cands)
    lo = _argext(vals, "min")
    hi = _argext(vals, "max")
    if len(cands) > 1:
        hi2 = hi if hi != lo else _argext(vals, "max", skip=lo)
        lo2 = lo if lo != hi else _argext(vals, "min", skip=hi)
    else:
        hi2 = lo2 = -1
    return _Step(cands, vals, lo, hi, hi2, lo2)


def _apply(step: _Step, decision: str):
    """Return (recorded positions, added position) for one policy letter."""
    if decision == "c":
        return (step.lo,), step.lo
    if decision == "f":
        return (step.hi,), step.hi
    if decision == "C":
        return (step.lo, step.hi_without_lo), step.lo
    return (step.hi, step.lo_without_hi), step.hi


def _needed(decision: str) -> int:
    return 2 if decision in "CF" else 1


@dataclass(frozen=True)
class ItemError:
    index: int
    id: str
    message: str


@dataclass
class BatchResult:
    labels: list  # PseudoLabel, or None where the item failed
    errors: list[ItemError]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self) -> int:
        return len(self.labels)


class Labeler:
    """Labels targets against one anchor set.

    Anchor-to-anchor squared distances are computed once and shared by every
    target (and every thread).
    """

    def __init__(self, anchors: AnchorSet):
        self.anchors = anchors
        self.metric = anchors.metric
        self.n = len(anchors)
        self.names = anchors.names
        self.keys = anchors.keys
        self.anchor_sq = pairwise_sq_distances(anchors.matrix, anchors.matrix, self.metric)

    def _state(self, target) -> SimplexState:
        t = target.components if isinstance(target, FeatureVector) else np.asarray(target, dtype=np.float64)
        if t.ndim != 1 or t.size != self.anchors.dim:
            raise ValueError(f"dimension mismatch: target has {t.size} components, anchors have {self.anchors.dim}")
        if not np.all(np.isfinite(t)):
            raise ValueError("target has non-finite components")
        row = pairwise_sq_distances(t, self.anchors.matrix, self.metric)[0]
        lookup = np.empty((self.n + 1, self.n + 1))
        lookup[0, 0] = 0.0
        lookup[0, 1:] = row
        lookup[1:, 0] = row
        lookup[1:, 1:] = self.anchor_sq
        return SimplexState(lookup)

    def check(self, policy: Policy) -> None:
        if self.n < policy.label_length:
            raise InsufficientCandidatesError(
                f"policy {policy} records {policy.label_length} distinct representatives "
                f"but the anchor set has only {self.n}"
            )

    def label(self, target, policy) -> PseudoLabel:
        policy = parse_policy(policy)
        self.check(policy)
        state = self._state(target)
        used: set[int] = set()
        names, chosen, contents = [], [], []
        for decision in policy:
            cands = np.array([v for v in range(1, self.n + 1) if v not in used])
            step = _evaluate(state, cands)
            recorded, added = _apply(step, decision)
            for pos in recorded:
                v = int(cands[pos])
                used.add(v)
                names.append(self.names[v - 1])
            v_add = int(cands[added])
            chosen.append(self.keys[v_add - 1])
            contents.append(float(step.vals[added]))
            state = state.extended(v_add)
        return PseudoLabel(tuple(names), tuple(chosen), tuple(contents))

    def label_tree(self, target, d: int) -> dict[str, PseudoLabel]:
        """Labels for every policy of length ``d`` at once.

        Policies sharing a prefix share the simplex states of that prefix, so
        each distinct state is scored once.  Policies that run out of
        candidates are absent from the result.
        """
        out: dict[str, PseudoLabel] = {}
        root = self._state(target)

        def walk(state, used, prefix, names, chosen, contents):
            if len(prefix) == d:
                out[prefix] = PseudoLabel(tuple(names), tuple(chosen), tuple(contents))
                return
            cands = np.array([v for v in range(1, self.n + 1) if v not in used])
            if len(cands) == 0:
                return
            step = _evaluate(state, cands)
            for decision in DECISIONS:
                if len(cands) < _needed(decision):
                    continue
                recorded, added = _apply(step, decision)
                vs = [int(cands[p]) for p in recorded]
                v_add = int(cands[added])
                walk(
                    state.extended(v_add),
                    used | set(vs),
                    prefix + decision,
                    names + [self.names[v - 1] for v in vs],
                    chosen + [self.keys[v_add - 1]],
                    contents + [float(step.vals[added])],
                )

        walk(root, frozenset(), "", [], [], [])
        return out

    def label_batch(self, targets: Dataset, policy, threads: int | None = None) -> BatchResult:
        policy = parse_policy(policy)
        self.check(policy)
        if len(targets) and targets.dim != self.anchors.dim:
            raise ValueError(f"dimension mismatch: targets have {targets.dim} components, anchors have {self.anchors.dim}")

        def one(i):
            try:
                return self.label(targets.matrix[i], policy), None
            except (ValueError, ArithmeticError) as exc:
                return None, ItemError(i, targets.ids[i], str(exc))

        workers = resolve_threads(threads)
        if workers > 1 and len(targets) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, range(len(targets))))
        else:
            results = [one(i) for i in range(len(targets))]
        return BatchResult([r[0] for r in results], [r[1] for r in results if r[1] is not None])


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("G2L_THREADS", "1") or 1)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    return threads


def label_item(target, anchors: AnchorSet, policy) -> PseudoLabel:
    return Labeler(anchors).label(target, policy)


def label_dataset(targets: Dataset, anchors: AnchorSet, policy, threads: int | None = None) -> BatchResult:
    """Label every target in input order.

    Per-item failures are collected in ``errors`` (the matching ``labels``
    slot is ``None``) instead of aborting the batch.
    """
    return Labeler(anchors).label_batch(targets, policy, threads)


# --------------------------------------------------------------------------
# counting
# --------------------------------------------------------------------------


def count_policies(d: int) -> int:
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    return 4**d


def count_policies_by_length(d: int, length: int) -> int:
    """Number of length-``d`` policies whose labels have ``length`` names.

    Each of the ``length - d`` two-name letters sits at one of ``d`` positions
    and every position has two letter choices: ``2**d * C(d, length - d)``.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not d <= length <= 2 * d:
        raise ValueError(f"length must lie in [{d}, {2 * d}], got {length}")
    return 2**d * math.comb(d, length - d)


def find_extremal_simplex(anchors: AnchorSet, d: int, mode: str = "min") -> list[str]:
    """Exhaustive search for the (d+1)-subset of representatives with extreme content.

    Subsets are visited in lexicographic order of their sorted representative
    keys, so ties go to the lexicographically first subset.
    """
    if mode not in ("min", "max"):
        raise ValueError(f"mode must be 'min' or 'max', got {mode!r}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    n = len(anchors)
    if d + 1 > n:
        raise InsufficientCandidatesError(f"a {d}-simplex needs {d + 1} representatives, anchor set has {n}")
    sq = pairwise_sq_distances(anchors.matrix, anchors.matrix, anchors.metric)
    subsets = np.array(list(combinations(range(n), d + 1)))
    best, best_val = None, None
    for lo in range(0, len(subsets), 4096):
        chunk = subsets[lo:lo + 4096]
        mats = sq[chunk[:, :, None], chunk[:, None, :]]
        vals = clamp_degenerate(squared_contents(mats), mats)
        pos = _argext(vals, mode)
        v = vals[pos]
        if best is None:
            better = True
        elif mode == "min":
            better = v < best_val and abs(v - best_val) > TIE_RTOL * abs(best_val)
        else:
            better = v > best_val and abs(v - best_val) > TIE_RTOL * abs(best_val)
        if better:
            best, best_val = chunk[pos], v
    return [anchors.names[i] for i in best]


def all_policies(d: int) -> list[str]:
    """Every policy string of length ``d`` in plain lexicographic order over 'cfCF'."""
    return ["".join(p) for p in product(DECISIONS, repeat=d)]
