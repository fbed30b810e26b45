"""Detection filtering and memory retrieval.

Raw detections pass through per-category NMS and category-specific
confidence thresholds; surviving instances query the memory bank for
their top-K most similar same-category features (alignment positives)
plus one random feature from every other populated category (negatives).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from . import backends
from .errors import NoPositivesError
from .memory import MemoryBank, validate_feature

MIN_DELTA = 0.05


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized image coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(f"degenerate or out-of-range box {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    """One predicted instance: box, category id, confidence score."""

    box: BBox
    category: int
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.category < 1:
            raise ValueError(f"category {self.category} < 1")


@dataclass(frozen=True)
class ThresholdTable:
    """Per-category confidence thresholds.

    ``fallback_applied`` flags the degenerate all-zero-accuracy case where
    every threshold fell back to the base value.
    """

    delta: Dict[int, float]
    base_delta: float
    fallback_applied: bool = False

    def for_category(self, category: int) -> float:
        return self.delta.get(category, self.base_delta)

    @classmethod
    def uniform(cls, categories: Iterable[int], base_delta: float) -> "ThresholdTable":
        return cls({c: base_delta for c in categories}, base_delta)


def compute_thresholds(
    per_category_accuracy: Mapping[int, float], base_delta: float
) -> ThresholdTable:
    """Scale the base threshold by each category's accuracy ratio to the best.

    delta_c = clamp(base * acc_c / max_acc, MIN_DELTA, base), so weaker
    categories get a lower confidence bar. All-zero accuracies fall back to
    the base threshold for every category, flagged on the table.
    """
    if not 0.0 < base_delta < 1.0:
        raise ValueError(f"base_delta {base_delta} outside (0, 1)")
    for c, acc in per_category_accuracy.items():
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"accuracy {acc} for category {c} outside [0, 1]")

    max_acc = max(per_category_accuracy.values(), default=0.0)
    if max_acc == 0.0:
        table = {c: base_delta for c in per_category_accuracy}
        return ThresholdTable(table, base_delta, fallback_applied=True)
    table = {
        c: min(base_delta, max(MIN_DELTA, base_delta * (acc / max_acc)))
        for c, acc in per_category_accuracy.items()
    }
    return ThresholdTable(table, base_delta)


def _nms_keep_indices(
    detections: Sequence[Detection], iou_threshold: float
) -> List[int]:
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside (0, 1)")
    order = sorted(
        range(len(detections)), key=lambda i: -detections[i].score
    )  # stable: ties keep input order
    kept: List[int] = []
    kept_by_category: Dict[int, List[int]] = {}
    for i in order:
        det = detections[i]
        same = kept_by_category.setdefault(det.category, [])
        if all(iou(det.box, detections[j].box) < iou_threshold for j in same):
            same.append(i)
            kept.append(i)
    return kept


def nms(detections: Sequence[Detection], iou_threshold: float) -> List[Detection]:
    """Greedy per-category non-maximum suppression.

    Boxes are visited in descending score order; a box survives only if its
    IoU with every already-kept box of the same category is below the
    threshold. Output is in kept (descending score) order.
    """
    return [detections[i] for i in _nms_keep_indices(detections, iou_threshold)]


def _filter_keep_indices(
    detections: Sequence[Detection],
    thresholds: ThresholdTable,
    iou_threshold: float,
) -> List[int]:
    return [
        i
        for i in _nms_keep_indices(detections, iou_threshold)
        if detections[i].score >= thresholds.for_category(detections[i].category)
    ]


def filter_detections(
    detections: Sequence[Detection],
    thresholds: ThresholdTable,
    iou_threshold: float,
) -> List[Detection]:
    """NMS followed by the per-category confidence gate, order preserved."""
    return [
        detections[i]
        for i in _filter_keep_indices(detections, thresholds, iou_threshold)
    ]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    Accumulates left to right like the scan kernels, so scalar and batch
    paths agree bit for bit. Zero-norm input is an error.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.ndim != 1 or av.shape != bv.shape:
        raise ValueError(f"shape mismatch {av.shape} vs {bv.shape}")
    if not (np.all(np.isfinite(av)) and np.all(np.isfinite(bv))):
        raise ValueError("non-finite input")
    num = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(av.tolist(), bv.tolist()):
        num += x * y
        na += x * x
        nb += y * y
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm input")
    return min(1.0, max(-1.0, num / (math.sqrt(na) * math.sqrt(nb))))


@dataclass
class RetrievalResult:
    """Alignment candidates for one target instance.

    ``positives`` are (vector, similarity) pairs in descending similarity,
    with ``positive_indices`` giving their slot positions in the bank.
    ``negatives`` hold one (vector, category) per other populated category;
    categories with empty slots are reported in
    ``missing_negative_categories`` instead of being resampled.
    """

    query_category: int
    positives: List[Tuple[np.ndarray, float]]
    positive_indices: List[int]
    short: bool
    negatives: List[Tuple[np.ndarray, int]] = field(default_factory=list)
    missing_negative_categories: List[int] = field(default_factory=list)

    @property
    def positive_vectors(self) -> List[np.ndarray]:
        return [v for v, _ in self.positives]

    @property
    def positive_similarities(self) -> List[float]:
        return [s for _, s in self.positives]

    @property
    def negative_vectors(self) -> List[np.ndarray]:
        return [v for v, _ in self.negatives]


def retrieve(
    bank: MemoryBank,
    query: np.ndarray,
    category: int,
    k: int,
    rng: np.random.Generator,
) -> RetrievalResult:
    """Top-k most similar same-category features plus per-category negatives.

    Ties in similarity resolve to the lower slot index. Fewer than k stored
    vectors yield a short (flagged) positive list; an empty slot for the
    query category raises NoPositivesError. Negatives are drawn uniformly
    per category with the caller's generator, in ascending category order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 1 <= category <= bank.num_categories:
        raise ValueError(f"category {category} outside [1, {bank.num_categories}]")
    q = validate_feature(query, bank.dim)

    matrix = bank.category_matrix(category)
    n = matrix.shape[0]
    if n == 0:
        raise NoPositivesError(f"memory slot for category {category} is empty")
    sims = backends.cosine_scan(matrix, q)
    top = backends.topk_desc(sims, min(k, n))
    positives = [(matrix[i].copy(), float(sims[i])) for i in top]

    negatives: List[Tuple[np.ndarray, int]] = []
    missing: List[int] = []
    for c in bank.categories():
        if c == category:
            continue
        other = bank.category_matrix(c)
        if other.shape[0] == 0:
            missing.append(c)
            continue
        j = int(rng.integers(other.shape[0]))
        negatives.append((other[j].copy(), c))

    return RetrievalResult(
        query_category=category,
        positives=positives,
        positive_indices=[int(i) for i in top],
        short=n < k,
        negatives=negatives,
        missing_negative_categories=missing,
    )


def minibatch_match_rate(
    batch_source_categories: Sequence[int],
    batch_target_categories: Sequence[int],
) -> float:
    """Fraction of target instances whose category occurs in the source batch.

    This is the pairing rate an in-batch category-to-category aligner would
    achieve; memory retrieval is compared against it.
    """
    if not batch_target_categories:
        raise ValueError("match rate undefined for an empty target batch")
    available = set(batch_source_categories)
    hits = sum(1 for c in batch_target_categories if c in available)
    return hits / len(batch_target_categories)
