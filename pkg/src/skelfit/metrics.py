"""Keypoint evaluation protocols: mIoU, dual alignment score, repeatability,
and the nearest-distance histogram comparing skeleton / keypoint / box-sample
representations of a shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cloud import AnnotationSet, PointCloud, as_points
from .errors import ArgumentError

MATCHINGS = ("greedy", "hungarian")


@dataclass(frozen=True)
class MatchConfig:
    """Distance threshold (strict <) and matching rule for mIoU."""

    distance_threshold: float = 0.1
    matching: str = "greedy"

    def __post_init__(self):
        if not self.distance_threshold > 0:
            raise ArgumentError("distance threshold must be positive")
        if self.matching not in MATCHINGS:
            raise ArgumentError(f"matching must be one of {MATCHINGS}")


@dataclass(frozen=True)
class MetricReport:
    metric: str
    per_instance: list
    config: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> float:
        return float(np.mean(self.per_instance))

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "per_instance": [float(v) for v in self.per_instance],
            "aggregate": self.aggregate,
            "config": self.config,
        }


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dx = a[:, 0][:, None] - b[None, :, 0]
    dy = a[:, 1][:, None] - b[None, :, 1]
    dz = a[:, 2][:, None] - b[None, :, 2]
    return np.sqrt((dx * dx + dy * dy) + dz * dz)


def _match_count(dist: np.ndarray, threshold: float, matching: str) -> int:
    """One-to-one matches with distance < threshold."""
    if matching == "hungarian":
        # Pairs at/over the threshold cost far more than any feasible sum of
        # valid pairs, so the assignment maximizes the valid-match count.
        cost = np.where(dist < threshold, dist, 1e12)
        rows, cols = linear_sum_assignment(cost)
        return int(np.sum(dist[rows, cols] < threshold))
    # Greedy: repeatedly take the globally closest unmatched pair, ties by
    # lowest (prediction, annotation) index.
    d = dist.copy()
    matches = 0
    for _ in range(min(d.shape)):
        flat = int(np.argmin(d))
        i, j = divmod(flat, d.shape[1])
        if not d[i, j] < threshold:
            break
        matches += 1
        d[i, :] = np.inf
        d[:, j] = np.inf
    return matches


def miou_counts(predicted, annotations: AnnotationSet, config: MatchConfig) -> tuple[int, int, int]:
    """(TP, FP, FN) under the one-to-one threshold matching."""
    pred = as_points(predicted)
    if pred.shape[0] < 1 or len(annotations) < 1:
        raise ArgumentError("mIoU needs at least one prediction and one annotation")
    dist = _pairwise(pred, annotations.xyz)
    tp = _match_count(dist, config.distance_threshold, config.matching)
    return tp, pred.shape[0] - tp, len(annotations) - tp


def miou(predicted, annotations: AnnotationSet, config: MatchConfig = MatchConfig()) -> float:
    """Keypoint saliency score TP / (TP + FP + FN)."""
    tp, fp, fn = miou_counts(predicted, annotations, config)
    return tp / (tp + fp + fn)


def _nearest_index(points: np.ndarray, query: np.ndarray) -> int:
    diff = points - query
    d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
    return int(np.argmin(d2))  # lowest index wins ties


def das(
    pred_ref,
    anno_ref: AnnotationSet,
    pred_eval,
    anno_eval: AnnotationSet,
) -> float:
    """Dual alignment score between two instances of a category.

    The reference instance assigns semantics; the evaluation instance is
    scored. Direction 1 labels each reference prediction with its nearest
    reference annotation's semantic id and checks that the same-index
    evaluation prediction lands on an evaluation annotation with that id.
    Direction 2 goes the other way: reference annotations take the index of
    their nearest reference prediction, and evaluation annotations (matched
    across instances by semantic id) must land on an evaluation prediction
    with that index. The score is the mean of both accuracies.
    """
    p_ref = as_points(pred_ref)
    p_eval = as_points(pred_eval)
    if p_ref.shape[0] != p_eval.shape[0]:
        raise ArgumentError("prediction lists must have equal length (aligned by index)")

    # Direction 1: annotation semantics -> predictions.
    labels_ref = [int(anno_ref.semantic_ids[_nearest_index(anno_ref.xyz, p)]) for p in p_ref]
    labels_eval = [int(anno_eval.semantic_ids[_nearest_index(anno_eval.xyz, p)]) for p in p_eval]
    acc1 = float(np.mean([a == b for a, b in zip(labels_ref, labels_eval)]))

    # Direction 2: prediction order -> annotation semantics.
    label_to_preds: dict[int, set[int]] = {}
    for m, anno in enumerate(anno_ref.xyz):
        j = _nearest_index(p_ref, anno)
        label_to_preds.setdefault(int(anno_ref.semantic_ids[m]), set()).add(j)
    hits = []
    for m, anno in enumerate(anno_eval.xyz):
        expected = label_to_preds.get(int(anno_eval.semantic_ids[m]))
        j = _nearest_index(p_eval, anno)
        hits.append(expected is not None and j in expected)
    acc2 = float(np.mean(hits))
    return (acc1 + acc2) / 2.0


def repeatability(original, perturbed, model_size: float) -> float:
    """Fraction of in-order keypoint pairs closer than 10% of model size."""
    a = as_points(original)
    b = as_points(perturbed)
    if a.shape[0] != b.shape[0]:
        raise ArgumentError("keypoint lists must have equal length (compared in order)")
    if not model_size > 0:
        raise ArgumentError("model size must be positive")
    diff = a - b
    dist = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2)
    return float(np.mean(dist < 0.1 * model_size))


def skeleton_distance_histogram(
    cloud: PointCloud,
    skeleton_samples: PointCloud,
    keypoints: PointCloud,
    bbox_samples: PointCloud,
    bins: int,
):
    """Nearest-distance histograms from every cloud point to three targets.

    Returns (bin_edges, {"skeleton": counts, "keypoints": counts,
    "bbox": counts}); bins are fixed-width over [0, max observed across all
    three series], so counts per series sum to len(cloud).
    """
    if bins < 1:
        raise ArgumentError("bins must be a positive integer")
    distances = {}
    for name, target in (
        ("skeleton", skeleton_samples),
        ("keypoints", keypoints),
        ("bbox", bbox_samples),
    ):
        d = _pairwise(cloud.points, target.points)
        distances[name] = d.min(axis=1)
    top = max(float(d.max()) for d in distances.values())
    if top == 0.0:
        top = 1e-12  # all targets coincide with the cloud; keep bins valid
    edges = np.linspace(0.0, top, bins + 1)
    counts = {
        name: np.histogram(d, bins=edges)[0].astype(np.int64) for name, d in distances.items()
    }
    return edges, counts
