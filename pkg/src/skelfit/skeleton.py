"""Skeleton construction and edge sampling.

A skeleton is the complete graph over k ordered keypoints. Edges are always
enumerated lexicographically over (i, j) with i < j, so the edge order is a
pure function of k and never depends on geometry. Each edge is sampled at
segment midpoints of a uniform partition, which keeps samples distinct and
avoids duplicating keypoints across incident edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import as_points
from .errors import ArgumentError


def enumerate_edges(k: int) -> np.ndarray:
    """Lexicographic (i, j) pairs, i < j; length k(k-1)/2."""
    if k < 2:
        raise ArgumentError(f"a skeleton needs at least 2 keypoints, got {k}")
    pairs = [(i, j) for i in range(k - 1) for j in range(i + 1, k)]
    return np.array(pairs, dtype=np.int64)


@dataclass(frozen=True)
class Skeleton:
    """k ordered keypoints plus the complete edge list over them."""

    keypoints: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        kp = as_points(self.keypoints)
        edges = enumerate_edges(kp.shape[0])
        if not np.array_equal(np.asarray(self.edges, dtype=np.int64), edges):
            raise ArgumentError("edge list must be the lexicographic complete graph")
        kp.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_keypoints(cls, keypoints) -> "Skeleton":
        kp = as_points(keypoints)
        return cls(kp, enumerate_edges(kp.shape[0]))

    @property
    def k(self) -> int:
        return self.keypoints.shape[0]

    def edge_lengths(self) -> np.ndarray:
        d = self.keypoints[self.edges[:, 1]] - self.keypoints[self.edges[:, 0]]
        return np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2)


@dataclass(frozen=True)
class SamplingPlan:
    """Per-edge sample counts for a fixed total budget."""

    total_budget: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 1):
            raise ArgumentError("sampling plan needs one positive count per edge")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts)))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SubCloudSet:
    """Per-edge point sets stored flat, delimited by ``starts`` offsets."""

    points: np.ndarray  # (sum(n_i), 3)
    starts: np.ndarray  # (E + 1,) cumulative offsets

    def __post_init__(self):
        pts = as_points(self.points)
        starts = np.asarray(self.starts, dtype=np.int64)
        if starts.ndim != 1 or starts.shape[0] < 2 or starts[0] != 0:
            raise ArgumentError("starts must be a cumulative offset array beginning at 0")
        if np.any(np.diff(starts) < 1) or starts[-1] != pts.shape[0]:
            raise ArgumentError("starts do not partition the point array")
        pts.setflags(write=False)
        starts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "starts", starts)

    @property
    def n_edges(self) -> int:
        return self.starts.shape[0] - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.starts)

    def subcloud(self, i: int) -> np.ndarray:
        return self.points[self.starts[i] : self.starts[i + 1]]

    @classmethod
    def from_list(cls, clouds) -> "SubCloudSet":
        sizes = [np.asarray(c).shape[0] for c in clouds]
        starts = np.concatenate(([0], np.cumsum(sizes)))
        return cls(np.concatenate([as_points(c) for c in clouds], axis=0), starts)


def plan_sampling(skeleton: Skeleton, total_budget: int) -> SamplingPlan:
    """Distribute the budget over edges in proportion to edge length.

    n_i = max(1, floor(M * L_i / sum(L) + 0.5)); zero-length edges get one
    sample. Rounding is half-up so the rule is identical across backends.
    """
    n_edges = skeleton.edges.shape[0]
    if total_budget < n_edges:
        raise ArgumentError(
            f"budget {total_budget} is below the edge count {n_edges}"
        )
    lengths = skeleton.edge_lengths()
    total_len = float(np.cumsum(lengths)[-1])
    counts = np.empty(n_edges, dtype=np.int64)
    for i in range(n_edges):
        if total_len == 0.0:
            counts[i] = 1
        else:
            counts[i] = max(1, int(math.floor(total_budget * float(lengths[i]) / total_len + 0.5)))
    return SamplingPlan(total_budget=total_budget, counts=counts)


def sample_edges(skeleton: Skeleton, plan: SamplingPlan) -> SubCloudSet:
    """Midpoint-rule samples on every edge: t = (s + 0.5) / n_i."""
    if plan.counts.shape[0] != skeleton.edges.shape[0]:
        raise ArgumentError("sampling plan does not match the skeleton's edge count")
    starts = plan.starts
    out = np.empty((int(starts[-1]), 3), dtype=np.float64)
    for e, (u, v) in enumerate(skeleton.edges):
        n = int(plan.counts[e])
        t = (np.arange(n, dtype=np.float64) + 0.5) / n
        a = skeleton.keypoints[u]
        b = skeleton.keypoints[v]
        out[starts[e] : starts[e + 1]] = a + t[:, None] * (b - a)
    return SubCloudSet(out, starts)


def apply_offsets(raw: SubCloudSet, offsets: np.ndarray) -> SubCloudSet:
    """Pointwise position refinement: X_i = P_i + B_i."""
    off = as_points(offsets)
    if off.shape != raw.points.shape:
        raise ArgumentError(
            f"offset table shape {off.shape} does not match samples {raw.points.shape}"
        )
    return SubCloudSet(raw.points + off, raw.starts)


def offset_penalty(offsets: np.ndarray, lambda_reg: float = 1.0) -> tuple[float, np.ndarray]:
    """L2 penalty keeping offsets localized; returns (value, gradient)."""
    off = as_points(offsets)
    value = lambda_reg * float(np.cumsum(off.ravel() ** 2)[-1]) if off.size else 0.0
    grad = (2.0 * lambda_reg) * off
    return value, grad


def skeleton_to_json(skeleton: Skeleton, activations: np.ndarray, plan: SamplingPlan) -> dict:
    """Serialization dict with a fixed field order (k, keypoints, edges,
    activations, plan)."""
    a = np.asarray(activations, dtype=np.float64).reshape(-1)
    if a.shape[0] != skeleton.edges.shape[0]:
        raise ArgumentError("activation count does not match edge count")
    return {
        "k": skeleton.k,
        "keypoints": [[float(v) for v in p] for p in skeleton.keypoints],
        "edges": [[int(i), int(j)] for i, j in skeleton.edges],
        "activations": [float(v) for v in a],
        "plan": {"M": int(plan.total_budget), "n": [int(c) for c in plan.counts]},
    }


def skeleton_from_json(data: dict) -> tuple[Skeleton, np.ndarray, SamplingPlan]:
    try:
        skeleton = Skeleton.from_keypoints(np.array(data["keypoints"], dtype=np.float64))
        if int(data["k"]) != skeleton.k:
            raise ArgumentError("declared k does not match the keypoint list")
        edges = np.array(data["edges"], dtype=np.int64)
        if not np.array_equal(edges, skeleton.edges):
            raise ArgumentError("edge list is not the lexicographic complete graph")
        activations = np.array(data["activations"], dtype=np.float64)
        plan = SamplingPlan(int(data["plan"]["M"]), np.array(data["plan"]["n"], dtype=np.int64))
    except (KeyError, TypeError) as exc:
        raise ArgumentError(f"malformed skeleton document: missing {exc}") from None
    if activations.shape[0] != skeleton.edges.shape[0]:
        raise ArgumentError("activation count does not match edge count")
    if plan.counts.shape[0] != skeleton.edges.shape[0]:
        raise ArgumentError("plan length does not match edge count")
    return skeleton, activations, plan
