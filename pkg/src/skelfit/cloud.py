"""Point-cloud representation and the geometric primitives built on it.

Everything here is a pure function over immutable inputs. Point order is
significant throughout: downstream softmax weights index into the cloud, and
all tie-breaking rules resolve to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError


def _rng(seed: int) -> np.random.Generator:
    # Counter-based generator, seeded explicitly per call; no global state.
    return np.random.Generator(np.random.Philox(seed))


def as_points(points) -> np.ndarray:
    """Coerce to a C-contiguous float64 (N, 3) array, validating shape."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ArgumentError(f"expected an (N, 3) point array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """An ordered list of 3D points; the universal currency of the package."""

    points: np.ndarray

    def __post_init__(self):
        arr = as_points(self.points)
        if arr.shape[0] < 1:
            raise ArgumentError("a point cloud needs at least one point")
        if not np.all(np.isfinite(arr)):
            raise ArgumentError("point cloud contains non-finite coordinates")
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)

    def __len__(self) -> int:
        return self.points.shape[0]

    def bounding_box(self) -> "BoundingBox":
        return BoundingBox(self.points.min(axis=0), self.points.max(axis=0))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; its diagonal is the 'model size' unit."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ArgumentError("bounding box min exceeds max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))


@dataclass(frozen=True)
class AnnotationSet:
    """Expert keypoints with small-integer semantic labels, in file order."""

    xyz: np.ndarray
    semantic_ids: np.ndarray

    def __post_init__(self):
        pts = as_points(self.xyz)
        ids = np.asarray(self.semantic_ids, dtype=np.int64).reshape(-1)
        if pts.shape[0] < 1:
            raise ArgumentError("annotation set needs at least one keypoint")
        if ids.shape[0] != pts.shape[0]:
            raise ArgumentError("annotation labels do not match keypoint count")
        if np.any(ids < 0):
            raise ArgumentError("semantic labels must be nonnegative")
        pts.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "xyz", pts)
        object.__setattr__(self, "semantic_ids", ids)

    def __len__(self) -> int:
        return self.xyz.shape[0]


@dataclass(frozen=True)
class TransformRecord:
    """Inverse data for :func:`normalize`: p_original = p * scale + center."""

    center: np.ndarray
    scale: float


def normalize(cloud: PointCloud) -> tuple[PointCloud, TransformRecord]:
    """Center a cloud at its centroid and scale its bbox diagonal to 1."""
    pts = cloud.points
    center = pts.mean(axis=0)
    diag = cloud.bounding_box().diagonal
    if diag == 0.0:
        raise ArgumentError("cannot normalize a degenerate cloud (zero bbox diagonal)")
    out = (pts - center) / diag
    return PointCloud(out), TransformRecord(center=center, scale=diag)


def denormalize(cloud: PointCloud, record: TransformRecord) -> PointCloud:
    """Invert :func:`normalize` exactly (up to float rounding)."""
    return PointCloud(cloud.points * record.scale + record.center)


def nearest_neighbor(query, target: PointCloud) -> tuple[int, float]:
    """Globally nearest target point to ``query``; ties go to the lowest index."""
    q = np.asarray(query, dtype=np.float64).reshape(3)
    diff = target.points - q
    d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
    idx = int(np.argmin(d2))
    return idx, float(np.sqrt(d2[idx]))


def farthest_point_sample(
    cloud: PointCloud, k: int, seed: int, start_index: int | None = None
) -> np.ndarray:
    """Greedy max-min subset of ``k`` distinct indices.

    The first index is drawn from the seeded generator (or pinned via
    ``start_index``); each later pick maximizes the min-distance to the
    points already chosen, lowest index winning ties.
    """
    n = len(cloud)
    if not 1 <= k <= n:
        raise ArgumentError(f"k must be in [1, {n}], got {k}")
    pts = cloud.points
    if start_index is None:
        first = int(_rng(seed).integers(n))
    else:
        if not 0 <= start_index < n:
            raise ArgumentError(f"start_index {start_index} out of range [0, {n})")
        first = int(start_index)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = first
    diff = pts - pts[first]
    min_d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))  # first occurrence = lowest index on ties
        chosen[i] = nxt
        diff = pts - pts[nxt]
        d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
        np.minimum(min_d2, d2, out=min_d2)
    return chosen


def subsample(cloud: PointCloud, ratio: float, seed: int) -> PointCloud:
    """Uniform random subset without replacement, original order preserved.

    The output size is round(N * ratio), half away from zero.
    """
    if not 0.0 < ratio <= 1.0:
        raise ArgumentError(f"subsample ratio must be in (0, 1], got {ratio}")
    n = len(cloud)
    size = int(np.floor(n * ratio + 0.5))
    if size < 1:
        raise ArgumentError(f"ratio {ratio} leaves no points from a cloud of {n}")
    idx = _rng(seed).choice(n, size=size, replace=False)
    idx.sort()
    return PointCloud(cloud.points[idx])


def add_gaussian_noise(cloud: PointCloud, sigma: float, seed: int) -> PointCloud:
    """Perturb every coordinate by independent zero-mean Gaussian noise."""
    if sigma < 0:
        raise ArgumentError(f"noise sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return cloud
    noise = _rng(seed).normal(0.0, sigma, size=cloud.points.shape)
    return PointCloud(cloud.points + noise)
