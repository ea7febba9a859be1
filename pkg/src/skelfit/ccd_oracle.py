"""Reference coverage-loss implementation used as a differential test oracle.

This is a deliberately naive transcription of the iterative selection loop:
the candidate pool is rebuilt per input point as a plain list, every
iteration rescans the whole remaining pool, and sub-cloud removal is a list
filter. It stays independent of the kernel backends and must agree with
them exactly; keep it slow and obvious. Intended for small instances only
(at most a few thousand pool entries).
"""

from __future__ import annotations

import math

import numpy as np

from .cloud import PointCloud
from .errors import ArgumentError
from .skeleton import SubCloudSet


def coverage_loss_oracle(x: PointCloud, subclouds: SubCloudSet, a, gamma: float = 20.0) -> float:
    if not isinstance(x, PointCloud):
        x = PointCloud(x)
    if not gamma > 0:
        raise ArgumentError(f"gamma must be positive, got {gamma}")
    weights = [float(v) for v in np.asarray(a, dtype=np.float64).reshape(-1)]
    if subclouds.n_edges < 1:
        raise ArgumentError("need at least one sub-cloud")
    if len(weights) != subclouds.n_edges:
        raise ArgumentError(f"{len(weights)} activations for {subclouds.n_edges} sub-clouds")
    if any(w < 0.0 or w > 1.0 for w in weights):
        raise ArgumentError("activation strengths must lie in [0, 1]")

    points = [tuple(float(v) for v in p) for p in x.points]
    full_pool = []
    for e in range(subclouds.n_edges):
        for p in subclouds.subcloud(e):
            full_pool.append((e, (float(p[0]), float(p[1]), float(p[2]))))

    value = 0.0
    for p0 in points:
        pool = list(full_pool)
        w = 0.0
        while w < 1.0 and pool:
            best_d = None
            best_edge = None
            for edge, p in pool:
                dx = p[0] - p0[0]
                dy = p[1] - p0[1]
                dz = p[2] - p0[2]
                d = math.sqrt((dx * dx + dy * dy) + dz * dz)
                if best_d is None or d < best_d:
                    best_d = d
                    best_edge = edge
            value += weights[best_edge] * best_d
            w += weights[best_edge]
            pool = [entry for entry in pool if entry[0] != best_edge]
        if w < 1.0:
            value += gamma * (1.0 - w)
    return value
