"""Shared synthetic fixtures and gradient-check machinery."""

from __future__ import annotations

import numpy as np

import skelfit as sf
from skelfit.skeleton import SubCloudSet


def philox(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def segment_cloud(seed: int, n: int = 512, sigma: float = 0.01):
    """Noisy segment along x, normalized; returns (cloud, true endpoints)."""
    rng = philox(seed)
    pts = np.zeros((n, 3))
    pts[:, 0] = rng.uniform(-0.5, 0.5, size=n)
    pts += rng.normal(0.0, sigma, size=pts.shape)
    cloud, record = sf.normalize(sf.PointCloud(pts))
    ends = (np.array([[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]) - record.center) / record.scale
    return cloud, ends


def cross_cloud(seed: int, n_per_arm: int = 256, half_x: float = 0.55, half_y: float = 0.45,
                sigma: float = 0.01):
    """Two perpendicular segments sharing midpoints, normalized.

    Returns (cloud, tips) with tips in +x, -x, +y, -y order (normalized).
    """
    rng = philox(seed)
    arm_x = np.zeros((n_per_arm, 3))
    arm_x[:, 0] = rng.uniform(-half_x, half_x, size=n_per_arm)
    arm_y = np.zeros((n_per_arm, 3))
    arm_y[:, 1] = rng.uniform(-half_y, half_y, size=n_per_arm)
    pts = np.concatenate([arm_x, arm_y]) + rng.normal(0.0, sigma, size=(2 * n_per_arm, 3))
    cloud, record = sf.normalize(sf.PointCloud(pts))
    tips = np.array(
        [[half_x, 0, 0], [-half_x, 0, 0], [0, half_y, 0], [0, -half_y, 0]], dtype=np.float64
    )
    return cloud, (tips - record.center) / record.scale


def l_shape_cloud(seed: int, long_arm: float = 1.0, short_arm: float = 0.6, n: int = 360,
                  sigma: float = 0.005):
    """Asymmetric L shape (no symmetric tip ambiguity), normalized."""
    rng = philox(seed)
    n1 = n * 2 // 3
    a = np.zeros((n1, 3))
    a[:, 0] = rng.uniform(0.0, long_arm, size=n1)
    b = np.zeros((n - n1, 3))
    b[:, 1] = rng.uniform(0.0, short_arm, size=n - n1)
    pts = np.concatenate([a, b]) + rng.normal(0.0, sigma, size=(n, 3))
    return sf.normalize(sf.PointCloud(pts))[0]


def span_edge_set(keypoints: np.ndarray, edges: np.ndarray) -> set:
    """The two cross edges passing through the center (opposite-tip pairs)."""
    mids = sorted(
        (float(np.linalg.norm((keypoints[u] + keypoints[v]) / 2.0)), e)
        for e, (u, v) in enumerate(edges)
    )
    return {mids[0][1], mids[1][1]}


def random_ccd_instance(rng, n_max: int = 64, e_max: int = 8, pts_max: int = 8,
                        with_ties: bool = True):
    """Small random instance for differential tests; occasionally injects
    exact duplicate points and exact coincidences to exercise tie-breaking."""
    n = int(rng.integers(1, n_max + 1))
    n_edges = int(rng.integers(1, e_max + 1))
    sizes = rng.integers(1, pts_max + 1, size=n_edges)
    x = rng.uniform(-1.0, 1.0, size=(n, 3))
    pool = rng.uniform(-1.0, 1.0, size=(int(sizes.sum()), 3))
    if with_ties and pool.shape[0] > 2 and rng.random() < 0.5:
        i, j = rng.integers(0, pool.shape[0], size=2)
        pool[i] = pool[j]
    if with_ties and rng.random() < 0.3:
        pool[int(rng.integers(0, pool.shape[0]))] = x[int(rng.integers(0, n))]
    a = rng.uniform(0.0, 1.0, size=n_edges)
    if with_ties and rng.random() < 0.2:
        a[int(rng.integers(0, n_edges))] = float(rng.integers(0, 2))
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    gamma = float(rng.choice([20.0, 3.0, 0.5]))
    return sf.PointCloud(x), SubCloudSet(pool, starts), a, gamma


# --- finite-difference gradient checking -----------------------------------

FD_H = 1e-5
TIE_MARGIN = 1e-3
REL_TOL = 1e-4
ABS_FLOOR = 1e-8


def random_grad_instance(rng):
    """Random configuration for gradient checks: activations kept interior
    so +-h perturbations stay in [0, 1]."""
    n = int(rng.integers(6, 17))
    n_edges = int(rng.integers(2, 5))
    sizes = rng.integers(2, 6, size=n_edges)
    x = rng.uniform(-1.0, 1.0, size=(n, 3))
    pool = rng.uniform(-1.0, 1.0, size=(int(sizes.sum()), 3))
    a = rng.uniform(0.05, 0.95, size=n_edges)
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return sf.PointCloud(x), SubCloudSet(pool, starts), a


def _edge_of(starts: np.ndarray, flat_index: int) -> int:
    return int(np.searchsorted(starts, flat_index, side="right") - 1)


def tie_exclusions(cloud, subclouds, a):
    """Coordinates within the margin of a structural tie, to skip in FD.

    Returns (point_mask (S,) bool, act_mask (E,) bool) where True means the
    coordinate is safe to check.
    """
    x = cloud.points
    pool = subclouds.points
    starts = subclouds.starts
    n_edges = subclouds.n_edges
    point_ok = np.ones(pool.shape[0], dtype=bool)
    act_ok = np.ones(n_edges, dtype=bool)

    # Fidelity side: a pool point whose two nearest input points nearly tie
    # can flip its assignment under perturbation; near-zero distances have
    # unstable directions.
    for s in range(pool.shape[0]):
        d = np.sort(np.linalg.norm(x - pool[s], axis=1))
        if d[0] < TIE_MARGIN or (len(d) > 1 and d[1] - d[0] < TIE_MARGIN):
            point_ok[s] = False

    # Coverage side, per input point: candidate (per-edge nearest) distances.
    for q in range(x.shape[0]):
        cand_d = np.empty(n_edges)
        cand_i = np.empty(n_edges, dtype=np.int64)
        for e in range(n_edges):
            block = np.linalg.norm(pool[starts[e] : starts[e + 1]] - x[q], axis=1)
            am = int(np.argmin(block))
            cand_d[e] = block[am]
            cand_i[e] = starts[e] + am
            # within-edge near-tie: nearest-point identity may flip
            if block.shape[0] > 1:
                two = np.sort(block)
                if two[1] - two[0] < TIE_MARGIN:
                    point_ok[starts[e] : starts[e + 1]] = False
        order = np.argsort(cand_d, kind="stable")
        # selection-order near-ties between edges
        for i in range(n_edges - 1):
            ei, ej = int(order[i]), int(order[i + 1])
            if cand_d[ej] - cand_d[ei] < TIE_MARGIN:
                point_ok[cand_i[ei]] = False
                point_ok[cand_i[ej]] = False
                act_ok[ei] = act_ok[ej] = False
        if cand_d[int(order[0])] < TIE_MARGIN:
            point_ok[cand_i[int(order[0])]] = False
        # stopping-rule margins on the running activation sum
        w = 0.0
        selected = []
        for e in order:
            selected.append(int(e))
            w += a[int(e)]
            if abs(w - 1.0) < TIE_MARGIN:
                for se in selected:
                    act_ok[se] = False
            if w >= 1.0:
                break
    return point_ok, act_ok


def central_difference(fn, h=FD_H):
    """fn(delta) -> scalar loss at a +-delta perturbation of one coordinate."""
    return (fn(h) - fn(-h)) / (2.0 * h)


def grads_match(analytic: float, numeric: float) -> bool:
    err = abs(analytic - numeric)
    return err <= max(REL_TOL * max(abs(analytic), abs(numeric)), ABS_FLOOR)
