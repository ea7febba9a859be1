"""Fit a skeleton to a single point cloud by first-order descent.

Instead of a learned encoder, the latent quantities are optimized directly
per shape: pointwise keypoint scores (softmax rows averaging the input
cloud), pre-sigmoid edge activation logits, and per-sample position offsets.
The objective is the composite chamfer distance plus the L2 offset penalty.

Cross-instance keypoint alignment is NOT free here the way it is with a
shared network: it only emerges when shapes are canonically oriented and the
fits share an initialization (same anchor schedule). See the README for the
extent of that gap.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .ccd import CcdConfig, ccd
from .cloud import PointCloud, farthest_point_sample
from .errors import ArgumentError, DivergenceError
from .skeleton import (
    SamplingPlan,
    Skeleton,
    SubCloudSet,
    apply_offsets,
    offset_penalty,
    plan_sampling,
    sample_edges,
)

KEYPOINT_MODES = ("convex", "free")


@dataclass(frozen=True)
class FitConfig:
    k: int
    total_budget: int = 2048
    iterations: int = 300
    base_lr: float = 0.01
    lr_decay: float = 0.5  # applied once per third of the run
    gamma: float = 20.0
    lambda_f: float = 1.0
    lambda_c: float = 1.0
    normalize_losses: bool = False
    lambda_reg: float = 1.0
    seed: int = 0
    keypoint_mode: str = "convex"

    def __post_init__(self):
        if self.k < 2:
            raise ArgumentError(f"k must be at least 2, got {self.k}")
        if self.iterations < 1:
            raise ArgumentError("iterations must be at least 1")
        if self.keypoint_mode not in KEYPOINT_MODES:
            raise ArgumentError(f"keypoint_mode must be one of {KEYPOINT_MODES}")

    @property
    def ccd(self) -> CcdConfig:
        return CcdConfig(
            gamma=self.gamma,
            lambda_f=self.lambda_f,
            lambda_c=self.lambda_c,
            normalize=self.normalize_losses,
        )

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "total_budget": self.total_budget,
            "iterations": self.iterations,
            "base_lr": self.base_lr,
            "lr_decay": self.lr_decay,
            "gamma": self.gamma,
            "lambda_f": self.lambda_f,
            "lambda_c": self.lambda_c,
            "normalize_losses": self.normalize_losses,
            "lambda_reg": self.lambda_reg,
            "seed": self.seed,
            "keypoint_mode": self.keypoint_mode,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FitConfig":
        if "k" not in data:
            raise ArgumentError("fit config requires 'k'")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown fit config keys: {sorted(unknown)}")
        return cls(**data)


class _Adam:
    """Adaptive-moment update with bias correction, one slot per array.

    Slots flagged in ``shared_rms`` use a single second moment for the whole
    array (per-coordinate first moment, group RMS scaling). Per-coordinate
    RMS normalization makes every coordinate move at ~lr regardless of
    gradient size, which erases the relative magnitudes between edge
    activations; those magnitudes are exactly the signal that separates
    real edges from phantom ones, so the activation slot shares its RMS.
    """

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, shapes, shared_rms=()):
        self.m = [np.zeros(s, dtype=np.float64) for s in shapes]
        self.v = [np.zeros(s, dtype=np.float64) for s in shapes]
        self.shared = list(shared_rms) + [False] * (len(self.m) - len(shared_rms))
        self.t = 0

    def copy(self) -> "_Adam":
        out = _Adam([])
        out.m = [m.copy() for m in self.m]
        out.v = [v.copy() for v in self.v]
        out.shared = list(self.shared)
        out.t = self.t
        return out

    def step(self, params, grads, lr):
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            g2 = np.mean(g * g) if self.shared[i] else g * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g2
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            out.append(p - lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


@dataclass
class FitParams:
    """Optimizable state; plan and optimizer moments ride along opaquely."""

    mode: str
    keypoint_logits: np.ndarray | None  # (k, N), convex mode
    keypoints_free: np.ndarray | None  # (k, 3), free mode
    activation_logits: np.ndarray  # (E,)
    offsets: np.ndarray  # (sum n_i, 3)
    plan: SamplingPlan
    adam: _Adam

    def copy(self) -> "FitParams":
        return FitParams(
            mode=self.mode,
            keypoint_logits=None if self.keypoint_logits is None else self.keypoint_logits.copy(),
            keypoints_free=None if self.keypoints_free is None else self.keypoints_free.copy(),
            activation_logits=self.activation_logits.copy(),
            offsets=self.offsets.copy(),
            plan=self.plan,
            adam=self.adam.copy(),
        )


@dataclass(frozen=True)
class FitReport:
    skeleton: Skeleton
    activations: np.ndarray
    subclouds: SubCloudSet
    history: list  # one (total, fidelity, coverage, penalty) row per iteration
    converged: bool
    wall_time: float
    best_iteration: int
    best_params: FitParams

    def to_json(self) -> dict:
        # wall_time deliberately excluded: reports must be byte-stable
        # across reruns; timing lives in the run manifest.
        from .skeleton import skeleton_to_json

        return {
            "skeleton": skeleton_to_json(self.skeleton, self.activations, self.best_params.plan),
            "history": [[float(v) for v in row] for row in self.history],
            "converged": bool(self.converged),
            "best_iteration": int(self.best_iteration),
        }


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def keypoints_of(params: FitParams, cloud: PointCloud) -> np.ndarray:
    if params.mode == "convex":
        return _softmax_rows(params.keypoint_logits) @ cloud.points
    return params.keypoints_free.copy()


def activations_of(params: FitParams) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-params.activation_logits))


def _anchor_indices(cloud: PointCloud, anchors: np.ndarray) -> np.ndarray:
    """Map explicit anchor points to distinct nearest cloud indices."""
    pts = cloud.points
    taken = np.zeros(len(cloud), dtype=bool)
    out = np.empty(anchors.shape[0], dtype=np.int64)
    for r, anchor in enumerate(anchors):
        diff = pts - anchor
        d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
        d2 = np.where(taken, np.inf, d2)
        idx = int(np.argmin(d2))
        taken[idx] = True
        out[r] = idx
    return out


def init_params(cloud: PointCloud, config: FitConfig, anchors=None) -> FitParams:
    """Initial state: softmax rows concentrated (weight ~0.99) on anchor
    points, activations at 0.5, offsets at zero.

    Anchors default to a farthest-point sample of the cloud; passing the same
    explicit anchors into several fits gives them a shared initialization.
    """
    n = len(cloud)
    if config.k > n:
        raise ArgumentError(f"k={config.k} exceeds the cloud size {n}")
    explicit = anchors is not None
    if explicit:
        anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 3)
        if anchors.shape[0] != config.k:
            raise ArgumentError(f"{anchors.shape[0]} anchors for k={config.k}")
        idx = None
    else:
        # Start the farthest-point sweep at the point farthest from the
        # centroid, so anchors land on mutual extremes (segment ends, arm
        # tips) instead of wherever a random first pick happens to fall.
        centered = cloud.points - cloud.points.mean(axis=0)
        d2 = centered[:, 0] ** 2 + centered[:, 1] ** 2 + centered[:, 2] ** 2
        idx = farthest_point_sample(cloud, config.k, config.seed, start_index=int(np.argmax(d2)))

    mode = config.keypoint_mode
    keypoint_logits = None
    keypoints_free = None
    if mode == "convex":
        if idx is None:
            idx = _anchor_indices(cloud, anchors)  # logits index into the cloud
        keypoint_logits = np.zeros((config.k, n), dtype=np.float64)
        concentration = np.log(99.0 * (n - 1))  # softmax weight 0.99 on the anchor
        keypoint_logits[np.arange(config.k), idx] = concentration
        initial_kp = _softmax_rows(keypoint_logits) @ cloud.points
    else:
        keypoints_free = anchors.copy() if explicit else cloud.points[idx].copy()
        initial_kp = keypoints_free

    skeleton = Skeleton.from_keypoints(initial_kp)
    plan = plan_sampling(skeleton, config.total_budget)
    n_edges = skeleton.edges.shape[0]
    offsets = np.zeros((plan.total, 3), dtype=np.float64)
    shapes = [
        keypoint_logits.shape if mode == "convex" else keypoints_free.shape,
        (n_edges,),
        offsets.shape,
    ]
    return FitParams(
        mode=mode,
        keypoint_logits=keypoint_logits,
        keypoints_free=keypoints_free,
        activation_logits=np.zeros(n_edges, dtype=np.float64),
        offsets=offsets,
        plan=plan,
        adam=_Adam(shapes, shared_rms=(False, True, False)),
    )


def _evaluate(cloud: PointCloud, params: FitParams, config: FitConfig):
    """Forward pass + analytic gradients for all three parameter groups."""
    keypoints = keypoints_of(params, cloud)
    skeleton = Skeleton.from_keypoints(keypoints)
    raw = sample_edges(skeleton, params.plan)
    subclouds = apply_offsets(raw, params.offsets)
    activations = activations_of(params)
    result = ccd(cloud, subclouds, activations, config.ccd)
    penalty, grad_pen = offset_penalty(params.offsets, config.lambda_reg)

    grad_offsets = result.grad_points + grad_pen

    # Edge samples are affine in the keypoints: d sample / d K_u = (1 - t).
    grad_kp = np.zeros_like(keypoints)
    starts = params.plan.starts
    for e, (u, v) in enumerate(skeleton.edges):
        n_e = int(params.plan.counts[e])
        t = (np.arange(n_e, dtype=np.float64) + 0.5) / n_e
        g = result.grad_points[starts[e] : starts[e + 1]]
        grad_kp[u] += ((1.0 - t)[:, None] * g).sum(axis=0)
        grad_kp[v] += (t[:, None] * g).sum(axis=0)

    grad_act_logits = result.grad_activations * activations * (1.0 - activations)

    if params.mode == "convex":
        weights = _softmax_rows(params.keypoint_logits)
        # Softmax Jacobian row by row: dL/dS[r, m] = W[r, m] (g.x_m - g.K_r).
        proj = cloud.points @ grad_kp.T  # (N, k): g_r . x_m
        center = np.einsum("rc,rc->r", keypoints, grad_kp)  # g_r . K_r
        grad_first = weights * (proj.T - center[:, None])
    else:
        grad_first = grad_kp

    objective = result.total + penalty
    breakdown = (result.total, result.fidelity, result.coverage, penalty)
    grads = (grad_first, grad_act_logits, grad_offsets)
    return objective, breakdown, grads, skeleton, subclouds, activations


def learning_rate(config: FitConfig, iteration: int) -> float:
    stage = min(2, (3 * iteration) // config.iterations)
    return config.base_lr * config.lr_decay**stage


def step(cloud: PointCloud, params: FitParams, config: FitConfig, iteration: int = 0):
    """One adaptive-moment update on all parameter groups.

    Returns (new_params, breakdown) with breakdown = (total, fidelity,
    coverage, penalty) evaluated at the incoming parameters.
    """
    objective, breakdown, grads, _, _, _ = _evaluate(cloud, params, config)
    if not np.isfinite(objective):
        raise DivergenceError(
            f"non-finite loss at iteration {iteration}", params=params, history=[breakdown]
        )
    new = params.copy()
    first = new.keypoint_logits if new.mode == "convex" else new.keypoints_free
    updated = new.adam.step(
        [first, new.activation_logits, new.offsets], list(grads), learning_rate(config, iteration)
    )
    if new.mode == "convex":
        new.keypoint_logits = updated[0]
    else:
        new.keypoints_free = updated[0]
    new.activation_logits = updated[1]
    new.offsets = updated[2]
    return new, breakdown


def fit(cloud: PointCloud, config: FitConfig, anchors=None, init: FitParams | None = None) -> FitReport:
    """Run the configured number of iterations and return the best iterate.

    The best (not last) iterate is returned because the coverage loss's
    discrete selection makes the objective mildly nonmonotone near its
    optimum.
    """
    t0 = time.perf_counter()
    params = init.copy() if init is not None else init_params(cloud, config, anchors=anchors)
    history = []
    best_objective = np.inf
    best_params = params
    best_iteration = 0
    last_finite = params
    for it in range(config.iterations):
        prev = params  # step never mutates its input, so prev is stable
        try:
            params, breakdown = step(cloud, prev, config, iteration=it)
        except DivergenceError:
            raise DivergenceError(
                f"non-finite loss at iteration {it}", params=last_finite, history=history
            ) from None
        last_finite = prev
        history.append(breakdown)
        objective = breakdown[0] + breakdown[3]
        if objective < best_objective:
            best_objective = objective
            best_params = prev
            best_iteration = it

    _, _, _, skeleton, subclouds, activations = _evaluate(cloud, best_params, config)

    cutoff = max(1, (3 * config.iterations) // 4)
    best_early = min(row[0] + row[3] for row in history[:cutoff])
    converged = abs(best_early - best_objective) <= 1e-5 * max(abs(best_objective), 1e-12)
    return FitReport(
        skeleton=skeleton,
        activations=activations,
        subclouds=subclouds,
        history=history,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        best_iteration=best_iteration,
        best_params=best_params,
    )


def extract_keypoints(report: FitReport) -> np.ndarray:
    """The fitted keypoints in parameter order (the alignment identity)."""
    return report.skeleton.keypoints.copy()
