"""Composite chamfer distance: fidelity + coverage losses with gradients.

The fidelity loss charges every reconstruction point its activation-weighted
distance to the nearest input point. The coverage loss walks, for each input
point, the sub-clouds in nearest-candidate order, charging activation-
weighted distances until the selected activations reach 1, with a gamma
penalty on any unsaturated remainder.

Two interchangeable kernels exist: a compiled extension and a pure-numpy
fallback. Selection happens at import; set SKELFIT_CCD_BACKEND to ``python``
or ``compiled`` to force one. The two produce bit-identical results; the
randomized differential suite in the tests holds them to that.

Gradients use the frozen-structure subgradient: nearest-neighbor assignments,
selection order, and the stopping point are treated as constants of the
forward pass. At exact coincidence (distance < 1e-12) the point gradient
is 0. Evaluation is single-threaded and sums in a fixed order, so results
are bitwise reproducible.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cloud import PointCloud
from .errors import ArgumentError
from .skeleton import SubCloudSet
from . import _ccd_python

try:
    from . import _ccd_kernel
except ImportError:  # pragma: no cover - depends on build environment
    _ccd_kernel = None

_FORCED = os.environ.get("SKELFIT_CCD_BACKEND", "auto").lower()
if _FORCED not in ("auto", "python", "compiled"):
    raise ArgumentError(f"SKELFIT_CCD_BACKEND must be auto/python/compiled, not {_FORCED!r}")
if _FORCED == "compiled" and _ccd_kernel is None:
    raise ImportError("SKELFIT_CCD_BACKEND=compiled but the extension is not built")
if _FORCED == "python":
    _impl = _ccd_python
else:
    _impl = _ccd_kernel if _ccd_kernel is not None else _ccd_python


def active_backend() -> str:
    """Name of the kernel backend selected at import ('compiled' or 'python')."""
    return "compiled" if _impl is _ccd_kernel and _ccd_kernel is not None else "python"


@dataclass(frozen=True)
class CcdConfig:
    """Loss weights: total = lambda_f * fidelity + lambda_c * coverage.

    ``gamma`` is the unsaturated-coverage penalty (default 20.0). With
    ``normalize`` set, fidelity is divided by the reconstruction size and
    coverage by the input size; default is the plain unnormalized sums.
    """

    gamma: float = 20.0
    lambda_f: float = 1.0
    lambda_c: float = 1.0
    normalize: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise ArgumentError(f"gamma must be positive, got {self.gamma}")
        if self.lambda_f < 0 or self.lambda_c < 0:
            raise ArgumentError("loss weights must be nonnegative")


@dataclass(frozen=True)
class SelectionTrace:
    """Per-input-point record of which sub-clouds were consumed, in order."""

    edges: tuple
    saturated: tuple

    def to_json(self) -> dict:
        return {
            "selections": [list(e) for e in self.edges],
            "saturated": [bool(s) for s in self.saturated],
        }


@dataclass(frozen=True)
class CcdResult:
    fidelity: float
    coverage: float
    total: float
    grad_points: np.ndarray
    grad_activations: np.ndarray
    trace: Optional[SelectionTrace] = None


def _check_inputs(x: PointCloud, subclouds: SubCloudSet, a) -> np.ndarray:
    if not isinstance(x, PointCloud):
        x = PointCloud(x)
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
    if subclouds.n_edges < 1:
        raise ArgumentError("need at least one sub-cloud")
    if a.shape[0] != subclouds.n_edges:
        raise ArgumentError(
            f"{a.shape[0]} activations for {subclouds.n_edges} sub-clouds"
        )
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ArgumentError("activation strengths must lie in [0, 1]")
    return a


def fidelity_loss(x: PointCloud, subclouds: SubCloudSet, a):
    """Activation-weighted reconstruction-to-input chamfer sum.

    Returns (value, grad_points, grad_activations). The point gradient of a
    reconstruction point is a_i * (p - p0*) / |p - p0*| toward its selected
    nearest input point; the activation gradient is that sub-cloud's summed
    nearest distances.
    """
    if not isinstance(x, PointCloud):
        x = PointCloud(x)
    a = _check_inputs(x, subclouds, a)
    value, grad_points, grad_a = _impl.fidelity_forward_backward(
        x.points, subclouds.points, subclouds.starts, a
    )
    return float(value), grad_points, grad_a


def coverage_loss(x: PointCloud, subclouds: SubCloudSet, a, gamma: float = 20.0):
    """Iterative per-input-point coverage loss.

    Returns (value, grad_points, grad_activations, trace). Activation
    gradients collect the selected distances, minus gamma for every input
    point that consumed the sub-cloud and still ended unsaturated.
    """
    if not isinstance(x, PointCloud):
        x = PointCloud(x)
    if not gamma > 0:
        raise ArgumentError(f"gamma must be positive, got {gamma}")
    a = _check_inputs(x, subclouds, a)
    value, grad_points, grad_a, sel_edges, sel_counts, saturated = (
        _impl.coverage_forward_backward(
            x.points, subclouds.points, subclouds.starts, a, float(gamma)
        )
    )
    trace = _trace_from_flat(sel_edges, sel_counts, saturated)
    return float(value), grad_points, grad_a, trace


def _trace_from_flat(sel_edges, sel_counts, saturated) -> SelectionTrace:
    edges = []
    cursor = 0
    for count in sel_counts:
        edges.append(tuple(int(e) for e in sel_edges[cursor : cursor + count]))
        cursor += count
    return SelectionTrace(edges=tuple(edges), saturated=tuple(bool(s) for s in saturated))


def ccd(
    x: PointCloud,
    subclouds: SubCloudSet,
    a,
    config: CcdConfig = CcdConfig(),
    with_trace: bool = False,
) -> CcdResult:
    """Weighted combination of fidelity and coverage with merged gradients."""
    f_value, f_gp, f_ga = fidelity_loss(x, subclouds, a)
    c_value, c_gp, c_ga, trace = coverage_loss(x, subclouds, a, config.gamma)
    if config.normalize:
        n_pool = float(subclouds.points.shape[0])
        n_input = float(len(x) if isinstance(x, PointCloud) else np.asarray(x).shape[0])
        f_value, f_gp, f_ga = f_value / n_pool, f_gp / n_pool, f_ga / n_pool
        c_value, c_gp, c_ga = c_value / n_input, c_gp / n_input, c_ga / n_input
    total = config.lambda_f * f_value + config.lambda_c * c_value
    grad_points = config.lambda_f * f_gp + config.lambda_c * c_gp
    grad_a = config.lambda_f * f_ga + config.lambda_c * c_ga
    return CcdResult(
        fidelity=float(f_value),
        coverage=float(c_value),
        total=float(total),
        grad_points=grad_points,
        grad_activations=grad_a,
        trace=trace if with_trace else None,
    )
