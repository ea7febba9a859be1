"""Thin array-protocol wrapper over the skelfit_v1_* C symbols.

The shared library is loaded with ctypes; every buffer passed across the
boundary is caller-owned (numpy allocates the outputs here), nothing is
retained between calls, and the symbols are reentrant. Values and gradients
are bit-identical to the in-process skelfit API on the same inputs.

See the package README for a custom-autograd adapter example.
"""

from __future__ import annotations

import ctypes
import glob
import os
from dataclasses import dataclass

import numpy as np

__version__ = "0.1.0"

_ERR_LEN = 256


class FfiError(RuntimeError):
    """Raised when a boundary call reports a nonzero error code."""

    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _find_library() -> str:
    here = os.path.dirname(__file__)
    candidates = glob.glob(os.path.join(here, "_native*.so")) + glob.glob(
        os.path.join(here, "_native*.dylib")
    )
    if not candidates:
        raise ImportError(
            "skelfit_ffi native library not built; run "
            "'pip install -e . --no-build-isolation' in the ffi directory"
        )
    return candidates[0]


_lib = ctypes.CDLL(_find_library())

_lib.skelfit_v1_version.restype = ctypes.c_char_p
_lib.skelfit_v1_version.argtypes = ()
_lib.skelfit_v1_edge_count.restype = ctypes.c_int64
_lib.skelfit_v1_edge_count.argtypes = (ctypes.c_int64,)

_f64p = np.ctypeslib.ndpointer(dtype=np.float64, flags="C_CONTIGUOUS")
_i64p = np.ctypeslib.ndpointer(dtype=np.int64, flags="C_CONTIGUOUS")

_lib.skelfit_v1_ccd_forward_backward.restype = ctypes.c_int
_lib.skelfit_v1_ccd_forward_backward.argtypes = (
    _f64p, ctypes.c_int64,  # input
    _f64p, ctypes.c_int64,  # pool
    _i64p, ctypes.c_int64,  # edge starts
    _f64p,                  # activations
    ctypes.c_double, ctypes.c_double, ctypes.c_double,
    _f64p, _f64p, _f64p,    # losses, grad points, grad activations
    ctypes.c_char_p, ctypes.c_int64,
)
_lib.skelfit_v1_plan_sampling.restype = ctypes.c_int
_lib.skelfit_v1_plan_sampling.argtypes = (
    _f64p, ctypes.c_int64, ctypes.c_int64, _i64p, ctypes.c_char_p, ctypes.c_int64
)
_lib.skelfit_v1_sample_skeleton.restype = ctypes.c_int
_lib.skelfit_v1_sample_skeleton.argtypes = (
    _f64p, ctypes.c_int64, _i64p, _f64p, ctypes.c_char_p, ctypes.c_int64
)


def version() -> str:
    return _lib.skelfit_v1_version().decode("ascii")


def edge_count(k: int) -> int:
    out = int(_lib.skelfit_v1_edge_count(k))
    if out < 0:
        raise FfiError(1, f"a skeleton needs at least 2 keypoints, got {k}")
    return out


def _points(arr, name) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != 3:
        raise FfiError(1, f"{name} must be an (N, 3) array, got shape {out.shape}")
    return out


def _call(code: int, err: ctypes.Array):
    if code != 0:
        raise FfiError(code, err.value.decode("utf-8", "replace"))


@dataclass(frozen=True)
class CcdValues:
    total: float
    fidelity: float
    coverage: float
    grad_points: np.ndarray
    grad_activations: np.ndarray


def ccd_forward_backward(
    input_points,
    subcloud_points,
    edge_starts,
    activations,
    gamma: float = 20.0,
    lambda_f: float = 1.0,
    lambda_c: float = 1.0,
) -> CcdValues:
    """Composite chamfer loss and gradients across the C boundary.

    ``edge_starts`` delimits sub-clouds inside the flat ``subcloud_points``
    buffer: sub-cloud i is rows edge_starts[i]:edge_starts[i+1].
    """
    x = _points(input_points, "input_points")
    pool = _points(subcloud_points, "subcloud_points")
    starts = np.ascontiguousarray(edge_starts, dtype=np.int64).reshape(-1)
    a = np.ascontiguousarray(activations, dtype=np.float64).reshape(-1)
    n_edges = starts.shape[0] - 1
    if n_edges != a.shape[0]:
        raise FfiError(1, f"{a.shape[0]} activations for {n_edges} sub-clouds")
    losses = np.zeros(3, dtype=np.float64)
    grad_points = np.zeros_like(pool)
    grad_acts = np.zeros(max(n_edges, 0), dtype=np.float64)
    err = ctypes.create_string_buffer(_ERR_LEN)
    _call(
        _lib.skelfit_v1_ccd_forward_backward(
            x, x.shape[0], pool, pool.shape[0], starts, n_edges, a,
            gamma, lambda_f, lambda_c, losses, grad_points, grad_acts, err, _ERR_LEN
        ),
        err,
    )
    return CcdValues(
        total=float(losses[0]),
        fidelity=float(losses[1]),
        coverage=float(losses[2]),
        grad_points=grad_points,
        grad_activations=grad_acts,
    )


def plan_sampling(keypoints, total_budget: int) -> np.ndarray:
    """Per-edge sample counts, proportional to edge length within rounding."""
    kp = _points(keypoints, "keypoints")
    counts = np.zeros(edge_count(kp.shape[0]), dtype=np.int64)
    err = ctypes.create_string_buffer(_ERR_LEN)
    _call(
        _lib.skelfit_v1_plan_sampling(kp, kp.shape[0], int(total_budget), counts, err, _ERR_LEN),
        err,
    )
    return counts


def sample_skeleton(keypoints, total_budget: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint-rule edge samples; returns (points (sum n_i, 3), counts)."""
    kp = _points(keypoints, "keypoints")
    counts = plan_sampling(kp, total_budget)
    out = np.zeros((int(counts.sum()), 3), dtype=np.float64)
    err = ctypes.create_string_buffer(_ERR_LEN)
    _call(_lib.skelfit_v1_sample_skeleton(kp, kp.shape[0], counts, out, err, _ERR_LEN), err)
    return out, counts


__all__ = [
    "CcdValues",
    "FfiError",
    "ccd_forward_backward",
    "edge_count",
    "plan_sampling",
    "sample_skeleton",
    "version",
]
