"""Pure-numpy composite-chamfer kernels (fallback backend).

The compiled backend in ``_ccd_kernel.pyx`` mirrors this module operation for
operation, and the values must agree bit for bit. That constrains the
arithmetic here:

* distances are sqrt((dx*dx + dy*dy) + dz*dz), evaluated left to right;
* every reduction that a C loop would do sequentially is done with
  ``cumsum`` (strictly sequential) instead of ``sum`` (pairwise);
* accumulation into the loss and gradient buffers follows input order:
  input points ascending, selections in selection order.

Ties everywhere resolve to the lowest (edge index, point index) pair, which
is exactly what first-occurrence ``argmin`` delivers on the flat layout.
"""

from __future__ import annotations

import numpy as np

_ZERO_GUARD = 1e-12
# Cap scratch distance blocks at ~32 MB.
_CHUNK_ELEMS = 4_000_000


def _seq_sum(values: np.ndarray) -> float:
    """Strictly sequential (left-to-right) sum; matches a scalar C loop."""
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def _distance_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances, rows of ``a`` against rows of ``b``."""
    dx = a[:, 0][:, None] - b[None, :, 0]
    dy = a[:, 1][:, None] - b[None, :, 1]
    dz = a[:, 2][:, None] - b[None, :, 2]
    return np.sqrt((dx * dx + dy * dy) + dz * dz)


def fidelity_forward_backward(x, pool, starts, a):
    """Activation-weighted sum of pool-to-input nearest distances.

    Returns (value, grad_pool (S, 3), grad_a (E,)).
    """
    n_pool = pool.shape[0]
    nn_idx = np.empty(n_pool, dtype=np.int64)
    nn_dist = np.empty(n_pool, dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, x.shape[0]))
    for lo in range(0, n_pool, step):
        hi = min(lo + step, n_pool)
        block = _distance_block(pool[lo:hi], x)
        am = np.argmin(block, axis=1)
        nn_idx[lo:hi] = am
        nn_dist[lo:hi] = block[np.arange(hi - lo), am]

    n_edges = starts.shape[0] - 1
    grad_a = np.zeros(n_edges, dtype=np.float64)
    value = 0.0
    for e in range(n_edges):
        s_e = _seq_sum(nn_dist[starts[e] : starts[e + 1]])
        grad_a[e] = s_e
        value += a[e] * s_e

    a_per_point = np.repeat(a, np.diff(starts))
    coeff = np.zeros(n_pool, dtype=np.float64)
    safe = nn_dist >= _ZERO_GUARD
    coeff[safe] = a_per_point[safe] / nn_dist[safe]
    grad_pool = coeff[:, None] * (pool - x[nn_idx])
    return value, grad_pool, grad_a


def coverage_forward_backward(x, pool, starts, a, gamma):
    """Per-input-point iterative sub-cloud selection (the coverage loss).

    For each input point: repeatedly take the nearest remaining
    reconstruction point, charge a_i * distance, drop that whole sub-cloud,
    and stop once the selected activations reach 1; any unsaturated
    remainder is charged gamma * (1 - w).

    Returns (value, grad_pool, grad_a, sel_edges, sel_counts, saturated)
    where the last three encode the per-point selection trace (edges consumed
    in order, flattened).
    """
    n_input = x.shape[0]
    n_edges = starts.shape[0] - 1

    # Nearest candidate per (input point, sub-cloud): distance and pool index.
    cand_dist = np.empty((n_input, n_edges), dtype=np.float64)
    cand_idx = np.empty((n_input, n_edges), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, pool.shape[0]))
    for lo in range(0, n_input, step):
        hi = min(lo + step, n_input)
        block = _distance_block(x[lo:hi], pool)
        rows = np.arange(hi - lo)
        for e in range(n_edges):
            sub = block[:, starts[e] : starts[e + 1]]
            am = np.argmin(sub, axis=1)
            cand_dist[lo:hi, e] = sub[rows, am]
            cand_idx[lo:hi, e] = am + starts[e]

    grad_pool = np.zeros_like(pool)
    grad_a = np.zeros(n_edges, dtype=np.float64)
    sel_edges = np.empty(n_input * n_edges, dtype=np.int32)
    sel_counts = np.zeros(n_input, dtype=np.int32)
    saturated = np.zeros(n_input, dtype=np.uint8)
    value = 0.0
    cursor = 0
    for q in range(n_input):
        drow = cand_dist[q]
        order = np.argsort(drow, kind="stable")  # ties keep edge order
        w = 0.0
        taken = 0
        for e in order:
            e = int(e)
            d = float(drow[e])
            value += a[e] * d
            grad_a[e] += d
            if d >= _ZERO_GUARD:
                pt = int(cand_idx[q, e])
                coeff = a[e] / d
                grad_pool[pt, 0] += coeff * (pool[pt, 0] - x[q, 0])
                grad_pool[pt, 1] += coeff * (pool[pt, 1] - x[q, 1])
                grad_pool[pt, 2] += coeff * (pool[pt, 2] - x[q, 2])
            sel_edges[cursor + taken] = e
            taken += 1
            w += a[e]
            if w >= 1.0:
                saturated[q] = 1
                break
        if w < 1.0:
            value += gamma * (1.0 - w)
            for s in range(taken):
                grad_a[sel_edges[cursor + s]] -= gamma
        sel_counts[q] = taken
        cursor += taken
    return value, grad_pool, grad_a, sel_edges[:cursor].copy(), sel_counts, saturated
