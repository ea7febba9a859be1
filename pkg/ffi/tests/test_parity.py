"""Boundary parity: the C symbols must agree bit for bit with the
in-process skelfit API, and error paths must return codes instead of
aborting."""

import numpy as np
import pytest

import skelfit as sf
import skelfit_ffi as ffi
from skelfit.ccd import CcdConfig
from skelfit.skeleton import Skeleton, SubCloudSet


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def random_instance(rng):
    n = int(rng.integers(1, 65))
    n_edges = int(rng.integers(1, 9))
    sizes = rng.integers(1, 9, size=n_edges)
    x = rng.uniform(-1.0, 1.0, size=(n, 3))
    pool = rng.uniform(-1.0, 1.0, size=(int(sizes.sum()), 3))
    if pool.shape[0] > 2 and rng.random() < 0.5:
        i, j = rng.integers(0, pool.shape[0], size=2)
        pool[i] = pool[j]
    if rng.random() < 0.3:
        pool[int(rng.integers(0, pool.shape[0]))] = x[int(rng.integers(0, n))]
    a = rng.uniform(0.0, 1.0, size=n_edges)
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return x, pool, starts, a


def test_acceptance_10_ccd_parity_100_instances():
    rng = philox(77)
    for _ in range(100):
        x, pool, starts, a = random_instance(rng)
        gamma = float(rng.choice([20.0, 3.0, 0.5]))
        lam_f = float(rng.choice([1.0, 0.5, 2.0]))
        lam_c = float(rng.choice([1.0, 0.25]))
        out = ffi.ccd_forward_backward(
            x, pool, starts, a, gamma=gamma, lambda_f=lam_f, lambda_c=lam_c
        )
        ref = sf.ccd(
            sf.PointCloud(x),
            SubCloudSet(pool, starts),
            a,
            CcdConfig(gamma=gamma, lambda_f=lam_f, lambda_c=lam_c),
        )
        assert out.total == ref.total
        assert out.fidelity == ref.fidelity
        assert out.coverage == ref.coverage
        assert np.array_equal(out.grad_points, ref.grad_points)
        assert np.array_equal(out.grad_activations, ref.grad_activations)
    print("[ACCEPTANCE 10] PASS: 100 randomized instances bit-identical across the boundary")


def test_hand_trace_across_boundary():
    out = ffi.ccd_forward_backward(
        np.zeros((1, 3)),
        np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]),
        np.array([0, 1, 2]),
        np.array([0.6, 0.5]),
    )
    assert out.coverage == 0.6 * 1.0 + 0.5 * 2.0


def test_sample_skeleton_parity():
    rng = philox(78)
    for _ in range(25):
        k = int(rng.integers(2, 8))
        kp = rng.uniform(-1.0, 1.0, size=(k, 3))
        budget = int(rng.integers(k * (k - 1) // 2, 512))
        points, counts = ffi.sample_skeleton(kp, budget)
        skeleton = Skeleton.from_keypoints(kp)
        plan = sf.plan_sampling(skeleton, budget)
        ref = sf.sample_edges(skeleton, plan)
        assert np.array_equal(counts, plan.counts)
        assert np.array_equal(points, ref.points)


def test_zero_length_activations_error_code():
    with pytest.raises(ffi.FfiError) as err:
        ffi.ccd_forward_backward(
            np.zeros((1, 3)), np.zeros((1, 3)), np.array([0, 1]), np.zeros(0)
        )
    assert err.value.code == 1


def test_bad_layout_error_code():
    with pytest.raises(ffi.FfiError):
        ffi.ccd_forward_backward(
            np.zeros((1, 3)),
            np.zeros((2, 3)),
            np.array([0, 1]),  # does not cover the pool
            np.array([0.5]),
        )


def test_bad_gamma_error_code():
    with pytest.raises(ffi.FfiError):
        ffi.ccd_forward_backward(
            np.zeros((1, 3)), np.ones((1, 3)), np.array([0, 1]), np.array([0.5]), gamma=0.0
        )


def test_edge_count():
    assert ffi.edge_count(4) == 6
    with pytest.raises(ffi.FfiError):
        ffi.edge_count(1)


def test_plan_rejects_small_budget():
    with pytest.raises(ffi.FfiError):
        ffi.plan_sampling(np.zeros((4, 3)), 2)


if __name__ == "__main__":
    test_acceptance_10_ccd_parity_100_instances()
