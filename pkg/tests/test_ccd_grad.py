"""Finite-difference validation of the analytic CCD gradients.

The selection structure is frozen in the analytic gradients, so coordinates
within the 1e-3 margin of a structural tie (nearest-neighbor flips,
selection-order flips, stopping-rule boundaries) are excluded; everywhere
else central differences must agree to 1e-4 relative.
"""

import numpy as np

import skelfit as sf
from skelfit.skeleton import SubCloudSet

from conftest import (
    FD_H,
    central_difference,
    grads_match,
    philox,
    random_grad_instance,
    tie_exclusions,
)


def _coverage_value(x, pool, starts, a, gamma):
    v, *_ = sf.coverage_loss(sf.PointCloud(x), SubCloudSet(pool, starts), a, gamma)
    return v


def _fidelity_value(x, pool, starts, a):
    v, *_ = sf.fidelity_loss(sf.PointCloud(x), SubCloudSet(pool, starts), a)
    return v


def check_instance(cloud, subs, a, gamma=20.0):
    x = cloud.points
    pool = subs.points
    starts = subs.starts
    point_ok, act_ok = tie_exclusions(cloud, subs, a)
    checked = 0

    _, f_gp, f_ga = sf.fidelity_loss(cloud, subs, a)
    _, c_gp, c_ga, _ = sf.coverage_loss(cloud, subs, a, gamma)

    for s in range(pool.shape[0]):
        if not point_ok[s]:
            continue
        for c in range(3):
            def bump(delta, s=s, c=c):
                p = pool.copy()
                p[s, c] += delta
                return p

            fd_f = central_difference(lambda d: _fidelity_value(x, bump(d), starts, a))
            fd_c = central_difference(lambda d: _coverage_value(x, bump(d), starts, a, gamma))
            assert grads_match(f_gp[s, c], fd_f), (s, c, f_gp[s, c], fd_f)
            assert grads_match(c_gp[s, c], fd_c), (s, c, c_gp[s, c], fd_c)
            checked += 1

    for e in range(subs.n_edges):
        def bump_a(delta, e=e):
            out = a.copy()
            out[e] += delta
            return out

        fd_f = central_difference(lambda d: _fidelity_value(x, pool, starts, bump_a(d)))
        assert grads_match(f_ga[e], fd_f), (e, f_ga[e], fd_f)
        if act_ok[e]:
            fd_c = central_difference(lambda d: _coverage_value(x, pool, starts, bump_a(d), gamma))
            assert grads_match(c_ga[e], fd_c), (e, c_ga[e], fd_c)
            checked += 1
    return checked


class TestGradients:
    def test_random_configurations(self):
        rng = philox(100)
        total_checked = 0
        for _ in range(20):
            cloud, subs, a = random_grad_instance(rng)
            total_checked += check_instance(cloud, subs, a)
        assert total_checked > 100  # the margin rule must not eat everything

    def test_gamma_variants(self):
        rng = philox(101)
        for gamma in (0.5, 3.0, 20.0):
            cloud, subs, a = random_grad_instance(rng)
            check_instance(cloud, subs, a, gamma=gamma)

    def test_zero_distance_subgradient_is_zero(self):
        x = sf.PointCloud([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        subs = SubCloudSet(np.array([[0.0, 0.0, 0.0]]), np.array([0, 1]))
        _, f_gp, _ = sf.fidelity_loss(x, subs, [0.8])
        _, c_gp, _, _ = sf.coverage_loss(x, subs, [0.8], 20.0)
        assert np.all(f_gp == 0.0)
        # the coincident input point contributes nothing; the far one pulls
        assert np.all(np.isfinite(c_gp))

    def test_offset_penalty_gradient(self):
        rng = philox(102)
        offsets = rng.uniform(-0.3, 0.3, size=(6, 3))
        value, grad = sf.offset_penalty(offsets, lambda_reg=2.5)
        assert value >= 0.0
        for i in range(offsets.shape[0]):
            for c in range(3):
                def bump(delta, i=i, c=c):
                    o = offsets.copy()
                    o[i, c] += delta
                    return sf.offset_penalty(o, lambda_reg=2.5)[0]

                fd = (bump(FD_H) - bump(-FD_H)) / (2 * FD_H)
                assert grads_match(grad[i, c], fd)
