"""Benchmark the compiled composite-chamfer kernels against the numpy
fallback, and confirm their results agree bit for bit while timing them.

Usage: python benchmarks/bench_ccd.py [--n 2048] [--k 10] [--budget 2048]
                                      [--repeats 5]
"""

import argparse
import time

import numpy as np

import skelfit as sf
from skelfit import _ccd_python
from skelfit.skeleton import Skeleton, plan_sampling, sample_edges

try:
    from skelfit import _ccd_kernel
except ImportError:
    _ccd_kernel = None


def build_instance(n, k, budget, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    cloud = sf.PointCloud(rng.uniform(-0.5, 0.5, size=(n, 3)))
    skeleton = Skeleton.from_keypoints(rng.uniform(-0.5, 0.5, size=(k, 3)))
    subclouds = sample_edges(skeleton, plan_sampling(skeleton, budget))
    a = rng.uniform(0.0, 1.0, size=skeleton.edges.shape[0])
    return cloud, subclouds, a


def run(impl, cloud, subclouds, a, repeats):
    args = (cloud.points, subclouds.points, subclouds.starts, a)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        lf, *_ = impl.fidelity_forward_backward(*args)
        lc, *_ = impl.coverage_forward_backward(*args, 20.0)
        best = min(best, time.perf_counter() - t0)
    return best, float(lf), float(lc)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=2048, help="input cloud size")
    parser.add_argument("--k", type=int, default=10, help="keypoint count")
    parser.add_argument("--budget", type=int, default=2048, help="reconstruction sample budget")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    cloud, subclouds, a = build_instance(args.n, args.k, args.budget)
    print(
        f"instance: N={len(cloud)} edges={subclouds.n_edges} "
        f"pool={subclouds.points.shape[0]}"
    )

    t_py, lf_py, lc_py = run(_ccd_python, cloud, subclouds, a, args.repeats)
    print(f"python   backend: {t_py * 1e3:8.1f} ms  (L_f={lf_py:.6f}, L_c={lc_py:.6f})")
    if _ccd_kernel is None:
        print("compiled backend: not built")
        return
    t_cy, lf_cy, lc_cy = run(_ccd_kernel, cloud, subclouds, a, args.repeats)
    print(f"compiled backend: {t_cy * 1e3:8.1f} ms  (L_f={lf_cy:.6f}, L_c={lc_cy:.6f})")
    print(f"speedup: {t_py / t_cy:.1f}x")
    identical = lf_py == lf_cy and lc_py == lc_cy
    print(f"bitwise identical values: {identical}")
    if not identical:
        raise SystemExit("backend mismatch")


if __name__ == "__main__":
    main()
