"""Compare the compiled and NumPy kernels on workloads the experiments use.

Run with ``python benchmarks/bench_kernels.py``. Both backends are timed in
the same process; outputs are checked for equality before timing.
"""
import argparse
import timeit

import numpy as np

from pinned_string import _pykernels, kernels

try:
    from pinned_string import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def ou_case(replicas=128, modes=4096, seed=0):
    rng = np.random.default_rng(seed)
    state = rng.standard_normal((replicas, modes))
    decay = np.exp(-np.geomspace(1e-6, 1e6, modes) / 16)
    sd = np.sqrt(1 - decay**2)
    normals = rng.standard_normal((replicas, modes))
    return state, decay, sd, normals


def path_case(n_points=4097, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal((n_points - 1, dim)) * np.sqrt(2.0 / (n_points - 1))
    return np.vstack([np.zeros(dim), np.cumsum(steps, axis=0)])


def bench(label, fn, number):
    t = min(timeit.repeat(fn, number=number, repeat=3)) / number
    return label, t


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="fewer repetitions")
    args = ap.parse_args(argv)
    number = 2 if args.quick else 10
    impls = [("numpy", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])
    rows = []

    state, decay, sd, normals = ou_case()
    for name, impl in impls:
        s = state.copy()
        rows.append(bench(f"ou_advance 128x4096 [{name}]",
                          lambda impl=impl, s=s: kernels.ou_advance(s, decay, sd, normals, impl=impl), number))

    cases = [("BM 2-d, 4097 pts, eps=1/16", path_case(4097, 2), 1 / 16, False),
             ("BM 2-d, 4097 pts, eps=1/128 outer", path_case(4097, 2), 1 / 128, True),
             ("V(R) 4-d, 4096 pts, eps=1/2 outer", path_case(4096, 4) * 2, 0.5, True)]
    for label, pts, eps, outer in cases:
        ref = None
        for name, impl in impls:
            keys = kernels.occupied_cells(pts, eps, eps / 2, outer, impl=impl)
            if ref is None:
                ref = keys
            elif not np.array_equal(ref, keys):
                raise SystemExit(f"backend mismatch on {label}")
            rows.append(bench(f"occupied_cells {label} [{name}]",
                              lambda impl=impl: kernels.occupied_cells(pts, eps, eps / 2, outer, impl=impl),
                              max(1, number // 2)))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  ms/call")
    for label, t in rows:
        print(f"{label:<{width}}  {1e3 * t:8.3f}")
    if _ckernels is None:
        print("compiled extension not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
