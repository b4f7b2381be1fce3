"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each row reports the best-of-N wall time per call for both kernel sets,
their ratio, and the largest output difference between them.
"""
import argparse
import timeit

import numpy as np

from memtrack import _pykernels, backend


def cases(rng):
    x = rng.normal(size=(8, 32, 32))
    w = rng.normal(size=(8, 8, 3, 3))
    b = rng.normal(size=8)
    pts = rng.uniform(-2, 34, size=(2, 4096))
    offsets = rng.normal(scale=1.5, size=(18, 32, 32))
    small = rng.normal(size=(20, 20))
    large = rng.normal(size=(120, 150))
    return [
        ("conv2d 8x32x32 k3 s1 p1", "conv2d", (x, w, b, 1, 1)),
        ("conv2d 8x32x32 k3 s2 p1", "conv2d", (x, w, b, 2, 1)),
        ("bilinear_sample 4096 pts", "bilinear_sample", (x, np.ascontiguousarray(pts[0]), np.ascontiguousarray(pts[1]))),
        ("deform_im2col 8x32x32 k3", "deform_im2col", (x, offsets, 3, 3, 1)),
        ("assignment 20x20", "linear_sum_assignment", (small,)),
        ("assignment 120x150", "linear_sum_assignment", (large,)),
    ]


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(float(np.max(np.abs(np.asarray(p) - np.asarray(q)), initial=0.0)) for p, q in zip(a, b))
    return float(np.max(np.abs(a - b)))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if backend.compiled_kernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    fast = backend.compiled_kernels
    rng = np.random.default_rng(0)
    print(f"{'case':<28}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}{'max diff':>12}")
    for label, name, call_args in cases(rng):
        py_fn, c_fn = getattr(_pykernels, name), getattr(fast, name)
        times = []
        for fn in (py_fn, c_fn):
            number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*call_args), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: fn(*call_args), number=number, repeat=args.repeat)) / number
            times.append(best * 1e3)
        diff = max_diff(py_fn(*call_args), c_fn(*call_args))
        print(f"{label:<28}{times[0]:>12.3f}{times[1]:>14.3f}{times[0] / times[1]:>9.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
