"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 200]

Kernel timings call both implementations in one process.  The end-to-end
rows run a full improved-Laplace evaluation in subprocesses with and without
ILAPLACE_DISABLE_NUMBA so the model closures bind to the selected path.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ilaplace import _kernels

END_TO_END = """
import time
from ilaplace.bench import run_method
run_method("gompertz-posterior", {"n": 50, "seed": 1}, "ilaplace-exact")  # compile / warm up
t = time.perf_counter()
run_method("gompertz-posterior", {"n": %d, "seed": 2}, "ilaplace-exact")
print(time.perf_counter() - t)
"""


def kernel_cases(rng):
    y = np.sort(rng.gamma(2.0, 0.2, size=400))
    thetas = np.column_stack([rng.normal(0.7, 0.3, 256), rng.normal(1.1, 0.3, 256)])
    yb = (rng.uniform(size=50) < 0.7).astype(float)
    u = rng.normal(size=50)
    us = rng.normal(size=(256, 50))
    ys = rng.normal(size=(256, 20))
    return [
        ("gompertz_value n=400", "gompertz_value", (0.7, 1.1, y)),
        ("gompertz_derivs n=400", "gompertz_derivs", (0.7, 1.1, y)),
        ("gompertz_batch 256x400", "gompertz_batch", (thetas, y)),
        ("glmm_value n=50", "glmm_value", (u, yb, 0.5, 1.0)),
        ("glmm_grad n=50", "glmm_grad", (u, yb, 0.5, 1.0)),
        ("glmm_batch 256x50", "glmm_batch", (us, yb, 0.5, 1.0)),
        ("skewt_batch 256x20", "skewt_batch", (ys, 4.0, 1.0, 3.0, -2.0)),
    ]


def time_call(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=5)) / repeat


def end_to_end(n, disable):
    env = dict(os.environ, ILAPLACE_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END % n], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--sizes", default="100,1000", help="Gompertz n for end-to-end rows")
    args = parser.parse_args(argv)
    if _kernels.numba_impl is None:
        sys.exit("numba is not importable (or ILAPLACE_DISABLE_NUMBA is set); nothing to compare")

    print(f"{'case':<28}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>10}")
    for label, name, fn_args in kernel_cases(np.random.default_rng(0)):
        t_np = time_call(getattr(_kernels.numpy_impl, name), fn_args, args.repeat)
        t_nb = time_call(getattr(_kernels.numba_impl, name), fn_args, args.repeat)
        print(f"{label:<28}{1e6 * t_np:>12.2f}{1e6 * t_nb:>12.2f}{t_np / t_nb:>10.2f}")

    print()
    print(f"{'end to end':<28}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for n in (int(v) for v in args.sizes.split(",")):
        t_np = end_to_end(n, True)
        t_nb = end_to_end(n, False)
        print(f"{'gompertz iL n=%d' % n:<28}{1e3 * t_np:>12.1f}{1e3 * t_nb:>12.1f}"
              f"{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
