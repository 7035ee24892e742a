"""Timing comparison of the jitted kernels against the numpy fallback.

Run directly:  python benchmarks/bench_kernels.py [n_rounds]
The backend env flag is ignored here; both implementations are imported
explicitly and timed on identical inputs.
"""

import sys
import time

import numpy as np

from ris_skg._kernels import (_multipath_channels_numpy, _poly_basis_numpy,
                              BACKEND)

if BACKEND != "numba":
    sys.exit("numba backend unavailable; nothing to compare")

from ris_skg._kernels import _multipath_channels_numba, _poly_basis_numba


def time_fn(fn, *args, repeats=5):
    fn(*args)  # warm-up / jit compile
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(n=50_000):
    rng = np.random.default_rng(0)
    num_paths, mx, my = 10, 4, 4
    gains = rng.standard_normal((n, num_paths)) + 1j * rng.standard_normal((n, num_paths))
    elev = rng.uniform(-np.pi / 2, np.pi / 2, (n, num_paths))
    azim = rng.uniform(-np.pi / 2, np.pi / 2, (n, num_paths))
    args = (gains, elev, azim, mx, my, 0.025, 0.1)

    t_np = time_fn(_multipath_channels_numpy, *args)
    t_nb = time_fn(_multipath_channels_numba, *args)
    a = _multipath_channels_numpy(*args)
    b = _multipath_channels_numba(*args)
    err = np.abs(a - b).max() / np.abs(a).max()
    print(f"multipath_channels  n={n}  numpy {t_np * 1e3:8.1f} ms   "
          f"numba {t_nb * 1e3:8.1f} ms   speedup {t_np / t_nb:5.2f}x   rel dev {err:.2e}")

    xr, xi, yr, yi = (rng.standard_normal(n) for _ in range(4))
    t_np = time_fn(_poly_basis_numpy, xr, xi, yr, yi)
    t_nb = time_fn(_poly_basis_numba, xr, xi, yr, yi)
    a = _poly_basis_numpy(xr, xi, yr, yi)
    b = _poly_basis_numba(xr, xi, yr, yi)
    print(f"poly_basis_batch    n={n}  numpy {t_np * 1e3:8.1f} ms   "
          f"numba {t_nb * 1e3:8.1f} ms   speedup {t_np / t_nb:5.2f}x   "
          f"bit-exact {bool((a == b).all())}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 50_000)
