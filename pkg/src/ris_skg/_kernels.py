"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The two inner loops that dominate dataset generation and distillation are
batched multipath channel synthesis and the 81-column polynomial basis.
Both carry a ``@njit`` implementation and a vectorized numpy twin.  The
active backend is chosen once at import from ``RIS_SKG_BACKEND``:

    RIS_SKG_BACKEND=numba   force the jitted kernels (error if unavailable)
    RIS_SKG_BACKEND=numpy   force the pure-numpy fallback
    unset / auto            numba when importable, numpy otherwise

Both paths accumulate paths and multiply basis factors in the same order,
so results agree to floating-point round-off (the numpy/numba libm sin and
cos may differ in the last ulp).  ``benchmarks/bench_kernels.py`` compares
the two.
"""

import os

import numpy as np

_ENV_FLAG = "RIS_SKG_BACKEND"


def _pick_backend():
    requested = os.environ.get(_ENV_FLAG, "auto").lower()
    if requested not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_FLAG} must be auto, numba or numpy, got {requested!r}")
    if requested == "numpy":
        return "numpy", None
    try:
        import numba
    except ImportError:
        if requested == "numba":
            raise
        return "numpy", None
    return "numba", numba


BACKEND, _numba = _pick_backend()


# ---------------------------------------------------------------------------
# multipath channel synthesis
# ---------------------------------------------------------------------------

def _multipath_channels_numpy(gains, elev, azim, mx, my, spacing, wavelength):
    n, num_paths = gains.shape
    m = mx * my
    idx = np.arange(m)
    ygrid = (idx % mx).astype(np.float64)
    zgrid = np.floor(idx / my).astype(np.float64)
    k = 2.0 * np.pi / wavelength
    out = np.zeros((n, m), dtype=np.complex128)
    for path in range(num_paths):
        se = np.sin(elev[:, path])
        ay = se * np.sin(azim[:, path])
        az = np.cos(elev[:, path])
        phase = (k * spacing) * (ay[:, None] * ygrid[None, :] + az[:, None] * zgrid[None, :])
        out += gains[:, path, None] * (np.cos(phase) + 1j * np.sin(phase))
    return out


def _poly_basis_numpy(xr, xi, yr, yi):
    n = xr.shape[0]
    pxr = (np.ones(n), xr, xr * xr)
    pxi = (np.ones(n), xi, xi * xi)
    pyr = (np.ones(n), yr, yr * yr)
    pyi = (np.ones(n), yi, yi * yi)
    out = np.empty((n, 81), dtype=np.float64)
    col = 0
    for m in range(3):
        for nn in range(3):
            for p in range(3):
                for q in range(3):
                    out[:, col] = ((pxr[m] * pxi[nn]) * pyr[p]) * pyi[q]
                    col += 1
    return out


if BACKEND == "numba":
    from numba import njit

    @njit(cache=True)
    def _multipath_channels_numba(gains, elev, azim, mx, my, spacing, wavelength):
        n, num_paths = gains.shape
        m = mx * my
        k = 2.0 * np.pi / wavelength
        out = np.zeros((n, m), dtype=np.complex128)
        for i in range(n):
            for path in range(num_paths):
                se = np.sin(elev[i, path])
                ay = se * np.sin(azim[i, path])
                az = np.cos(elev[i, path])
                gain = gains[i, path]
                for j in range(m):
                    ygrid = float(j % mx)
                    zgrid = float(j // my)
                    phase = (k * spacing) * (ay * ygrid + az * zgrid)
                    out[i, j] += gain * complex(np.cos(phase), np.sin(phase))
        return out

    @njit(cache=True, inline="always")
    def _pow012(x, e):
        if e == 0:
            return 1.0
        if e == 1:
            return x
        return x * x

    @njit(cache=True)
    def _poly_basis_numba(xr, xi, yr, yi):
        n = xr.shape[0]
        out = np.empty((n, 81), dtype=np.float64)
        for i in range(n):
            col = 0
            for m in range(3):
                for nn in range(3):
                    for p in range(3):
                        for q in range(3):
                            v = _pow012(xr[i], m) * _pow012(xi[i], nn)
                            v = (v * _pow012(yr[i], p)) * _pow012(yi[i], q)
                            out[i, col] = v
                            col += 1
        return out

    multipath_channels = _multipath_channels_numba
    poly_basis_batch = _poly_basis_numba
else:
    multipath_channels = _multipath_channels_numpy
    poly_basis_batch = _poly_basis_numpy
