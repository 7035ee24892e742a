"""Multipath channel and two-way probing simulator for a reflective array.

The Alice-Bob link is carried entirely by an amplifying reflective surface
of ``mx * my`` elements.  Per coherence block both end channels are drawn
as sums of planar-array path responses, the surface applies a random phase
vector, and the parties exchange constant-magnitude random-phase signals.
All randomness flows through a caller-supplied ``numpy.random.Generator``
so every artifact is reproducible from a seed.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from ._kernels import multipath_channels

TWO_PI = 2.0 * np.pi


@dataclass
class SystemParams:
    """Physical constants of one simulated deployment.

    ``c0`` is the linear path-loss power ratio at the 1 m reference
    distance, ``alpha`` the path-loss exponent, ``amp_ae`` the linear
    amplification power of the reflective surface.  ``elem_spacing``
    defaults to a quarter wavelength.
    """

    c0: float = 1e-3
    alpha: float = 3.0
    num_paths: int = 10
    pt: float = 0.1
    sigma2: float = 1e-11
    amp_ae: float = 1e4
    mx: int = 40
    my: int = 40
    wavelength: float = 0.1
    elem_spacing: float | None = None

    def __post_init__(self):
        if self.elem_spacing is None:
            self.elem_spacing = self.wavelength / 4.0
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if not 2.0 <= self.alpha <= 4.0:
            raise ValueError("alpha must lie in [2, 4]")
        if self.num_paths < 1:
            raise ValueError("need at least one path")
        if self.pt <= 0:
            raise ValueError("pt must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if self.amp_ae < 1:
            raise ValueError("amp_ae must be at least 1")
        if self.mx < 1 or self.my < 1:
            raise ValueError("grid dimensions must be at least 1")

    @property
    def m(self):
        return self.mx * self.my

    def path_gain_var(self, dist):
        """Total per-element channel power at LoS distance ``dist``."""
        return self.c0 * dist ** (-self.alpha)


@dataclass
class LinkGeometry:
    """LoS distance plus per-path elevation/azimuth angle pairs."""

    dist: float
    elev: np.ndarray
    azim: np.ndarray

    def __post_init__(self):
        self.elev = np.atleast_1d(np.asarray(self.elev, dtype=np.float64))
        self.azim = np.atleast_1d(np.asarray(self.azim, dtype=np.float64))
        if self.dist < 1.0:
            raise ValueError("distance below the 1 m reference")
        if self.elev.shape != self.azim.shape:
            raise ValueError("elevation/azimuth shape mismatch")
        half = np.pi / 2 + 1e-12
        if np.any(np.abs(self.elev) > half) or np.any(np.abs(self.azim) > half):
            raise ValueError("angles must lie in [-pi/2, pi/2]")


@dataclass
class GeometryGrid:
    """Evenly split angle half-space and distance interval.

    Training geometries are drawn uniformly from this grid; the split
    counts control how fine the coverage is.
    """

    angle_splits: int = 100
    dist_splits: int = 1000
    dist_min: float = 1.0
    dist_max: float = 200.0

    def __post_init__(self):
        if self.dist_min < 1.0:
            raise ValueError("grid distances start at the 1 m reference")
        if self.dist_max < self.dist_min:
            raise ValueError("empty distance range")

    def angle_values(self):
        return np.linspace(-np.pi / 2, np.pi / 2, self.angle_splits)

    def dist_values(self):
        return np.linspace(self.dist_min, self.dist_max, self.dist_splits)


@dataclass
class ProbeRound:
    """One two-way probing exchange within a single coherence block.

    ``g_ab`` is the ground-truth combined channel, kept for diagnostics
    only; no estimator below is allowed to read it.
    """

    x_a: complex
    x_b: complex
    y_a: complex
    y_b: complex
    y_r_a: np.ndarray
    y_r_b: np.ndarray
    w: np.ndarray
    g_ab: complex


SPLIT_FRACTIONS = (0.7, 0.2, 0.1)


@dataclass
class Dataset:
    """Array-backed collection of probe rounds with 70/20/10 split tags.

    ``dist_a``/``dist_b`` are in-memory diagnostics (sampled LoS
    distances); they are not part of the persisted record format.
    """

    params: SystemParams
    x_a: np.ndarray
    x_b: np.ndarray
    y_a: np.ndarray
    y_b: np.ndarray
    y_r_a: np.ndarray
    y_r_b: np.ndarray
    w: np.ndarray
    g_ab: np.ndarray
    split_fractions: tuple = SPLIT_FRACTIONS
    dist_a: np.ndarray | None = None
    dist_b: np.ndarray | None = None

    @property
    def n(self):
        return self.x_a.shape[0]

    @property
    def m(self):
        return self.w.shape[1]

    def _split_bounds(self):
        n_train = int(self.split_fractions[0] * self.n)
        n_val = int(self.split_fractions[1] * self.n)
        return n_train, n_train + n_val

    def split(self, name):
        """Return the view of one split: ``train``, ``val`` or ``test``."""
        a, b = self._split_bounds()
        sel = {"train": slice(0, a), "val": slice(a, b), "test": slice(b, self.n)}[name]
        return Dataset(
            params=self.params,
            x_a=self.x_a[sel], x_b=self.x_b[sel],
            y_a=self.y_a[sel], y_b=self.y_b[sel],
            y_r_a=self.y_r_a[sel], y_r_b=self.y_r_b[sel],
            w=self.w[sel], g_ab=self.g_ab[sel],
            split_fractions=self.split_fractions,
            dist_a=None if self.dist_a is None else self.dist_a[sel],
            dist_b=None if self.dist_b is None else self.dist_b[sel],
        )

    def round(self, i):
        return ProbeRound(
            x_a=complex(self.x_a[i]), x_b=complex(self.x_b[i]),
            y_a=complex(self.y_a[i]), y_b=complex(self.y_b[i]),
            y_r_a=self.y_r_a[i].copy(), y_r_b=self.y_r_b[i].copy(),
            w=self.w[i].copy(), g_ab=complex(self.g_ab[i]),
        )


def steering_vector(elev, azim, params):
    """Planar-array response for one elevation/azimuth pair.

    Element ``m`` sits at a quarter-wavelength grid offset and contributes
    a unit-modulus phase term; broadside simply means all phases align.
    """
    half = np.pi / 2 + 1e-12
    if abs(elev) > half or abs(azim) > half:
        raise ValueError("angles must lie in [-pi/2, pi/2]")
    m = params.m
    idx = np.arange(m)
    ygrid = idx % params.mx
    zgrid = idx // params.my
    k = TWO_PI / params.wavelength
    phase = (k * params.elem_spacing) * (
        np.sin(elev) * np.sin(azim) * ygrid + np.cos(elev) * zgrid
    )
    return np.cos(phase) + 1j * np.sin(phase)


def _complex_normal(rng, scale2, shape):
    """CN(0, scale2) samples: independent re/im with variance scale2/2."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(scale2 / 2.0) * (re + 1j * im)


def sample_direct_channel(params, geom, rng):
    """Draw one end channel as a sum of Gaussian-weighted path responses.

    Per-path gains carry variance ``c0 * dist**-alpha / num_paths`` so the
    per-element total stays at ``c0 * dist**-alpha`` regardless of the
    path count.
    """
    num_paths = geom.elev.shape[0]
    var = params.path_gain_var(geom.dist) / num_paths
    gains = _complex_normal(rng, var, (1, num_paths))
    out = multipath_channels(
        gains, geom.elev[None, :], geom.azim[None, :],
        params.mx, params.my, params.elem_spacing, params.wavelength,
    )
    return out[0]


def sample_ris_phase(params, rng):
    """Phase vector of the surface: uniform phases at magnitude sqrt(amp)."""
    phases = rng.uniform(0.0, TWO_PI, params.m)
    return np.sqrt(params.amp_ae) * (np.cos(phases) + 1j * np.sin(phases))


def combined_channel(g_ar, g_br, w):
    """End-to-end scalar channel through the phased surface.

    The two end channels are multiplied with explicit real arithmetic
    (separate multiply and add passes, no fused contraction) so swapping
    them is bit-exact, then weighted and summed in element order.
    """
    g_ar = np.asarray(g_ar)
    g_br = np.asarray(g_br)
    w = np.asarray(w)
    if not (g_ar.shape == g_br.shape == w.shape):
        raise ValueError("channel/phase length mismatch")
    p_re = g_ar.real * g_br.real - g_ar.imag * g_br.imag
    p_im = g_ar.real * g_br.imag + g_ar.imag * g_br.real
    re = w.real * p_re - w.imag * p_im
    im = w.real * p_im + w.imag * p_re
    return complex(re.sum() + 1j * im.sum())


def sample_probe_round(g_ar, g_br, w, params, rng):
    """Simulate one two-way exchange over fixed channels.

    Draw order is fixed: x_a phase, x_b phase, n_a, n_b, n_r_a, n_r_b.
    """
    m = np.asarray(w).shape[0]
    g = combined_channel(g_ar, g_br, w)
    amp = np.sqrt(params.pt)
    iota_a = rng.uniform(0.0, TWO_PI)
    iota_b = rng.uniform(0.0, TWO_PI)
    x_a = amp * complex(np.cos(iota_a), np.sin(iota_a))
    x_b = amp * complex(np.cos(iota_b), np.sin(iota_b))
    n_a = complex(_complex_normal(rng, params.sigma2, ()))
    n_b = complex(_complex_normal(rng, params.sigma2, ()))
    n_r_a = _complex_normal(rng, params.sigma2, m)
    n_r_b = _complex_normal(rng, params.sigma2, m)
    return ProbeRound(
        x_a=x_a, x_b=x_b,
        y_a=g * x_b + n_a,
        y_b=g * x_a + n_b,
        y_r_a=np.asarray(g_ar) * x_a + n_r_a,
        y_r_b=np.asarray(g_br) * x_b + n_r_b,
        w=np.asarray(w),
        g_ab=g,
    )


def generate_dataset(params, grid, n, rng):
    """Sample ``n`` probe rounds over geometries drawn from the grid.

    Geometry draws, channel gains, surface phases, signals and noises are
    all vectorized in a fixed order, so a given seed reproduces the exact
    same dataset on either kernel backend up to libm round-off.
    """
    if n < 1:
        raise ValueError("need at least one round")
    m = params.m
    num_paths = params.num_paths
    angles = grid.angle_values()
    dists = grid.dist_values()

    dist_a = dists[rng.integers(0, dists.size, n)]
    dist_b = dists[rng.integers(0, dists.size, n)]
    elev_a = angles[rng.integers(0, angles.size, (n, num_paths))]
    azim_a = angles[rng.integers(0, angles.size, (n, num_paths))]
    elev_b = angles[rng.integers(0, angles.size, (n, num_paths))]
    azim_b = angles[rng.integers(0, angles.size, (n, num_paths))]

    var_a = params.path_gain_var(dist_a) / num_paths
    var_b = params.path_gain_var(dist_b) / num_paths
    gains_a = _complex_normal(rng, 1.0, (n, num_paths)) * np.sqrt(var_a)[:, None]
    gains_b = _complex_normal(rng, 1.0, (n, num_paths)) * np.sqrt(var_b)[:, None]

    g_ar = multipath_channels(gains_a, elev_a, azim_a,
                              params.mx, params.my, params.elem_spacing, params.wavelength)
    g_br = multipath_channels(gains_b, elev_b, azim_b,
                              params.mx, params.my, params.elem_spacing, params.wavelength)

    phases = rng.uniform(0.0, TWO_PI, (n, m))
    w = np.sqrt(params.amp_ae) * (np.cos(phases) + 1j * np.sin(phases))
    g_ab = (w * (g_ar * g_br)).sum(axis=1)

    amp = np.sqrt(params.pt)
    iota = rng.uniform(0.0, TWO_PI, (n, 2))
    x_a = amp * (np.cos(iota[:, 0]) + 1j * np.sin(iota[:, 0]))
    x_b = amp * (np.cos(iota[:, 1]) + 1j * np.sin(iota[:, 1]))

    n_a = _complex_normal(rng, params.sigma2, n)
    n_b = _complex_normal(rng, params.sigma2, n)
    n_r_a = _complex_normal(rng, params.sigma2, (n, m))
    n_r_b = _complex_normal(rng, params.sigma2, (n, m))

    return Dataset(
        params=params,
        x_a=x_a, x_b=x_b,
        y_a=g_ab * x_b + n_a,
        y_b=g_ab * x_a + n_b,
        y_r_a=g_ar * x_a[:, None] + n_r_a,
        y_r_b=g_br * x_b[:, None] + n_r_b,
        w=w, g_ab=g_ab,
        dist_a=dist_a, dist_b=dist_b,
    )


# ---------------------------------------------------------------------------
# persistence: versioned binary record format
# ---------------------------------------------------------------------------

_MAGIC = b"RSKG"
FORMAT_VERSION = 1


def _record_width(m):
    # x_a, x_b, y_a, y_b, g_ab scalars plus three length-m vectors, re/im pairs
    return 10 + 6 * m


def save_dataset(ds, path):
    """Write the versioned binary record format.

    Header: magic, u32 version, u32 M, u64 N, length-prefixed JSON params
    snapshot.  Then per-round little-endian float64 re/im pairs in field
    order x_a, x_b, y_a, y_b, y_r_a[M], y_r_b[M], w[M], g_ab.
    """
    m, n = ds.m, ds.n
    header = {
        "format_version": FORMAT_VERSION,
        "m": m,
        "n": n,
        "split_fractions": list(ds.split_fractions),
        "params": asdict(ds.params),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    rec = np.empty((n, _record_width(m)), dtype="<f8")
    rec[:, 0] = ds.x_a.real
    rec[:, 1] = ds.x_a.imag
    rec[:, 2] = ds.x_b.real
    rec[:, 3] = ds.x_b.imag
    rec[:, 4] = ds.y_a.real
    rec[:, 5] = ds.y_a.imag
    rec[:, 6] = ds.y_b.real
    rec[:, 7] = ds.y_b.imag
    off = 8
    for arr in (ds.y_r_a, ds.y_r_b, ds.w):
        rec[:, off:off + 2 * m:2] = arr.real
        rec[:, off + 1:off + 2 * m:2] = arr.imag
        off += 2 * m
    rec[:, off] = ds.g_ab.real
    rec[:, off + 1] = ds.g_ab.imag
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint32(m).tobytes())
        fh.write(np.uint64(n).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(rec.tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a probe-round dataset file")
        version = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        m = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        blob_len = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        header = json.loads(fh.read(blob_len).decode())
        rec = np.frombuffer(fh.read(), dtype="<f8").reshape(n, _record_width(m))
    params = SystemParams(**header["params"])

    def cvec(off):
        return (rec[:, off:off + 2 * m:2] + 1j * rec[:, off + 1:off + 2 * m:2]).copy()

    off = 8
    y_r_a = cvec(off)
    y_r_b = cvec(off + 2 * m)
    w = cvec(off + 4 * m)
    off += 6 * m
    return Dataset(
        params=params,
        x_a=rec[:, 0] + 1j * rec[:, 1],
        x_b=rec[:, 2] + 1j * rec[:, 3],
        y_a=rec[:, 4] + 1j * rec[:, 5],
        y_b=rec[:, 6] + 1j * rec[:, 7],
        y_r_a=y_r_a, y_r_b=y_r_b, w=w,
        g_ab=rec[:, off] + 1j * rec[:, off + 1],
        split_fractions=tuple(header["split_fractions"]),
    )
