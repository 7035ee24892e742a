"""Explicit polynomial-sine feature generator and network distillation.

A trained generator's output neuron sees a pre-activation that is, for
the interesting solutions, close to a low-degree polynomial in the real
and imaginary parts of the party's send/receive pair.  This module fits
that polynomial over the 81-term basis (per-variable degree at most two),
wraps it in the sine output, and provides the dictionary-regression pass
that classifies what each hidden neuron computes.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import poly_basis_batch
from .neural import mlp_forward

TWO_PI = 2.0 * np.pi

# canonical basis order: exponents (m, n, p, q) of
# Re(x)^m Im(x)^n Re(y)^p Im(y)^q, m outermost, q innermost
BASIS_EXPONENTS = tuple(
    (m, n, p, q)
    for m in range(3) for n in range(3) for p in range(3) for q in range(3)
)
NUM_TERMS = len(BASIS_EXPONENTS)


class RankDeficientDesign(ValueError):
    """Raised when the regression design matrix loses rank."""


@dataclass
class PolyGenerator:
    """81-coefficient polynomial-sine feature formula."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (NUM_TERMS,):
            raise ValueError(f"need exactly {NUM_TERMS} coefficients")

    def preactivation(self, x, y):
        return poly_basis(x, y) @ self.coeffs

    def feature(self, x, y):
        return np.sin(self.preactivation(x, y))


def poly_basis(x, y):
    """Basis row(s) for complex scalars or arrays of them.

    Returns shape (81,) for scalar inputs, (n, 81) for arrays.
    """
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    scalar = x.ndim == 0
    xr = np.atleast_1d(x.real).astype(np.float64)
    xi = np.atleast_1d(x.imag).astype(np.float64)
    yr = np.atleast_1d(y.real).astype(np.float64)
    yi = np.atleast_1d(y.imag).astype(np.float64)
    out = poly_basis_batch(xr, xi, yr, yi)
    return out[0] if scalar else out


def explicit_feature(gen, x, y):
    """Sine of the fitted polynomial: the white-box common feature."""
    return gen.feature(x, y)


def fit_polynomial(targets, x, y):
    """Least-squares fit of pre-activation targets over the 81-term basis.

    Columns are equilibrated by their largest magnitude before the solve
    (the raw monomials span many decades) and the coefficients unscaled
    afterwards.
    """
    targets = np.asarray(targets, dtype=np.float64)
    design = poly_basis(np.asarray(x), np.asarray(y))
    if design.ndim != 2 or design.shape[0] < NUM_TERMS:
        raise ValueError(f"need at least {NUM_TERMS} samples")
    if targets.shape != (design.shape[0],):
        raise ValueError("target/sample count mismatch")
    scale = np.abs(design).max(axis=0)
    if np.any(scale == 0):
        raise RankDeficientDesign("degenerate basis column")
    coef, _, rank, _ = np.linalg.lstsq(design / scale, targets, rcond=None)
    if rank < NUM_TERMS:
        raise RankDeficientDesign(f"design rank {rank} < {NUM_TERMS}")
    return PolyGenerator(coeffs=coef / scale)


# residual of the true turn beyond the nearest double, for compensated
# reduction: naive x - 2*pi*floor(x/2*pi) loses ~|x|*eps absolute accuracy,
# which would break the sine identity at large arguments
_TWO_PI_LO = 2.4492935982947064e-16


def mod_2pi(x):
    """Remainder of x modulo one full turn, in [0, 2*pi).

    Uses exact IEEE fmod against the double turn plus a compensation term
    for the turn's representation error, so ``sin(mod_2pi(x))`` matches
    ``sin(x)`` to better than 1e-12 for \\|x\\| up to 1e6.
    """
    x = np.asarray(x, dtype=np.float64)
    r0 = np.fmod(x, TWO_PI)
    k = (x - r0) / TWO_PI
    out = r0 - k * _TWO_PI_LO
    out = np.where(out < 0.0, out + TWO_PI, out)
    out = np.where(out >= TWO_PI, out - TWO_PI, out)
    return float(out) if out.ndim == 0 else out


# one converged realization of the 81 coefficients, shipped as the
# package's reference white-box generator (canonical basis order)
_REFERENCE_COEFFS = np.array([
    0, 0.0330, -0.0104, 0, 0, 0, 0, -0.0207, -0.0531, 0,
    -13.0482, 0, -19.6748, 0, 0.0457, -0.0117, -0.0302,
    0.0430, -0.1009, -0.0136, 0.1295, 0, -0.3157, -0.0161,
    -0.3361, 0.0172, 0.0366, 0, -19.7018, 0, 13.1063, 0,
    -0.0264, -0.0119, 0.0605, 0, 0, 0, -0.3254, 0.0261,
    -0.9464, -0.0246, 0.3199, 0, 0, 0, 0.0301, 0, 0, 0,
    0.0106, 0.0128, -0.0469, 0.0153, -0.1054, -0.0153,
    -0.3372, 0, 0.3190, 0.0205, 0.1345, 0, 0.0309, 0, 0,
    0, 0.0102, 0, -0.0250, 0, 0.0298, 0, 0, 0, 0, -0.0143,
    0, 0.0167, 0, 0, -0.0250,
])


def reference_generator():
    """The shipped 81-coefficient realization of the explicit formula."""
    return PolyGenerator(coeffs=_REFERENCE_COEFFS.copy())


# ---------------------------------------------------------------------------
# neuron selection and dictionary distillation
# ---------------------------------------------------------------------------

def select_active_neurons(model, x_val):
    """Hidden neurons whose summed post-activation over the set exceeds 0.

    Returns (layer, neuron) index pairs; permanently dead rectifier units
    drop out here.
    """
    x_val = np.asarray(x_val, dtype=np.float64)
    _, (_, preacts) = mlp_forward(model, x_val)
    selected = []
    for layer in range(model.num_layers - 1):
        act = model.activations[layer]
        h = preacts[layer]
        if act == "relu":
            h = np.maximum(h, 0.0)
        elif act == "sine":
            h = np.sin(h)
        totals = h.sum(axis=0)
        for j in np.flatnonzero(totals > 0.0):
            selected.append((layer, int(j)))
    return selected


EXP_SCALES = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)


def _term_library(x, y):
    """Monomial + exponential + logarithmic dictionary columns.

    Returns (columns, descriptors, categories); column order is the 81
    monomials, then exp terms, then log terms.
    """
    design = poly_basis(x, y)
    cols = [design[:, i] for i in range(NUM_TERMS)]
    descs = [f"mono[{m}{n}{p}{q}]" for (m, n, p, q) in BASIS_EXPONENTS]
    cats = ["polynomial"] * NUM_TERMS
    inputs = [np.asarray(x).real, np.asarray(x).imag,
              np.asarray(y).real, np.asarray(y).imag]
    names = ["re_x", "im_x", "re_y", "im_y"]
    for v, name in zip(inputs, names):
        for s in EXP_SCALES:
            cols.append(np.exp(s * v))
            descs.append(f"exp({s:g}*{name})")
            cats.append("exponential")
        cols.append(np.log1p(np.abs(v)))
        descs.append(f"log1p|{name}|")
        cats.append("logarithmic")
    return np.column_stack(cols), descs, cats


@dataclass
class DistillFit:
    """Dictionary regression of one neuron."""

    neuron: tuple
    terms: list          # (descriptor, coefficient, standardized weight)
    r2: float
    dominant: str
    dominant_category: str


def distill_neuron(neuron_outputs, x, y, neuron_id=(0, 0), top_k=5):
    """Fit one neuron's outputs over the term dictionary.

    Terms are ranked by standardized coefficient magnitude (coefficient
    times column spread), with each term's lone-fit improvement breaking
    ties.  The intercept column stands apart and never counts as the
    dominant term unless the neuron is constant.
    """
    t = np.asarray(neuron_outputs, dtype=np.float64)
    lib, descs, cats = _term_library(x, y)
    if t.shape[0] != lib.shape[0]:
        raise ValueError("target/sample count mismatch")
    if t.shape[0] < 10 * lib.shape[1]:
        raise ValueError(f"need at least {10 * lib.shape[1]} samples")
    scale = np.abs(lib).max(axis=0)
    if np.any(scale == 0):
        raise RankDeficientDesign("degenerate dictionary column")
    coef, _, rank, _ = np.linalg.lstsq(lib / scale, t, rcond=None)
    if rank < lib.shape[1]:
        raise RankDeficientDesign(f"dictionary rank {rank} < {lib.shape[1]}")
    coef = coef / scale

    t_var = t.var()
    resid = t - lib @ coef
    r2 = 1.0 - resid.var() / t_var if t_var > 0 else 1.0

    spread = lib.std(axis=0)
    weight = np.abs(coef) * spread
    order = np.argsort(weight)[::-1]
    ranked = [(descs[i], float(coef[i]), float(weight[i])) for i in order]
    if t_var == 0 or weight[order[0]] == 0:
        dom_idx = 0  # constant target: the intercept monomial
    else:
        dom_idx = int(order[0])
    return DistillFit(neuron=tuple(neuron_id), terms=ranked[:top_k], r2=float(r2),
                      dominant=descs[dom_idx], dominant_category=cats[dom_idx])


def term_frequency(fits):
    """Histogram of dominant-term categories across distilled neurons."""
    if not fits:
        raise ValueError("no distillation reports")
    hist = {"polynomial": 0, "exponential": 0, "logarithmic": 0, "other": 0}
    for fit in fits:
        hist[fit.dominant_category if fit.dominant_category in hist else "other"] += 1
    return hist


def distill_generator(model, scaler, x, y, targets):
    """Refit a network's output pre-activation as a polynomial-sine formula.

    ``targets`` are the output-neuron inputs collected from the network;
    the polynomial is fitted on the raw complex signal pairs so the
    resulting formula needs no scaler at apply time.
    """
    gen = fit_polynomial(targets, x, y)
    pred = gen.preactivation(x, y)
    t_var = targets.var()
    r2 = 1.0 - (targets - pred).var() / t_var if t_var > 0 else 1.0
    return gen, float(r2)
