"""Legacy common-feature schemes and their surface-eavesdropper breaks.

Two classic channel-probing features are implemented together with the
closed-form reconstructions available to a man-in-the-middle surface that
receives both parties' signals on every element.  All functions accept a
single probe round or a whole array-backed dataset; fields broadcast
elementwise either way.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class FeaturePair:
    """The two parties' common-feature values for one or many rounds."""

    f_alice: np.ndarray
    f_bob: np.ndarray


@dataclass
class EveEstimate:
    """Eavesdropper reconstruction of the legitimate feature."""

    f_eve: np.ndarray
    scheme: str


def csi_features(rounds, params):
    """Channel estimates from publicly known pilots.

    Each party divides its receive signal by the conjugate pilot of the
    other side, so both recover the reciprocal end-to-end channel plus
    scaled noise.  Pilots are public in this scheme, which is exactly why
    it is attackable.
    """
    h_a = rounds.y_a * np.conj(rounds.x_b) / params.pt
    h_b = rounds.y_b * np.conj(rounds.x_a) / params.pt
    return FeaturePair(f_alice=h_a, f_bob=h_b)


def csi_eve(rounds, params):
    """Surface reconstruction of the channel-estimate feature.

    The surface estimates both end channels from its own received pilots,
    then recombines them through its known phase vector.
    """
    x_a = np.atleast_1d(np.asarray(rounds.x_a))[..., None]
    x_b = np.atleast_1d(np.asarray(rounds.x_b))[..., None]
    g_ar_hat = rounds.y_r_a * np.conj(x_a) / params.pt
    g_br_hat = rounds.y_r_b * np.conj(x_b) / params.pt
    h_e = (rounds.w * (g_ar_hat * g_br_hat)).sum(axis=-1)
    if np.ndim(rounds.x_a) == 0:
        h_e = h_e.item()
    return EveEstimate(f_eve=h_e, scheme="csi")


def crossmult_features(rounds):
    """Send-times-receive features from private random signals."""
    return FeaturePair(f_alice=rounds.x_a * rounds.y_a,
                       f_bob=rounds.x_b * rounds.y_b)


def crossmult_eve(rounds):
    """Surface reconstruction of the cross-multiplication feature.

    Multiplying the two received vectors element-by-element through the
    known phase vector cancels the unknown signal phases, leaving the
    legitimate product feature plus noise.
    """
    phi_e = (rounds.w * (rounds.y_r_b * rounds.y_r_a)).sum(axis=-1)
    if np.ndim(rounds.x_a) == 0:
        phi_e = phi_e.item()
    return EveEstimate(f_eve=phi_e, scheme="crossmult")


def complex_corr(x, y):
    """Pearson correlations of the real and imaginary parts, separately.

    Downstream key pipelines consume the real part; the imaginary part is
    reported alongside for the attack tables.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    def _corr(a, b):
        ca = a - a.mean()
        cb = b - b.mean()
        denom = np.sqrt((ca * ca).mean() * (cb * cb).mean())
        if denom <= 0:
            raise ValueError("zero variance input")
        return float((ca * cb).mean() / denom)
    return _corr(x.real, y.real), _corr(x.imag, y.imag)
