"""Feature quantization, retained-index alignment, and key metrics.

Features map to bits through the standard two-threshold quantizer: values
above the upper threshold give 1, below the lower give 0, and anything in
the guard band between them is dropped.  Parties then publicly intersect
their retained indices (positions leak, values do not) and score the
agreed bits.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class QuantizerConfig:
    """Guard-band scale and how the spread term is measured.

    ``variance`` keeps the published threshold expression literally; for
    features bounded in [-1, 1] the variance is much smaller than the
    standard deviation, so ``std_dev`` is shipped as the conventional
    alternative.
    """

    gamma: float = 0.1
    spread_mode: str = "variance"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("guard-band scale must be non-negative")
        if self.spread_mode not in ("variance", "std_dev"):
            raise ValueError("spread_mode must be 'variance' or 'std_dev'")


@dataclass
class KeyStream:
    """Quantized bits plus the per-feature retention mask.

    ``bits`` holds only the retained positions, in feature order;
    ``retained_mask`` marks which features survived the guard band.
    """

    bits: np.ndarray
    retained_mask: np.ndarray

    def __post_init__(self):
        if self.bits.size != int(self.retained_mask.sum()):
            raise ValueError("bit count must equal retained count")

    def expand(self):
        """Full-length int8 vector with -1 at dropped positions."""
        out = np.full(self.retained_mask.size, -1, dtype=np.int8)
        out[self.retained_mask] = self.bits
        return out


def quantize(features, cfg):
    """Two-threshold quantization with a mean-centred guard band.

    Thresholds sit at ``mean +/- gamma * spread`` where the spread is the
    sample variance or standard deviation per the config.  Ties exactly on
    a threshold quantize toward the bit.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1 or features.size < 2:
        raise ValueError("need at least two features")
    mu = features.mean()
    var = features.var(ddof=1)
    spread = var if cfg.spread_mode == "variance" else np.sqrt(var)
    upper = mu + cfg.gamma * spread
    lower = mu - cfg.gamma * spread
    ones = features >= upper
    zeros = features <= lower
    retained = ones | zeros
    bits = ones[retained].astype(np.int8)
    return KeyStream(bits=bits, retained_mask=retained)


def align_streams(ks_a, ks_b):
    """Bit pairs at the indices both parties retained."""
    if ks_a.retained_mask.size != ks_b.retained_mask.size:
        raise ValueError("streams cover different index ranges")
    both = ks_a.retained_mask & ks_b.retained_mask
    return ks_a.expand()[both], ks_b.expand()[both]


def key_agreement_rate(bits_a, bits_b):
    """Fraction of positions where the two aligned bit vectors match."""
    bits_a = np.asarray(bits_a)
    bits_b = np.asarray(bits_b)
    if bits_a.size == 0 or bits_a.size != bits_b.size:
        raise ValueError("need equal, non-empty aligned bit vectors")
    return float((bits_a == bits_b).mean())


def available_key_rate(ks_a, ks_b, ks_e):
    """Fraction of triple-aligned bits that agree and stay secret.

    Scores Pr{k_a == k_b != k_e} over positions retained by all three
    streams.
    """
    n = ks_a.retained_mask.size
    if ks_b.retained_mask.size != n or ks_e.retained_mask.size != n:
        raise ValueError("streams cover different index ranges")
    sel = ks_a.retained_mask & ks_b.retained_mask & ks_e.retained_mask
    if not sel.any():
        raise ValueError("no triple-aligned positions")
    a = ks_a.expand()[sel]
    b = ks_b.expand()[sel]
    e = ks_e.expand()[sel]
    return float(((a == b) & (a != e)).mean())
