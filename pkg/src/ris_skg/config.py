"""Experiment configuration: flat key=value files, presets, run manifest.

Config files are plain text, one ``section.key = value`` pair per line,
``#`` comments allowed.  Physical quantities are SI; any key may instead
be given with a ``_db`` or ``_dbw`` suffix and is converted as
``10**(value/10)`` on load.  No schema language, no third-party parser.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict, replace

from .chansim import SystemParams, GeometryGrid
from .keys import QuantizerConfig
from .neural import TrainConfig
from ._kernels import BACKEND


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass
class SweepSpec:
    sigma2_dbw_lo: float = -115.0
    sigma2_dbw_hi: float = -90.0
    sigma2_steps: int = 6
    lambdas: tuple = (0.2, 0.4, 0.6, 0.8, 1.0)

    def sigma2_dbw_values(self):
        if self.sigma2_steps < 1:
            raise ValueError("sweep needs at least one step")
        if self.sigma2_steps == 1:
            return [self.sigma2_dbw_lo]
        step = (self.sigma2_dbw_hi - self.sigma2_dbw_lo) / (self.sigma2_steps - 1)
        return [self.sigma2_dbw_lo + i * step for i in range(self.sigma2_steps)]


@dataclass
class ExperimentConfig:
    params: SystemParams = field(default_factory=SystemParams)
    grid: GeometryGrid = field(default_factory=GeometryGrid)
    train: TrainConfig = field(default_factory=TrainConfig)
    quant: QuantizerConfig = field(default_factory=QuantizerConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    scheme: str = "nn"
    seed: int = 1
    data_n: int = 100_000
    eval_n: int = 20_000
    eve_n: int = 100_000
    eve_epochs: int = 60_000
    eve_dims: tuple | None = None
    out_dir: str = "runs/out"

    def __post_init__(self):
        if self.scheme not in ("csi", "crossmult", "nn", "poly"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


_SECTIONS = {
    "params": SystemParams,
    "grid": GeometryGrid,
    "train": TrainConfig,
    "quant": QuantizerConfig,
    "sweep": SweepSpec,
}

_TUPLE_KEYS = {"gen_dims", "adv_dims", "eve_dims", "lambdas"}


def _parse_value(key, raw):
    raw = raw.strip()
    if key in _TUPLE_KEYS or "," in raw:
        return tuple(_parse_value("", v) for v in raw.split(",") if v.strip())
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text):
    """Flat key=value text into an ExperimentConfig."""
    sections = {name: {} for name in _SECTIONS}
    top = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        value = _parse_value(key.rsplit(".", 1)[-1], raw)
        if key.endswith("_db") or key.endswith("_dbw"):
            key = key.rsplit("_", 1)[0]
            value = db_to_linear(float(value))
        if "." in key:
            section, name = key.split(".", 1)
            if section not in sections:
                raise ValueError(f"line {lineno}: unknown section {section!r}")
            sections[section][name] = value
        else:
            top[key] = value
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if sections[name]:
            kwargs[name] = cls(**sections[name])
    kwargs.update(top)
    return ExperimentConfig(**kwargs)


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def config_to_text(cfg):
    """Canonical flat rendering; reparsing reproduces the config."""
    lines = []
    for section in sorted(_SECTIONS):
        obj = getattr(cfg, section)
        for key, value in sorted(asdict(obj).items()):
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{key} = {value!r}" if isinstance(value, str)
                         else f"{section}.{key} = {value}")
    for key in ("scheme", "seed", "data_n", "eval_n", "eve_n", "eve_epochs", "out_dir"):
        value = getattr(cfg, key)
        lines.append(f"{key} = {value}")
    if cfg.eve_dims is not None:
        lines.append("eve_dims = " + ",".join(str(v) for v in cfg.eve_dims))
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    """Content hash tying every emitted artifact back to its config."""
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def desk_config(**overrides):
    """Desk-scale configuration: minutes on a laptop, same physics shape.

    The surface shrinks to 4x4, which scales the regime where the
    reflective path both dominates the link and out-noises the surface's
    own per-element view: amplification is raised and the coverage ring
    moved out so that the per-element receive SNR stays near 20 dB while
    the combined-channel SNR stays ~500x higher.  Networks, rates and
    epoch counts are sized for that geometry.
    """
    cfg = ExperimentConfig(
        params=SystemParams(mx=4, my=4, amp_ae=1e10, sigma2=db_to_linear(-115.0)),
        grid=GeometryGrid(dist_min=50.0, dist_max=70.0),
        train=TrainConfig(learning_rate=1e-3, max_epochs=100_000,
                          adv_lr_scale=3.0,
                          gen_dims=(4, 64, 32, 1), adv_dims=(96, 128, 64, 1)),
        sweep=SweepSpec(),
        data_n=100_000,
        eve_n=100_000,
        eve_epochs=60_000,
    )
    return replace(cfg, **overrides)


def attack_control_config(**overrides):
    """Desk variant where the product-reconstruction map is NN-learnable.

    A 2x2 surface keeps the physics identical but shrinks the
    eavesdropper's input to 24 columns; at the 4x4 desk size the balanced
    48-term cubic map sits beyond what the desk-width network can extract
    from batch gradients in any sane epoch budget.
    """
    cfg = desk_config()
    cfg = replace(
        cfg,
        params=replace(cfg.params, mx=2, my=2),
        train=replace(cfg.train, adv_dims=(24, 128, 64, 1)),
        eve_epochs=60_000,
    )
    return replace(cfg, **overrides)


def attack_mc_config(**overrides):
    """Published-constants geometry for the closed-form attack tables."""
    cfg = ExperimentConfig(
        params=SystemParams(mx=4, my=4, amp_ae=db_to_linear(40.0),
                            sigma2=db_to_linear(-110.0)),
        grid=GeometryGrid(dist_min=1.0, dist_max=10.0),
        data_n=10_000,
    )
    return replace(cfg, **overrides)


def paper_config(**overrides):
    """Full published scale; accepted as configuration, not routinely run."""
    cfg = ExperimentConfig(
        params=SystemParams(mx=40, my=40, amp_ae=db_to_linear(40.0),
                            sigma2=db_to_linear(-110.0)),
        grid=GeometryGrid(dist_min=1.0, dist_max=25.0),
        train=TrainConfig(learning_rate=1e-5, max_epochs=200_000,
                          gen_dims=(4, 512, 128, 1),
                          adv_dims=(9600, 1024, 512, 128, 1)),
        data_n=10_000_000,
        eve_n=10_000_000,
        eve_epochs=1_500_000,
        eve_dims=(9600, 2048, 512, 128, 1),
    )
    return replace(cfg, **overrides)


PRESETS = {
    "desk": desk_config,
    "paper": paper_config,
    "attack-mc": attack_mc_config,
    "attack-control": attack_control_config,
}


@dataclass
class RunManifest:
    """Reproducibility record written next to every result bundle."""

    config_text: str
    config_hash: str
    seed: int
    backend: str
    stage_seconds: dict = field(default_factory=dict)

    @classmethod
    def for_config(cls, cfg):
        return cls(config_text=config_to_text(cfg), config_hash=config_hash(cfg),
                   seed=cfg.seed, backend=BACKEND)

    def time_stage(self, name):
        return _StageTimer(self, name)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))


class _StageTimer:
    def __init__(self, manifest, name):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.stage_seconds[self.name] = round(time.perf_counter() - self.t0, 3)
        return False
