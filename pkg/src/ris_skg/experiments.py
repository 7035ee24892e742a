"""Experiment orchestration: scenarios, sweeps, ablations, reports.

Each public entry point takes an ``ExperimentConfig``, runs its stages
with seeds derived from the config seed, and writes CSV artifacts plus a
manifest into the config's output directory.  Re-running a config
reproduces every CSV byte for byte.
"""

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import attacks, featgen, keys, skr
from .chansim import generate_dataset, save_dataset
from .config import RunManifest, config_hash
from .neural import (EveResult, GeneratorPair, corr_coef, train_adversarial,
                     train_eve, save_mlp, save_scaler)

WORKERS_ENV = "RIS_SKG_WORKERS"


def _rng(seed, *stream):
    return np.random.default_rng([seed, *stream])


def worker_limit():
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, os.cpu_count() or 1)


def write_csv(path, header, rows, manifest_hash):
    """CSV with the mandatory manifest reference comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest: {manifest_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# feature schemes
# ---------------------------------------------------------------------------

class CsiScheme:
    """Pilot-based channel estimates; closed-form surface reconstruction."""

    name = "csi"

    def __init__(self, params):
        self.params = params

    def features(self, ds):
        pair = attacks.csi_features(ds, self.params)
        return pair.f_alice.real, pair.f_bob.real

    def eve_features(self, ds):
        return attacks.csi_eve(ds, self.params).f_eve.real


class CrossmultScheme:
    """Send-times-receive features; closed-form surface reconstruction."""

    name = "crossmult"

    def features(self, ds):
        pair = attacks.crossmult_features(ds)
        return pair.f_alice.real, pair.f_bob.real

    def eve_features(self, ds):
        return attacks.crossmult_eve(ds).f_eve.real


class NnScheme:
    """Trained generator pair; surface features come from a trained NN."""

    name = "nn"

    def __init__(self, pair, eve=None):
        self.pair = pair
        self.eve = eve

    def features(self, ds):
        return self.pair.features(ds)

    def eve_features(self, ds):
        if self.eve is None:
            raise RuntimeError("no trained eavesdropper attached")
        return self.eve.features(ds)


class PolyScheme:
    """Explicit polynomial-sine formula applied by both parties."""

    name = "poly"

    def __init__(self, gen, eve=None):
        self.gen = gen
        self.eve = eve

    def features(self, ds):
        f_a = self.gen.feature(ds.x_a, ds.y_a)
        f_b = self.gen.feature(ds.x_b, ds.y_b)
        return f_a, f_b

    def eve_features(self, ds):
        if self.eve is None:
            raise RuntimeError("no trained eavesdropper attached")
        return self.eve.features(ds)


def _safe_abs_corr(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    if x.std() == 0 or y.std() == 0:
        return 0.0
    return abs(corr_coef(x, y))


def key_metric_row(f_a, f_b, f_e, quant):
    """kar_ab, kar_ae, kar_be, akr for one feature batch triple."""
    ks_a = keys.quantize(f_a, quant)
    ks_b = keys.quantize(f_b, quant)
    ks_e = keys.quantize(f_e, quant)
    pa, pb = keys.align_streams(ks_a, ks_b)
    kar_ab = keys.key_agreement_rate(pa, pb)
    kar_ae = keys.key_agreement_rate(*keys.align_streams(ks_a, ks_e))
    kar_be = keys.key_agreement_rate(*keys.align_streams(ks_b, ks_e))
    akr = keys.available_key_rate(ks_a, ks_b, ks_e)
    return kar_ab, kar_ae, kar_be, akr


# ---------------------------------------------------------------------------
# scenario pipeline
# ---------------------------------------------------------------------------

@dataclass
class ScenarioResult:
    manifest: RunManifest
    scheme: object
    training: object        # AdversarialResult or None
    eve: object             # EveResult or None
    rho_rows: list
    key_rows: list


def _eval_dataset(cfg, sigma2, stream):
    params = replace(cfg.params, sigma2=sigma2)
    return generate_dataset(params, cfg.grid, cfg.eval_n, _rng(cfg.seed, 7, stream))


def _build_scheme(cfg, manifest, out):
    """Stage 1-3: data, generator training, eavesdropper training."""
    training = None
    eve = None
    if cfg.scheme in ("csi", "crossmult"):
        scheme = CsiScheme(cfg.params) if cfg.scheme == "csi" else CrossmultScheme()
        return scheme, training, eve

    with manifest.time_stage("gen-data"):
        ds = generate_dataset(cfg.params, cfg.grid, cfg.data_n, _rng(cfg.seed, 1))
        if out:
            save_dataset(ds, os.path.join(out, "data.bin"))
    with manifest.time_stage("train"):
        training = train_adversarial(ds, cfg.train, _rng(cfg.seed, 2))
        if out:
            pair = training.generators
            save_mlp(pair.gen_a, os.path.join(out, "gen_a.mlpv1"))
            save_mlp(pair.gen_b, os.path.join(out, "gen_b.mlpv1"))
            save_mlp(training.adversary, os.path.join(out, "adversary.mlpv1"))
            save_scaler(pair.scaler, os.path.join(out, "gen.scalerv1"))
            save_scaler(training.adv_scaler, os.path.join(out, "adv.scalerv1"))
            write_csv(os.path.join(out, "train_log.csv"),
                      ["epoch", "loss_gen", "loss_adv", "rho_ab", "rho_am", "rho_bm"],
                      [(int(e), float(lg), float(la), float(ra), float(rm), float(rb))
                       for e, lg, la, ra, rm, rb in training.log.to_rows()],
                      manifest.config_hash)

    if cfg.scheme == "poly":
        with manifest.time_stage("distill"):
            pair = training.generators
            test = ds.split("val")
            pre_a, _ = pair.preactivations(test)
            gen, r2 = featgen.distill_generator(
                pair.gen_a, pair.scaler, test.x_a, test.y_a, pre_a)
            scheme = PolyScheme(gen)
            if out:
                save_poly(gen, os.path.join(out, "formula.polyv1"))
    else:
        scheme = NnScheme(training.generators)

    with manifest.time_stage("train-eve"):
        eve_ds = generate_dataset(cfg.params, cfg.grid, cfg.eve_n, _rng(cfg.seed, 3))
        eve_cfg = replace(cfg.train, max_epochs=cfg.eve_epochs,
                          loss_kind="corr_adversarial")
        eve = train_eve(eve_ds, scheme.features, eve_cfg, _rng(cfg.seed, 4),
                        eve_dims=cfg.eve_dims)
        scheme.eve = eve
        if out:
            save_mlp(eve.eve, os.path.join(out, "eve.mlpv1"))
            save_scaler(eve.scaler, os.path.join(out, "eve.scalerv1"))
    return scheme, training, eve


def run_scenario(cfg, write=True):
    """Full pipeline: data, training, noise sweep, key metrics, artifacts."""
    out = cfg.out_dir if write else None
    if out:
        os.makedirs(out, exist_ok=True)
    manifest = RunManifest.for_config(cfg)
    scheme, training, eve = _build_scheme(cfg, manifest, out)

    rho_rows, key_rows = [], []
    with manifest.time_stage("sweep"):
        for i, dbw in enumerate(cfg.sweep.sigma2_dbw_values()):
            ds = _eval_dataset(cfg, 10.0 ** (dbw / 10.0), i)
            f_a, f_b = scheme.features(ds)
            f_e = scheme.eve_features(ds)
            rho_rows.append((scheme.name, float(dbw),
                             _safe_abs_corr(f_a, f_b),
                             _safe_abs_corr(f_a, f_e),
                             _safe_abs_corr(f_b, f_e)))
            kar_ab, kar_ae, kar_be, akr = key_metric_row(f_a, f_b, f_e, cfg.quant)
            key_rows.append((scheme.name, float(dbw), kar_ab, kar_ae, kar_be, akr))

    if out:
        write_csv(os.path.join(out, "rho_vs_sigma2.csv"),
                  ["scheme", "sigma2_dbw", "rho_ab", "rho_ae", "rho_be"],
                  rho_rows, manifest.config_hash)
        write_csv(os.path.join(out, "keys.csv"),
                  ["scheme", "sigma2_dbw", "kar_ab", "kar_ae", "kar_be", "akr"],
                  key_rows, manifest.config_hash)
        manifest.save(os.path.join(out, "manifest.json"))
    return ScenarioResult(manifest=manifest, scheme=scheme, training=training,
                          eve=eve, rho_rows=rho_rows, key_rows=key_rows)


# ---------------------------------------------------------------------------
# sweeps and ablations
# ---------------------------------------------------------------------------

def _lambda_point(args):
    cfg, lam = args
    cfg = replace(cfg, train=replace(cfg.train, lambda_tradeoff=lam),
                  out_dir=os.path.join(cfg.out_dir, f"lambda_{lam:g}"))
    ds = generate_dataset(cfg.params, cfg.grid, cfg.data_n, _rng(cfg.seed, 1))
    training = train_adversarial(ds, cfg.train, _rng(cfg.seed, 2))
    test = ds.split("test")
    f_a, f_b = training.generators.features(test)
    f_m = training.adversary_features(test)
    return (lam, _safe_abs_corr(f_a, f_b), _safe_abs_corr(f_a, f_m),
            _safe_abs_corr(f_b, f_m))


def sweep_lambda(cfg, lambdas=None, write=True):
    """Independent adversarial runs per trade-off value.

    Points run concurrently up to the worker limit; a failed point is
    reported as a NaN row and the sweep continues.
    """
    lambdas = tuple(cfg.sweep.lambdas if lambdas is None else lambdas)
    manifest = RunManifest.for_config(cfg)
    rows = []
    jobs = [(cfg, lam) for lam in lambdas]
    if len(jobs) == 1:
        results = [_lambda_point(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(worker_limit(), len(jobs))) as pool:
            futures = [pool.submit(_lambda_point, j) for j in jobs]
            results = []
            for lam, fut in zip(lambdas, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # report and continue
                    print(f"lambda={lam} run failed: {exc}")
                    results.append((lam, float("nan"), float("nan"), float("nan")))
    rows.extend(results)
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_csv(os.path.join(cfg.out_dir, "lambda_sweep.csv"),
                  ["lambda", "rho_ab", "rho_am", "rho_bm"],
                  rows, manifest.config_hash)
        manifest.save(os.path.join(cfg.out_dir, "manifest.json"))
    return rows


def mse_ablation(cfg, write=True):
    """Distance-based loss ablation plus the paired correlation control.

    Both runs share the dataset and seed; the report carries final
    feature distance and correlation for each.
    """
    ds = generate_dataset(cfg.params, cfg.grid, cfg.data_n, _rng(cfg.seed, 1))
    rows = []
    for kind in ("mse_adversarial", "corr_adversarial"):
        tcfg = replace(cfg.train, loss_kind=kind)
        training = train_adversarial(ds, tcfg, _rng(cfg.seed, 2))
        test = ds.split("test")
        f_a, f_b = training.generators.features(test)
        mse = float(np.mean((f_a - f_b) ** 2))
        rows.append((kind, mse, _safe_abs_corr(f_a, f_b)))
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        manifest = RunManifest.for_config(cfg)
        write_csv(os.path.join(cfg.out_dir, "mse_ablation.csv"),
                  ["loss_kind", "mse_ab", "rho_ab"], rows, manifest.config_hash)
        manifest.save(os.path.join(cfg.out_dir, "manifest.json"))
    return rows


def attack_report(cfg, write=True):
    """Monte Carlo correlation tables for the closed-form attacks."""
    manifest = RunManifest.for_config(cfg)
    rows = []
    for i, dbw in enumerate(cfg.sweep.sigma2_dbw_values()):
        ds = _eval_dataset(cfg, 10.0 ** (dbw / 10.0), i)
        csi = attacks.csi_features(ds, ds.params)
        csi_e = attacks.csi_eve(ds, ds.params)
        xm = attacks.crossmult_features(ds)
        xm_e = attacks.crossmult_eve(ds)
        for name, pair, eve in (("csi", csi, csi_e), ("crossmult", xm, xm_e)):
            ab = attacks.complex_corr(pair.f_alice, pair.f_bob)
            ae = attacks.complex_corr(pair.f_alice, eve.f_eve)
            be = attacks.complex_corr(pair.f_bob, eve.f_eve)
            rows.append((name, float(dbw), ab[0], ab[1], ae[0], ae[1], be[0], be[1]))
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_csv(os.path.join(cfg.out_dir, "attack_report.csv"),
                  ["scheme", "sigma2_dbw", "rho_ab_re", "rho_ab_im",
                   "rho_ae_re", "rho_ae_im", "rho_be_re", "rho_be_im"],
                  rows, manifest.config_hash)
        manifest.save(os.path.join(cfg.out_dir, "manifest.json"))
    return rows


def skr_sweep(cfg, d_ar=5.0, num_samples=None, write=True):
    """Covariance estimation plus the gap breakdown over the noise sweep."""
    from .chansim import LinkGeometry, sample_ris_phase

    params = cfg.params
    m = params.m
    k = num_samples or max(10 * m, 2000)
    rng = _rng(cfg.seed, 11)
    grid_angles = cfg.grid.angle_values()

    def draw_channels(count):
        elev = grid_angles[rng.integers(0, grid_angles.size, (count, params.num_paths))]
        azim = grid_angles[rng.integers(0, grid_angles.size, (count, params.num_paths))]
        from ._kernels import multipath_channels
        var = params.path_gain_var(d_ar) / params.num_paths
        gains = np.sqrt(var / 2.0) * (rng.standard_normal((count, params.num_paths))
                                      + 1j * rng.standard_normal((count, params.num_paths)))
        return multipath_channels(gains, elev, azim, params.mx, params.my,
                                  params.elem_spacing, params.wavelength)

    chans = draw_channels(k)
    other = draw_channels(k)
    phases = rng.uniform(0.0, 2.0 * np.pi, (k, m))
    w = np.sqrt(params.amp_ae) * (np.cos(phases) + 1j * np.sin(phases))
    combined = (w * (chans * other)).sum(axis=1)
    cov = skr.estimate_covariance(chans, combined, d_ar)

    rows = []
    for dbw in cfg.sweep.sigma2_dbw_values():
        p = replace(params, sigma2=10.0 ** (dbw / 10.0))
        bd = skr.skr_gap(cov, p, d_ar)
        ok, _ = skr.positivity_condition(p, d_max=d_ar, d_ab=2.0 * d_ar)
        rows.append((float(dbw), bd.h_yb, bd.h_yra, bd.h_cond_joint,
                     bd.h_cond_pair, bd.gap, ok))
    if write:
        os.makedirs(cfg.out_dir, exist_ok=True)
        manifest = RunManifest.for_config(cfg)
        write_csv(os.path.join(cfg.out_dir, "skr_sweep.csv"),
                  ["sigma2_dbw", "h_yb", "h_yra", "h_cond_joint",
                   "h_cond_pair", "gap_bits", "condition_ok"],
                  rows, manifest.config_hash)
        manifest.save(os.path.join(cfg.out_dir, "manifest.json"))
    return rows, cov


def distill_report(training, ds, max_neurons=64, write=True, out_dir=None,
                   manifest_hash=""):
    """Neuron selection, dictionary fits and the dominant-term histogram."""
    pair = training.generators
    val = ds.split("val")
    x_val = pair.scaler.apply(
        np.column_stack([val.x_a.real, val.x_a.imag, val.y_a.real, val.y_a.imag]))
    selected = featgen.select_active_neurons(pair.gen_a, x_val)
    if len(selected) > max_neurons:
        stride = len(selected) / max_neurons
        selected = [selected[int(i * stride)] for i in range(max_neurons)]
    from .neural import mlp_forward
    _, (_, preacts) = mlp_forward(pair.gen_a, x_val)
    fits = []
    for layer, j in selected:
        h = preacts[layer][:, j]
        act = pair.gen_a.activations[layer]
        if act == "relu":
            h = np.maximum(h, 0.0)
        elif act == "sine":
            h = np.sin(h)
        fits.append(featgen.distill_neuron(h, val.x_a, val.y_a, neuron_id=(layer, j)))
    hist = featgen.term_frequency(fits)
    if write and out_dir:
        rows = [(f"{f.neuron[0]}:{f.neuron[1]}", f.dominant, f.terms[0][1], f.r2)
                for f in fits]
        write_csv(os.path.join(out_dir, "distill_report.csv"),
                  ["neuron_id", "term_descriptor", "coefficient", "r2"],
                  rows, manifest_hash)
        write_csv(os.path.join(out_dir, "term_frequency.csv"),
                  ["category", "count"], sorted(hist.items()), manifest_hash)
    return fits, hist


def save_poly(gen, path):
    """Text persistence for the explicit formula coefficients."""
    with open(path, "w") as fh:
        fh.write(f"polyv1 {gen.coeffs.size}\n")
        for v in gen.coeffs.tolist():
            fh.write(f"{v!r}\n")


def load_poly(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2 or head[0] != "polyv1":
            raise ValueError("not a polyv1 file")
        n = int(head[1])
        coeffs = np.array([float(fh.readline()) for _ in range(n)])
    return featgen.PolyGenerator(coeffs=coeffs)
