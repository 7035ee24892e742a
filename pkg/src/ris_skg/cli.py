"""Command-line front end for reproducible experiment runs.

Every subcommand loads a preset (``--scale``), optionally overlays a
config file (``--config``), applies ``--seed``/``--out``/``--scheme``
overrides, and writes CSV artifacts plus a manifest under the output
directory.  ``RIS_SKG_WORKERS`` caps sweep parallelism.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import experiments
from .chansim import generate_dataset, save_dataset
from .config import PRESETS, RunManifest, load_config


def _base_config(args):
    cfg = PRESETS[args.scale]()
    if args.config:
        file_cfg = load_config(args.config)
        cfg = file_cfg
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "scheme", None):
        cfg = replace(cfg, scheme=args.scheme)
    return cfg


def _add_common(sub, scheme=False):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--scale", choices=sorted(PRESETS), default="desk",
                     help="built-in preset used when no config file is given")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None, help="output directory")
    if scheme:
        sub.add_argument("--scheme", choices=["csi", "crossmult", "nn", "poly"],
                         default=None)


def cmd_gen_data(args):
    cfg = _base_config(args)
    rng = np.random.default_rng([cfg.seed, 1])
    ds = generate_dataset(cfg.params, cfg.grid, cfg.data_n, rng)
    save_dataset(ds, args.path)
    print(f"wrote {ds.n} rounds (m={ds.m}) to {args.path}")


def cmd_run(args):
    cfg = _base_config(args)
    result = experiments.run_scenario(cfg)
    for scheme, dbw, rho_ab, rho_ae, rho_be in result.rho_rows:
        print(f"{scheme} sigma2={dbw:+.1f} dBW  rho_ab={rho_ab:.3f} "
              f"rho_ae={rho_ae:.3f} rho_be={rho_be:.3f}")
    print(f"artifacts in {cfg.out_dir}")


def cmd_train(args):
    cfg = _base_config(args)
    if cfg.scheme not in ("nn", "poly"):
        raise SystemExit("train only applies to the nn/poly schemes")
    manifest = RunManifest.for_config(cfg)
    import os
    os.makedirs(cfg.out_dir, exist_ok=True)
    scheme, training, _ = experiments._build_scheme(cfg, manifest, cfg.out_dir)
    manifest.save(os.path.join(cfg.out_dir, "manifest.json"))
    log = training.log
    print(f"final batch rho_ab={log.rho_ab[-1]:.3f} rho_am={log.rho_am[-1]:.3f}")
    print(f"models in {cfg.out_dir}")


def cmd_train_eve(args):
    # the scenario pipeline trains the eavesdropper as its third stage;
    # this entry point exists to retrain it against saved generators
    cfg = _base_config(args)
    from .neural import load_mlp, load_scaler, GeneratorPair, train_eve
    import os
    pair = GeneratorPair(
        gen_a=load_mlp(os.path.join(args.models, "gen_a.mlpv1")),
        gen_b=load_mlp(os.path.join(args.models, "gen_b.mlpv1")),
        scaler=load_scaler(os.path.join(args.models, "gen.scalerv1")),
    )
    eve_ds = generate_dataset(cfg.params, cfg.grid, cfg.eve_n,
                              np.random.default_rng([cfg.seed, 3]))
    ecfg = replace(cfg.train, max_epochs=cfg.eve_epochs)
    res = train_eve(eve_ds, pair.features, ecfg, np.random.default_rng([cfg.seed, 4]),
                    eve_dims=cfg.eve_dims)
    os.makedirs(cfg.out_dir, exist_ok=True)
    from .neural import save_mlp, save_scaler
    save_mlp(res.eve, os.path.join(cfg.out_dir, "eve.mlpv1"))
    save_scaler(res.scaler, os.path.join(cfg.out_dir, "eve.scalerv1"))
    test = eve_ds.split("test")
    f_e = res.features(test)
    f_a, _ = pair.features(test)
    from .neural import corr_coef
    print(f"eavesdropper trained; held-out |rho(f_e, f_a)| = "
          f"{abs(corr_coef(f_e, f_a)):.4f}")


def cmd_attack_report(args):
    cfg = _base_config(args)
    rows = experiments.attack_report(cfg)
    for name, dbw, ab_re, _, ae_re, _, _, _ in rows:
        print(f"{name} sigma2={dbw:+.1f} dBW  rho_ab={ab_re:.3f} rho_ae={ae_re:.3f}")


def cmd_skr(args):
    cfg = _base_config(args)
    if args.sweep:
        tag, spec = args.sweep.split("=")
        if tag != "sigma2":
            raise SystemExit("only sigma2 sweeps are supported")
        lo, hi, steps = spec.split(":")
        cfg = replace(cfg, sweep=replace(cfg.sweep, sigma2_dbw_lo=float(lo),
                                         sigma2_dbw_hi=float(hi),
                                         sigma2_steps=int(steps)))
    rows, _ = experiments.skr_sweep(cfg, d_ar=args.dist)
    for dbw, *_rest in rows:
        gap = _rest[4]
        print(f"sigma2={dbw:+.1f} dBW  gap={gap:.3f} bits  condition_ok={_rest[5]}")


def cmd_distill(args):
    cfg = _base_config(args)
    import os
    from .neural import load_mlp, load_scaler, GeneratorPair
    from .chansim import load_dataset
    pair = GeneratorPair(
        gen_a=load_mlp(os.path.join(args.models, "gen_a.mlpv1")),
        gen_b=load_mlp(os.path.join(args.models, "gen_b.mlpv1")),
        scaler=load_scaler(os.path.join(args.models, "gen.scalerv1")),
    )
    ds = load_dataset(args.data)
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = RunManifest.for_config(cfg)

    class _T:  # minimal training-result view for the report helper
        generators = pair
    fits, hist = experiments.distill_report(_T, ds, write=True, out_dir=cfg.out_dir,
                                            manifest_hash=manifest.config_hash)
    val = ds.split("val")
    pre_a, _ = pair.preactivations(val)
    from .featgen import distill_generator
    gen, r2 = distill_generator(pair.gen_a, pair.scaler, val.x_a, val.y_a, pre_a)
    experiments.save_poly(gen, os.path.join(cfg.out_dir, "formula.polyv1"))
    manifest.save(os.path.join(cfg.out_dir, "manifest.json"))
    print(f"distilled {len(fits)} neurons; categories {hist}; formula r2={r2:.4f}")


def cmd_keys(args):
    cfg = _base_config(args)
    header, rows = experiments.read_csv(args.features)
    cols = {name: i for i, name in enumerate(header)}
    f_a = np.array([float(r[cols["f_a"]]) for r in rows])
    f_b = np.array([float(r[cols["f_b"]]) for r in rows])
    f_e = np.array([float(r[cols["f_e"]]) for r in rows])
    kar_ab, kar_ae, kar_be, akr = experiments.key_metric_row(f_a, f_b, f_e, cfg.quant)
    import os
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = RunManifest.for_config(cfg)
    experiments.write_csv(
        os.path.join(cfg.out_dir, "keys.csv"),
        ["scheme", "sigma2_dbw", "kar_ab", "kar_ae", "kar_be", "akr"],
        [(cfg.scheme, 10.0 * np.log10(cfg.params.sigma2), kar_ab, kar_ae, kar_be, akr)],
        manifest.config_hash)
    print(f"kar_ab={kar_ab:.3f} kar_ae={kar_ae:.3f} kar_be={kar_be:.3f} akr={akr:.3f}")


def cmd_sweep(args):
    cfg = _base_config(args)
    rows = experiments.sweep_lambda(cfg)
    for lam, rho_ab, rho_am, rho_bm in rows:
        print(f"lambda={lam:g}  rho_ab={rho_ab:.3f} rho_am={rho_am:.3f} "
              f"rho_bm={rho_bm:.3f}")


def cmd_mse_ablation(args):
    cfg = _base_config(args)
    for kind, mse, rho in experiments.mse_ablation(cfg):
        print(f"{kind}: mse_ab={mse:.3e} rho_ab={rho:.4f}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ris-skg",
        description="secret-key generation lab for reflective-surface channels")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("gen-data", help="sample probe rounds to a binary file")
    _add_common(s)
    s.add_argument("path", help="output dataset path")
    s.set_defaults(func=cmd_gen_data)

    s = subs.add_parser("run", help="full scenario: data, training, sweep, keys")
    _add_common(s, scheme=True)
    s.set_defaults(func=cmd_run)

    s = subs.add_parser("train", help="train the adversarial generator pair")
    _add_common(s, scheme=True)
    s.set_defaults(func=cmd_train)

    s = subs.add_parser("train-eve", help="train the eavesdropper against saved models")
    _add_common(s)
    s.add_argument("--models", required=True, help="directory with saved generators")
    s.set_defaults(func=cmd_train_eve)

    s = subs.add_parser("attack-report", help="closed-form attack correlation tables")
    _add_common(s)
    s.set_defaults(func=cmd_attack_report)

    s = subs.add_parser("skr", help="key-rate gap sweep")
    _add_common(s)
    s.add_argument("--sweep", default=None, help="sigma2=<lo>:<hi>:<steps> in dBW")
    s.add_argument("--dist", type=float, default=5.0, help="end-to-surface distance (m)")
    s.set_defaults(func=cmd_skr)

    s = subs.add_parser("distill", help="dictionary-fit a trained generator")
    _add_common(s)
    s.add_argument("--models", required=True)
    s.add_argument("--data", required=True, help="probe-round dataset file")
    s.set_defaults(func=cmd_distill)

    s = subs.add_parser("keys", help="key metrics from a feature CSV")
    _add_common(s, scheme=True)
    s.add_argument("--features", required=True, help="CSV with f_a, f_b, f_e columns")
    s.set_defaults(func=cmd_keys)

    s = subs.add_parser("sweep", help="trade-off coefficient sweep")
    _add_common(s)
    s.set_defaults(func=cmd_sweep)

    s = subs.add_parser("mse-ablation", help="distance-loss ablation with control")
    _add_common(s)
    s.set_defaults(func=cmd_mse_ablation)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:
        stage = getattr(args, "command", "run")
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
