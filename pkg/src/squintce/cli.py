"""Command-line entry point: ``squintce <subcommand> --config cfg.json ...``.

The output directory and worker thread count can be overridden with the
``SQUINTCE_OUTPUT_DIR`` and ``SQUINTCE_THREADS`` environment variables.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .estimators import nmse, normalize_measurements, to_db


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    cfg = cfg.with_env()
    if getattr(args, "threads", None):
        cfg = harness.dataclasses.replace(cfg, threads=args.threads)
    return cfg


def _out(cfg, name: str, given: str | None) -> Path:
    path = Path(given) if given else Path(cfg.output_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _dataset_pilots(arrays):
    from .frontend import PilotBlock

    return PilotBlock(arrays["pilot_precoders"], arrays["pilot_symbols"])


def cmd_gen_dataset(args) -> int:
    cfg = _config(args)
    out = harness.gen_dataset(cfg, args.count, cfg.seed if args.seed is None else args.seed, _out(cfg, "dataset", args.out))
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"wrote {args.count} samples to {out} (content hash {manifest['content_hash'][:16]})")
    return 0


def cmd_estimate(args) -> int:
    cfg = _config(args)
    manifest, arrays = harness.load_dataset(args.dataset)
    pilots = _dataset_pilots(arrays)
    rows = []
    for d in cfg.dictionaries:
        for e in cfg.estimators:
            try:
                rec = harness.build_recovery(cfg, pilots, d, with_lamp=(e == "gmmv_lamp"))
                est = harness.estimate_channels(cfg, e, rec, arrays["y"])
            except (ValueError, OSError, np.linalg.LinAlgError) as exc:
                print(f"{e}/{d}: error: {exc}", file=sys.stderr)
                continue
            val = float(to_db(np.mean(nmse(est, arrays["h"]))))
            rows.append(dict(estimator=e, dictionary=d, snr_db=manifest["snr_db"], nmse_db=val, samples=manifest["count"]))
            print(f"{e:10s} {d:10s} NMSE {val:8.3f} dB over {manifest['count']} samples")
            if args.save_estimates:
                np.save(_out(cfg, f"estimates_{e}_{d}.npy", None), est)
    return 0 if rows else 1


def cmd_train_lamp(args) -> int:
    from .dictionary import assemble_measurements, build_dft_wrd, build_learnable_wrd, init_learnable_grid
    from .lamp import GridOperator, TrainSchedule, init_params, save_checkpoint, train_lamp

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = _config(args)
    manifest, arrays = harness.load_dataset(args.dataset)
    val = harness.load_dataset(args.val_dataset)[1] if args.val_dataset else None
    pilots = _dataset_pilots(arrays)
    geo = cfg.geometry()
    dictionary = cfg.dictionaries[0]
    sched = TrainSchedule(args.steps, args.lr, args.optimizer)
    if dictionary == "learnable":
        grid = init_learnable_grid(geo, cfg.redundancy * cfg.n_ap, args.seed, cfg.min_distance_m)
        ms = assemble_measurements(pilots, build_learnable_wrd(geo, *grid))
        _, _, scale = normalize_measurements(arrays["y"], ms.a)
        op = GridOperator(geo, pilots.composed(), scale)
        init = init_params(ms.a / scale, args.layers, args.gamma0, args.epsilon0, grid=grid)
        D = None
    else:
        ms = assemble_measurements(pilots, build_dft_wrd(geo, cfg.redundancy, freq_flat=(dictionary == "flat")))
        _, op, scale = normalize_measurements(arrays["y"], ms.a)
        init = init_params(op, args.layers, args.gamma0, args.epsilon0)
        D = ms.dictionary
    res = train_lamp(
        arrays["y"] / scale,
        arrays["h"],
        op,
        args.layers,
        sched,
        args.seed,
        dictionary=D,
        init=init,
        Y_val=None if val is None else val["y"] / scale,
        H_val=None if val is None else val["h"],
    )
    out = _out(cfg, "lamp.ckpt", args.out)
    save_checkpoint(out, res.params, sched, args.seed, manifest["content_hash"], extra={"measurement_scale": scale, "dictionary": dictionary})
    if res.val_initial is not None:
        print(f"validation NMSE: initial {10 * np.log10(res.val_initial):.3f} dB, trained {10 * np.log10(res.val_final):.3f} dB")
    print(f"checkpoint written to {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    res = harness.run_sweep(cfg, _out(cfg, "sweep.csv", args.out))
    for name, msg in res.errors.items():
        print(f"cell {name} failed: {msg}", file=sys.stderr)
    print(f"wrote {len(res.records)} rows to {res.csv_path}")
    return 0


def cmd_feedback(args) -> int:
    from .feedback import BitVector, FeedbackCodebook, decode_csi, encode_csi
    from .estimators import BernoulliGaussianPrior, gmmv_amp, moment_prior

    cfg = _config(args)
    manifest, arrays = harness.load_dataset(args.dataset)
    pilots = _dataset_pilots(arrays)
    rec = harness.build_recovery(cfg, pilots, cfg.dictionaries[0])
    Yn, An, _ = normalize_measurements(arrays["y"], rec.a)
    V = An.shape[2]
    gamma = harness.default_gamma(cfg, V) if cfg.gamma is None else cfg.gamma
    prior = BernoulliGaussianPrior(gamma, cfg.epsilon) if cfg.epsilon is not None else moment_prior(Yn, An, gamma)
    H_sparse = gmmv_amp(Yn, An, prior, cfg.amp_iterations, cfg.damping)
    cb = FeedbackCodebook(args.support, args.bits, V, cfg.n_subcarriers)
    out = _out(cfg, "feedback.bin", args.out)
    errs = []
    with open(out, "wb") as fh:
        for i, H in enumerate(H_sparse):
            blob = encode_csi(H, cb).to_bytes()
            fh.write(blob)
            rebuilt = decode_csi(BitVector.from_bytes(blob, cb), rec.dictionary)
            errs.append(nmse(rebuilt, arrays["h"][i]))
    print(f"N_f = {cb.n_bits} bits per sample; feedback NMSE {float(to_db(np.mean(errs))):.3f} dB; blobs in {out}")
    return 0


def cmd_complexity(args) -> int:
    cfg = _config(args)
    rows = harness.complexity_report(cfg)
    print("estimator,iterations,flops,dominant_term")
    for r in rows:
        print(f"{r['estimator']},{r['iterations']},{r['flops']:.0f},{r['dominant_term']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="squintce", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="experiment config JSON (defaults if omitted)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen-dataset", cmd_gen_dataset, "simulate and persist a dataset")
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")

    sp = add("estimate", cmd_estimate, "run estimators on a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--save-estimates", action="store_true")

    sp = add("train-lamp", cmd_train_lamp, "train the unrolled network on a dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--val-dataset")
    sp.add_argument("--layers", type=int, default=5)
    sp.add_argument("--steps", type=int, default=100, help="optimizer steps per stage")
    sp.add_argument("--lr", type=float, default=3e-2)
    sp.add_argument("--optimizer", choices=["gd", "adam"], default="adam")
    sp.add_argument("--gamma0", type=float, default=1e-3)
    sp.add_argument("--epsilon0", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")

    sp = add("sweep", cmd_sweep, "NMSE sweep over the SNR grid, written as CSV")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--out")

    sp = add("feedback", cmd_feedback, "estimate, encode and reconstruct CSI through the bit-vector codec")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--support", type=int, default=8)
    sp.add_argument("--bits", type=int, default=4)
    sp.add_argument("--out")

    add("complexity", cmd_complexity, "closed-form operation counts per estimator")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
