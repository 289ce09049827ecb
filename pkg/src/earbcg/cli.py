"""Command-line front end.

Subcommands cover the full workflow: generate a synthetic cohort,
clean recordings, recover motion-corrupted stretches, train the
feature extractor, enroll a user, authenticate a query, run the
cross-validated evaluation, and degrade signals for robustness
studies. Signals travel as header+CSV files, cohorts as a directory
with a JSON manifest, models as npz+JSON checkpoint pairs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .auth import AuthPipeline, authenticate, load_profile, register, save_profile
from .core import read_signal_csv, write_signal_csv
from .denoise import ShrinkConfig, denoise_inherent
from .disentangle import HidnetConfig, load_checkpoint, save_checkpoint, train_hidnet, hidnet_features
from .harness import (
    DegradationSpec,
    EvalConfig,
    apply_degradation,
    evaluate,
    report,
    _training_windows,
)
from .motion import MotionConfig, RlsConfig, denoise_sporadic, periodicity
from .siamese import SiameseConfig, load_siamese, save_siamese, train_siamese
from .synth import NoiseSpec, load_cohort, make_cohort, save_cohort
from .wavelet import meyer_bank, swt_decompose


def _load_pipeline(args) -> AuthPipeline:
    hid_params, hid_cfg = load_checkpoint(args.hidnet)
    sia_params, _ = load_siamese(args.siamese)
    return AuthPipeline(hid_params, hid_cfg, sia_params,
                        fs=args.fs, window_s=args.window_s,
                        denoise=not args.no_denoise)


def _cohort_windows(cohort, window_s, step_s, per_subject, denoise=True):
    """Labeled training windows from a cohort, one label per subject."""
    xs, ys = [], []
    for label, (profile, seg) in enumerate(cohort):
        clean = denoise_inherent(seg) if denoise else seg
        win = int(round(window_s * seg.fs))
        step = int(round(step_s * seg.fs))
        w = _training_windows(clean.samples, win, step, per_subject)
        xs.append(w)
        ys.append(np.full(w.shape[0], label))
    return np.concatenate(xs), np.concatenate(ys)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    noise = NoiseSpec(sensor_sigma=args.sensor_sigma,
                      resp_amplitude=args.resp_amplitude,
                      sway_amplitude=args.sway_amplitude)
    cohort = make_cohort(args.subjects, args.duration, args.fs, noise, seed=args.seed)
    save_cohort(args.out, cohort, noise)
    print(f"wrote {args.subjects} subjects x {args.duration:.0f} s at "
          f"{args.fs:.0f} Hz to {args.out}")
    return 0


def _cmd_denoise(args) -> int:
    seg = read_signal_csv(args.infile)
    drop = frozenset({1}) if args.drop_d1 else frozenset()
    cfg = ShrinkConfig(p=args.p, drop_levels=drop, drop_approx=args.drop_approx)
    out = denoise_inherent(seg, cfg, levels=args.levels)
    write_signal_csv(args.out, out)
    if args.energy_report:
        dec = swt_decompose(seg, meyer_bank(), args.levels)
        lines = ["level,energy"]
        for j, d in enumerate(dec.details, start=1):
            lines.append(f"d{j},{float(np.sum(d * d)):.6e}")
        lines.append(f"approx,{float(np.sum(dec.approx * dec.approx)):.6e}")
        Path(args.energy_report).write_text("\n".join(lines) + "\n")
    print(f"denoised {args.infile} -> {args.out}")
    return 0


def _cmd_motion(args) -> int:
    seg = read_signal_csv(args.infile)
    ref = read_signal_csv(args.ref)
    rls_cfg = RlsConfig(order=args.order, kappa=args.kappa)
    out = denoise_sporadic(seg, ref, rls_cfg=rls_cfg)
    write_signal_csv(args.out, out)
    if args.report:
        rep = periodicity(seg)
        Path(args.report).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        print(f"periodic: {rep.is_periodic}")
    print(f"processed {args.infile} -> {args.out}")
    return 0


def _cmd_train_hidnet(args) -> int:
    cohort = load_cohort(args.data)
    x, y = _cohort_windows(cohort, args.window_s, args.step_s,
                           args.windows_per_subject, denoise=not args.no_denoise)
    cfg = HidnetConfig(n_subjects=len(cohort), epochs=args.epochs,
                       lr=args.lr, batch_size=args.batch_size)
    log_path = args.log or str(Path(args.out).with_suffix("")) + "_log.csv"
    params, history = train_hidnet(x, y, cfg, seed=args.seed, log_path=log_path)
    save_checkpoint(args.out, params, cfg)
    if args.siamese_out:
        feats = hidnet_features(params, cfg, x)
        sia, _ = train_siamese(feats, y, SiameseConfig(), seed=args.seed)
        save_siamese(args.siamese_out, sia, SiameseConfig())
    last = history[-1]
    print(f"trained {args.epochs} epochs on {x.shape[0]} windows; "
          f"final loss {last['total']:.4f} (log: {log_path})")
    return 0


def _cmd_register(args) -> int:
    pipeline = _load_pipeline(args)
    genuine = read_signal_csv(args.genuine)
    impostor_files = sorted(Path(args.impostors).glob("*.csv"))
    if not impostor_files:
        raise SystemExit(f"no impostor CSVs found in {args.impostors}")
    impostors = [read_signal_csv(f) for f in impostor_files]
    profile = register(genuine, impostors, pipeline, grid_points=args.grid_points)
    save_profile(args.out, profile)
    # tag the owner; extra keys are ignored on load
    doc = json.loads(Path(args.out).read_text())
    doc["user_id"] = args.user
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"registered {args.user}: tau={profile.tau:.4f}, "
          f"m={profile.m}, impostor files={len(impostor_files)}")
    return 0


def _cmd_auth(args) -> int:
    pipeline = _load_pipeline(args)
    profile = load_profile(args.profile)
    user_id = json.loads(Path(args.profile).read_text()).get("user_id")
    query = read_signal_csv(args.query)
    accepted, dist = authenticate(query, profile, pipeline)
    doc = {
        "accepted": bool(accepted),
        "mean_distance": float(dist),
        "tau": float(profile.tau),
        "n_windows": int(query.samples.size // pipeline.window_len),
    }
    if user_id is not None:
        doc["user_id"] = user_id
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0 if accepted else 1


def _cmd_eval(args) -> int:
    cohort = load_cohort(args.cohort)
    overrides = {} if args.hidnet_epochs is None else {"epochs": args.hidnet_epochs}
    cfg = EvalConfig(n_folds=args.folds, seed=args.seed,
                     samples_per_user=args.samples_per_user,
                     registration_samples=args.registration_samples,
                     train_windows_per_user=args.train_windows,
                     loss_aug=args.loss_aug,
                     hidnet_overrides=overrides)
    metrics = evaluate(cohort, cfg=cfg, out_dir=args.out if args.save_models else None)
    paths = report(metrics, args.out)
    print(f"mean FAR {metrics.mean_far:.2f}%  mean FRR {metrics.mean_frr:.2f}%  "
          f"mean EER {metrics.eer:.2f}%")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_degrade(args) -> int:
    seg = read_signal_csv(args.infile)
    spec = DegradationSpec(kind=args.kind, loss_rate=args.rate,
                           target_fs=args.target_fs,
                           removal_window=args.removal_window)
    out = apply_degradation(seg, spec, seed=args.seed)
    write_signal_csv(args.out, out)
    print(f"applied {args.kind} to {args.infile} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_args(p) -> None:
    p.add_argument("--hidnet", required=True, help="feature extractor checkpoint base path")
    p.add_argument("--siamese", required=True, help="metric head checkpoint base path")
    p.add_argument("--fs", type=float, default=100.0, help="pipeline sampling rate")
    p.add_argument("--window-s", type=float, default=4.0, help="authentication window seconds")
    p.add_argument("--no-denoise", action="store_true",
                   help="skip per-window denoising (for pre-cleaned inputs)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="earbcg",
                                 description="heartbeat-based wearer authentication toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort directory")
    p.add_argument("--subjects", type=int, default=12)
    p.add_argument("--duration", type=float, default=964.0, help="seconds per subject")
    p.add_argument("--fs", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--sensor-sigma", type=float, default=0.05)
    p.add_argument("--resp-amplitude", type=float, default=0.15)
    p.add_argument("--sway-amplitude", type=float, default=0.1)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("denoise", help="remove inherent interference from a signal file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--p", type=float, default=1.5, help="shrinkage shape exponent")
    p.add_argument("--drop-d1", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--drop-approx", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--energy-report", help="optional per-level energy CSV")
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("motion", help="recover a motion-corrupted stretch against a reference")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ref", required=True, help="clean periodic reference signal")
    p.add_argument("--out", required=True)
    p.add_argument("--kappa", type=float, default=0.05)
    p.add_argument("--order", type=int, default=8)
    p.add_argument("--report", help="optional periodicity report JSON")
    p.set_defaults(func=_cmd_motion)

    p = sub.add_parser("train-hidnet", help="train the identity feature extractor on a cohort")
    p.add_argument("--data", required=True, help="cohort directory")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint base path")
    p.add_argument("--log", help="per-epoch loss CSV (default: <out>_log.csv)")
    p.add_argument("--window-s", type=float, default=4.0)
    p.add_argument("--step-s", type=float, default=2.0)
    p.add_argument("--windows-per-subject", type=int, default=120)
    p.add_argument("--no-denoise", action="store_true")
    p.add_argument("--siamese-out", help="also fit the metric head and save it here")
    p.set_defaults(func=_cmd_train_hidnet)

    p = sub.add_parser("register", help="enroll a user from genuine and impostor signals")
    p.add_argument("--user", required=True)
    p.add_argument("--genuine", required=True, help="genuine signal CSV")
    p.add_argument("--impostors", required=True, help="directory of impostor CSVs")
    p.add_argument("--out", required=True, help="profile JSON path")
    p.add_argument("--grid-points", type=int, default=1000)
    _add_model_args(p)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("auth", help="authenticate a query against a profile")
    p.add_argument("--query", required=True)
    p.add_argument("--profile", required=True)
    _add_model_args(p)
    p.set_defaults(func=_cmd_auth)

    p = sub.add_parser("eval", help="run the cross-validated evaluation on a cohort")
    p.add_argument("--cohort", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--samples-per-user", type=int, default=240)
    p.add_argument("--registration-samples", type=int, default=80)
    p.add_argument("--train-windows", type=int, default=120)
    p.add_argument("--hidnet-epochs", type=int, default=None,
                   help="override the feature extractor epoch count")
    p.add_argument("--loss-aug", action="store_true",
                   help="augment training windows with packet loss")
    p.add_argument("--save-models", action="store_true",
                   help="keep per-fold checkpoints next to the report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("degrade", help="apply an acquisition degradation to a signal file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True, choices=["packet_loss", "resample", "removal"])
    p.add_argument("--rate", type=float, default=0.0, help="packet loss fraction")
    p.add_argument("--target-fs", type=float, default=100.0)
    p.add_argument("--removal-window", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_degrade)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
