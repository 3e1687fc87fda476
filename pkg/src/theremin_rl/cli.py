"""Command-line entry point: train presets, play melodies, inspect calibration."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import dsp, harness
from .env import calibrate_epsilon

_PRESET_BLURBS = {
    "baseline": "6-DOF arm, CQT, template reward, 38 dB SNR, hindsight replay",
    "transforms": "baseline with CQT / STFT / mel front-ends",
    "action-spaces": "baseline with Cartesian vs direct joint actuation",
    "her-ablation": "baseline with and without hindsight relabeling",
    "snr-sweep": "baseline at 38 / 16 / 8 / 0 dB signal-to-noise",
    "generalization": "off-scale goal pitches and a linear pitch map",
    "tdg-ablation": "one constant goal note per episode",
    "cart1d": "1-DOF cart with the argmax-CQT reward",
}


def _out_root(cli_value: str) -> Path:
    return Path(os.environ.get("TDG_OUT_DIR", cli_value))


def _cmd_train(args) -> int:
    if args.config:
        configs = [harness.parse_run_config(Path(args.config).read_text())]
    else:
        configs = harness.preset(args.preset)
    out_dir = _out_root(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cfg in configs:
        if args.epochs:
            cfg = dataclasses.replace(cfg, epochs=args.epochs)
        if args.seeds:
            cfg = dataclasses.replace(cfg, seeds=tuple(range(args.seeds)))
        results = []
        for seed in cfg.seeds:
            result = harness.train_run(cfg, seed, log=print)
            harness.save_policy(result, out_dir / f"{cfg.name}_seed{seed}.policy")
            results.append(result)
        paths = harness.export_metrics(results, out_dir)
        for path in paths:
            print(f"wrote {path}")
    return 0


def _cmd_play(args) -> int:
    actor, cfg = harness.load_policy(args.policy)
    notes = [n for n in args.notes.split(",") if n]
    csv_path = args.csv or Path(args.out).with_suffix(".csv")
    trace = harness.play_melody(actor, notes, cfg, args.out, csv_path,
                                seed=args.seed)
    hits = sum(1 for _, _, ok in trace if ok)
    print(f"wrote {args.out} and {csv_path}: {hits}/{len(trace)} steps on pitch")
    return 0


def _cmd_calibrate(args) -> int:
    cfg = dsp.make_config(args.transform)
    print(f"{args.transform}: epsilon = {calibrate_epsilon(cfg):.6f}")
    return 0


def _cmd_list_presets(_args) -> int:
    for name in harness.PRESET_NAMES:
        variants = ", ".join(c.name for c in harness.preset(name))
        print(f"{name:16s} {_PRESET_BLURBS[name]}")
        print(f"{'':16s}   configs: {variants}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="theremin-rl",
        description="Train and evaluate simulated theremin-playing agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run every config of one preset")
    p.add_argument("--preset", default="baseline",
                   help="preset name (see list-presets)")
    p.add_argument("--config", help="train from an INI config file instead")
    p.add_argument("--seeds", type=int,
                   help="use seeds 0..K-1 instead of the preset default")
    p.add_argument("--epochs", type=int, help="override the epoch count")
    p.add_argument("--out", default="runs", help="output directory "
                   "(TDG_OUT_DIR overrides)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("play", help="play a melody with a trained policy")
    p.add_argument("--policy", required=True, help="policy snapshot file")
    p.add_argument("--notes", required=True,
                   help="comma-separated note names or Hz, e.g. A4,C5,E5")
    p.add_argument("--out", default="melody.wav")
    p.add_argument("--csv", help="per-step trace path (default: next to WAV)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_play)

    p = sub.add_parser("calibrate-epsilon",
                       help="print the template-match threshold")
    p.add_argument("--transform", required=True, choices=["cqt", "stft", "mel"])
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("list-presets", help="list experiment presets")
    p.set_defaults(func=_cmd_list_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
