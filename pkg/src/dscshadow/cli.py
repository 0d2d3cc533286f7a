"""Command line interface: synth, train, eval, fit-transfer, predict."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import network as net
from .checkpoint import CheckpointError
from .colortransfer import TransferFitError, apply_transfer, fit_transfer
from .imageio import (PnmError, read_mask, read_ppm, write_mask, write_pgm,
                      write_ppm, _atomic_write)
from .metrics import accuracy, ber
from .synth import SynthConfig, load_dataset, write_dataset


def _bool_flag(v: str) -> bool:
    if v.lower() in ("true", "1", "yes"):
        return True
    if v.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {v!r}")


def _write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg_kwargs = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            cfg_kwargs = json.load(f)
    if args.count is not None:
        cfg_kwargs["count"] = args.count
    if args.seed is not None:
        cfg_kwargs["seed"] = args.seed
    if args.resolution is not None:
        cfg_kwargs["resolution"] = (args.resolution, args.resolution)
    if args.perturb is not None:
        cfg_kwargs["perturb"] = args.perturb
    cfg = SynthConfig(**cfg_kwargs)
    ids = write_dataset(cfg, args.out)
    print(f"wrote {len(ids)} scenes to {args.out}")
    return 0


def _loss_header(n_scales: int) -> list[str]:
    return (["iteration", "total"] + [f"scale_{i}" for i in range(1, n_scales + 1)]
            + ["mlif", "fusion"])


def cmd_train(args) -> int:
    cfg = cfgmod.load_train_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.use_color_transfer is not None:
        cfg["use_color_transfer"] = args.use_color_transfer
    if cfg["out"] is None:
        raise cfgmod.ConfigError("no output directory: set \"out\" or pass --out")
    out_dir = cfg["out"]
    os.makedirs(out_dir, exist_ok=True)
    print(json.dumps(cfg, indent=2))
    _atomic_write(os.path.join(out_dir, "config.resolved.json"),
                  json.dumps(cfg, indent=2).encode())

    dataset = load_dataset(cfg["dataset"])
    state = net.NetworkState(cfgmod.network_config(cfg), seed=cfg["seed"])
    tc = cfgmod.train_config(cfg)
    if cfg["task"] == "detect":
        trace = net.train_detection(dataset, state, tc)
    else:
        trace, transfers = net.train_removal(dataset, state, tc,
                                             use_color_transfer=cfg["use_color_transfer"])
        if transfers:
            tdir = os.path.join(out_dir, "transfers")
            os.makedirs(tdir, exist_ok=True)
            for sid, t in transfers.items():
                _atomic_write(os.path.join(tdir, f"{sid}.json"), t.to_json().encode())
    state.save(os.path.join(out_dir, "model.dsck"))
    _write_csv(os.path.join(out_dir, "loss_trace.csv"),
               _loss_header(state.config.n_scales), trace)
    print(f"checkpoint: {os.path.join(out_dir, 'model.dsck')}")
    print(f"loss trace: {os.path.join(out_dir, 'loss_trace.csv')} ({len(trace)} rows)")
    return 0


def _load_state(checkpoint: str, config_path: str | None, task: str | None):
    if config_path is None:
        config_path = os.path.join(os.path.dirname(os.path.abspath(checkpoint)),
                                   "config.resolved.json")
    with open(config_path, encoding="utf-8") as f:
        cfg = cfgmod.resolve_train_config(json.load(f))
    if task is not None and cfg["task"] != task:
        raise net.TaskError(f"checkpoint task is {cfg['task']!r}, requested {task!r}")
    state = net.NetworkState(cfgmod.network_config(cfg), seed=cfg["seed"])
    state.load(checkpoint)
    return state, cfg


METRIC_COLUMNS = ["sample_id", "accuracy", "ber", "rmse_all", "rmse_shadow",
                  "rmse_nonshadow"]


def cmd_eval(args) -> int:
    state, _ = _load_state(args.checkpoint, args.config, args.task)
    dataset = load_dataset(args.dataset)
    rows = []
    if args.task == "detect":
        per_scene, pooled = net.evaluate_detection(state, dataset)
        for sid, st in per_scene:
            rows.append([sid, f"{accuracy(st):.6f}", f"{ber(st):.6f}", "", "", ""])
        summary = {
            "task": "detect",
            "samples": len(per_scene),
            "pooled_accuracy": accuracy(pooled),
            "pooled_ber": ber(pooled),
            "mean_accuracy": float(np.mean([accuracy(s) for _, s in per_scene])),
            "mean_ber": float(np.mean([ber(s) for _, s in per_scene])),
        }
    else:
        per_scene = net.evaluate_removal(state, dataset, target=args.target)
        for sid, r_all, r_s, r_n in per_scene:
            rows.append([sid, "", "", f"{r_all:.6f}", f"{r_s:.6f}", f"{r_n:.6f}"])
        summary = {
            "task": "remove",
            "target": args.target,
            "samples": len(per_scene),
            "mean_rmse_all": float(np.mean([r[1] for r in per_scene])),
            "mean_rmse_shadow": float(np.mean([r[2] for r in per_scene])),
            "mean_rmse_nonshadow": float(np.mean([r[3] for r in per_scene])),
        }
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "metrics.csv"), METRIC_COLUMNS, rows)
    _atomic_write(os.path.join(args.out, "summary.json"),
                  json.dumps(summary, indent=2).encode())
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0


def cmd_fit_transfer(args) -> int:
    shadow = read_ppm(args.shadow).astype(np.float64)
    free = read_ppm(args.free).astype(np.float64)
    mask = read_mask(args.mask)
    t = fit_transfer(shadow, free, ~mask)
    _atomic_write(args.out, t.to_json().encode())
    print(t.to_json())
    if args.adjusted:
        adjusted = np.clip(np.rint(apply_transfer(free, t)), 0, 255).astype(np.uint8)
        write_ppm(args.adjusted, adjusted)
    return 0


def cmd_predict(args) -> int:
    state, cfg = _load_state(args.checkpoint, args.config, args.task)
    image = read_ppm(args.image)
    if cfg["task"] == "detect":
        binary, soft = net.predict_mask(image, state)
        write_pgm(args.out + "_soft.pgm",
                  np.clip(np.rint(soft * 255.0), 0, 255).astype(np.uint8))
        write_mask(args.out + "_mask.pgm", binary)
        print(f"wrote {args.out}_soft.pgm and {args.out}_mask.pgm")
    else:
        _, rgb = net.predict_shadow_free(image, state)
        write_ppm(args.out + "_free.ppm", np.rint(rgb).astype(np.uint8))
        print(f"wrote {args.out}_free.ppm")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dscshadow",
                                description="Direction-aware spatial context shadow "
                                            "detection and removal, desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic shadow dataset")
    s.add_argument("--out", required=True, help="output dataset directory")
    s.add_argument("--config", help="JSON file with SynthConfig fields")
    s.add_argument("--count", type=int, help="number of scenes")
    s.add_argument("--seed", type=int, help="generator seed")
    s.add_argument("--resolution", type=int, help="square image size in pixels")
    s.add_argument("--perturb", type=_bool_flag, default=None,
                   help="apply a planted affine color drift to shadow-free images")
    s.set_defaults(fn=cmd_synth)

    t = sub.add_parser("train", help="train a detection or removal network")
    t.add_argument("--config", required=True, help="JSON training configuration")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--out", help="override the output directory")
    t.add_argument("--use-color-transfer", type=_bool_flag, default=None,
                   help="override the color-compensation switch (removal only)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--task", required=True, choices=("detect", "remove"))
    e.add_argument("--out", required=True, help="directory for metrics.csv / summary.json")
    e.add_argument("--config", help="network config (default: sibling of checkpoint)")
    e.add_argument("--target", choices=("free", "transferred"), default="free",
                   help="removal reference image")
    e.set_defaults(fn=cmd_eval)

    f = sub.add_parser("fit-transfer", help="fit the 3x4 color compensation matrix")
    f.add_argument("--shadow", required=True, help="shadow image (PPM)")
    f.add_argument("--free", required=True, help="shadow-free image (PPM)")
    f.add_argument("--mask", required=True, help="binary shadow mask (PGM)")
    f.add_argument("--out", required=True, help="output JSON path")
    f.add_argument("--adjusted", help="optional output PPM of the adjusted image")
    f.set_defaults(fn=cmd_fit_transfer)

    pr = sub.add_parser("predict", help="run a checkpoint on one image")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--image", required=True, help="input PPM")
    pr.add_argument("--out", required=True, help="output path prefix")
    pr.add_argument("--task", choices=("detect", "remove"),
                    help="assert the checkpoint task")
    pr.add_argument("--config", help="network config (default: sibling of checkpoint)")
    pr.set_defaults(fn=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (cfgmod.ConfigError, net.TaskError, PnmError, TransferFitError,
            CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
