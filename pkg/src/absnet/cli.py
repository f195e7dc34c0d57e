"""Command-line front door: ``absnet {train,eval,ensemble,probe,synth}``.

Every run writes its resolved configuration to ``<out>/config.json``; passing
that file back with ``--config`` reproduces the run (flags still win over the
file, the file wins over built-in defaults).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, data, ensemble, models, probe, trainer
from .nn import ACTIVATIONS

log = logging.getLogger("absnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


_TRAIN_DEFAULTS = {
    "activation": "abs", "estimator": 1, "seed": 0, "stage_lrs": [1e-3, 1e-4, 1e-5, 1e-6],
    "start_lr": None, "batch_size": 128, "patience": 10, "epoch_cap": 200, "bootstrap_samples": 1000,
    "train_fraction": 0.8, "train_subset": None, "data_dir": None, "deterministic": False,
}
DEFAULTS = {
    "train": {**_TRAIN_DEFAULTS, "out": "runs/train"},
    "ensemble": {**_TRAIN_DEFAULTS, "out": "runs/ensemble", "members": 20, "base_seed": 0},
    "eval": {"data": "test", "data_dir": None, "bootstrap_samples": 1000, "seed": 0, "out": None,
             "train_fraction": 0.8},
    "probe": {"activation": "abs", "depths": [0, 1, 2, 5, 10, 20], "seed": 0, "batch_size": 16,
              "out": "runs/probe"},
    "synth": {"net": None, "seed": 0, "epochs": 1000, "lr": 1e-3, "batch_size": 32, "n_points": 1000,
              "data_seed": 0, "out": "runs/synth", "deterministic": False},
}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _add_train_options(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--arch", default=S, help="catalog name, e.g. tiny, lenet, conv120, lenet+20dabs")
    p.add_argument("--activation", choices=ACTIVATIONS, default=S)
    p.add_argument("--estimator", type=int, choices=(1, 2, 3), default=S,
                   help="expected-accuracy estimator driving checkpointing and stopping")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--stage-lrs", dest="stage_lrs", type=_floats, default=S, help="comma-separated, decreasing")
    p.add_argument("--start-lr", dest="start_lr", type=float, default=S,
                   help="skip stages above this learning rate (fallback when 1e-3 fails to start)")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--patience", type=int, default=S)
    p.add_argument("--epoch-cap", dest="epoch_cap", type=int, default=S)
    p.add_argument("--bootstrap-samples", dest="bootstrap_samples", type=int, default=S)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=S)
    p.add_argument("--train-subset", dest="train_subset", type=int, default=S,
                   help="use only the first N samples of the training part")
    p.add_argument("--data-dir", dest="data_dir", default=S, help=f"MNIST IDX directory (default ${data.DATA_DIR_ENV})")
    p.add_argument("--deterministic", action="store_true", default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="absnet", description=__doc__.split("\n")[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=S, help="JSON file of option values")
    common.add_argument("--out", default=S, help="output directory")

    p = sub.add_parser("train", parents=[common], help="train one network with the LR staircase")
    _add_train_options(p)

    p = sub.add_parser("ensemble", parents=[common], help="train a multi-seed campaign")
    _add_train_options(p)
    p.add_argument("--members", type=int, default=S)
    p.add_argument("--base-seed", dest="base_seed", type=int, default=S)

    p = sub.add_parser("eval", parents=[common], help="accuracy + bootstrap interval of a checkpoint")
    p.add_argument("--checkpoint", default=S)
    p.add_argument("--data", choices=("train", "val", "test"), default=S)
    p.add_argument("--data-dir", dest="data_dir", default=S)
    p.add_argument("--bootstrap-samples", dest="bootstrap_samples", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=S)

    p = sub.add_parser("probe", parents=[common], help="gradient-norm profile and depth sweep")
    p.add_argument("--arch", default=S, help="e.g. lenet+20dabs; the suffix names the disturbing activation")
    p.add_argument("--activation", choices=ACTIVATIONS, default=S, help="activation of the base network")
    p.add_argument("--depths", type=_ints, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)

    p = sub.add_parser("synth", parents=[common], help="2-D synthetic experiments")
    p.add_argument("--dataset", choices=data.SYNTH_KINDS, default=S)
    p.add_argument("--net", choices=sorted(models.SYNTH_NETS), default=S, help="default: all three")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--n-points", dest="n_points", type=int, default=S)
    p.add_argument("--data-seed", dest="data_seed", type=int, default=S)
    p.add_argument("--deterministic", action="store_true", default=S)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, overlaid by the ``--config`` file, overlaid by explicit flags."""
    flags = vars(args).copy()
    command = flags.pop("command")
    flags.pop("log_level", None)
    cfg = dict(DEFAULTS[command])
    if "config" in flags:
        path = Path(flags.pop("config"))
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        loaded.pop("command", None)
        cfg.update(loaded)
    cfg.update(flags)
    cfg["command"] = command
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return out


def _data_dir(cfg) -> Path:
    d = cfg.get("data_dir") or data.default_data_dir()
    if d is None:
        raise UsageError(f"no MNIST directory: pass --data-dir or set ${data.DATA_DIR_ENV}")
    d = Path(d)
    if not d.is_dir():
        raise UsageError(f"MNIST directory does not exist: {d}")
    for split in ("train", "test"):
        for p in data.mnist_paths(d, split):
            if not p.exists():
                raise UsageError(f"MNIST file missing: {p}")
    return d


def _mnist_splits(cfg):
    d = _data_dir(cfg)
    full = data.load_mnist(d, "train")
    train_set, val_set = data.split_train_val(full, cfg["train_fraction"])
    if cfg.get("train_subset"):
        train_set = train_set.subset(slice(0, int(cfg["train_subset"])))
    return train_set, val_set, data.load_mnist(d, "test")


def _train_config(cfg) -> trainer.TrainConfig:
    try:
        return trainer.TrainConfig(
            stage_lrs=tuple(cfg["stage_lrs"]), start_lr=cfg["start_lr"], patience=cfg["patience"],
            batch_size=cfg["batch_size"], estimator=cfg["estimator"],
            bootstrap_samples=cfg["bootstrap_samples"], seed=cfg["seed"], epoch_cap=cfg["epoch_cap"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _limit_threads(cfg):
    if cfg.get("deterministic"):
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)


def _write_timings(report: trainer.TrainReport, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "seconds"])
        for r in report.records:
            w.writerow([r.epoch, round(r.seconds, 3)])


def cmd_train(cfg) -> int:
    _require(cfg, "arch")
    try:
        net = models.build_catalog(cfg["arch"], cfg["activation"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tcfg = _train_config(cfg)
    train_set, val_set, test_set = _mnist_splits(cfg)
    _limit_threads(cfg)
    out = _out_dir(cfg)

    report = trainer.train(net, train_set, val_set, tcfg, out_dir=out)
    report.write_csv(out / "metrics.csv", deterministic=cfg["deterministic"])
    if cfg["deterministic"]:
        _write_timings(report, out / "timings.csv")
    acc, boot = trainer.evaluate(net, test_set, cfg["bootstrap_samples"], cfg["seed"])
    summary = {
        "arch": net.name, "activation": cfg["activation"], "estimator": cfg["estimator"],
        "param_count": models.count_params(net), "test_accuracy": acc,
        "test_interval": [boot.lower, boot.upper], "test_bootstrap": boot.as_dict(),
        **report.summary(), "checkpoint": "best.ckpt",
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{net.name}+{cfg['activation']}: test accuracy {acc:.4f} "
          f"({boot.lower:.4f}, {boot.upper:.4f}) after {report.total_epochs} epochs")
    return EXIT_OK


def cmd_eval(cfg) -> int:
    _require(cfg, "checkpoint")
    path = Path(cfg["checkpoint"])
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    net = checkpoint.load_checkpoint(path)
    if net.name.startswith("mlp:"):
        raise UsageError("eval runs on MNIST checkpoints; synthetic nets are evaluated by `synth`")
    d = _data_dir(cfg)
    if cfg["data"] == "test":
        ds = data.load_mnist(d, "test")
    else:
        train_part, val_part = data.split_train_val(data.load_mnist(d, "train"), cfg["train_fraction"])
        ds = val_part if cfg["data"] == "val" else train_part
    acc, boot = trainer.evaluate(net, ds, cfg["bootstrap_samples"], cfg["seed"])
    result = {"checkpoint": str(path), "arch": net.name, "activation": net.activation, "data": cfg["data"],
              "accuracy": acc, "interval": [boot.lower, boot.upper], "bootstrap": boot.as_dict()}
    text = json.dumps(result, indent=2) + "\n"
    if cfg.get("out"):
        _out_dir(cfg)
        (Path(cfg["out"]) / "eval.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ensemble(cfg) -> int:
    _require(cfg, "arch")
    try:
        models.build_catalog(cfg["arch"], cfg["activation"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tcfg = _train_config(cfg)
    train_set, val_set, test_set = _mnist_splits(cfg)
    _limit_threads(cfg)
    out = _out_dir(cfg)
    report = ensemble.train_ensemble(cfg["arch"], cfg["activation"], cfg["estimator"], cfg["members"],
                                     cfg["base_seed"], train_set, val_set, test_set, tcfg, out_dir=out)
    label = f"{cfg['arch']}+{cfg['activation']}"
    if report.accuracy_limits is not None:
        lo, hi = report.accuracy_limits
        print(f"{label} C.I. [{100 * lo:.2f},{100 * hi:.2f}]")
        print(f"{label} M.V. {100 * report.majority_vote_accuracy:.2f}")
    if not report.complete:
        print(f"{len(report.failures)} member(s) failed; see ensemble_report.json", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_probe(cfg) -> int:
    _require(cfg, "arch")
    try:
        base, depth, dact = models.parse_arch(cfg["arch"])
        net = models.init_params(models.build_catalog(cfg["arch"], cfg["activation"]), cfg["seed"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(cfg)
    rng = np.random.default_rng([cfg["seed"], 1])
    x = rng.uniform(0, 1, size=(cfg["batch_size"],) + models.MNIST_SHAPE).astype(np.float32)
    y = rng.integers(0, models.NUM_CLASSES, size=cfg["batch_size"])
    probe.write_profile_csv(probe.gradient_profile(net, x, y), out / "profile.csv")
    rows = probe.depth_sweep(dact or cfg["activation"], cfg["depths"], cfg["seed"], base=base,
                             base_activation=cfg["activation"], batch_size=cfg["batch_size"])
    probe.write_depth_csv(rows, out / "depth_sweep.csv")
    for r in rows:
        print(f"depth {r.depth:3d} {r.activation}: ratio {r.ratio:.4g}")
    return EXIT_OK


def cmd_synth(cfg) -> int:
    _require(cfg, "dataset")
    nets = [cfg["net"]] if cfg.get("net") else sorted(models.SYNTH_NETS)
    out = _out_dir(cfg)
    train_set, val_set = data.split_train_val(data.synth_dataset(cfg["dataset"], cfg["n_points"], cfg["data_seed"]))
    summary = {"dataset": cfg["dataset"], "nets": {}}
    for kind in nets:
        net = models.build_synth_net(kind)
        report = trainer.train_simple(net, train_set, val_set, epochs=cfg["epochs"], lr=cfg["lr"],
                                      batch_size=cfg["batch_size"], seed=cfg["seed"])
        with open(out / f"loss_curve_{kind}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
            for r in report.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.train_acc), repr(r.val_acc)])
        last = report.records[-1]
        summary["nets"][kind] = {"param_count": models.count_params(net), "final_train_accuracy": last.train_acc,
                                 "final_val_accuracy": last.val_acc, "epochs": report.total_epochs}
        print(f"{cfg['dataset']}/{kind}: {models.count_params(net)} trainable parameters, "
              f"final val accuracy {last.val_acc:.3f}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "ensemble": cmd_ensemble, "probe": cmd_probe, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg["command"]](cfg)
    except UsageError as exc:
        print(f"absnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (data.IdxFormatError, checkpoint.CheckpointError) as exc:
        print(f"absnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (trainer.TrainingError, FloatingPointError) as exc:
        print(f"absnet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
