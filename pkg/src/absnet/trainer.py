"""Learning-rate staircase training with patience stopping on an expected-accuracy bound.

For every stage learning rate the optimizer is created fresh, the model is
restored from the last saved checkpoint (the first stage starts from a new
initialisation), and training runs until the expected test accuracy has not
improved for ``patience`` epochs.  Besides the per-stage bookkeeping, the
run tracks a global best across stages and returns that model.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import stats
from .checkpoint import save_checkpoint
from .data import Dataset, batches
from .models import init_params
from .nn import Network
from .optim import NonFiniteGradientError, adam_init

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "stage_lr", "train_loss", "train_acc", "val_loss", "val_acc",
                   "acc_expected", "is_best", "seconds")


class TrainingError(RuntimeError):
    pass


class NumericalError(TrainingError):
    """Training diverged before any checkpoint could be saved."""


class LearningRateTooHigh(TrainingError):
    """The first stage never rose above chance level within the patience window."""


@dataclass
class TrainConfig:
    stage_lrs: tuple[float, ...] = (1e-3, 1e-4, 1e-5, 1e-6)
    start_lr: float | None = None
    patience: int = 10
    batch_size: int = 128
    estimator: int = 1
    bootstrap_samples: int = 1000
    seed: int = 0
    epoch_cap: int = 200
    chance_level: float = 0.15
    eval_batch_size: int = 1000

    def __post_init__(self):
        self.stage_lrs = tuple(float(x) for x in self.stage_lrs)
        if not self.stage_lrs or any(a <= b for a, b in zip(self.stage_lrs, self.stage_lrs[1:])):
            raise ValueError(f"stage learning rates must be strictly decreasing, got {self.stage_lrs}")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.epoch_cap < 1:
            raise ValueError("epoch_cap must be >= 1")
        stats.EstimatorKind(self.estimator)
        if not self.stages():
            raise ValueError(f"start_lr {self.start_lr} is below every stage learning rate")

    def stages(self) -> tuple[float, ...]:
        """Stage learning rates, dropping those above ``start_lr`` when it is set."""
        if self.start_lr is None:
            return self.stage_lrs
        return tuple(lr for lr in self.stage_lrs if lr <= self.start_lr * (1 + 1e-9))

    def bootstrap_config(self) -> stats.BootstrapConfig:
        seed = int(np.random.SeedSequence([self.seed, 0xB0075]).generate_state(1)[0])
        return stats.BootstrapConfig(samples=self.bootstrap_samples, seed=seed)


@dataclass
class EpochRecord:
    epoch: int
    stage_lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    acc_expected: float
    is_best: bool
    seconds: float


@dataclass
class StageSummary:
    lr: float
    epochs: int = 0
    best_epoch: int = 0
    best_accuracy: float = 0.0
    stop_reason: str = ""


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    stages: list[StageSummary] = field(default_factory=list)
    best_epoch: int = 0
    best_expected: float = -math.inf
    best_stage_lr: float = math.nan
    checkpoint_path: str | None = None

    @property
    def total_epochs(self) -> int:
        return len(self.records)

    def write_csv(self, path, deterministic: bool = False):
        """Write the metrics CSV; deterministic runs write 0 in the ``seconds`` column."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(METRICS_COLUMNS)
            for r in self.records:
                row = asdict(r)
                row["is_best"] = int(r.is_best)
                row["seconds"] = 0.0 if deterministic else round(r.seconds, 3)
                w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in METRICS_COLUMNS])

    def summary(self) -> dict:
        return {
            "total_epochs": self.total_epochs,
            "best_epoch": self.best_epoch,
            "best_expected_accuracy": self.best_expected,
            "best_stage_lr": self.best_stage_lr,
            "stages": [asdict(s) for s in self.stages],
        }


def _epoch_metrics(net, train_set, val_set, config, bcfg):
    train_loss, train_correct = stats.loss_and_correctness(net, train_set, config.eval_batch_size)
    val_loss, val_correct = stats.loss_and_correctness(net, val_set, config.eval_batch_size)
    expected = stats.expected_accuracy(config.estimator, val_correct, bcfg)
    return train_loss, float(train_correct.mean()), val_loss, float(val_correct.mean()), expected


def _train_epoch(net, opt, ds, batch_size, seed, epoch) -> float:
    """One pass over shuffled batches; returns the mean batch loss."""
    params = net.parameters()
    total = 0.0
    for idx in batches(len(ds), batch_size, seed, epoch):
        loss = net.loss_and_grad(ds.inputs[idx], ds.labels[idx])
        if not math.isfinite(loss):
            raise NonFiniteGradientError(f"non-finite loss {loss} at epoch {epoch}")
        opt.step(params, net.gradients())
        total += loss * len(idx)
    net.clear_caches()
    return total / len(ds)


def train(net: Network, train_set: Dataset, val_set: Dataset, config: TrainConfig = TrainConfig(),
          out_dir=None, initialize: bool = True) -> TrainReport:
    """Run the full staircase; ``net`` ends up holding the global-best parameters.

    With ``out_dir`` set, the stage checkpoint is kept at ``saved.ckpt`` and
    the returned model at ``best.ckpt``.
    """
    if len(val_set) < 2:
        raise ValueError("validation set needs at least 2 samples")
    out_dir = Path(out_dir) if out_dir is not None else None
    bcfg = config.bootstrap_config()
    if initialize:
        init_params(net, config.seed)

    report = TrainReport()
    saved_state = None
    global_state = None
    global_epoch = 0

    for stage_index, lr in enumerate(config.stages()):
        opt = adam_init(net.parameters(), lr, dtype=net.dtype)
        if stage_index > 0:
            net.load_state_dict(saved_state)
        stage = StageSummary(lr=lr)
        report.stages.append(stage)
        best_acc, best_epoch = 0.0, 0

        for epoch in range(1, config.epoch_cap + 1):
            t0 = time.perf_counter()
            try:
                _train_epoch(net, opt, train_set, config.batch_size, config.seed, global_epoch)
            except NonFiniteGradientError as exc:
                net.clear_caches()
                log.warning("stage lr=%g aborted at epoch %d: %s", lr, epoch, exc)
                stage.stop_reason = "nonfinite"
                if saved_state is None:
                    raise NumericalError(f"training diverged at lr={lr} before any checkpoint was saved: {exc}") from exc
                break
            global_epoch += 1
            stage.epochs = epoch
            tl, ta, vl, va, expected = _epoch_metrics(net, train_set, val_set, config, bcfg)

            improved = expected > best_acc
            if improved:
                best_acc, best_epoch = expected, epoch
                saved_state = net.state_dict()
                if out_dir is not None:
                    save_checkpoint(net, out_dir / "saved.ckpt", {"stage_lr": lr, "epoch": global_epoch,
                                                                  "acc_expected": expected})
            if expected > report.best_expected:
                report.best_expected = expected
                report.best_epoch = global_epoch
                report.best_stage_lr = lr
                global_state = saved_state  # a new global best is always a stage improvement

            report.records.append(EpochRecord(global_epoch, lr, tl, ta, vl, va, expected, improved,
                                              time.perf_counter() - t0))
            log.info("epoch %d lr=%g loss=%.4f train_acc=%.4f val_acc=%.4f expected=%.4f%s",
                     global_epoch, lr, tl, ta, va, expected, " *" if improved else "")

            if stage_index == 0 and epoch == config.patience and best_acc <= config.chance_level:
                raise LearningRateTooHigh(
                    f"expected accuracy stayed at or below {config.chance_level} for {epoch} epochs at "
                    f"lr={lr}; restart with a lower start_lr (e.g. {lr / 10:g})")
            if epoch > best_epoch + config.patience:
                stage.stop_reason = "patience"
                break
        else:
            stage.stop_reason = "epoch_cap"
        stage.best_epoch, stage.best_accuracy = best_epoch, best_acc

    if global_state is None:
        raise NumericalError("no epoch produced a usable model")
    net.load_state_dict(global_state)
    if out_dir is not None:
        meta = {"stage_lr": report.best_stage_lr, "epoch": report.best_epoch,
                "acc_expected": report.best_expected, "estimator": int(config.estimator)}
        report.checkpoint_path = str(save_checkpoint(net, out_dir / "best.ckpt", meta))
    return report


def train_simple(net: Network, train_set: Dataset, val_set: Dataset, epochs: int = 1000,
                 lr: float = 1e-3, batch_size: int = 32, seed: int = 0) -> TrainReport:
    """Fixed-length training at a single learning rate, no early stopping.

    ``acc_expected`` records the validation accuracy; the returned model is
    the last epoch's.
    """
    init_params(net, seed)
    opt = adam_init(net.parameters(), lr, dtype=net.dtype)
    report = TrainReport(stages=[StageSummary(lr=lr)])
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        try:
            _train_epoch(net, opt, train_set, batch_size, seed, epoch - 1)
        except NonFiniteGradientError as exc:
            raise NumericalError(str(exc)) from exc
        tl, tc = stats.loss_and_correctness(net, train_set)
        vl, vc = stats.loss_and_correctness(net, val_set)
        va = float(vc.mean())
        report.records.append(EpochRecord(epoch, lr, tl, float(tc.mean()), vl, va, va, False,
                                          time.perf_counter() - t0))
    last = report.records[-1]
    last.is_best = True
    report.best_epoch, report.best_expected, report.best_stage_lr = last.epoch, last.val_acc, lr
    report.stages[0].epochs = epochs
    report.stages[0].best_epoch = epochs
    report.stages[0].best_accuracy = last.val_acc
    report.stages[0].stop_reason = "epochs"
    return report


def evaluate(net_or_checkpoint, ds: Dataset, samples: int = 1000, seed: int = 0,
             confidence: float = 0.95) -> tuple[float, stats.BootstrapSummary]:
    """Point accuracy and percentile bootstrap interval on ``ds``."""
    if isinstance(net_or_checkpoint, Network):
        net = net_or_checkpoint
    else:
        from .checkpoint import load_checkpoint
        net = load_checkpoint(net_or_checkpoint)
    correct = stats.correctness(net, ds)
    return float(correct.mean()), stats.bootstrap(correct, samples, seed, confidence)


__all__ = ["TrainConfig", "TrainReport", "EpochRecord", "StageSummary", "train", "train_simple",
           "evaluate", "TrainingError", "NumericalError", "LearningRateTooHigh", "METRICS_COLUMNS"]
