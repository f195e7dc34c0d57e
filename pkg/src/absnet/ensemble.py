"""Multi-seed campaigns, hard majority voting and instability rates."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import models, stats
from .data import batches
from .data import Dataset, split_train_val, synth_dataset
from .nn import activation_backward, activation_forward
from .optim import adam_init
from .trainer import NumericalError, TrainConfig, TrainingError, train, train_simple

log = logging.getLogger(__name__)


def majority_vote(predictions) -> np.ndarray:
    """Per-sample modal label of a ``[members, samples]`` matrix; ties go to the lowest label."""
    predictions = np.asarray(predictions)
    if predictions.ndim == 1:
        predictions = predictions[None, :]
    if predictions.ndim != 2 or predictions.shape[0] == 0:
        raise ValueError("predictions must be a non-empty [members, samples] matrix")
    n_labels = int(predictions.max()) + 1
    counts = np.zeros((n_labels, predictions.shape[1]), dtype=np.int64)
    cols = np.arange(predictions.shape[1])
    for row in predictions:
        counts[row, cols] += 1
    return counts.argmax(axis=0)


@dataclass
class EnsembleReport:
    arch: str
    activation: str
    estimator: int
    member_seeds: list[int]
    member_accuracies: list[float | None]
    majority_vote_accuracy: float | None
    accuracy_limits: tuple[float, float] | None
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["complete"] = self.complete
        d["failures"] = {str(k): v for k, v in self.failures.items()}
        return d

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def summarize_members(arch, activation, estimator, seeds, member_predictions: dict[int, np.ndarray],
                      labels: np.ndarray, failures: dict[int, str] | None = None) -> EnsembleReport:
    """Build the report from the test-set predictions of each surviving member."""
    accs = [float(np.mean(member_predictions[s] == labels)) if s in member_predictions else None
            for s in seeds]
    ok = [a for a in accs if a is not None]
    mv = limits = None
    if ok:
        votes = majority_vote(np.stack([member_predictions[s] for s in seeds if s in member_predictions]))
        mv = float(np.mean(votes == labels))
        limits = (min(ok), max(ok))
    return EnsembleReport(arch, activation, int(estimator), list(seeds), accs, mv, limits, dict(failures or {}))


def _train_member(arch, activation, config, seed, train_set, val_set, test_set, member_dir):
    net = models.build_catalog(arch, activation)
    cfg = replace(config, seed=seed)
    report = train(net, train_set, val_set, cfg, out_dir=member_dir)
    if member_dir is not None:
        report.write_csv(Path(member_dir) / "metrics.csv")
    return stats.predictions(net, test_set)


def train_ensemble(arch: str, activation: str, estimator: int, n_members: int, base_seed: int,
                   train_set: Dataset, val_set: Dataset, test_set: Dataset,
                   config: TrainConfig | None = None, out_dir=None) -> EnsembleReport:
    """Train ``n_members`` independent runs with seeds ``base_seed + i``.

    A member that fails is recorded in ``failures`` and the campaign goes on.
    """
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    config = replace(config or TrainConfig(), estimator=int(estimator))
    seeds = [base_seed + i for i in range(n_members)]
    preds, failures = {}, {}
    for i, seed in enumerate(seeds):
        member_dir = None
        if out_dir is not None:
            member_dir = Path(out_dir) / f"member_{i:02d}"
            member_dir.mkdir(parents=True, exist_ok=True)
        try:
            preds[seed] = _train_member(arch, activation, config, seed, train_set, val_set, test_set, member_dir)
        except (TrainingError, FloatingPointError) as exc:
            log.warning("member seed=%d failed: %s", seed, exc)
            failures[seed] = f"{type(exc).__name__}: {exc}"
    report = summarize_members(arch, activation, estimator, seeds, preds, test_set.labels, failures)
    if out_dir is not None:
        report.write_json(Path(out_dir) / "ensemble_report.json")
    return report


class StackedMLP:
    """``R`` same-shaped MLPs trained side by side as stacked arrays.

    Run ``r`` starts from ``init_params(net, seeds[r])`` and sees the batch
    order of ``batches(n, batch_size, seeds[r], epoch)``, so it follows the
    same trajectory as a single-network ``train_simple`` call up to float
    rounding. Only the 2-D toy nets are small enough for this to pay off.
    """

    def __init__(self, net_kind: str, seeds):
        self.seeds = [int(s) for s in seeds]
        if not self.seeds:
            raise ValueError("need at least one seed")
        nets = [models.init_params(models.build_synth_net(net_kind), s) for s in self.seeds]
        self.activation = models.SYNTH_NETS[net_kind][1]
        dense = [i for i, layer in enumerate(nets[0].layers) if "weight" in layer.params]
        self.params = {}
        for i in dense:
            for key in ("weight", "bias"):
                self.params[f"{i}.{key}"] = np.stack([n.layers[i].params[key] for n in nets])
        self._dense = dense

    def _forward(self, x):
        """Logits plus the pre-activations each backward step needs."""
        pre = []
        for j, i in enumerate(self._dense):
            z = x @ self.params[f"{i}.weight"].transpose(0, 2, 1) + self.params[f"{i}.bias"][:, None, :]
            if j == len(self._dense) - 1:
                return z, pre
            pre.append((x, z))
            x = activation_forward(self.activation, z)

    def step(self, x, labels, opt) -> np.ndarray:
        """One ADAM step on every run; returns the per-run mean batch loss."""
        logits, pre = self._forward(x)
        r, b, _ = logits.shape
        z = logits - logits.max(axis=2, keepdims=True)
        e = np.exp(z)
        norm = e.sum(axis=2)
        rr, bb = np.arange(r)[:, None], np.arange(b)[None, :]
        loss = np.mean(np.log(norm, dtype=np.float64) - z[rr, bb, labels], axis=1)
        up = e / norm[:, :, None]
        up[rr, bb, labels] -= 1
        up /= b
        grads = {}
        for j in range(len(self._dense) - 1, -1, -1):
            i = self._dense[j]
            inp = pre[j][0] if j < len(pre) else activation_forward(self.activation, pre[-1][1])
            grads[f"{i}.weight"] = up.transpose(0, 2, 1) @ inp
            grads[f"{i}.bias"] = up.sum(axis=1)
            if j > 0:
                up = activation_backward(self.activation, pre[j - 1][1], up @ self.params[f"{i}.weight"])
        opt.step(self.params, grads)
        return loss

    def predict(self, x) -> np.ndarray:
        x = np.broadcast_to(x, (len(self.seeds),) + x.shape)
        return self._forward(x)[0].argmax(axis=2)


def train_stacked(net_kind: str, train_set: Dataset, val_set: Dataset, seeds, epochs: int = 1000,
                  lr: float = 1e-3, batch_size: int = 32) -> np.ndarray:
    """Final validation accuracy of one ``train_simple``-equivalent run per seed."""
    model = StackedMLP(net_kind, seeds)
    opt = adam_init(model.params, lr, dtype=np.float32)
    n = len(train_set)
    for epoch in range(epochs):
        orders = [batches(n, batch_size, s, epoch) for s in model.seeds]
        for k in range(len(orders[0])):
            idx = np.stack([o[k] for o in orders])
            loss = model.step(train_set.inputs[idx], train_set.labels[idx], opt)
            if not np.isfinite(loss).all():
                bad = [s for s, v in zip(model.seeds, loss) if not np.isfinite(v)]
                raise NumericalError(f"non-finite loss at epoch {epoch + 1} for seeds {bad}")
    return (model.predict(val_set.inputs) == val_set.labels[None, :]).mean(axis=1)


def synth_final_accuracies(net_kind: str, dataset_kind: str, seeds, n_points: int = 1000,
                           data_seed: int = 0, epochs: int = 1000, lr: float = 1e-3,
                           batch_size: int = 32, stacked: bool = True) -> np.ndarray:
    """Final validation accuracy of one fixed-length run per seed on a fixed dataset.

    ``stacked=False`` trains the seeds one after another through ``train_simple``.
    """
    train_set, val_set = split_train_val(synth_dataset(dataset_kind, n_points, data_seed))
    seeds = list(seeds)
    if stacked:
        return train_stacked(net_kind, train_set, val_set, seeds, epochs, lr, batch_size)
    out = []
    for seed in seeds:
        net = models.build_synth_net(net_kind)
        report = train_simple(net, train_set, val_set, epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)
        out.append(report.records[-1].val_acc)
    return np.array(out)


def instability_rate(net_kind: str, dataset_kind: str, n_runs: int = 50, threshold: float = 0.8,
                     base_seed: int = 0, **kwargs) -> float:
    """Fraction of runs (seeds ``base_seed + i``) whose final accuracy is below ``threshold``."""
    if n_runs < 10:
        raise ValueError("instability_rate needs n_runs >= 10")
    accs = synth_final_accuracies(net_kind, dataset_kind, range(base_seed, base_seed + n_runs), **kwargs)
    return float(np.mean(accs < threshold))
