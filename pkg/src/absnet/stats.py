"""Accuracy, expected-test-accuracy lower bounds, bootstrap summaries."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .nn import Network, softmax_xent


class EstimatorKind(enum.IntEnum):
    MIN_TWO_HALVES = 1
    BOOTSTRAP_MEAN_MINUS_STD = 2
    COMBINED = 3


@dataclass(frozen=True)
class BootstrapConfig:
    samples: int = 1000
    seed: int = 0
    confidence: float = 0.95


@dataclass(frozen=True)
class BootstrapSummary:
    samples: int
    mean: float
    std: float
    lower: float
    upper: float
    confidence: float
    seed: int

    def as_dict(self) -> dict:
        return asdict(self)


def predictions(net: Network, ds: Dataset, batch_size: int = 1000) -> np.ndarray:
    """Argmax labels; ``np.argmax`` resolves ties toward the lowest class."""
    return net.predict(ds.inputs, batch_size).argmax(axis=1)


def correctness(net: Network, ds: Dataset, batch_size: int = 1000) -> np.ndarray:
    return predictions(net, ds, batch_size) == ds.labels


def accuracy(net: Network, ds: Dataset, batch_size: int = 1000) -> float:
    return float(correctness(net, ds, batch_size).mean())


def loss_and_correctness(net: Network, ds: Dataset, batch_size: int = 1000) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and per-sample correctness from a single pass."""
    logits = net.predict(ds.inputs, batch_size)
    loss, _ = softmax_xent(logits, ds.labels)
    return loss, logits.argmax(axis=1) == ds.labels


def min_half_accuracy(correct) -> float:
    """min(acc(first half), acc(second half)), halves split at floor(n/2)."""
    correct = np.asarray(correct, dtype=np.float64)
    n = len(correct)
    if n < 2:
        raise ValueError("need at least 2 samples to split into halves")
    h = n // 2
    return float(min(correct[:h].mean(), correct[h:].mean()))


def acc_min_two_halves(net: Network, val: Dataset) -> float:
    return min_half_accuracy(correctness(net, val))


def bootstrap(correct, samples: int = 1000, seed: int = 0, confidence: float = 0.95) -> BootstrapSummary:
    """Percentile bootstrap of the accuracy of a 0/1 correctness vector.

    Draws ``samples`` resamples of size n with replacement. The interval
    uses nearest-rank percentiles at (1 - confidence)/2 and (1 + confidence)/2.
    """
    correct = np.asarray(correct, dtype=np.float64)
    n = len(correct)
    if n == 0:
        raise ValueError("correctness vector is empty")
    if samples < 100:
        raise ValueError(f"need at least 100 bootstrap resamples, got {samples}")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")

    rng = np.random.default_rng(seed)
    stats = np.empty(samples)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, samples, chunk):
        stop = min(samples, start + chunk)
        idx = rng.integers(0, n, size=(stop - start, n))
        stats[start:stop] = correct[idx].mean(axis=1)

    ordered = np.sort(stats)

    def nearest_rank(p):
        return float(ordered[min(samples, max(1, math.ceil(p * samples))) - 1])

    return BootstrapSummary(
        samples=samples,
        mean=float(stats.mean()),
        std=float(stats.std(ddof=1)),
        lower=nearest_rank((1 - confidence) / 2),
        upper=nearest_rank((1 + confidence) / 2),
        confidence=confidence,
        seed=seed,
    )


def expected_accuracy(kind, correct, config: BootstrapConfig = BootstrapConfig()) -> float:
    """Lower-bound estimate of unseen-test accuracy from validation correctness.

    kind 1: min over the two index halves
    kind 2: bootstrap mean - bootstrap std
    kind 3: kind 1 - bootstrap std
    """
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.MIN_TWO_HALVES:
        return min_half_accuracy(correct)
    summary = bootstrap(correct, config.samples, config.seed, config.confidence)
    if kind is EstimatorKind.BOOTSTRAP_MEAN_MINUS_STD:
        return summary.mean - summary.std
    return min_half_accuracy(correct) - summary.std


def expected_test_accuracy(kind, net: Network, val: Dataset,
                           config: BootstrapConfig = BootstrapConfig()) -> float:
    return expected_accuracy(kind, correctness(net, val), config)
