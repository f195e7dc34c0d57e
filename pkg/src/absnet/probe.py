"""Gradient-flow diagnostics and the finite-difference verification harness."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import models
from .nn import Activation, Dense, Network, softmax_xent

log = logging.getLogger(__name__)

# activations whose derivative jumps at 0
_KINKED = ("abs", "relu", "selu")


@dataclass
class LayerGradient:
    index: int
    kind: str
    param_grad_norm: float
    input_grad_norm: float
    output_grad_norm: float
    finite: bool


def _kind(layer) -> str:
    return f"activation:{layer.fn}" if isinstance(layer, Activation) else layer.kind


def _norm(a) -> float:
    return float(np.sqrt(np.sum(np.square(a, dtype=np.float64))))


def gradient_profile(net: Network, x: np.ndarray, labels: np.ndarray) -> list[LayerGradient]:
    """One forward/backward pass, recording gradient norms layer by layer.

    ``output_grad_norm`` is the norm of d loss / d (layer output),
    ``input_grad_norm`` that of d loss / d (layer input). Parameters are left untouched.
    """
    if len(x) == 0:
        raise ValueError("batch must not be empty")
    logits = net.forward(x, train=True)
    _, g = softmax_xent(logits, labels)
    records = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        g_out = g
        g = layer.backward(g_out, need_input_grad=True)
        pnorm = float(np.sqrt(sum(_norm(v) ** 2 for v in layer.grads.values()))) if layer.params else 0.0
        finite = bool(np.isfinite(g).all() and np.isfinite(pnorm))
        if not finite:
            log.warning("non-finite gradient at layer %d (%s)", i, _kind(layer))
        records.append(LayerGradient(i, _kind(layer), pnorm, _norm(g), _norm(g_out), finite))
    return records[::-1]


def write_profile_csv(records: list[LayerGradient], path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(LayerGradient.__dataclass_fields__), lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(asdict(r))


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int
    worst: str


def _loss_and_pattern(net: Network, x, labels):
    """Loss plus the sign pattern of every kinked activation's input."""
    pattern = []
    for layer in net.layers:
        if isinstance(layer, Activation) and layer.fn in _KINKED:
            pattern.append(x > 0)
        x = layer.forward(x, train=False)
    loss, _ = softmax_xent(x, labels)
    return loss, pattern


def _same(p, q) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(p, q))


def grad_check(net: Network, x, labels, eps: float = 1e-5, full_limit: int = 10_000,
               per_tensor: int = 32, seed: int = 0, floor: float = 1e-4) -> GradCheckResult:
    """Central differences against the analytic gradient of the mean cross-entropy.

    All parameters are checked when the net has at most ``full_limit`` of
    them, otherwise ``per_tensor`` random entries of every tensor. A
    coordinate whose +-eps perturbation flips the sign of any Abs/ReLU/SeLU
    input is skipped, since the loss is not differentiable across that kink.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if net.dtype != np.float64:
        raise TypeError("gradient checks need a float64 network (use net.astype(np.float64))")
    x = np.asarray(x, dtype=np.float64)
    _, g = softmax_xent(net.forward(x, train=True), labels)
    net.backward(g)
    analytic = {k: v.copy() for k, v in net.gradients().items()}
    _, base_pattern = _loss_and_pattern(net, x, labels)

    params = net.parameters()
    total = sum(p.size for p in params.values())
    rng = np.random.default_rng(seed)
    worst, worst_name, checked, skipped = 0.0, "", 0, 0
    for name, p in params.items():
        flat = p.reshape(-1)
        if total <= full_limit or p.size <= per_tensor:
            coords = np.arange(p.size)
        else:
            coords = rng.choice(p.size, size=per_tensor, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            lp, pat_p = _loss_and_pattern(net, x, labels)
            flat[c] = orig - eps
            lm, pat_m = _loss_and_pattern(net, x, labels)
            flat[c] = orig
            if not (_same(pat_p, base_pattern) and _same(pat_m, base_pattern)):
                skipped += 1
                continue
            num = (lp - lm) / (2 * eps)
            a = float(analytic[name].reshape(-1)[c])
            err = abs(a - num) / max(abs(a), abs(num), floor)
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{c}]"
    net.clear_caches()
    return GradCheckResult(worst, checked, skipped, worst_name)


def check_gradients(net: Network, x, labels, eps: float = 1e-5, **kwargs) -> float:
    """Maximum relative finite-difference error over the checked parameters."""
    return grad_check(net, x, labels, eps, **kwargs).max_rel_error


def clamped_normal(rng, shape, margin: float = 1e-2) -> np.ndarray:
    """Standard normal draws pushed away from zero to ``|x| >= margin``."""
    x = rng.standard_normal(shape)
    small = np.abs(x) < margin
    x[small] = np.where(x[small] < 0, -margin, margin)
    return x


# ---------------------------------------------------------------------------
# depth sweep
# ---------------------------------------------------------------------------


@dataclass
class DepthRow:
    depth: int
    activation: str
    ratio: float


def disturbing_norms(records: list[LayerGradient], net: Network, depth: int) -> list[float]:
    """Input-gradient norms of the disturbing Dense(84->84) layers, shallowest first."""
    dense_idx = [i for i, layer in enumerate(net.layers)
                 if isinstance(layer, Dense) and layer.in_features == 84 and layer.out_features == 84]
    dense_idx = dense_idx[-depth:] if depth else []
    return [records[i].input_grad_norm for i in dense_idx]


def depth_sweep(activation: str, depths, seed: int = 0, base: str = "lenet", base_activation: str = "abs",
                batch_size: int = 16) -> list[DepthRow]:
    """Deepest/shallowest gradient-norm ratio across disturbing layers, at initialisation.

    The probe batch is uniform noise in [0, 1] with random labels, drawn from
    the same seed for every depth.
    """
    rows = []
    for depth in depths:
        if depth < 0:
            raise ValueError("depths must be >= 0")
        if depth == 0:
            rows.append(DepthRow(0, activation, 1.0))
            continue
        net = models.init_params(models.build_catalog(f"{base}+{depth}d{activation}", base_activation), seed)
        rng = np.random.default_rng([seed, 1])
        x = rng.uniform(0, 1, size=(batch_size,) + models.MNIST_SHAPE).astype(np.float32)
        y = rng.integers(0, models.NUM_CLASSES, size=batch_size)
        norms = disturbing_norms(gradient_profile(net, x, y), net, depth)
        net.clear_caches()
        ratio = norms[-1] / norms[0] if norms[0] > 0 else float("inf")
        rows.append(DepthRow(depth, activation, float(ratio)))
    return rows


def write_depth_csv(rows: list[DepthRow], path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["depth", "activation", "ratio"])
        for r in rows:
            w.writerow([r.depth, r.activation, repr(r.ratio)])
