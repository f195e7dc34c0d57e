"""ADAM with explicit re-initialisation between learning-rate stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    """Moments for a fixed set of named parameters.

    ``m`` and ``v`` map names to views into two flat buffers, so one step is
    a handful of vectorised operations regardless of the parameter count.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    _m_flat: np.ndarray = field(default=None, repr=False)
    _v_flat: np.ndarray = field(default=None, repr=False)
    _slices: dict[str, slice] = field(default_factory=dict, repr=False)

    def reset(self):
        """Zero both moment accumulators and the step counter."""
        self.t = 0
        self._m_flat.fill(0)
        self._v_flat.fill(0)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """Apply one bias-corrected ADAM update to ``params`` in place."""
        if set(params) != set(self._slices) or set(grads) != set(self._slices):
            raise ValueError("params, grads and optimizer state must cover the same names")
        names = sorted(self._slices)
        for name in names:
            if grads[name].shape != self.m[name].shape or params[name].shape != self.m[name].shape:
                raise ValueError(f"{name}: shape mismatch between param {params[name].shape}, "
                                 f"grad {grads[name].shape} and state {self.m[name].shape}")
        g = np.concatenate([grads[name].ravel() for name in names]).astype(self._m_flat.dtype, copy=False)
        if not np.isfinite(g).all():
            bad = [n for n in names if not np.isfinite(grads[n]).all()]
            raise NonFiniteGradientError(f"non-finite gradient for {', '.join(bad)}")

        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        m, v = self._m_flat, self._v_flat
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * (g * g)
        update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
        for name in names:
            params[name] -= update[self._slices[name]].reshape(params[name].shape)


def adam_init(shapes, lr: float, dtype=np.float32, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> AdamState:
    """Fresh state for parameters given as ``{name: shape}`` or ``{name: array}``."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    shapes = {k: np.shape(v) if isinstance(v, np.ndarray) else tuple(v) for k, v in shapes.items()}
    slices, offset = {}, 0
    for name in sorted(shapes):
        size = int(np.prod(shapes[name], dtype=np.int64))
        slices[name] = slice(offset, offset + size)
        offset += size
    m_flat = np.zeros(offset, dtype=dtype)
    v_flat = np.zeros(offset, dtype=dtype)
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
        m={k: m_flat[s].reshape(shapes[k]) for k, s in slices.items()},
        v={k: v_flat[s].reshape(shapes[k]) for k, s in slices.items()},
        _m_flat=m_flat, _v_flat=v_flat, _slices=slices,
    )
