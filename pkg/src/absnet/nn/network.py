from __future__ import annotations

import copy

import numpy as np

from .functional import ShapeError, softmax_xent
from .layers import Layer


class Network:
    """An ordered chain of layers with named parameters.

    Parameter names are ``"<layer index>.<param>"``, e.g. ``"0.weight"``.
    The logits returned by :meth:`forward` are consumed by
    :func:`absnet.nn.functional.softmax_xent`, which plays the role of the
    softmax/cross-entropy head.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple, name: str = "custom", activation: str | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.name = name
        self.activation = activation
        self.output_shape = self._check_chain()

    def _check_chain(self) -> tuple:
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        return shape

    @property
    def dtype(self):
        for p in self.parameters().values():
            return p.dtype
        return np.dtype(np.float32)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live views of every parameter tensor, in layer order."""
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"network {self.name!r} expects input (N, {self.input_shape}), got {x.shape}")
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, train=train)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        return x

    def backward(self, upstream: np.ndarray, need_input_grad: bool = False) -> np.ndarray | None:
        """Backpropagate ``upstream`` (d loss / d logits) through every layer.

        Per-layer parameter gradients land in ``layer.grads``; the return
        value is the gradient w.r.t. the network input (``None`` unless
        ``need_input_grad``).
        """
        g = upstream
        for i in range(len(self.layers) - 1, -1, -1):
            g = self.layers[i].backward(g, need_input_grad=need_input_grad or i > 0)
        return g

    def loss_and_grad(self, x: np.ndarray, labels: np.ndarray) -> float:
        logits = self.forward(x, train=True)
        loss, g = softmax_xent(logits, labels)
        self.backward(g)
        return loss

    def predict(self, x: np.ndarray, batch_size: int = 1000) -> np.ndarray:
        """Logits for ``x``, evaluated in chunks without caching."""
        chunks = [self.forward(x[i:i + batch_size], train=False) for i in range(0, len(x), batch_size)]
        if not chunks:
            return np.zeros((0,) + tuple(self.output_shape), dtype=self.dtype)
        return np.concatenate(chunks)

    def clear_caches(self):
        for layer in self.layers:
            layer.clear_cache()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ShapeError(f"parameter names differ (missing {missing}, unexpected {extra})")
        for k, v in state.items():
            if v.shape != params[k].shape:
                raise ShapeError(f"{k}: shape {v.shape} does not match {params[k].shape}")
            params[k][...] = v

    def copy(self) -> "Network":
        self.clear_caches()
        return copy.deepcopy(self)

    def astype(self, dtype) -> "Network":
        """A deep copy with every parameter cast to ``dtype``."""
        net = self.copy()
        for layer in net.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.grads = {}
        return net

    def __repr__(self):
        body = "\n".join(f"  ({i}) {layer!r}" for i, layer in enumerate(self.layers))
        return f"Network({self.name!r}, input={self.input_shape},\n{body}\n)"
