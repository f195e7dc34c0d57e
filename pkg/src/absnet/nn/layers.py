"""Layer objects: parameters, forward caches and backward passes."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .functional import ShapeError


class Layer:
    """Base class. Parameter-free layers inherit the empty ``params`` dict."""

    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, upstream: np.ndarray, need_input_grad: bool = True):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self!r}: backward called without a preceding training forward")
        cache, self._cache = self._cache, None
        return cache

    def clear_cache(self):
        self._cache = None

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.describe().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel: int | tuple[int, int],
                 padding: str = "valid", dtype=np.float32):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel = (kh, kw)
        self.padding = padding
        self.params = {
            "weight": np.zeros((out_channels, in_channels, kh, kw), dtype=dtype),
            "bias": np.zeros(out_channels, dtype=dtype),
        }

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"conv2d expects ({self.in_channels}, H, W), got {in_shape}")
        ho, wo = F.conv_output_hw(in_shape[1], in_shape[2], *self.kernel, self.padding)
        if ho < 1 or wo < 1:
            raise ShapeError(f"input {in_shape[1:]} is smaller than kernel {self.kernel}")
        return (self.out_channels, ho, wo)

    def forward(self, x, train=True):
        out, cols = F.conv2d_forward(x, self.params["weight"], self.params["bias"], self.padding)
        self._cache = (cols, x.shape) if train else None
        return out

    def backward(self, upstream, need_input_grad=True):
        cols, x_shape = self._take_cache()
        gx, gw, gb = F.conv2d_backward(upstream, cols, x_shape, self.params["weight"],
                                       self.padding, need_input_grad)
        self.grads = {"weight": gw, "bias": gb}
        return gx

    def describe(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": list(self.kernel), "padding": self.padding}


class AvgPool2x2(Layer):
    kind = "avgpool2x2"

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ShapeError(f"avgpool 2x2 needs (C, even H, even W), got {in_shape}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)

    def forward(self, x, train=True):
        self._cache = True if train else None
        return F.avgpool2x2_forward(x)

    def backward(self, upstream, need_input_grad=True):
        self._take_cache()
        return F.avgpool2x2_backward(upstream)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=True):
        self._cache = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, upstream, need_input_grad=True):
        return upstream.reshape(self._take_cache())


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features: int, out_features: int, dtype=np.float32):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        self.params = {
            "weight": np.zeros((out_features, in_features), dtype=dtype),
            "bias": np.zeros(out_features, dtype=dtype),
        }

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"dense expects ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def forward(self, x, train=True):
        self._cache = x if train else None
        return F.dense_forward(x, self.params["weight"], self.params["bias"])

    def backward(self, upstream, need_input_grad=True):
        x = self._take_cache()
        gx, gw, gb = F.dense_backward(upstream, x, self.params["weight"], need_input_grad)
        self.grads = {"weight": gw, "bias": gb}
        return gx

    def describe(self):
        return {"kind": self.kind, "in_features": self.in_features, "out_features": self.out_features}


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn: str):
        super().__init__()
        if fn not in F.ACTIVATIONS:
            raise ValueError(f"unknown activation {fn!r}; expected one of {F.ACTIVATIONS}")
        self.fn = fn

    def forward(self, x, train=True):
        self._cache = x if train else None
        return F.activation_forward(self.fn, x)

    def backward(self, upstream, need_input_grad=True):
        return F.activation_backward(self.fn, self._take_cache(), upstream)

    def describe(self):
        return {"kind": self.kind, "fn": self.fn}


def layer_from_description(desc: dict, dtype=np.float32) -> Layer:
    kind = desc["kind"]
    if kind == "conv2d":
        return Conv2D(desc["in_channels"], desc["out_channels"], tuple(desc["kernel"]),
                      desc["padding"], dtype=dtype)
    if kind == "dense":
        return Dense(desc["in_features"], desc["out_features"], dtype=dtype)
    if kind == "avgpool2x2":
        return AvgPool2x2()
    if kind == "flatten":
        return Flatten()
    if kind == "activation":
        return Activation(desc["fn"])
    raise ValueError(f"unknown layer kind {kind!r}")
