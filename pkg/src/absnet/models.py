"""Architecture catalog, MLP builder, parameter counting and initialisation.

Catalog entries (input 1x28x28, 2x2 average pooling, activation after every
hidden conv/dense layer, no activation after pooling):

=============  ===========================================================  ========
name           layers                                                       params
=============  ===========================================================  ========
lenet          C6@5v P C16@5s P C120@1 F D84 D10                             368,426
small          C6@5v P C16@5s P F D84 D10                                     51,890
tiny           C6@5v P C3@5s P F D84 D10                                      10,615
conv120        C6@5v P C16@5s P C120@5v P F D120 D84 D10                      76,226
conv64conv120  C6@5v P C64@5s P C120@5v P F D120 D84 D10                     227,474
=============  ===========================================================  ========

A ``+<k>d<act>`` suffix (``lenet+20dabs``) inserts ``k`` Dense(84->84) +
``act`` blocks right before the output layer; 20 blocks add 142,800 params.
"""

from __future__ import annotations

import re

import numpy as np

from .nn import ACTIVATIONS, Activation, AvgPool2x2, Conv2D, Dense, Flatten, Network

MNIST_SHAPE = (1, 28, 28)
NUM_CLASSES = 10
CATALOG = ("lenet", "small", "tiny", "conv120", "conv64conv120")

# the three 2-D toy networks, keyed by their CLI names
SYNTH_NETS = {
    "relu2x5": ((5, 5), "relu"),
    "relu1x5": ((5,), "relu"),
    "abs1x5": ((5,), "abs"),
}

_DEGRADED = re.compile(r"^(?P<base>[a-z0-9]+)(?:\+(?P<depth>\d+)d(?P<act>[a-z]+))?$")


def _conv_trunk(act: str, second_channels: int) -> list:
    return [
        Conv2D(1, 6, 5, "valid"), Activation(act), AvgPool2x2(),            # 6x12x12
        Conv2D(6, second_channels, 5, "same"), Activation(act), AvgPool2x2(),  # Cx6x6
    ]


def _base_layers(base: str, act: str) -> list:
    if base == "lenet":
        return _conv_trunk(act, 16) + [
            Conv2D(16, 120, 1), Activation(act), Flatten(),
            Dense(6 * 6 * 120, 84), Activation(act),
        ]
    if base in ("small", "tiny"):
        c = 16 if base == "small" else 3
        return _conv_trunk(act, c) + [Flatten(), Dense(6 * 6 * c, 84), Activation(act)]
    if base in ("conv120", "conv64conv120"):
        c = 16 if base == "conv120" else 64
        return _conv_trunk(act, c) + [
            Conv2D(c, 120, 5, "valid"), Activation(act), AvgPool2x2(), Flatten(),
            Dense(120, 120), Activation(act),
            Dense(120, 84), Activation(act),
        ]
    raise ValueError(f"unknown architecture {base!r}; expected one of {CATALOG}")


def parse_arch(name: str) -> tuple[str, int, str | None]:
    """Split ``"lenet+20dabs"`` into ``("lenet", 20, "abs")``."""
    m = _DEGRADED.match(name.lower())
    if not m or m["base"] not in CATALOG:
        raise ValueError(f"unknown architecture {name!r}; expected one of {CATALOG} "
                         "with an optional +<k>d<activation> suffix")
    if m["depth"] is None:
        return m["base"], 0, None
    if m["act"] not in ACTIVATIONS:
        raise ValueError(f"unknown disturbing-layer activation {m['act']!r}")
    return m["base"], int(m["depth"]), m["act"]


def build_catalog(name: str, activation: str = "abs", dtype=np.float32) -> Network:
    base, depth, dact = parse_arch(name)
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
    layers = _base_layers(base, activation)
    for _ in range(depth):
        layers += [Dense(84, 84), Activation(dact)]
    layers.append(Dense(84, NUM_CLASSES))
    net = Network(layers, MNIST_SHAPE, name=name.lower(), activation=activation)
    return net if dtype == np.float32 else net.astype(dtype)


def build_mlp(input_dim: int, hidden_widths=None, activation: str = "abs",
              num_classes: int = 2, dtype=np.float32) -> Network:
    """Dense/activation stack with a ``num_classes`` output layer.

    ``hidden_widths`` defaults to a single hidden layer of ``2*input_dim + 1``.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if hidden_widths is None:
        hidden_widths = [2 * input_dim + 1]
    hidden_widths = [int(w) for w in hidden_widths]
    if not hidden_widths:
        raise ValueError("hidden_widths must name at least one hidden layer")
    layers, prev = [], input_dim
    for w in hidden_widths:
        layers += [Dense(prev, w), Activation(activation)]
        prev = w
    layers.append(Dense(prev, num_classes))
    name = f"mlp:{input_dim}:{'x'.join(map(str, hidden_widths))}:{num_classes}"
    net = Network(layers, (input_dim,), name=name, activation=activation)
    return net if dtype == np.float32 else net.astype(dtype)


def build(name: str, activation: str, dtype=np.float32) -> Network:
    """Rebuild any network by the name it carries (catalog or ``mlp:...``)."""
    if name.startswith("mlp:"):
        try:
            _, n_in, widths, n_out = name.split(":")
            return build_mlp(int(n_in), [int(w) for w in widths.split("x")], activation,
                             int(n_out), dtype=dtype)
        except ValueError as exc:
            raise ValueError(f"malformed mlp architecture name {name!r}") from exc
    return build_catalog(name, activation, dtype=dtype)


def build_synth_net(kind: str, dtype=np.float32) -> Network:
    if kind not in SYNTH_NETS:
        raise ValueError(f"unknown synthetic net {kind!r}; expected one of {sorted(SYNTH_NETS)}")
    widths, act = SYNTH_NETS[kind]
    return build_mlp(2, widths, act, num_classes=2, dtype=dtype)


def count_params(net: Network) -> int:
    return int(sum(p.size for p in net.parameters().values()))


def _fans(weight: np.ndarray) -> tuple[int, int]:
    if weight.ndim == 2:
        return weight.shape[1], weight.shape[0]
    receptive = int(np.prod(weight.shape[2:]))
    return weight.shape[1] * receptive, weight.shape[0] * receptive


def init_params(net: Network, seed: int) -> Network:
    """Glorot-uniform weights and zero biases, drawn in layer order from PCG64(seed)."""
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        if "weight" not in layer.params:
            continue
        w = layer.params["weight"]
        fan_in, fan_out = _fans(w)
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
        layer.params["bias"].fill(0)
    return net
