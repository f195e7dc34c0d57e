from .functional import (
    ACTIVATIONS,
    SELU_ALPHA,
    SELU_LAMBDA,
    ShapeError,
    activation_backward,
    activation_forward,
    softmax,
    softmax_xent,
)
from .layers import Activation, AvgPool2x2, Conv2D, Dense, Flatten, Layer
from .network import Network

__all__ = [
    "ACTIVATIONS", "SELU_ALPHA", "SELU_LAMBDA", "ShapeError",
    "activation_backward", "activation_forward", "softmax", "softmax_xent",
    "Activation", "AvgPool2x2", "Conv2D", "Dense", "Flatten", "Layer", "Network",
]
