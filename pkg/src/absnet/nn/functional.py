"""Stateless forward/backward kernels.

All kernels work on numpy arrays in NCHW layout (images) or NF layout
(feature vectors) and preserve the dtype of their inputs, so the same code
path runs in float32 for training and float64 for gradient verification.
"""

from __future__ import annotations

import numpy as np

SELU_ALPHA = 1.67326324
SELU_LAMBDA = 1.05070098

ACTIVATIONS = ("abs", "tanh", "relu", "selu")


class ShapeError(ValueError):
    """Raised when tensor shapes do not chain or match."""


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def activation_forward(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "abs":
        return np.abs(x)
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "selu":
        neg = SELU_ALPHA * np.expm1(np.minimum(x, 0))
        return (SELU_LAMBDA * np.where(x > 0, x, neg)).astype(x.dtype, copy=False)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_backward(kind: str, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Chain ``upstream`` through the activation evaluated at ``x``.

    The Abs derivative is ``sign(x)`` with ``sign(0) = 0``, so away from zero
    the gradient magnitude passes through unchanged.
    """
    if upstream.shape != x.shape:
        raise ShapeError(f"upstream shape {upstream.shape} != input shape {x.shape}")
    if kind == "abs":
        return upstream * np.sign(x)
    if kind == "relu":
        return upstream * (x > 0)
    if kind == "tanh":
        t = np.tanh(x)
        return upstream * (1 - t * t)
    if kind == "selu":
        d = np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0)))
        return upstream * d.astype(x.dtype, copy=False)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# convolution (im2col + one matmul)
# ---------------------------------------------------------------------------


def same_pad(kernel: int) -> int:
    return kernel // 2


def conv_output_hw(h: int, w: int, kh: int, kw: int, padding: str) -> tuple[int, int]:
    if padding == "same":
        ph, pw = same_pad(kh), same_pad(kw)
        return h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if padding == "valid":
        return h - kh + 1, w - kw + 1
    raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")


def _pad_input(x: np.ndarray, kh: int, kw: int, padding: str) -> np.ndarray:
    if padding == "same":
        ph, pw = same_pad(kh), same_pad(kw)
        if ph or pw:
            return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    return x


def im2col(x: np.ndarray, kh: int, kw: int, padding: str = "valid") -> np.ndarray:
    """Unfold ``x[N,C,H,W]`` into receptive-field columns.

    Returns shape ``(N, C*kh*kw, H'*W')``; the middle axis is ordered
    (c, di, dj), matching ``weight.reshape(O, -1)``.
    """
    n, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kh, kw, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{w} is smaller than kernel {kh}x{kw}")
    xp = _pad_input(x, kh, kw, padding)
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, :, di, dj] = xp[:, :, di:di + ho, dj:dj + wo]
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, padding: str = "valid") -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add columns back into image layout."""
    n, c, h, w = x_shape
    ho, wo = conv_output_hw(h, w, kh, kw, padding)
    ph = same_pad(kh) if padding == "same" else 0
    pw = same_pad(kw) if padding == "same" else 0
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for di in range(kh):
        for dj in range(kw):
            out[:, :, di:di + ho, dj:dj + wo] += cols[:, :, di, dj]
    if ph or pw:
        out = out[:, :, ph:ph + h, pw:pw + w]
    return out


# below this output area, per-sample GEMMs are too small; fold the batch into one GEMM
_FLAT_GEMM_AREA = 64


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, padding: str = "valid"):
    """Cross-correlation plus bias. Returns ``(out, cols)``; ``cols`` feeds the backward pass."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects a 4-D input, got shape {x.shape}")
    o, c, kh, kw = weight.shape
    if x.shape[1] != c:
        raise ShapeError(f"conv2d expects {c} input channels, got {x.shape[1]}")
    n, _, h, w = x.shape
    ho, wo = conv_output_hw(h, w, kh, kw, padding)
    cols = im2col(x, kh, kw, padding)
    wmat = weight.reshape(o, -1)
    if ho * wo < _FLAT_GEMM_AREA:
        out = (wmat @ cols.transpose(1, 0, 2).reshape(c * kh * kw, -1)).reshape(o, n, -1).transpose(1, 0, 2)
    else:
        out = np.matmul(wmat, cols)
    out = out + bias[:, None]
    return out.reshape(n, o, ho, wo), cols


def conv2d_backward(upstream, cols, x_shape, weight, padding="valid", need_input_grad=True):
    o = weight.shape[0]
    kh, kw = weight.shape[2:]
    n = upstream.shape[0]
    g = upstream.reshape(n, o, -1)
    wmat = weight.reshape(o, -1)
    grad_b = g.sum(axis=(0, 2))
    if g.shape[2] < _FLAT_GEMM_AREA:
        g_flat = g.transpose(1, 0, 2).reshape(o, -1)
        grad_w = g_flat @ cols.transpose(1, 0, 2).reshape(cols.shape[1], -1).T
        dcols = (wmat.T @ g_flat).reshape(-1, n, g.shape[2]).transpose(1, 0, 2) if need_input_grad else None
    else:
        grad_w = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
        dcols = np.matmul(wmat.T, g) if need_input_grad else None
    grad_x = col2im(dcols, x_shape, kh, kw, padding) if need_input_grad else None
    return grad_x, grad_w.reshape(weight.shape), grad_b


def conv2d_direct(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, padding: str = "valid") -> np.ndarray:
    """Naive direct-sum convolution. Slow; used as an independent oracle."""
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho, wo = conv_output_hw(h, w, kh, kw, padding)
    xp = _pad_input(x, kh, kw, padding)
    out = np.zeros((n, o, ho, wo), dtype=np.float64)
    for b in range(n):
        for k in range(o):
            for i in range(ho):
                for j in range(wo):
                    s = float(bias[k])
                    for ch in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                s += float(xp[b, ch, i + di, j + dj]) * float(weight[k, ch, di, dj])
                    out[b, k, i, j] = s
    return out


# ---------------------------------------------------------------------------
# pooling / dense
# ---------------------------------------------------------------------------


def avgpool2x2_forward(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"avgpool expects a 4-D input, got shape {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool 2x2 needs even spatial extent, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avgpool2x2_backward(upstream: np.ndarray) -> np.ndarray:
    g = upstream * 0.25
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense expects input (N, {weight.shape[1]}), got {x.shape}")
    return x @ weight.T + bias


def dense_backward(upstream, x, weight, need_input_grad=True):
    grad_w = upstream.T @ x
    grad_b = upstream.sum(axis=0)
    grad_x = upstream @ weight if need_input_grad else None
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of ``softmax(logits)`` against integer labels.

    Returns ``(loss, grad_logits)`` with ``grad = (softmax - onehot) / N``.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    norm = e.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(norm, dtype=np.float64) - z[rows, labels]))
    grad = e / norm[:, None]
    grad[rows, labels] -= 1
    grad /= n
    return loss, grad
