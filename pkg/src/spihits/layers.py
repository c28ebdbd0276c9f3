"""Dense layer kernels: convolution, pooling and activations, hand-differentiated.

Tensors are plain numpy arrays in (batch, channels, height, width) layout,
float32 for training and inference, float64 when gradients are being
verified against finite differences. Convolution is cross-correlation (no
kernel flip). All backward functions accumulate parameter gradients into
the ``LayerParams`` they are given; callers zero them between batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """A layer was applied to shapes it cannot accept."""


@dataclass
class LayerParams:
    """Weights and bias of one layer plus gradient and momentum buffers."""

    name: str
    weights: np.ndarray
    bias: np.ndarray
    grad_w: np.ndarray = field(repr=False, default=None)
    grad_b: np.ndarray = field(repr=False, default=None)
    vel_w: np.ndarray = field(repr=False, default=None)
    vel_b: np.ndarray = field(repr=False, default=None)

    @classmethod
    def create(cls, weights, bias, name="layer"):
        weights = np.asarray(weights)
        bias = np.asarray(bias)
        return cls(
            name=name,
            weights=weights,
            bias=bias,
            grad_w=np.zeros_like(weights),
            grad_b=np.zeros_like(bias),
            vel_w=np.zeros_like(weights),
            vel_b=np.zeros_like(bias),
        )

    def zero_grad(self):
        self.grad_w[...] = 0.0
        self.grad_b[...] = 0.0

    def astype(self, dtype):
        p = LayerParams.create(
            self.weights.astype(dtype), self.bias.astype(dtype), name=self.name
        )
        p.vel_w = self.vel_w.astype(dtype)
        p.vel_b = self.vel_b.astype(dtype)
        return p


def _conv_out_shape(x_shape, w_shape, stride, pad):
    n, c_in, h, w = x_shape
    f, c_w, k, k2 = w_shape
    if k != k2:
        raise ConfigurationError(f"non-square kernel {w_shape}")
    if c_in != c_w:
        raise ConfigurationError(
            f"input has {c_in} channels but kernel {w_shape} expects {c_w}"
        )
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ConfigurationError(
            f"kernel {w_shape} with stride={stride} pad={pad} leaves no output "
            f"for input {x_shape}"
        )
    return n, f, ho, wo


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(xp, k, stride, ho, wo):
    # (N, C, Hp, Wp) -> (N*Ho*Wo, C*K*K) without copying the windows twice.
    n, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, k, k),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)


def conv2d(x, params, stride=1, pad=0):
    """Cross-correlate ``x`` with the layer kernel, zero padding."""
    out, _ = conv2d_forward(x, params, stride, pad)
    return out


def conv2d_forward(x, params, stride=1, pad=0):
    """conv2d that also returns the im2col matrix for backward reuse."""
    w, b = params.weights, params.bias
    n, f, ho, wo = _conv_out_shape(x.shape, w.shape, stride, pad)
    k = w.shape[2]
    cols = _im2col(_pad(x, pad), k, stride, ho, wo)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2), cols


def conv2d_backward(x, params, output_grad, stride=1, pad=0, cols=None):
    """Backward pass of conv2d.

    Accumulates kernel and bias gradients into ``params`` and returns the
    gradient with respect to ``x``. Pass the ``cols`` matrix from
    conv2d_forward to skip recomputing it.
    """
    w = params.weights
    n, f, ho, wo = _conv_out_shape(x.shape, w.shape, stride, pad)
    if output_grad.shape != (n, f, ho, wo):
        raise ConfigurationError(
            f"output_grad shape {output_grad.shape} does not match conv output "
            f"{(n, f, ho, wo)}"
        )
    k = w.shape[2]
    if cols is None:
        cols = _im2col(_pad(x, pad), k, stride, ho, wo)
    gmat = output_grad.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)

    params.grad_w += (gmat.T @ cols).reshape(w.shape)
    params.grad_b += gmat.sum(axis=0)

    gcols = gmat @ w.reshape(f, -1)
    g = gcols.reshape(n, ho, wo, w.shape[1], k, k).transpose(0, 3, 1, 2, 4, 5)
    hp, wp = x.shape[2] + 2 * pad, x.shape[3] + 2 * pad
    gx = np.zeros((n, x.shape[1], hp, wp), dtype=output_grad.dtype)
    for ki in range(k):
        for kj in range(k):
            gx[:, :, ki:ki + ho * stride:stride, kj:kj + wo * stride:stride] += (
                g[..., ki, kj]
            )
    if pad:
        gx = gx[:, :, pad:-pad, pad:-pad]
    return gx


def maxpool2d(x):
    """2x2 max pooling with stride 2.

    Odd spatial extents are padded bottom/right with -inf so the output
    shape is ceil(H/2) x ceil(W/2). Returns (output, argmax) where argmax
    holds the winning in-window position (0..3, row-major; ties go to the
    first index).
    """
    n, c, h, w = x.shape
    ph, pw = h % 2, w % 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=-np.inf)
        h, w = x.shape[2:]
    ho, wo = h // 2, w // 2
    win = x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, ho, wo, 4
    )
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool2d_backward(argmax, output_grad, input_shape):
    """Route ``output_grad`` to the argmax position of each window."""
    n, c, h, w = input_shape
    ph, pw = h % 2, w % 2
    hp, wp = h + ph, w + pw
    ho, wo = hp // 2, wp // 2
    gwin = np.zeros((n, c, ho, wo, 4), dtype=output_grad.dtype)
    np.put_along_axis(gwin, argmax[..., None], output_grad[..., None], axis=-1)
    gx = gwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, hp, wp
    )
    if ph or pw:
        gx = gx[:, :, :h, :w]
    return gx


def leaky_relu(x, slope=0.1):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(x, output_grad, slope=0.1):
    return np.where(x > 0, output_grad, slope * output_grad)


def sigmoid(x):
    """Logistic function, stable for large |x| (no exp overflow)."""
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, output_grad):
    """Backward pass given the forward output ``y = sigmoid(x)``."""
    return output_grad * y * (1.0 - y)
