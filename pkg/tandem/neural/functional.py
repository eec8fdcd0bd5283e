"""
Layer kernels with their exact backward rules.

Images are NHWC (batch, height, width, channels). Dense weights are (out, in) so that
``y = x @ W.T + b``; conv kernels are (3, 3, C_in, C_out), stride 1, zero padding 1.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError


def dense_forward(x, weight, bias):
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense layer expects (batch, {weight.shape[1]}), got {x.shape}")
    return x @ weight.T + bias


def dense_backward(x, weight, grad_out, need_param_grads=True):
    grad_x = grad_out @ weight
    if not need_param_grads:
        return grad_x, None, None
    return grad_x, grad_out.T @ x, grad_out.sum(axis=0)


def _windows(x):
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    # (batch, H, W, C, 3, 3)
    return sliding_window_view(padded, (3, 3), axis=(1, 2))


def conv2d_forward(x, kernel, bias):
    if x.ndim != 4 or x.shape[3] != kernel.shape[2]:
        raise ShapeError(f"conv layer expects (batch, H, W, {kernel.shape[2]}), got {x.shape}")
    out = np.tensordot(_windows(x), kernel.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))
    return out + bias


def conv2d_backward(x, kernel, grad_out, need_param_grads=True):
    flipped = kernel[::-1, ::-1].transpose(3, 0, 1, 2)
    grad_x = np.tensordot(_windows(grad_out), flipped, axes=([3, 4, 5], [0, 1, 2]))
    if not need_param_grads:
        return grad_x, None, None
    grad_k = np.tensordot(_windows(x), grad_out, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    return grad_x, grad_k, grad_out.sum(axis=(0, 1, 2))


def _blocks(x):
    b, h, w, c = x.shape
    return x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, h // 2, w // 2, c, 4)


def maxpool_forward(x):
    """2x2 max pool, stride 2. Returns the output and the winning offsets (first index on ties)."""
    if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeError(f"max pool needs even spatial dims, got {x.shape}")
    blocks = _blocks(x)
    argmax = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0], argmax


def maxpool_backward(grad_out, argmax, input_shape):
    b, h, w, c = input_shape
    blocks = np.zeros(grad_out.shape + (4,), dtype=grad_out.dtype)
    np.put_along_axis(blocks, argmax[..., None], grad_out[..., None], axis=-1)
    return blocks.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(input_shape)


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def sigmoid_forward(x):
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return out


def sigmoid_backward(y, grad_out):
    return grad_out * y * (1 - y)
