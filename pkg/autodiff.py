#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the CSI feedback networks and their losses need are
provided. Every forward op records a closure that maps the output gradient
to one gradient per parent; `backward` walks the graph in reverse
topological order and accumulates gradients into leaf tensors.
"""

import contextlib
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9
LOG_FLOOR = 1e-12


def set_default_dtype(name):
    """Switch new tensors between 'float64' (default) and 'float32'"""
    global _DEFAULT_DTYPE
    if name not in ('float32', 'float64'):
        raise ValueError(f"Unsupported precision '{name}'")
    _DEFAULT_DTYPE = np.dtype(name).type
    logger.debug(f"Default tensor dtype set to {name}")


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """n-dimensional real array taking part in a differentiation graph"""

    def __init__(self, values, requires_grad=False, parents=(), backward_fn=None, op='leaf'):
        self.values = np.asarray(values, dtype=_DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward_fn = backward_fn
        self.op = op

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def numpy(self):
        return self.values

    def item(self):
        return float(self.values)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable tensor with Adam moment state"""

    def __init__(self, values, name=''):
        super().__init__(values, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.values)
        self.v = np.zeros_like(self.values)
        self.step = 0

    def reset_optimizer_state(self):
        self.m = np.zeros_like(self.values)
        self.v = np.zeros_like(self.values)
        self.step = 0

    def __repr__(self):
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(values, parents, backward_fn, op):
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)
    return Tensor(values, op=op)


def _topological_order(root):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """
    Populate gradients of every requires_grad tensor reachable from `loss`.

    Leaf gradients accumulate across calls until reset with `zero_grad`;
    intermediate tensors hold the gradient of the latest call.
    """
    if loss.values.size != 1 or loss.values.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("Loss does not depend on any tensor that requires a gradient")

    grads = {id(loss): np.ones_like(loss.values)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, parent_grad in zip(node._parents, node._backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def zero_grad(params):
    for p in params:
        p.grad = None


def _same_padding(k):
    # Extra row/column of padding goes top/left for even kernels
    return k // 2, (k - 1) // 2


def conv2d(x, kernel, bias):
    """
    Same-padded cross-correlation, stride 1

    Args:
        x (Tensor): B x C_in x H x W input
        kernel (Parameter): C_out x C_in x K_H x K_W weights
        bias (Parameter): C_out bias

    Returns:
        Tensor: B x C_out x H x W
    """
    b, c_in, h, w = x.shape
    c_out, k_c_in, k_h, k_w = kernel.shape
    if c_in != k_c_in:
        raise ValueError(f"conv2d channel mismatch: input has {c_in}, kernel expects {k_c_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"conv2d bias shape {bias.shape} does not match {c_out} output channels")
    top, bottom = _same_padding(k_h)
    left, right = _same_padding(k_w)
    padded = np.pad(x.values, ((0, 0), (0, 0), (top, bottom), (left, right)))
    windows = sliding_window_view(padded, (k_h, k_w), axis=(2, 3))
    out = np.tensordot(windows, kernel.values, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + bias.values[None, :, None, None]

    def backward_fn(g):
        grad_kernel = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = g.sum(axis=(0, 2, 3))
        grad_padded = np.zeros_like(padded)
        for i in range(k_h):
            for j in range(k_w):
                contribution = np.tensordot(g, kernel.values[:, :, i, j], axes=([1], [0]))
                grad_padded[:, :, i:i + h, j:j + w] += contribution.transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, top:top + h, left:left + w]
        return grad_x, grad_kernel, grad_bias

    return _result(out, (x, kernel, bias), backward_fn, 'conv2d')


def dense(x, weight, bias):
    """Affine map x W^T + b for B x L_in input and L_out x L_in weight"""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"dense length mismatch: input {x.shape}, weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"dense bias shape {bias.shape} does not match {weight.shape[0]} outputs")
    out = x.values @ weight.values.T + bias.values

    def backward_fn(g):
        return g @ weight.values, g.T @ x.values, g.sum(axis=0)

    return _result(out, (x, weight, bias), backward_fn, 'dense')


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=BN_MOMENTUM, eps=BN_EPSILON):
    """
    Per-channel normalization over (B, H, W).

    Train mode uses batch statistics and updates `running_mean` /
    `running_var` in place; eval mode uses the running statistics.
    """
    if x.ndim != 4:
        raise ValueError(f"batch_norm expects B x C x H x W input, got {x.shape}")
    if training and x.shape[0] < 2:
        raise ValueError(f"batch_norm in train mode needs a batch of at least 2, got {x.shape[0]}")
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if training:
        mean = x.values.mean(axis=axes)
        var = x.values.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean.copy(), running_var.copy()
    std = np.sqrt(var + eps).reshape(shape)
    x_hat = (x.values - mean.reshape(shape)) / std
    out = gamma.values.reshape(shape) * x_hat + beta.values.reshape(shape)

    def backward_fn(g):
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        d_hat = g * gamma.values.reshape(shape)
        if training:
            grad_x = (d_hat - d_hat.mean(axis=axes, keepdims=True)
                      - x_hat * (d_hat * x_hat).mean(axis=axes, keepdims=True)) / std
        else:
            grad_x = d_hat / std
        return grad_x, grad_gamma, grad_beta

    return _result(out, (x, gamma, beta), backward_fn, 'batch_norm')


def leaky_relu(x, slope=0.3):
    positive = x.values >= 0
    out = np.where(positive, x.values, slope * x.values)

    def backward_fn(g):
        return (np.where(positive, g, slope * g),)

    return _result(out, (x,), backward_fn, 'leaky_relu')


def sigmoid(x):
    # exp of a non-positive argument only
    z = np.exp(-np.abs(x.values))
    out = np.where(x.values >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), backward_fn, 'sigmoid')


def softmax_t(x, temperature=1.0):
    """Row-wise softmax of x / temperature for a B x L input"""
    if not temperature > 0:
        raise ValueError(f"Softmax temperature must be > 0, got {temperature}")
    if x.ndim != 2:
        raise ValueError(f"softmax_t expects a B x L input, got {x.shape}")
    z = x.values if temperature == 1 else x.values / temperature
    e = np.exp(z - z.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g):
        grad_z = out * (g - (g * out).sum(axis=1, keepdims=True))
        return (grad_z if temperature == 1 else grad_z / temperature,)

    return _result(out, (x,), backward_fn, 'softmax_t')


def mse_loss(pred, target):
    """Mean of squared differences over every element"""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.values - target.values
    n = diff.size
    out = np.asarray(np.mean(diff * diff))

    def backward_fn(g):
        grad = g * 2.0 * diff / n
        return grad, -grad

    return _result(out, (pred, target), backward_fn, 'mse_loss')


def soft_cross_entropy(teacher_probs, student_probs):
    """Batch mean of -sum_i p_t,i log p_s,i with the log floored at 1e-12"""
    teacher_probs = as_tensor(teacher_probs)
    if teacher_probs.shape != student_probs.shape:
        raise ValueError(f"soft_cross_entropy shape mismatch: {teacher_probs.shape} vs {student_probs.shape}")
    batch = teacher_probs.shape[0]
    clamped = np.maximum(student_probs.values, LOG_FLOOR)
    log_q = np.log(clamped)
    out = np.asarray(-(teacher_probs.values * log_q).sum() / batch)

    def backward_fn(g):
        grad_teacher = -g * log_q / batch
        grad_student = np.where(student_probs.values > LOG_FLOOR,
                                -g * teacher_probs.values / clamped / batch, 0.0)
        return grad_teacher, grad_student

    return _result(out, (teacher_probs, student_probs), backward_fn, 'soft_cross_entropy')


def concat_channels(a, b):
    if a.ndim != b.ndim or a.shape[:1] + a.shape[2:] != b.shape[:1] + b.shape[2:]:
        raise ValueError(f"concat_channels shape mismatch: {a.shape} vs {b.shape}")
    split = a.shape[1]
    out = np.concatenate([a.values, b.values], axis=1)

    def backward_fn(g):
        return g[:, :split], g[:, split:]

    return _result(out, (a, b), backward_fn, 'concat')


def add(a, b):
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward_fn(g):
        return g, g

    return _result(a.values + b.values, (a, b), backward_fn, 'add')


def scale(x, factor):
    """Multiply by a constant"""
    factor = float(factor)

    def backward_fn(g):
        return (g * factor,)

    return _result(x.values * factor, (x,), backward_fn, 'scale')


def scale_gate(x, alpha):
    """Multiply by a learned scalar (ReZero gate)"""
    if alpha.values.size != 1:
        raise ValueError(f"scale_gate expects a scalar gate, got shape {alpha.shape}")
    gate = alpha.values.reshape(())

    def backward_fn(g):
        return g * gate, np.asarray((g * x.values).sum()).reshape(alpha.shape)

    return _result(x.values * gate, (x, alpha), backward_fn, 'scale_gate')


def reshape(x, shape):
    original = x.shape

    def backward_fn(g):
        return (g.reshape(original),)

    return _result(x.values.reshape(shape), (x,), backward_fn, 'reshape')


def flatten(x):
    return reshape(x, (x.shape[0], -1))


def tensor_sum(x):

    def backward_fn(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(x.values.sum()), (x,), backward_fn, 'sum')


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update of every parameter in place"""
    missing = [p.name or repr(p) for p in params if p.grad is None]
    if missing:
        raise ValueError(f"adam_step called before gradients were populated for: {', '.join(missing)}")
    for p in params:
        p.step += 1
        p.m = beta1 * p.m + (1 - beta1) * p.grad
        p.v = beta2 * p.v + (1 - beta2) * p.grad * p.grad
        m_hat = p.m / (1 - beta1 ** p.step)
        v_hat = p.v / (1 - beta2 ** p.step)
        p.values = p.values - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """Adam optimizer bound to a parameter list"""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def zero_grad(self):
        zero_grad(self.params)

    def step(self):
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)
