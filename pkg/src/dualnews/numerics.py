"""Dense layer primitives with hand-written backward passes.

Every forward function returns ``(out, cache)`` and has a matching
``*_backward(grad_out, cache)``.  Arrays are plain numpy arrays; the last
axis is the feature axis and any leading axes are treated as batch.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

# Set to True to check every forward output for NaN/Inf.
DEBUG = False

GELU_C = math.sqrt(2.0 / math.pi)


class ShapeError(ValueError):
    pass


class NonDeterministicLoss(RuntimeError):
    pass


def _check(x: np.ndarray, where: str) -> np.ndarray:
    if DEBUG and not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values after {where}")
    return x


def matmul(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[0] or b.ndim != 2:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _check(a @ b, "matmul"), (a, b)


def matmul_backward(grad_out: np.ndarray, cache):
    a, b = cache
    grad_a = grad_out @ b.T
    a2 = a.reshape(-1, a.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    grad_b = a2.T @ g2
    return grad_a, grad_b


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """``x @ w + b`` with ``w`` of shape (in, out)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    return _check(x @ w + b, "linear"), (x, w)


def linear_backward(grad_out: np.ndarray, cache):
    """Returns (grad_x, grad_w, grad_b)."""
    x, w = cache
    grad_x = grad_out @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    return grad_x, x2.T @ g2, g2.sum(axis=0)


def add_bias(x: np.ndarray, b: np.ndarray):
    if x.shape[-1] != b.shape[-1]:
        raise ShapeError(f"add_bias: {x.shape} + {b.shape}")
    return x + b, None


def add_bias_backward(grad_out: np.ndarray, cache=None):
    return grad_out, grad_out.reshape(-1, grad_out.shape[-1]).sum(axis=0)


def softmax_rows(x: np.ndarray, mask: np.ndarray | None = None):
    """Softmax over the last axis, stabilised by the row max.

    ``mask`` (broadcastable, truthy = keep) sends dropped logits to -inf
    so they get exactly zero weight.  Each row needs at least one kept entry.
    """
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return _check(y, "softmax"), y


def softmax_rows_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y * (grad_out - (grad_out * y).sum(axis=-1, keepdims=True))


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-12):
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return _check(xhat * gamma + beta, "layer_norm"), (xhat, inv, gamma)


def layer_norm_backward(grad_out: np.ndarray, cache):
    """Returns (grad_x, grad_gamma, grad_beta)."""
    xhat, inv, gamma = cache
    n = xhat.shape[-1]
    g2 = grad_out.reshape(-1, n)
    grad_gamma = (g2 * xhat.reshape(-1, n)).sum(axis=0)
    grad_beta = g2.sum(axis=0)
    gx = grad_out * gamma
    grad_x = inv * (
        gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
    )
    return grad_x, grad_gamma, grad_beta


def gelu(x: np.ndarray):
    """tanh approximation of GELU."""
    u = GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    return _check(0.5 * x * (1.0 + t), "gelu"), (x, t)


def gelu_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    x, t = cache
    du = GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return grad_out * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def tanh(x: np.ndarray):
    y = np.tanh(x)
    return y, y


def tanh_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_out * (1.0 - y * y)


def dropout(x: np.ndarray, p: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout.  Returns ``(out, mask)``; ``mask`` is None when inactive."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = rng.random(x.shape) >= p
    mask = keep.astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    eps: float = 1e-3,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> tuple[float, dict[str, float]]:
    """Compare analytic gradients against central differences.

    ``loss_fn`` must read the arrays in ``params`` (they are perturbed in
    place and restored).  For each tensor the checked coordinates give
    vectors ``a`` (analytic) and ``n`` (numeric), and the tensor's error is
    ``||a - n|| / max(||a|| + ||n||, floor)``.  The floor turns the test
    absolute for tensors whose true gradient is (near) zero, where the
    numeric side is pure roundoff.  Up to ``max_coords`` coordinates per
    tensor are sampled; None checks all of them.

    Returns the max error over tensors and the per-tensor errors.
    """
    base = loss_fn()
    if loss_fn() != base:
        raise NonDeterministicLoss("loss_fn returned different values on repeated calls")
    rng = rng or np.random.default_rng(0)
    per_tensor: dict[str, float] = {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, expected {value.shape}")
        if not value.flags.c_contiguous:
            raise ValueError(f"parameter {name} must be C-contiguous to perturb in place")
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(len(coords))
        for j, i in enumerate(coords):
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn()
            flat[i] = old - eps
            down = loss_fn()
            flat[i] = old
            numeric[j] = (up - down) / (2 * eps)
        analytic = gflat[coords].astype(np.float64)
        denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), floor)
        per_tensor[name] = float(np.linalg.norm(analytic - numeric) / denom)
    return max(per_tensor.values(), default=0.0), per_tensor
