"""Minimal dense linear-algebra kernel with explicit forward/backward passes.

Parameters live in a ParamSet: named numpy arrays, each paired with a
same-shape gradient accumulator. Training runs in float32; the
central-difference gradient oracle builds float64 instances for headroom.
There is no autodiff graph here on purpose: every backward pass in this
package is written by hand and verified against finite_diff_check.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class TrainingError(RuntimeError):
    """An update would corrupt parameters (non-finite gradient)."""


class OracleError(RuntimeError):
    """Gradient-oracle precondition violated (e.g. non-deterministic loss)."""


class Param:
    """A named tensor value with its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)


class ParamSet:
    """Insertion-ordered map name -> Param. Single writer during training."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name}")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        if not np.all(np.isfinite(arr)):
            raise TrainingError(f"non-finite initial value for {name}")
        p = Param(arr)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grads(self) -> None:
        for p in self._entries.values():
            p.grad[...] = 0.0

    def values_dict(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self._entries.items()}

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet(dtype)
        for k, p in self._entries.items():
            out.add(k, p.value.astype(dtype))
        return out

    def copy(self) -> "ParamSet":
        out = ParamSet(self.dtype)
        for k, p in self._entries.items():
            q = out.add(k, p.value.copy())
            q.grad[...] = p.grad
        return out


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases use zeros."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# Affine layer.
# ---------------------------------------------------------------------------

def affine_forward(w: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """y = W x + b for a single vector x."""
    if w.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"affine expects 2d W, 1d b, 1d x; got {w.shape}, {b.shape}, {x.shape}")
    if w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ShapeError(f"affine shape mismatch: W{w.shape} b{b.shape} x{x.shape}")
    return w @ x + b


def affine_backward(w: np.ndarray, x: np.ndarray, upstream: np.ndarray):
    """Closed-form gradients: (upstream (x) x, upstream, W^T upstream)."""
    if upstream.shape[0] != w.shape[0] or x.shape[0] != w.shape[1]:
        raise ShapeError(f"affine backward mismatch: W{w.shape} x{x.shape} up{upstream.shape}")
    grad_w = np.outer(upstream, x)
    grad_b = upstream.copy()
    grad_x = w.T @ upstream
    return grad_w, grad_b, grad_x


# ---------------------------------------------------------------------------
# Activations. Each returns (y, backward) where backward maps the upstream
# gradient to the gradient w.r.t. x.
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(pre: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (pre > 0)


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x)
    e = np.exp(z)
    return e / np.sum(e)


def activation(kind: str, x: np.ndarray):
    if kind == "relu":
        y = relu(x)

        def backward(upstream, pre=x):
            return relu_grad(pre, upstream)

    elif kind == "tanh":
        y = np.tanh(x)

        def backward(upstream, out=y):
            return upstream * (1.0 - out * out)

    elif kind == "softmax":
        y = softmax(x)

        def backward(upstream, out=y):
            return out * (upstream - np.dot(upstream, out))

    else:
        raise ValueError(f"unknown activation kind: {kind}")
    return y, backward


def softmax_backward(y: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return y * (upstream - np.dot(upstream, y))


# ---------------------------------------------------------------------------
# Optimizer.
# ---------------------------------------------------------------------------

class OptimizerState:
    """Plain SGD with optional momentum (default 0), or Adam (kind="adam").

    The policy heads are always updated with momentum-free SGD so that a
    zero gradient leaves them bit-identical; Adam exists because uniform
    SGD steps stall the supervised pathway (per-layer gradient scales span
    two orders of magnitude).
    """

    def __init__(self, learning_rate: float, momentum: float = 0.0, kind: str = "sgd",
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind: {kind}")
        self.kind = kind
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.buffers: dict[str, np.ndarray] = {}
        self.second: dict[str, np.ndarray] = {}


def sgd_step(params: ParamSet, opt: OptimizerState, names=None) -> ParamSet:
    """value <- value - lr * grad (momentum optional); zeroes grads after.

    `names` restricts the update to a subset of entries (used to keep the
    policy heads on momentum-free SGD while the supervised path may not be).
    """
    entries = params.items() if names is None else [(n, params[n]) for n in names]
    if opt.kind == "adam":
        opt.step_count += 1
    for name, p in entries:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient for parameter {name}")
        if opt.kind == "adam":
            m = opt.buffers.setdefault(name, np.zeros_like(p.value))
            v = opt.second.setdefault(name, np.zeros_like(p.value))
            m *= opt.beta1
            m += (1.0 - opt.beta1) * p.grad
            v *= opt.beta2
            v += (1.0 - opt.beta2) * p.grad ** 2
            m_hat = m / (1.0 - opt.beta1 ** opt.step_count)
            v_hat = v / (1.0 - opt.beta2 ** opt.step_count)
            p.value -= (opt.learning_rate * m_hat / (np.sqrt(v_hat) + opt.eps)).astype(p.value.dtype)
        elif opt.momentum != 0.0:
            buf = opt.buffers.get(name)
            if buf is None:
                buf = np.zeros_like(p.value)
                opt.buffers[name] = buf
            buf *= opt.momentum
            buf += p.grad
            p.value -= opt.learning_rate * buf
        else:
            p.value -= opt.learning_rate * p.grad
        p.grad[...] = 0.0
    return params


# ---------------------------------------------------------------------------
# Finite-difference gradient oracle.
# ---------------------------------------------------------------------------

def finite_diff_check(loss_fn, params: ParamSet, eps: float = 1e-5,
                      max_entries_per_param: int | None = None,
                      rng: np.random.Generator | None = None):
    """Compare analytic grads in `params` against central differences.

    loss_fn(params) must be a deterministic scalar function that does not
    mutate the ParamSet; analytic gradients are expected to be populated in
    params already. Returns (max_relative_error, worst_entry_name). Relative
    error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    f0 = float(loss_fn(params))
    f1 = float(loss_fn(params))
    if f0 != f1:
        raise OracleError(f"loss_fn is not deterministic: {f0!r} != {f1!r}")

    worst = 0.0
    worst_name = ""
    for name, p in params.items():
        flat_v = p.value.reshape(-1)
        flat_g = p.grad.reshape(-1)
        idxs = np.arange(flat_v.size)
        if max_entries_per_param is not None and flat_v.size > max_entries_per_param:
            gen = rng if rng is not None else np.random.default_rng(0)
            idxs = gen.choice(flat_v.size, size=max_entries_per_param, replace=False)
        for i in idxs:
            orig = flat_v[i]
            flat_v[i] = orig + eps
            fp = float(loss_fn(params))
            flat_v[i] = orig - eps
            fm = float(loss_fn(params))
            flat_v[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            analytic = float(flat_g[i])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            err = abs(numeric - analytic) / denom
            if err > worst:
                worst = err
                worst_name = f"{name}[{int(i)}]"
    return worst, worst_name
