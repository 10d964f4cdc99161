"""Minimal reverse-mode autodiff over f64 numpy arrays.

Every primitive carries an explicit backward rule; the finite-difference
checker below is the contract all rules are validated against. Built for
correctness checking at toy scale, not speed.
"""

from __future__ import annotations

import json
import os

import numpy as np
from scipy.special import erf

BCE_CLAMP = 1e-7


class Tensor:
    """Immutable node in a computation graph."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite tensor entries")
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                parent.grad = parent.grad + g


def constant(data) -> Tensor:
    return Tensor(data)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may be a row vector broadcast over a's rows."""
    out = a.data + b.data

    def backward(g):
        ga = g
        gb = g
        if b.data.shape != g.shape:
            gb = g.sum(axis=tuple(range(g.ndim - b.data.ndim)))
            for ax, (gs, bs) in enumerate(zip(gb.shape, b.data.shape)):
                if bs == 1 and gs != 1:
                    gb = gb.sum(axis=ax, keepdims=True)
        if a.data.shape != g.shape:
            ga = g.sum(axis=tuple(range(g.ndim - a.data.ndim)))
        return ga, gb

    return Tensor(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError("mul requires equal shapes")
    return Tensor(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return Tensor(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = g
        return (ga,)

    return Tensor(a.data[:, start:stop], (a,), backward)


def gather_rows(table: Tensor, indices: list[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor(table.data[idx], (table,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return Tensor(y, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis with biased variance, then affine gain/bias."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data
    n = x.data.shape[-1]

    def backward(g):
        dxhat = g * gain.data
        dx = (
            inv
            / n
            * (
                n * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
        )
        axes = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return Tensor(out, (x, gain, bias), backward)


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    phi = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = x.data * phi

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data**2)
        return (g * (phi + x.data * pdf),)

    return Tensor(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    y = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(x.data))),
        np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
    )
    return Tensor(y, (x,), lambda g: (g * y * (1.0 - y),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    shape = x.data.shape
    return Tensor(
        x.data.mean(), (x,), lambda g: (np.full(shape, float(g) / n),)
    )


def tsum(x: Tensor) -> Tensor:
    shape = x.data.shape
    return Tensor(x.data.sum(), (x,), lambda g: (np.full(shape, float(g)),))


def bce(pred: Tensor, target, reduction: str = "sum") -> Tensor:
    """Binary cross-entropy against {0,1} targets.

    Predictions are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before the logs;
    the clamp has zero gradient where active. reduction "mean_per_question"
    divides by the number of rows.
    """
    t = np.asarray(target, dtype=np.float64)
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("targets must be 0 or 1")
    if reduction not in ("sum", "mean_per_question"):
        raise ValueError(f"unknown reduction {reduction!r}")
    lo, hi = BCE_CLAMP, 1.0 - BCE_CLAMP
    clamped = np.clip(pred.data, lo, hi)
    loss = -(t * np.log(clamped) + (1 - t) * np.log(1 - clamped)).sum()
    denom = 1.0
    if reduction == "mean_per_question":
        denom = float(pred.data.shape[0]) if pred.data.ndim > 1 else 1.0
        loss /= denom

    def backward(g):
        inside = (pred.data > lo) & (pred.data < hi)
        dp = (-(t / clamped) + (1 - t) / (1 - clamped)) * inside / denom
        return (float(g) * dp,)

    return Tensor(loss, (pred,), backward)


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, per coordinate."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(x.size):
        orig = xf[i]
        xf[i] = orig + eps
        fp = f(x)
        xf[i] = orig - eps
        fm = f(x)
        xf[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("non-finite function value in finite differences")
        flat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


# Primitive registry: op plus its backward rule, as documentation and as the
# enumeration the finite-difference test sweeps over.
PRIMITIVES = {
    "add": (add, "dA = dC (summed over broadcast axes for B)"),
    "mul": (mul, "dA = dC*B, dB = dC*A"),
    "scale": (scale, "dA = c*dC"),
    "matmul": (matmul, "dA = dC@B.T, dB = A.T@dC"),
    "transpose": (transpose, "dA = dC.T"),
    "reshape": (reshape, "dA = reshape(dC, A.shape)"),
    "concat": (concat, "split dC at the part boundaries"),
    "slice_cols": (slice_cols, "scatter dC into the sliced columns"),
    "gather_rows": (gather_rows, "scatter-add dC into the gathered rows"),
    "softmax": (softmax, "dX = (dY - sum(dY*Y))*Y along the axis"),
    "layer_norm": (layer_norm, "standard layer-norm backward, biased variance"),
    "gelu": (gelu, "dX = dY*(Phi(x) + x*phi(x))"),
    "sigmoid": (sigmoid, "dX = dY*y*(1-y)"),
    "mean": (mean, "dX = dY/size"),
    "sum": (tsum, "dX = dY broadcast"),
    "bce": (bce, "dP = (-t/p + (1-t)/(1-p)) inside the clamp, 0 outside"),
}


class Parameter:
    """Named trainable array with an accumulated gradient."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def save_checkpoint(params: dict[str, Parameter], directory: str, seed: int = 0) -> None:
    """Manifest JSON plus one little-endian f64 blob holding all parameters."""
    os.makedirs(directory, exist_ok=True)
    manifest = {"seed": seed, "parameters": []}
    offset = 0
    with open(os.path.join(directory, "params.bin"), "wb") as fh:
        for name in sorted(params):
            p = params[name]
            blob = p.value.astype("<f8").tobytes()
            fh.write(blob)
            manifest["parameters"].append(
                {"name": name, "shape": list(p.value.shape), "offset": offset}
            )
            offset += len(blob)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)


def load_checkpoint(directory: str) -> dict[str, Parameter]:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(directory, "params.bin"), "rb") as fh:
        blob = fh.read()
    params = {}
    for entry in manifest["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            blob, dtype="<f8", count=count, offset=entry["offset"]
        ).reshape(shape)
        params[entry["name"]] = Parameter(entry["name"], arr.copy())
    return params
