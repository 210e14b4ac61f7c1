"""Minimal reverse-mode neural-network core (no external learning framework).

Layers cache what their backward pass needs on ``forward(..., train=True)``;
training is single-writer per model instance, inference is pure. Convolution
work is delegated to the kernel backend (compiled or NumPy, chosen at import).

Checkpoints are a one-line JSON header followed by a flat little-endian
float64 parameter blob.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import _kernels as kernels


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch


class ShapeError(ValueError):
    """Input shape incompatible with the model."""


class Param:
    """A trainable array with its gradient (same dtype as the value)."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)


ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "identity")
_LEAK = 0.01


def activate(name: str, z: np.ndarray, inplace: bool = False) -> np.ndarray:
    """Apply an activation; ``inplace=True`` may overwrite ``z`` (safe when z
    is a fresh pre-activation buffer, which is how the layers call it)."""
    if name == "identity":
        return z
    out = z if inplace else np.empty_like(z)
    if name == "relu":
        return np.maximum(z, 0.0, out=out)
    if name == "leaky_relu":
        return np.maximum(z, _LEAK * z, out=out)
    if name == "sigmoid":
        # numerically stable on both tails
        pos = z >= 0
        zneg = z[~pos]
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(zneg)
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValueError(f"unknown activation {name!r}")


def activate_backward(name: str, a: np.ndarray, da: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. pre-activation, given the activation output ``a``."""
    if name == "relu":
        return da * (a > 0)
    if name == "leaky_relu":
        return da * np.where(a > 0, 1.0, _LEAK)
    if name == "sigmoid":
        return da * a * (1.0 - a)
    if name == "identity":
        return da
    raise ValueError(f"unknown activation {name!r}")


class Dense:
    """Fully connected layer, rows-are-samples convention."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float64):
        std = np.sqrt(2.0 / n_in)
        self.W = Param(rng.normal(0.0, std, size=(n_in, n_out)).astype(dtype, copy=False))
        self.b = Param(np.zeros(n_out, dtype=dtype))
        self._x: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1] != self.W.value.shape[0]:
            raise ShapeError(
                f"dense layer expects width {self.W.value.shape[0]}, got {x.shape[1]}"
            )
        if train:
            self._x = x
        z = x @ self.W.value
        z += self.b.value
        return z

    def backward(self, dy: np.ndarray) -> np.ndarray:
        # assignment, not accumulation: each step runs exactly one backward
        x = self._x
        self.W.grad = x.T @ dy
        self.b.grad = dy.sum(axis=0)
        return dy @ self.W.value.T


class Conv2d:
    """Same-padded 2-D correlation over NCHW batches (odd kernels only)."""

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 dtype=np.float64):
        if k % 2 == 0:
            raise ValueError("kernel size must be odd for same padding")
        std = np.sqrt(2.0 / (c_in * k * k))
        self.W = Param(rng.normal(0.0, std, size=(c_out, c_in, k, k)).astype(dtype, copy=False))
        self.b = Param(np.zeros(c_out, dtype=dtype))
        self._x: np.ndarray | None = None
        self._cols: np.ndarray | None = None

    def params(self) -> list[Param]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1] != self.W.value.shape[1]:
            raise ShapeError(
                f"conv expects {self.W.value.shape[1]} channels, got {x.shape[1]}"
            )
        if train:
            self._x = x
            out, self._cols = kernels.conv2d_forward_train(x, self.W.value, self.b.value)
            return out
        return kernels.conv2d_forward(x, self.W.value, self.b.value)

    def backward(self, dy: np.ndarray, need_dx: bool = True) -> np.ndarray | None:
        # need_dx=False on a first layer skips the input-gradient correlation
        dx, dw, db = kernels.conv2d_backward_cached(
            self._x, self.W.value, dy, self._cols, need_dx
        )
        self.W.grad = dw
        self.b.grad = db
        return dx


class Mlp:
    """A stack of Dense layers with one activation name per layer.

    ``widths`` includes the input width, e.g. ``[20, 128, 64, 32, 16, 1]``
    with five activation names.
    """

    def __init__(self, widths: list[int], activations: list[str], seed: int):
        if len(activations) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.widths = list(widths)
        self.activations = list(activations)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = [
            Dense(widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)
        ]
        self._acts: list[np.ndarray] = []

    @property
    def n_in(self) -> int:
        return self.widths[0]

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if train:
            self._acts = []
        for layer, act in zip(self.layers, self.activations):
            x = activate(act, layer.forward(x, train=train), inplace=True)
            if train:
                self._acts.append(x)
        return x

    def forward_f32(self, x: np.ndarray) -> np.ndarray:
        """Inference-only float32 path for large batches; weights are cast per
        call (cheap next to the matmuls), so it never sees stale parameters."""
        x = np.asarray(x, dtype=np.float32)
        for layer, act in zip(self.layers, self.activations):
            z = x @ layer.W.value.astype(np.float32)
            z += layer.b.value.astype(np.float32)
            x = activate(act, z, inplace=True)
        return x.astype(np.float64)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer, act, a in zip(
            reversed(self.layers), reversed(self.activations), reversed(self._acts)
        ):
            dout = layer.backward(activate_backward(act, a, dout))
        return dout

    def copy(self) -> "Mlp":
        other = Mlp(self.widths, self.activations, self.seed)
        for src, dst in zip(self.params(), other.params()):
            dst.value = src.value.copy()
        return other


class Adam:
    """Adam with bias correction; one optimizer instance per model."""

    def __init__(self, params: list[Param], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]
        self._scratch = [np.zeros_like(p.value) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v, s in zip(self.params, self._m, self._v, self._scratch):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            np.multiply(p.grad, p.grad, out=s)
            v *= self.beta2
            s *= 1.0 - self.beta2
            v += s
            np.sqrt(v, out=s)
            s *= 1.0 / np.sqrt(b2c)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / b1c
            p.value -= s


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. ``pred``."""
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def save_checkpoint(path: str | Path, header: dict, arrays: list[np.ndarray]) -> None:
    header = dict(header, param_count=int(sum(a.size for a in arrays)))
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, np.ndarray]:
    """Returns the JSON header and the flat float64 parameter vector."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        flat = np.frombuffer(f.read(), dtype="<f8")
    if header.get("param_count") != flat.size:
        raise ValueError(
            f"checkpoint {path}: blob holds {flat.size} values, "
            f"header says {header.get('param_count')}"
        )
    return header, flat.astype(np.float64)


def fill_params(params: list[Param], flat: np.ndarray) -> None:
    """Load a flat vector into params, in order, keeping each param's dtype."""
    offset = 0
    for p in params:
        n = p.value.size
        p.value = flat[offset : offset + n].reshape(p.value.shape).astype(p.value.dtype)
        offset += n
    if offset != flat.size:
        raise ValueError(f"parameter blob size mismatch: used {offset} of {flat.size}")
