"""Dense transform stacks with hand-written reverse-mode gradients.

Everything is float64 numpy. A Transform is a stack of affine layers with
leaky-relu (slope 0.2) on all but the last layer; analysis maps data to
latents, synthesis maps latents back. Gradients are computed layer by
layer in reverse, no taped autodiff. Optimizers update named parameter
dicts in place so callers can share or checkpoint state freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingError

LEAKY_SLOPE = 0.2


def as_tensor(x) -> np.ndarray:
    """Coerce to the package tensor contract: float64, C-contiguous."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    return a


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_out, fan_in))


def leaky_relu(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0.0, z, LEAKY_SLOPE * z)


def leaky_relu_grad(z: np.ndarray) -> np.ndarray:
    # Derivative taken as 1 at exactly z == 0.
    return np.where(z >= 0.0, 1.0, LEAKY_SLOPE)


@dataclass
class DenseLayer:
    """One affine layer, weight [out, in], optional nonlinearity."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "none"  # "none" | "leaky_relu"

    def __post_init__(self):
        self.weight = as_tensor(self.weight)
        self.bias = as_tensor(self.bias)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("dense layer expects weight [out, in] and bias [out]")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"weight rows {self.weight.shape[0]} != bias size {self.bias.shape[0]}"
            )
        if self.activation not in ("none", "leaky_relu"):
            raise ShapeError(f"unknown activation {self.activation!r}")


class Transform:
    """A stack of DenseLayers applied to batches shaped [B, d_in]."""

    def __init__(self, layers: list[DenseLayer], role: str = "analysis"):
        self.layers = layers
        self.role = role

    @classmethod
    def create(
        cls,
        widths: list[int],
        rng: np.random.Generator,
        role: str = "analysis",
    ) -> "Transform":
        """Build a stack over the width chain; leaky-relu on all but last."""
        if len(widths) < 2:
            raise ShapeError("a transform needs at least input and output widths")
        layers = []
        for k in range(len(widths) - 1):
            act = "leaky_relu" if k < len(widths) - 2 else "none"
            layers.append(
                DenseLayer(
                    weight=glorot_uniform(rng, widths[k + 1], widths[k]),
                    bias=np.zeros(widths[k + 1]),
                    activation=act,
                )
            )
        return cls(layers, role=role)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x)
        if x.ndim != 2:
            raise ShapeError(f"{self.role} transform expects a [B, d] batch, got ndim={x.ndim}")
        if x.shape[1] != self.in_dim:
            raise ShapeError(
                f"{self.role} transform layer 0 expects input width {self.in_dim}, "
                f"got {x.shape[1]}"
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        for i, layer in enumerate(self.layers):
            if x.shape[1] != layer.weight.shape[1]:
                raise ShapeError(
                    f"{self.role} transform layer {i} expects width "
                    f"{layer.weight.shape[1]}, got {x.shape[1]}"
                )
            z = x @ layer.weight.T + layer.bias
            x = leaky_relu(z) if layer.activation == "leaky_relu" else z
        return x

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping per-layer inputs and pre-activations."""
        x = self._check_input(x)
        cache = []
        for layer in self.layers:
            z = x @ layer.weight.T + layer.bias
            cache.append((x, z))
            x = leaky_relu(z) if layer.activation == "leaky_relu" else z
        return x, cache

    def backward(self, cache, upstream: np.ndarray):
        """Reverse pass; returns (grads dict keyed like parameters(), d_input)."""
        upstream = as_tensor(upstream)
        grads: dict[str, np.ndarray] = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            x_in, z = cache[i]
            dz = upstream * leaky_relu_grad(z) if layer.activation == "leaky_relu" else upstream
            grads[f"layer{i}.weight"] = dz.T @ x_in
            grads[f"layer{i}.bias"] = dz.sum(axis=0)
            upstream = dz @ layer.weight
        return grads, upstream

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays, keyed layer{i}.weight / layer{i}.bias."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.weight"] = layer.weight
            out[f"layer{i}.bias"] = layer.bias
        return out

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        own = self.parameters()
        for name, arr in own.items():
            if name not in params:
                raise ShapeError(f"missing parameter {name}")
            src = as_tensor(params[name])
            if src.shape != arr.shape:
                raise ShapeError(
                    f"parameter {name} has shape {src.shape}, expected {arr.shape}"
                )
            arr[...] = src

    def copy(self) -> "Transform":
        layers = [
            DenseLayer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers
        ]
        return Transform(layers, role=self.role)


def _check_finite(name: str, g: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        raise TrainingError(f"non-finite gradient for parameter {name!r}")


class Sgd:
    """Plain SGD on a named parameter dict."""

    kind = "sgd"

    def __init__(self, lr: float = 1e-3):
        self.lr = lr
        self.step_count = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            p -= self.lr * g


class Adam:
    """Adam with bias correction; moment buffers keyed by parameter name."""

    kind = "adam"

    def __init__(
        self,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr=lr)
    if kind == "sgd":
        return Sgd(lr=lr)
    raise ShapeError(f"unknown optimizer kind {kind!r}")


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_name: str
    worst_index: tuple
    passed: bool
    per_param: dict[str, float] = field(default_factory=dict)


def grad_check(
    fn,
    point: dict[str, np.ndarray],
    tol: float = 1e-4,
    step: float = 1e-3,
) -> GradCheckReport:
    """Central-difference check of a scalar function's analytic gradient.

    fn(point) must return (value, grads) where grads mirrors point's keys.
    Relative error per coordinate is |a - n| / max(1, |a|, |n|), so the
    check is absolute near zero and relative for large entries.
    """
    point = {k: as_tensor(v).copy() for k, v in point.items()}
    _, analytic = fn(point)
    worst = 0.0
    worst_name = ""
    worst_index: tuple = ()
    per_param = {}
    for name, arr in point.items():
        a_grad = as_tensor(analytic[name])
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus, _ = fn(point)
            flat[i] = orig - step
            f_minus, _ = fn(point)
            flat[i] = orig
            nflat[i] = (f_plus - f_minus) / (2.0 * step)
        denom = np.maximum(1.0, np.maximum(np.abs(a_grad), np.abs(num)))
        rel = np.abs(a_grad - num) / denom
        per_param[name] = float(rel.max()) if rel.size else 0.0
        if rel.size and rel.max() > worst:
            worst = float(rel.max())
            worst_name = name
            worst_index = np.unravel_index(int(rel.argmax()), rel.shape)
    return GradCheckReport(
        max_rel_err=worst,
        worst_name=worst_name,
        worst_index=worst_index,
        passed=worst <= tol,
        per_param=per_param,
    )
