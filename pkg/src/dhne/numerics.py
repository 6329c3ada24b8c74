"""Dense layers, activations, initialization and a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

SIGMOID_CLAMP = 700.0


def sigmoid(x):
    """Logistic function, with inputs clamped to [-700, 700] so exp never overflows."""
    x = np.clip(np.asarray(x, dtype=np.float64), -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-x))


def log_sigmoid(x):
    """``log(sigmoid(x))`` without forming sigmoid(x) first."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias of shape {self.bias.shape} does not match weight of shape {self.weight.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy())


def layer_forward(layer: DenseLayer, x, activate: bool = True) -> np.ndarray:
    """``sigmoid(W x + b)`` if ``activate`` else ``W x + b``."""
    x = np.asarray(x, dtype=np.float64)
    expected = layer.weight.shape[1]
    if x.shape != (expected,):
        raise ShapeError(f"expected input of length {expected}, got shape {x.shape}")
    z = layer.weight @ x + layer.bias
    return sigmoid(z) if activate else z


def init_params(out: int, inp: int, seed) -> DenseLayer:
    """Glorot-uniform weights, zero bias."""
    if out < 1 or inp < 1:
        raise ConfigError(f"layer dimensions must be >= 1, got ({out}, {inp})")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (inp + out))
    return DenseLayer(rng.uniform(-bound, bound, size=(out, inp)), np.zeros(out))


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    grad,
    point,
    step: float = 1e-5,
) -> float:
    """Largest discrepancy between an analytic gradient and central differences.

    ``grad`` is either the gradient array at ``point`` or a callable returning
    it. Each coordinate contributes ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if step <= 0:
        raise ConfigError(f"step must be positive, got {step}")
    p = np.array(point, dtype=np.float64).ravel()
    analytic = np.asarray(grad(p.copy()) if callable(grad) else grad, dtype=np.float64).ravel()
    if analytic.shape != p.shape:
        raise ShapeError(f"gradient has {analytic.size} entries for {p.size} coordinates")

    worst = 0.0
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + step
        fp = float(f(p))
        p[i] = orig - step
        fm = float(f(p))
        p[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"objective is not finite near coordinate {i}")
        numeric = (fp - fm) / (2.0 * step)
        worst = max(worst, abs(analytic[i] - numeric) / max(1.0, abs(numeric)))
    return worst
