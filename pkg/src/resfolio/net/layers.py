"""Dense / ReLU / dropout / batch-norm layers with hand-written backward passes.

All math is float64. forward() caches whatever backward() needs, so the
pattern is strictly forward-then-backward on the same batch. Parameter and
gradient arrays are exposed by reference through params()/grads().
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError


class Layer:
    name = "layer"

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}


class Dense(Layer):
    name = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        # He initialization; biases start at zero
        self.W = rng.standard_normal((n_in, n_out)) * math.sqrt(2.0 / n_in)
        self.b = np.zeros(n_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def forward(self, x, train):
        if x.shape[-1] != self.W.shape[0]:
            raise ShapeError(f"dense expects {self.W.shape[0]} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ self.W + self.b

    def backward(self, g):
        self.gW[...] = self._x.T @ g
        self.gb[...] = g.sum(axis=0)
        return g @ self.W.T

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.gW, "b": self.gb}


class ReLU(Layer):
    name = "relu"

    def forward(self, x, train):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class Dropout(Layer):
    """Inverted dropout; eval mode and rate 0 are pass-through (no RNG draw)."""

    name = "dropout"

    def __init__(self, rate: float, rng: np.random.Generator):
        if not 0 <= rate < 1:
            raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._scale = None

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            self._scale = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, g):
        if self._scale is None:
            return g
        return g * self._scale


class BatchNorm(Layer):
    """Feature-wise batch normalization with running statistics.

    Train mode normalizes by batch mean/variance (population) and updates the
    running buffers; eval mode uses the buffers, making the layer affine.
    """

    name = "batchnorm"

    def __init__(self, n: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = np.ones(n)
        self.beta = np.zeros(n)
        self.running_mean = np.zeros(n)
        self.running_var = np.ones(n)
        self.momentum = momentum
        self.eps = eps
        self.g_gamma = np.zeros(n)
        self.g_beta = np.zeros(n)

    def forward(self, x, train):
        self._train = train
        if train:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean += self.momentum * (mu - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mu, var = self.running_mean, self.running_var
        self._inv_std = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv_std
        self._xc = x - mu
        return self.gamma * self._xhat + self.beta

    def backward(self, g):
        self.g_gamma[...] = (g * self._xhat).sum(axis=0)
        self.g_beta[...] = g.sum(axis=0)
        gx_hat = g * self.gamma
        if not self._train:
            return gx_hat * self._inv_std
        B = g.shape[0]
        g_var = (gx_hat * self._xc).sum(axis=0) * (-0.5) * self._inv_std ** 3
        g_mu = -(gx_hat.sum(axis=0)) * self._inv_std + g_var * (-2.0 / B) * self._xc.sum(axis=0)
        return gx_hat * self._inv_std + g_var * (2.0 / B) * self._xc + g_mu / B

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.g_gamma, "beta": self.g_beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class Sequential(Layer):
    name = "sequential"

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x, train):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params().items()}

    def grads(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads().items()}

    def buffers(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.buffers().items()}


def mlp_stack(n_in: int, hidden: tuple[int, ...], n_out: int, rng: np.random.Generator,
              dropout_rate: float, batch_norm: bool = True) -> Sequential:
    """Dense -> BatchNorm -> ReLU -> Dropout per hidden width, then a linear head."""
    layers: list[Layer] = []
    width = n_in
    for h in hidden:
        layers.append(Dense(width, h, rng))
        if batch_norm:
            layers.append(BatchNorm(h))
        layers.append(ReLU())
        if dropout_rate > 0:
            layers.append(Dropout(dropout_rate, rng))
        width = h
    layers.append(Dense(width, n_out, rng))
    return Sequential(layers)
