"""Predictor architectures.

Two cores are available: the multi-scale core (one shared subnetwork applied
to several time-rescaled views of the input, averaged, then a head network)
and a plain MLP. Either can be wrapped so the whole map psi satisfies
psi(a x) = a psi(x) for a > 0 via psi(x) = ||x|| psi_core(x / ||x||).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, ShapeError
from .layers import Sequential, mlp_stack
from .resample import default_taus, resample_matrix

ARCHES = ("fractal", "mlp")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and scale-grid configuration for a quantile predictor.

    outputs=None means one column per quantile level (Q - 1); outputs=1
    selects a single conditional-mean head trained with squared loss.
    """

    input_len: int
    psi1_hidden: tuple[int, ...] = (256, 256, 256)
    psi2_hidden: tuple[int, ...] = (128,) * 8
    K: int = 256
    Q: int = 32
    Hp: int = 64
    taus: tuple[float, ...] = field(default_factory=default_taus)
    dropout_rate: float = 0.5
    rescale_exponent: float = 0.5
    homogeneous: bool = True
    arch: str = "fractal"
    mlp_hidden: tuple[int, ...] = (512,) * 4
    outputs: int | None = None
    batch_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "psi1_hidden", tuple(self.psi1_hidden))
        object.__setattr__(self, "psi2_hidden", tuple(self.psi2_hidden))
        object.__setattr__(self, "mlp_hidden", tuple(self.mlp_hidden))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        problems = []
        if self.input_len < 1:
            problems.append(f"input_len must be >= 1, got {self.input_len}")
        if self.Q < 2:
            problems.append(f"Q must be >= 2, got {self.Q}")
        if not self.taus or self.taus[0] != 1.0:
            problems.append("taus must start at 1.0")
        if any(not 0.0 < t <= 1.0 for t in self.taus):
            problems.append("every tau must lie in (0, 1]")
        if list(self.taus) != sorted(self.taus, reverse=True) or len(set(self.taus)) != len(self.taus):
            problems.append("taus must be strictly decreasing")
        if self.arch == "fractal":
            if self.Hp < 2:
                problems.append(f"Hp must be >= 2, got {self.Hp}")
            if self.Hp > self.input_len:
                problems.append(f"Hp={self.Hp} cannot exceed input_len={self.input_len}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.arch not in ARCHES:
            problems.append(f"arch must be one of {ARCHES}, got '{self.arch}'")
        if self.outputs is not None and self.outputs != 1 and self.outputs != self.Q - 1:
            problems.append(f"outputs must be None, 1, or Q-1={self.Q - 1}, got {self.outputs}")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def n_outputs(self) -> int:
        return self.outputs if self.outputs is not None else self.Q - 1

    @property
    def loss_kind(self) -> str:
        return "l2" if self.n_outputs == 1 else "quantile"

    def variant(self, **changes) -> "NetworkSpec":
        return replace(self, **changes)


class _FractalCore:
    """psi2( mean_i psi1( M_i x ) ) with one fixed rescaling matrix per scale."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        mats = np.stack([
            resample_matrix(spec.input_len, tau, spec.Hp, spec.rescale_exponent)
            for tau in spec.taus
        ])
        self.L = mats.shape[0]
        self.Hp = spec.Hp
        self.Rflat = mats.reshape(self.L * spec.Hp, spec.input_len)
        self.psi1 = mlp_stack(spec.Hp, spec.psi1_hidden, spec.K, rng,
                              spec.dropout_rate, spec.batch_norm)
        self.psi2 = mlp_stack(spec.K, spec.psi2_hidden, spec.n_outputs, rng,
                              spec.dropout_rate, spec.batch_norm)
        self.K = spec.K

    def forward(self, x, train):
        B = x.shape[0]
        views = (x @ self.Rflat.T).reshape(B, self.L, self.Hp)
        views = views.transpose(1, 0, 2).reshape(self.L * B, self.Hp)
        h = self.psi1.forward(views, train)
        h_avg = h.reshape(self.L, B, self.K).mean(axis=0)
        return self.psi2.forward(h_avg, train)

    def backward(self, g):
        B = g.shape[0]
        g_avg = self.psi2.backward(g)
        g_h = np.tile(g_avg / self.L, (self.L, 1))
        g_views = self.psi1.backward(g_h)
        g_views = g_views.reshape(self.L, B, self.Hp).transpose(1, 0, 2).reshape(B, -1)
        return g_views @ self.Rflat

    def submodules(self):
        return {"psi1": self.psi1, "psi2": self.psi2}


class _MLPCore:
    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.mlp = mlp_stack(spec.input_len, spec.mlp_hidden, spec.n_outputs, rng,
                             spec.dropout_rate, spec.batch_norm)

    def forward(self, x, train):
        return self.mlp.forward(x, train)

    def backward(self, g):
        return self.mlp.backward(g)

    def submodules(self):
        return {"mlp": self.mlp}


class Network:
    """Top-level predictor mapping (B, H) windows to (B, n_outputs) values.

    With spec.homogeneous the core sees unit-norm rows and its output is
    rescaled by the input norm, so scaling an input scales the output;
    all-zero rows map to zero by definition.
    """

    def __init__(self, spec: NetworkSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self._homog = None
        rng = np.random.default_rng(seed)
        self.core = _FractalCore(spec, rng) if spec.arch == "fractal" else _MLPCore(spec, rng)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.spec.input_len:
            raise ShapeError(f"expected windows of length {self.spec.input_len}, got {x.shape[1]}")
        if not self.spec.homogeneous:
            out = self.core.forward(x, train)
            self._homog = None
            return out[0] if single else out
        n = np.linalg.norm(x, axis=1)
        ok = n > 0.0
        safe_n = np.where(ok, n, 1.0)
        u = x / safe_n[:, None]
        u[~ok] = 0.0
        c = self.core.forward(u, train)
        out = c * n[:, None]
        out[~ok] = 0.0
        self._homog = (n, ok, u, c)
        return out[0] if single else out

    def backward(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        if self._homog is None:
            gx = self.core.backward(g)
            return gx[0] if single else gx
        n, ok, u, c = self._homog
        g = g * ok[:, None]
        h = self.core.backward(g * n[:, None])
        safe_n = np.where(ok, n, 1.0)
        gx = (g * c).sum(axis=1)[:, None] * u + (h - (u * h).sum(axis=1)[:, None] * u) / safe_n[:, None]
        gx[~ok] = 0.0
        return gx[0] if single else gx

    def _walk(self, kind):
        out = {}
        for prefix, module in self.core.submodules().items():
            for k, v in getattr(module, kind)().items():
                out[f"{prefix}.{k}"] = v
        return out

    def params(self) -> dict[str, np.ndarray]:
        return self._walk("params")

    def grads(self) -> dict[str, np.ndarray]:
        return self._walk("grads")

    def buffers(self) -> dict[str, np.ndarray]:
        return self._walk("buffers")

    def state(self) -> dict[str, np.ndarray]:
        return {**{f"param.{k}": v for k, v in self.params().items()},
                **{f"buffer.{k}": v for k, v in self.buffers().items()}}


def homogenize(fn):
    """Wrap a vector function so the result scales linearly with the input norm.

    The wrapped map sends 0 to 0 and otherwise returns ||x|| * fn(x / ||x||).
    """
    def wrapped(x):
        x = np.asarray(x, dtype=float)
        n = float(np.linalg.norm(x))
        if n == 0.0:
            return np.zeros_like(np.asarray(fn(x), dtype=float))
        return n * np.asarray(fn(x / n), dtype=float)
    return wrapped
