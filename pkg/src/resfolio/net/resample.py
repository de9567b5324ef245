"""Time-rescaled views of a return sequence.

A scale tau in (0, 1] selects the trailing fraction of the cumulated
sequence, which is linearly re-gridded to a fixed output length, differenced
back to increments, and rescaled by tau**(-exponent) (exponent 1/2 matches
diffusive self-similarity). All four steps are linear, so each scale is one
fixed matrix.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DomainError


def resample_matrix(H: int, tau: float, Hp: int, exponent: float = 0.5) -> np.ndarray:
    """The (Hp x H) matrix applying the cumulate/regrid/difference/rescale map.

    Built directly on cumulative-sum weights: interpolating the running sum
    at fractional position p gives prefix weights [1,...,1,frac], so no H x H
    intermediate is materialized. tau = 1 with Hp = H yields the identity.
    """
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"scale tau must be in (0, 1], got {tau}")
    if Hp < 2:
        raise ConfigError(f"output length Hp must be >= 2, got {Hp}")
    if H < 1:
        raise ConfigError(f"input length H must be >= 1, got {H}")
    start = math.floor((1.0 - tau) * H)
    positions = start + (H - start) * np.arange(Hp + 1) / Hp
    # G[k, i] = weight of x_i in the cumulated sequence interpolated at positions[k]
    G = np.zeros((Hp + 1, H))
    j = np.minimum(np.floor(positions).astype(int), H)
    frac = positions - j
    for k in range(Hp + 1):
        G[k, : j[k]] = 1.0
        if j[k] < H:
            G[k, j[k]] = frac[k]
    return tau ** (-exponent) * np.diff(G, axis=0)


def resample(x: np.ndarray, tau: float, Hp: int, exponent: float = 0.5) -> np.ndarray:
    """Apply the rescaling map to one sequence (length H -> length Hp)."""
    x = np.asarray(x, dtype=float)
    return resample_matrix(x.shape[-1], tau, Hp, exponent) @ x


def default_taus(count: int = 22, step: int = 1) -> tuple[float, ...]:
    """Scales 4**(-j*step/20) for j = 0..count-1; tau_0 = 1, strictly decreasing."""
    if count < 1:
        raise ConfigError(f"need at least one scale, got {count}")
    return tuple(4.0 ** (-(j * step) / 20.0) for j in range(count))
