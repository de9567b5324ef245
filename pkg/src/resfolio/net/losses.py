"""Pinball / multi-quantile / squared losses and their gradients.

Gradients are taken with respect to the prediction. At the pinball kink
(y == y_pred) the subgradient on the y >= y_pred side is used, i.e. -alpha,
which keeps minimizers at left-continuous quantiles.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError


def pinball_loss(y, y_pred, alpha: float):
    """max{(alpha - 1)(y - y'), alpha (y - y')}; elementwise on arrays."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"quantile level must be in (0, 1), got {alpha}")
    d = np.asarray(y, dtype=float) - np.asarray(y_pred, dtype=float)
    out = np.maximum((alpha - 1.0) * d, alpha * d)
    return float(out) if out.ndim == 0 else out


def pinball_grad(y, y_pred, alpha: float):
    """d/d y_pred of the pinball loss; -alpha on ties."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"quantile level must be in (0, 1), got {alpha}")
    y = np.asarray(y, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    return np.where(y >= y_pred, -alpha, 1.0 - alpha)


def quantile_grid(Q: int) -> np.ndarray:
    """Equispaced levels j/Q for j = 1..Q-1."""
    if Q < 2:
        raise DomainError(f"quantile grid size Q must be >= 2, got {Q}")
    return np.arange(1, Q) / Q


def multi_quantile_loss(y, y_pred, Q: int) -> float:
    """Sum of pinball losses over the j/Q grid; mean over the batch when batched.

    y_pred carries Q-1 columns (one per level); y is a scalar or a length-B
    vector of targets.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_pred = np.asarray(y_pred, dtype=float)
    if y_pred.ndim == 1:
        y_pred = y_pred[None, :]
    if y_pred.shape != (y.shape[0], Q - 1):
        raise ShapeError(f"expected predictions of shape {(y.shape[0], Q - 1)}, got {y_pred.shape}")
    alphas = quantile_grid(Q)
    d = y[:, None] - y_pred
    losses = np.maximum((alphas - 1.0) * d, alphas * d)
    return float(losses.sum(axis=1).mean())


def multi_quantile_grad(y, y_pred, Q: int) -> np.ndarray:
    """Gradient of multi_quantile_loss w.r.t. y_pred (already divided by batch size)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_pred = np.asarray(y_pred, dtype=float)
    squeeze = y_pred.ndim == 1
    if squeeze:
        y_pred = y_pred[None, :]
    if y_pred.shape != (y.shape[0], Q - 1):
        raise ShapeError(f"expected predictions of shape {(y.shape[0], Q - 1)}, got {y_pred.shape}")
    alphas = quantile_grid(Q)
    g = np.where(y[:, None] >= y_pred, -alphas, 1.0 - alphas) / y.shape[0]
    return g[0] if squeeze else g


def squared_loss(y, y_pred) -> float:
    """Mean squared error for single-output (conditional mean) heads."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_pred = np.asarray(y_pred, dtype=float).reshape(y.shape[0], -1)
    if y_pred.shape[1] != 1:
        raise ShapeError(f"squared loss expects one output, got {y_pred.shape[1]}")
    return float(np.mean((y - y_pred[:, 0]) ** 2))


def squared_grad(y, y_pred) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_pred = np.asarray(y_pred, dtype=float).reshape(y.shape[0], -1)
    return (2.0 * (y_pred[:, 0] - y) / y.shape[0])[:, None]
