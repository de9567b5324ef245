"""Windowed spectral residual extraction and its diagnostics.

A look-back window of returns is row-centered and SVD-decomposed; dropping
the top C left singular directions yields a projection that strips the
dominant co-movement from a raw return vector. The remaining operations
quantify how diagonal / stable / factor-orthogonal that projection is.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import ReturnPanel
from .errors import ConfigError, DomainError, NumericalError, ShapeError, ValidationError, WindowError

SINGULAR_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class WindowConfig:
    """Look-back length H (days) and number of eliminated components C."""

    H: int = 256
    C: int = 10

    def __post_init__(self):
        if self.H < 1:
            raise ConfigError(f"window length H must be >= 1, got {self.H}")
        if self.C < 0:
            raise ConfigError(f"eliminated component count C must be >= 0, got {self.C}")


@dataclass
class ResidualProjection:
    """Per-window SVD artifacts.

    V holds the full left singular basis (descending singular values,
    zero-padded when the window is shorter than the asset count) and
    A = I - V[:, :C] V[:, :C]^T is the residual projector applied to raw
    return vectors.
    """

    V: np.ndarray                # (S, S)
    singular_values: np.ndarray  # (S,)
    A: np.ndarray                # (S, S)
    row_means: np.ndarray        # (S,)
    C: int
    window_end: int = -1         # date index t; window covered [t-H, t)

    @property
    def S(self) -> int:
        return self.A.shape[0]


def window(returns: ReturnPanel, t: int, H: int) -> np.ndarray:
    """Asset-major window [r_{t-H}, ..., r_{t-1}] as an S x H matrix."""
    if t - H < 0:
        raise WindowError(f"window of length {H} ending at index {t} needs {H - t} more rows")
    if t > returns.n_dates:
        raise WindowError(f"window end {t} beyond panel length {returns.n_dates}")
    return returns.values[t - H:t].T.copy()


def center_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract each row's empirical mean; returns (centered, row_means)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise WindowError(f"degenerate window: need an S x H matrix with H >= 2, got {X.shape}")
    means = X.mean(axis=1)
    return X - means[:, None], means


def projector_from_basis(V: np.ndarray, C: int) -> np.ndarray:
    """A = I - V_C V_C^T, symmetrized to kill accumulation noise."""
    S = V.shape[0]
    if C == 0:
        return np.eye(S)
    Vc = V[:, :C]
    A = np.eye(S) - Vc @ Vc.T
    return 0.5 * (A + A.T)


def _left_singular_basis(Xc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full S x S left singular basis without materializing the H x H right factor.

    When the window is shorter than the asset count the SVD returns only H
    columns; the basis is completed by QR against the identity (column signs
    are irrelevant to the projectors built from it).
    """
    try:
        V, sv, _ = np.linalg.svd(Xc, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"SVD failed on {Xc.shape} window: {e}") from e
    S = Xc.shape[0]
    if V.shape[1] < S:
        Q, _ = np.linalg.qr(np.concatenate([V, np.eye(S)], axis=1))
        V = Q[:, :S]
    return V, sv


def decompose(Xc: np.ndarray, C: int, *, row_means: np.ndarray | None = None,
              window_end: int = -1) -> ResidualProjection:
    """SVD the centered window and build the residual projector.

    Ties at the cutoff (sigma_C ~ sigma_{C+1}) make the kept subspace
    ambiguous; the SVD's own ordering is kept and a warning is emitted.
    """
    Xc = np.asarray(Xc, dtype=float)
    S = Xc.shape[0]
    if not 0 <= C < S:
        raise ConfigError(f"need 0 <= C < S, got C={C} with S={S}")
    V, sv = _left_singular_basis(Xc)
    singular = np.zeros(S)
    singular[: sv.shape[0]] = sv
    if 0 < C < S and singular[0] > 0 and singular[C - 1] - singular[C] < SINGULAR_TIE_RTOL * singular[0]:
        warnings.warn(
            f"singular values {C} and {C + 1} are tied (gap "
            f"{singular[C - 1] - singular[C]:.3e}); kept subspace is ambiguous",
            RuntimeWarning,
            stacklevel=2,
        )
    if row_means is None:
        row_means = np.zeros(S)
    return ResidualProjection(
        V=V,
        singular_values=singular,
        A=projector_from_basis(V, C),
        row_means=np.asarray(row_means, dtype=float),
        C=C,
        window_end=window_end,
    )


def project_window(returns: ReturnPanel, t: int, cfg: WindowConfig) -> ResidualProjection:
    """window -> center_rows -> decompose, with metadata filled in."""
    Xc, means = center_rows(window(returns, t, cfg.H))
    return decompose(Xc, cfg.C, row_means=means, window_end=t)


def spectral_residual(proj: ResidualProjection, r: np.ndarray) -> np.ndarray:
    """Apply the residual projector to a raw (uncentered) return vector."""
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != proj.S:
        raise ShapeError(f"return vector has {r.shape[-1]} assets, projection expects {proj.S}")
    return r @ proj.A.T


def extract_residual_panel(
    returns: ReturnPanel, cfg: WindowConfig, *, keep_projections: bool = True
) -> tuple[ReturnPanel, list[ResidualProjection]]:
    """Per-date residual panel: row for date t uses the window ending at t.

    Output rows correspond to returns.dates[H:]; each is A_t r_t where A_t
    was fit on [t-H, t), so every residual uses only past information.
    """
    T = returns.n_dates
    if T <= cfg.H:
        raise WindowError(f"panel has {T} rows; need more than H={cfg.H}")
    rows, projections = [], []
    for t in range(cfg.H, T):
        proj = project_window(returns, t, cfg)
        rows.append(proj.A @ returns.values[t])
        if keep_projections:
            projections.append(proj)
    panel = ReturnPanel(returns.dates[cfg.H:], returns.symbols, np.array(rows))
    return panel, projections


@dataclass
class OffdiagReport:
    """How close the residual projector is to diagonal (see bound())."""

    max_offdiag: float
    mean_offdiag: float
    C: int
    S: int
    delta: float | None = None
    labels: tuple[str, ...] = ()   # per removed eigenvector: spreading / spiked / neither

    def bound(self, delta: float) -> float:
        """Theoretical off-diagonal cap C * delta / S."""
        return self.C * delta / self.S


def classify_eigenvector(v: np.ndarray, delta: float, tol: float = 1e-12) -> str:
    """Label a unit vector as delta-spreading, delta-spiked, or neither.

    Spreading: every |v_i| <= sqrt(delta/S). Spiked: all but one coordinate
    have |v_i| <= delta/S.
    """
    S = v.shape[0]
    a = np.abs(v)
    if np.all(a <= np.sqrt(delta / S) + tol):
        return "spreading"
    rest = np.delete(a, int(np.argmax(a)))
    if np.all(rest <= delta / S + tol):
        return "spiked"
    return "neither"


def offdiag_report(proj: ResidualProjection, delta: float | None = None) -> OffdiagReport:
    """Max/mean |off-diagonal| of A, plus per-eigenvector spread/spike labels."""
    S = proj.S
    off = np.abs(proj.A - np.diag(np.diag(proj.A)))
    max_off = float(off.max()) if S > 1 else 0.0
    mean_off = float(off.sum() / (S * (S - 1))) if S > 1 else 0.0
    labels: tuple[str, ...] = ()
    if delta is not None:
        labels = tuple(classify_eigenvector(proj.V[:, k], delta) for k in range(proj.C))
    return OffdiagReport(max_off, mean_off, proj.C, S, delta, labels)


def _check_projection(P: np.ndarray, name: str, tol: float = 1e-6) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValidationError(f"{name} must be square, got {P.shape}")
    if np.max(np.abs(P - P.T)) > tol:
        raise ValidationError(f"{name} is not symmetric to {tol}")
    if np.max(np.abs(P @ P - P)) > tol:
        raise ValidationError(f"{name} is not idempotent to {tol}")
    return P


def sin_theta(P_mar: np.ndarray, A_res: np.ndarray) -> float:
    """Frobenius norm of P_mar A_res: principal-angle overlap of two projections."""
    P = _check_projection(P_mar, "P_mar")
    A = _check_projection(A_res, "A_res")
    if P.shape != A.shape:
        raise ShapeError(f"projection shapes differ: {P.shape} vs {A.shape}")
    return float(np.linalg.norm(P @ A, "fro"))


def davis_kahan_bound(residual_vols: np.ndarray, lambda_min: float, S: int | None = None) -> float:
    """Perturbation cap 2 sqrt(S) (max sigma^2 - min sigma^2) / lambda_min."""
    vols = np.asarray(residual_vols, dtype=float)
    if lambda_min <= 0:
        raise DomainError(f"lambda_min must be positive, got {lambda_min}")
    if S is None:
        S = vols.shape[0]
    var = vols ** 2
    return float(2.0 * np.sqrt(S) * (var.max() - var.min()) / lambda_min)


@dataclass
class StabilityCurve:
    """Volatility ratio of projected vs raw returns around each window end.

    deltas run from -H (oldest fitted day) to H-1 (last extrapolated day);
    ratios maps each C to the mean cross-sectional RMS ratio at each delta.
    """

    deltas: np.ndarray
    ratios: dict[int, np.ndarray]
    H: int
    stride: int
    n_windows: int


def local_stability(
    returns: ReturnPanel, H: int, Cs: list[int], stride: int | None = None
) -> StabilityCurve:
    """Fit A_t on [t-H, t), apply it through [t-H, t+H), and compare volatilities.

    Volatility at each offset is the cross-sectional root-mean-square; the
    reported ratio is projected RMS / raw RMS averaged over window positions.
    """
    T, S = returns.values.shape
    if T < 2 * H + 1:
        raise WindowError(f"need at least 2H+1={2 * H + 1} rows, have {T}")
    for C in Cs:
        if not 0 <= C < S:
            raise ConfigError(f"need 0 <= C < S={S}, got C={C}")
    if stride is None:
        stride = max(1, H // 4)
    deltas = np.arange(-H, H)
    sums = {C: np.zeros(2 * H) for C in Cs}
    positions = range(H, T - H + 1, stride)
    n = 0
    for t in positions:
        Xc, _ = center_rows(window(returns, t, H))
        V, _ = _left_singular_basis(Xc)
        segment = returns.values[t - H:t + H]           # (2H, S)
        raw_rms = np.sqrt(np.mean(segment ** 2, axis=1))
        raw_rms = np.where(raw_rms > 0, raw_rms, np.nan)
        for C in Cs:
            A = projector_from_basis(V, C)
            res = segment @ A                            # A symmetric
            res_rms = np.sqrt(np.mean(res ** 2, axis=1))
            sums[C] += res_rms / raw_rms
        n += 1
    ratios = {C: sums[C] / n for C in Cs}
    return StabilityCurve(deltas=deltas, ratios=ratios, H=H, stride=stride, n_windows=n)
