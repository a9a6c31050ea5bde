"""Least squares and fit-quality metrics.

``least_squares`` uses a column-pivoted Householder QR factorization rather
than the normal equations; CPU-usage regressors in the training grids are
strongly correlated and forming X^T X squares their condition number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ModelError, RankDeficientError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_labels: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ModelError("design matrix must be 2-D")
        n, p = values.shape
        if n < 1 or p < 1:
            raise ModelError("design matrix needs at least one row and one column")
        if not np.all(np.isfinite(values)):
            raise ModelError("design matrix has non-finite entries")
        labels = tuple(self.column_labels) if self.column_labels else tuple(
            f"x{j}" for j in range(p))
        if len(labels) != p:
            raise ModelError(f"{len(labels)} labels for {p} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_labels", labels)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class LsqSolution:
    coefficients: np.ndarray
    residual_sum_squares: float
    rank: int


@dataclass(frozen=True)
class FitReport:
    rmse_mw: float
    pearson_rho: float
    mean_accuracy: float
    n_samples: int
    per_sample_residuals_mw: tuple = field(repr=False)

    def as_dict(self):
        return {
            "n_samples": self.n_samples,
            "pearson_rho": self.pearson_rho,
            "rmse_mw": self.rmse_mw,
            "mean_accuracy": self.mean_accuracy,
        }


def householder_qr(a):
    """Column-pivoted Householder QR.

    Returns ``(qr, tau, perm, diag)``: Householder vectors packed below the
    diagonal of ``qr`` (LAPACK-style, implicit unit leading entry), their
    scale factors ``tau``, the column permutation and the diagonal of R.
    """
    qr = np.array(a, dtype=float)
    m, n = qr.shape
    k = min(m, n)
    perm = np.arange(n)
    tau = np.zeros(k)
    norms = np.sum(qr * qr, axis=0)
    for j in range(k):
        # pivot: bring the column with the largest remaining norm forward
        p = j + int(np.argmax(norms[j:]))
        if p != j:
            qr[:, [j, p]] = qr[:, [p, j]]
            perm[[j, p]] = perm[[p, j]]
            norms[[j, p]] = norms[[p, j]]

        x = qr[j:, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            tau[j] = 0.0
            continue
        beta = -alpha if x[0] >= 0 else alpha
        v = x.copy()
        v[0] -= beta
        v0 = v[0]
        v /= v0
        tau[j] = -v0 / beta
        # apply H = I - tau v v^T to the trailing block
        trailing = qr[j:, j + 1:]
        trailing -= tau[j] * np.outer(v, v @ trailing)
        qr[j, j] = beta
        qr[j + 1:, j] = v[1:]
        # downdate remaining column norms from scratch; cheap at these sizes
        norms[j + 1:] = np.sum(qr[j + 1:, j + 1:] ** 2, axis=0)
    return qr, tau, perm, np.abs(np.diag(qr[:k, :k]))


def _apply_qt(qr, tau, y):
    y = np.array(y, dtype=float)
    m = qr.shape[0]
    for j in range(len(tau)):
        if tau[j] == 0.0:
            continue
        v = np.empty(m - j)
        v[0] = 1.0
        v[1:] = qr[j + 1:, j]
        y[j:] -= tau[j] * v * (v @ y[j:])
    return y


def _back_substitute(r, b):
    n = r.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def least_squares(X: DesignMatrix, y: Sequence[float]) -> LsqSolution:
    """Minimize ||y - X b||^2.

    Raises RankDeficientError when a pivot of R falls below
    ``1e-10 * max column norm``; the exception lists the columns that were
    pivoted past the numerical rank.
    """
    if not isinstance(X, DesignMatrix):
        X = DesignMatrix(X, ())
    y = np.asarray(y, dtype=float)
    n, p = X.values.shape
    if y.shape != (n,):
        raise ModelError(f"y has {y.size} entries, design has {n} rows")
    if not np.all(np.isfinite(y)):
        raise ModelError("y has non-finite entries")
    if n < p:
        raise ModelError(f"underdetermined: {n} rows for {p} unknowns")

    scale = np.abs(X.values).max()
    col_norms = scale * np.linalg.norm(X.values / scale, axis=0) if scale > 0 \
        else np.zeros(p)
    tol = RANK_RTOL * col_norms.max()
    qr, tau, perm, diag = householder_qr(X.values)
    rank = int(np.sum(diag > tol)) if tol > 0 else 0
    if rank < p:
        labels = X.column_labels
        bad = [labels[i] for i in perm[rank:]]
        details = []
        r11 = np.triu(qr[:rank, :rank])
        for j in range(rank, p):
            w = _back_substitute(r11, qr[:rank, j]) if rank else np.zeros(0)
            partners = [labels[perm[i]] for i in np.flatnonzero(np.abs(w) > 1e-8)]
            if partners:
                details.append(f"{labels[perm[j]]} (combination of {', '.join(partners)})")
            else:
                details.append(f"{labels[perm[j]]} (all zero)")
        raise RankDeficientError(
            f"rank-deficient design (rank {rank} < {p}); "
            f"dependent columns: {'; '.join(details)}", columns=bad)

    qty = _apply_qt(qr, tau, y)
    z = _back_substitute(np.triu(qr[:p, :p]), qty[:p])
    beta = np.empty(p)
    beta[perm] = z
    rss = float(qty[p:] @ qty[p:])
    return LsqSolution(coefficients=beta, residual_sum_squares=rss, rank=rank)


def _pair(predicted, measured, min_n=1):
    a = np.asarray(predicted, dtype=float).ravel()
    b = np.asarray(measured, dtype=float).ravel()
    if a.shape != b.shape:
        raise ModelError(f"length mismatch: {a.size} predicted vs {b.size} measured")
    if a.size < min_n:
        raise ModelError(f"need at least {min_n} samples")
    return a, b


def rmse(predicted, measured) -> float:
    a, b = _pair(predicted, measured)
    d = np.abs(a - b)
    scale = d.max()
    if scale == 0 or not np.isfinite(scale):
        return float(scale)
    # scaled so tiny differences do not underflow when squared
    return float(scale * np.sqrt(np.mean((d / scale) ** 2)))


def pearson(predicted, measured) -> float:
    a, b = _pair(predicted, measured, min_n=2)
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(da @ da)
    sb = np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ModelError("pearson correlation undefined for a zero-variance vector")
    rho = float((da @ db) / (sa * sb))
    return max(-1.0, min(1.0, rho))


def accuracy(predicted, measured) -> float:
    """Mean of 1 - |Pe - Pm| / Pm over samples. Not clamped at 0."""
    a, b = _pair(predicted, measured)
    if np.any(b <= 0):
        raise ModelError("accuracy needs strictly positive measured values")
    return float(np.mean(1.0 - np.abs(a - b) / b))


def fit_through_origin(x, y) -> float:
    """Least-squares slope with the intercept pinned at zero."""
    a, b = _pair(x, y)
    sxx = float(a @ a)
    if sxx == 0:
        raise ModelError("cannot fit a slope through the origin: all x are zero")
    return float(a @ b) / sxx


def fit_report(predicted, measured) -> FitReport:
    a, b = _pair(predicted, measured)
    resid = a - b
    return FitReport(
        rmse_mw=rmse(a, b),
        pearson_rho=pearson(a, b),
        mean_accuracy=accuracy(a, b),
        n_samples=int(a.size),
        per_sample_residuals_mw=tuple(float(r) for r in resid),
    )
