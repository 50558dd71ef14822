"""Least squares with column-pivoted QR, group orthonormalization, residualization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import PreSample

RANK_TOL = 1e-10


def center(a: np.ndarray, blocks: int = 1) -> np.ndarray:
    """Subtract the mean within each of ``blocks`` equal row blocks."""
    a = np.asarray(a, dtype=float)
    if blocks == 1:
        return a - a.mean(axis=0)
    shaped = a.reshape((blocks, a.shape[0] // blocks) + a.shape[1:])
    return (shaped - shaped.mean(axis=1, keepdims=True)).reshape(a.shape)


@dataclass(frozen=True, eq=False)
class OlsFit:
    indices: tuple
    coefficients: np.ndarray
    residuals: np.ndarray
    rss: float
    residual_variance: float
    intercept: np.ndarray
    rank_deficient: tuple = ()

    @property
    def rank(self) -> int:
        return len(self.indices) - len(self.rank_deficient)


def _solve(x: np.ndarray, y: np.ndarray):
    """Pivoted-QR least squares; returns (coef, positions of dropped columns)."""
    k = x.shape[1]
    coef = np.zeros(k)
    if k == 0:
        return coef, ()
    q, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return coef, tuple(range(k))
    rank = int(np.sum(diag >= RANK_TOL * diag[0]))
    if rank:
        sol = linalg.solve_triangular(r[:rank, :rank], q[:, :rank].T @ y)
        coef[piv[:rank]] = sol
    return coef, tuple(sorted(int(j) for j in piv[rank:]))


def ols(columns, outcome, intercept: bool = True, blocks: int = 1, indices=None) -> OlsFit:
    """Least squares of ``outcome`` on ``columns``.

    With an intercept both sides are centered (within blocks for stacked
    samples). Columns found numerically dependent on earlier pivots get a zero
    coefficient and are listed in ``rank_deficient``.
    """
    x = np.asarray(columns, dtype=float)
    y = np.asarray(outcome, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if y.shape != (n,):
        raise ValueError("outcome length does not match the column count")
    if k > n:
        raise ValueError(f"{k} columns exceed {n} observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input to ols")
    if intercept:
        xc, yc = center(x, blocks), center(y, blocks)
    else:
        xc, yc = x, y
    coef, dropped = _solve(xc, yc)
    resid = yc - xc @ coef
    if intercept:
        ym = y.reshape(blocks, -1).mean(axis=1)
        xm = x.reshape(blocks, n // blocks, k).mean(axis=1)
        icpt = ym - xm @ coef
    else:
        icpt = np.zeros(blocks)
    rss = float(resid @ resid)
    idx = tuple(range(k)) if indices is None else tuple(int(i) for i in indices)
    return OlsFit(idx, coef, resid, rss, rss / n, icpt, tuple(idx[j] for j in dropped))


def orthonormalize_group(columns):
    """Basis Q of span(columns) with Q'Q/N = I, and T with columns @ T = Q."""
    x = np.asarray(columns, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, g = x.shape
    if g == 0 or not np.any(x):
        raise ValueError("cannot orthonormalize an all-zero group")
    if n < g:
        raise ValueError("group has more columns than rows")
    q, r, piv = linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag >= RANK_TOL * diag[0]))
    scale = np.sqrt(n)
    rinv = linalg.solve_triangular(r[:rank, :rank], np.eye(rank))
    transform = np.zeros((g, rank))
    transform[piv[:rank]] = rinv * scale
    ortho = q[:, :rank] * scale
    return ortho, transform


def residual_variance(sample: PreSample, indices=()) -> float:
    """Divisor-N residual variance of the outcome after OLS (with intercept)."""
    idx = sorted(int(i) for i in indices)
    return ols(sample.covariates[:, idx], sample.y, True, sample.blocks, idx).residual_variance


def residualize_outcome(sample_pre: PreSample, indices, experimental_outcome,
                        experimental_covariates) -> np.ndarray:
    """Y - gamma'Z with gamma fitted on the pre-experimental sample only.

    ``experimental_covariates`` holds either the selected columns, in index
    order, or all M candidate columns.
    """
    idx = sorted(int(i) for i in indices)
    y = np.asarray(experimental_outcome, dtype=float)
    z = np.asarray(experimental_covariates, dtype=float)
    if z.ndim == 1:
        z = z[:, None] if len(idx) == 1 else z.reshape(len(y), -1)
    if z.shape[0] != y.shape[0]:
        raise ValueError("experimental outcome and covariates differ in length")
    if z.shape[1] == len(idx):
        pass
    elif z.shape[1] == sample_pre.M:
        z = z[:, idx]
    else:
        raise ValueError(f"experimental covariates have {z.shape[1]} columns; "
                         f"expected {len(idx)} or {sample_pre.M}")
    gamma = ols(sample_pre.covariates[:, idx], sample_pre.y, True, sample_pre.blocks, idx).coefficients
    return y - z @ gamma
