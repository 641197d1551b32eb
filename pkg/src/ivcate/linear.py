"""Weighted linear models: plain least squares, ridge, and lasso.

Objectives, for weights w >= 0 and residuals r_i = target_i - theta @ design_i:

* ``NoPenalty``:  sum_i w_i r_i^2
* ``L2(alpha)``:  sum_i w_i r_i^2 + alpha * ||theta_pen||_2^2
* ``L1(alpha)``:  (1 / 2n) sum_i w_i r_i^2 + alpha * ||theta_pen||_1

The L1 loss uses the conventional lasso scaling so its alpha is interchangeable
with the usual library parameterization; the L2/none objectives are the raw
weighted sums (the usual ridge convention). ``unpenalized`` columns (for
example an intercept feature) are excluded from the penalty. The lasso is
solved by cyclic coordinate descent, converged when the largest coefficient
change in a sweep drops below 1e-7, capped at 10^4 sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import RankDeficiencyError

__all__ = ["NoPenalty", "L2", "L1", "LinearModel", "fit_linear"]

RANK_RTOL = 1e-10       # smallest/largest singular value below this = deficient
CD_TOL = 1e-7
CD_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class NoPenalty:
    pass


@dataclass(frozen=True)
class L2:
    alpha: float
    unpenalized: tuple = field(default=())

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


@dataclass(frozen=True)
class L1:
    alpha: float
    unpenalized: tuple = field(default=())

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


Penalty = Union[NoPenalty, L2, L1]


@dataclass(frozen=True)
class LinearModel:
    """Fitted coefficients for a linear predictor theta @ design_row."""

    coef: np.ndarray
    penalty: Penalty

    def predict(self, design: np.ndarray) -> np.ndarray:
        design = np.asarray(design, dtype=np.float64)
        return design @ self.coef

    def __call__(self, design: np.ndarray) -> np.ndarray:
        return self.predict(design)


def _validate(design, target, weights):
    design = np.asarray(design, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if design.ndim != 2:
        raise ValueError("design must be a 2-D matrix")
    n, _ = design.shape
    if target.shape != (n,):
        raise ValueError(f"target must have shape ({n},), got {target.shape}")
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,):
            raise ValueError(f"weights must have shape ({n},), got {weights.shape}")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
    if not (np.isfinite(design).all() and np.isfinite(target).all() and np.isfinite(weights).all()):
        raise ValueError("inputs contain non-finite entries")
    return design, target, weights


def _penalty_diag(penalty, p: int) -> np.ndarray:
    diag = np.ones(p)
    for j in penalty.unpenalized:
        if not 0 <= j < p:
            raise ValueError(f"unpenalized column {j} out of range for {p} columns")
        diag[j] = 0.0
    return diag


def _solve_wls(design, target, weights) -> np.ndarray:
    sw = np.sqrt(weights)
    xw = design * sw[:, None]
    yw = target * sw
    p = design.shape[1]
    if np.count_nonzero(weights > 0) < p:
        raise RankDeficiencyError(
            f"only {np.count_nonzero(weights > 0)} positive-weight rows for "
            f"{p} columns; consider a small L2 penalty"
        )
    sv = np.linalg.svd(xw, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] / sv[0] < RANK_RTOL:
        raise RankDeficiencyError(
            "weighted design matrix is numerically rank deficient; "
            "consider a small L2 penalty"
        )
    coef, *_ = np.linalg.lstsq(xw, yw, rcond=None)
    return coef


def _solve_ridge(design, target, weights, penalty: L2) -> np.ndarray:
    p = design.shape[1]
    wx = design * weights[:, None]
    gram = design.T @ wx + penalty.alpha * np.diag(_penalty_diag(penalty, p))
    rhs = wx.T @ target
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"ridge system is singular: {exc}") from exc


def _solve_lasso(design, target, weights, penalty: L1) -> np.ndarray:
    n, p = design.shape
    pen = _penalty_diag(penalty, p) * penalty.alpha
    wx = design * weights[:, None]
    col_scale = np.einsum("ij,ij->j", wx, design) / n  # (1/n) sum w x_j^2
    coef = np.zeros(p)
    resid = target.copy()
    for _ in range(CD_MAX_SWEEPS):
        max_delta = 0.0
        for j in range(p):
            if col_scale[j] == 0.0:
                continue
            old = coef[j]
            rho = np.dot(wx[:, j], resid) / n + col_scale[j] * old
            if pen[j] > 0.0:
                new = np.sign(rho) * max(abs(rho) - pen[j], 0.0) / col_scale[j]
            else:
                new = rho / col_scale[j]
            if new != old:
                resid -= design[:, j] * (new - old)
                coef[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < CD_TOL:
            break
    return coef


def fit_linear(design: np.ndarray, target: np.ndarray,
               weights: Optional[np.ndarray] = None,
               penalty: Penalty = NoPenalty()) -> LinearModel:
    """Fit a (weighted, optionally penalized) linear model.

    With ``NoPenalty`` the solution satisfies the weighted normal equations;
    a numerically singular weighted design raises
    :class:`~ivcate.errors.RankDeficiencyError` so the caller can retry with
    a small L2 penalty.
    """
    design, target, weights = _validate(design, target, weights)
    if isinstance(penalty, NoPenalty):
        coef = _solve_wls(design, target, weights)
    elif isinstance(penalty, L2):
        coef = _solve_ridge(design, target, weights, penalty)
    elif isinstance(penalty, L1):
        coef = _solve_lasso(design, target, weights, penalty)
    else:
        raise ValueError(f"unknown penalty {penalty!r}")
    if not np.isfinite(coef).all():
        raise RankDeficiencyError("solver produced non-finite coefficients")
    return LinearModel(coef=coef, penalty=penalty)
