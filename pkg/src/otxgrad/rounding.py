"""Feasibility rounding: scale rows, then columns, then patch the leftover
mass with a rank-one correction. The l1 movement is at most twice the input's
total marginal violation, and the output marginals are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TransportPlan, _as_float64


@dataclass(frozen=True)
class RoundingReport:
    l1_moved: float   # ||P_hat - P_tilde||_1
    bound: float      # 2*(||P_hat 1 - r||_1 + ||P_hat' 1 - c||_1)


def round_to_feasible(P_hat, r, c):
    """Project a nonnegative matrix onto the transportation polytope.

    Rows are scaled down to at most r, columns to at most c, and the missing
    mass is refilled by the outer product of the residual vectors. Returns
    (TransportPlan, RoundingReport); the plan's marginals match r and c to
    machine accuracy and ||P_hat - P_tilde||_1 <= report.bound.
    """
    P_hat = _as_float64(P_hat, "P_hat")
    if P_hat.ndim != 2 or P_hat.shape[0] != P_hat.shape[1]:
        raise ValueError(f"P_hat: expected square matrix, got {P_hat.shape}")
    if np.any(P_hat < 0):
        raise ValueError("P_hat: negative entries")
    n = P_hat.shape[0]
    r = _as_float64(r, "r", (n,))
    c = _as_float64(c, "c", (n,))

    row = P_hat.sum(axis=1)
    # row sum 0 leaves the (empty) row alone; mass arrives via the correction
    x = np.ones(n)
    np.divide(r, row, out=x, where=row > 0)
    np.minimum(x, 1.0, out=x)
    F = x[:, None] * P_hat

    col = F.sum(axis=0)
    y = np.ones(n)
    np.divide(c, col, out=y, where=col > 0)
    np.minimum(y, 1.0, out=y)
    F *= y[None, :]

    # nonnegative in exact arithmetic; clamp the ulp-level summation noise
    e_r = np.maximum(r - F.sum(axis=1), 0.0)
    e_c = np.maximum(c - F.sum(axis=0), 0.0)
    mass = float(np.sum(e_r))
    if mass > 0:
        P_tilde = F + np.outer(e_r, e_c) / mass
    else:
        # scalings removed nothing: both residuals vanish together
        P_tilde = F

    l1_moved = float(np.sum(np.abs(P_hat - P_tilde)))
    rv = float(np.sum(np.abs(P_hat.sum(axis=1) - r)))
    cv = float(np.sum(np.abs(P_hat.sum(axis=0) - c)))
    report = RoundingReport(l1_moved=l1_moved, bound=2.0 * (rv + cv))
    return TransportPlan.from_matrix(P_tilde, r, c), report
