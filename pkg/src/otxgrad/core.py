"""Problem/plan data model for discrete optimal transport and the objective
functions of the l1-penalized and bilinear minimax formulations.

Conventions: n is the distribution size, W the n x n nonnegative cost matrix,
r and c the row/column marginals (probability vectors). A "rows" argument is
an (n, n) array whose i-th row is a probability vector p_i; the induced
coupling is P = diag(r) @ rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# validation tolerance for user-supplied simplex vectors / internal assertions
SIMPLEX_TOL = 1e-10
INTERNAL_TOL = 1e-12


class NumericFailure(RuntimeError):
    """A solver state became non-finite (parameter blow-up or overflow)."""


def _as_float64(x, name, shape=None):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if shape is not None and a.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite entries")
    return a


def _check_simplex(v, name, tol):
    if np.any(v < -tol):
        raise ValueError(f"{name}: negative entries")
    s = float(np.sum(v))
    if abs(s - 1.0) > tol:
        raise ValueError(f"{name}: sums to {s}, not 1 (tol {tol})")


def _freeze(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class OTInstance:
    """One transport problem: cost matrix W plus marginals r, c.

    w_inf caches max(W); immutable after construction.
    """

    n: int
    W: np.ndarray
    r: np.ndarray
    c: np.ndarray
    w_inf: float

    @classmethod
    def make(cls, W, r, c) -> "OTInstance":
        W = _as_float64(W, "W")
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W: expected square matrix, got {W.shape}")
        n = W.shape[0]
        if n < 1:
            raise ValueError("n must be >= 1")
        if np.any(W < 0):
            raise ValueError("W: negative entries")
        r = _as_float64(r, "r", (n,))
        c = _as_float64(c, "c", (n,))
        _check_simplex(r, "r", INTERNAL_TOL)
        _check_simplex(c, "c", INTERNAL_TOL)
        return cls(n=n, W=_freeze(W), r=_freeze(r), c=_freeze(c),
                   w_inf=float(np.max(np.abs(W))))

    def normalized(self) -> "OTInstance":
        """Copy with W scaled so max(W) = 1 (no-op for an all-zero W)."""
        if self.w_inf == 0.0 or self.w_inf == 1.0:
            return self
        return OTInstance.make(self.W / self.w_inf, self.r, self.c)


@dataclass(frozen=True)
class TransportPlan:
    """A nonnegative coupling with its marginal violations recorded."""

    P: np.ndarray
    row_violation: float
    col_violation: float

    @classmethod
    def from_matrix(cls, P, r, c) -> "TransportPlan":
        P = _as_float64(P, "P")
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != r.shape[0]:
            raise ValueError(f"P: expected shape ({r.shape[0]}, {r.shape[0]}), got {P.shape}")
        if np.any(P < 0):
            raise ValueError("P: negative entries")
        rv, cv = marginal_violation(P, r, c)
        return cls(P=_freeze(P.copy()), row_violation=rv, col_violation=cv)


@dataclass(frozen=True)
class DualIterate:
    """n two-dimensional probability pairs mu_j = [mu_{j,+}, mu_{j,-}]."""

    mu: np.ndarray

    @classmethod
    def make(cls, mu) -> "DualIterate":
        mu = _as_float64(mu, "mu")
        if mu.ndim != 2 or mu.shape[1] != 2:
            raise ValueError(f"mu: expected shape (n, 2), got {mu.shape}")
        if np.any(mu < 0):
            raise ValueError("mu: negative entries")
        if np.max(np.abs(mu.sum(axis=1) - 1.0)) > INTERNAL_TOL:
            raise ValueError("mu: rows must sum to 1")
        return cls(mu=_freeze(mu.copy()))

    @classmethod
    def uniform(cls, n) -> "DualIterate":
        return cls.make(np.full((n, 2), 0.5))


def marginal_violation(P, r, c):
    """l1 distances of P's row/column sums from the targets: (||P1 - r||_1, ||P'1 - c||_1)."""
    P = np.asarray(P, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if P.shape != (r.shape[0], c.shape[0]):
        raise ValueError(f"P: shape {P.shape} does not match marginals")
    rv = float(np.sum(np.abs(P.sum(axis=1) - r)))
    cv = float(np.sum(np.abs(P.sum(axis=0) - c)))
    return rv, cv


def transport_cost(instance: OTInstance, plan: TransportPlan) -> float:
    """<W, P>, the linear transport cost of a plan."""
    if plan.P.shape != instance.W.shape:
        raise ValueError(f"plan shape {plan.P.shape} does not match instance n={instance.n}")
    return float(np.sum(instance.W * plan.P))


def _check_rows(rows, n):
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape != (n, n):
        raise ValueError(f"rows: expected shape ({n}, {n}), got {rows.shape}")
    if np.any(rows < -SIMPLEX_TOL):
        raise ValueError("rows: negative entries")
    if np.max(np.abs(rows.sum(axis=1) - 1.0)) > SIMPLEX_TOL:
        raise ValueError("rows: each row must lie on the simplex")
    return rows


def penalized_objective(rows, instance: OTInstance) -> float:
    """l1-penalized objective 0.5*sum_i r_i <w_i, p_i> + max(W)*||sum_i r_i p_i - c||_1.

    The penalty weight is the instance's own w_inf (use a normalized instance
    to get the unit-weight form).
    """
    rows = _check_rows(rows, instance.n)
    half_cost = 0.5 * float(instance.r @ (instance.W * rows).sum(axis=1))
    residual = rows.T @ instance.r - instance.c
    return half_cost + instance.w_inf * float(np.sum(np.abs(residual)))


def eval_f(rows, duals: DualIterate, instance: OTInstance) -> float:
    """Bilinear saddle objective (assumes max(W) = 1):

        f = 0.5*sum_i r_i <w_i, p_i> - sum_j (mu_{j,+} - mu_{j,-}) c_j
            + sum_{ij} r_i (mu_{j,+} - mu_{j,-}) p_{ij}
    """
    if abs(instance.w_inf - 1.0) > 1e-9:
        raise ValueError(f"instance not normalized: max(W) = {instance.w_inf}, expected 1")
    rows = _check_rows(rows, instance.n)
    delta = duals.mu[:, 0] - duals.mu[:, 1]
    if delta.shape[0] != instance.n:
        raise ValueError("duals: dimension mismatch")
    half_cost = 0.5 * float(instance.r @ (instance.W * rows).sum(axis=1))
    colsum = rows.T @ instance.r
    return half_cost + float(delta @ (colsum - instance.c))


def entropy_rows(X) -> np.ndarray:
    """Shannon entropy of each row, with the 0*log(0) = 0 convention."""
    X = np.asarray(X, dtype=np.float64)
    L = np.zeros_like(X)
    np.log(X, out=L, where=X > 0)
    return -(X * L).sum(axis=1)


def eval_F(rows, duals: DualIterate, instance: OTInstance, tau_mu, tau_p) -> float:
    """Entropy-regularized saddle objective F = f + sum_j tau_mu_j H(mu_j) - sum_i tau_p_i H(p_i)."""
    tau_mu = _as_float64(tau_mu, "tau_mu", (instance.n,))
    tau_p = _as_float64(tau_p, "tau_p", (instance.n,))
    if np.any(tau_mu <= 0) or np.any(tau_p <= 0):
        raise ValueError("tau: all regularization weights must be positive")
    f = eval_f(rows, duals, instance)
    rows = np.asarray(rows, dtype=np.float64)
    return f + float(tau_mu @ entropy_rows(duals.mu)) - float(tau_p @ entropy_rows(rows))


# --- JSON round trip ({n, W row-major, r, c}) ---

def instance_to_json(instance: OTInstance) -> str:
    doc = {
        "n": instance.n,
        "W": instance.W.ravel().tolist(),
        "r": instance.r.tolist(),
        "c": instance.c.tolist(),
    }
    return json.dumps(doc)


def instance_from_json(text: str) -> OTInstance:
    doc = json.loads(text)
    for key in ("n", "W", "r", "c"):
        if key not in doc:
            raise ValueError(f"instance document missing field {key!r}")
    n = int(doc["n"])
    W = np.asarray(doc["W"], dtype=np.float64)
    if W.size != n * n:
        raise ValueError(f"W: expected {n * n} row-major entries, got {W.size}")
    return OTInstance.make(W.reshape(n, n), doc["r"], doc["c"])


def save_instance(instance: OTInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(instance_to_json(instance))


def load_instance(path) -> OTInstance:
    with open(path) as fh:
        return instance_from_json(fh.read())
