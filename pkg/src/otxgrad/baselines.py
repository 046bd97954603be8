"""Classical scaling baselines: Sinkhorn (with overrelaxation) and Greenkhorn
(with batched greedy updates), both in log domain so large regularization
strengths do not underflow exp(-eta*W).

Matvec accounting follows the benchmark convention: one Sinkhorn iteration
(row update + column update) costs 1 matvec-equivalent; one Greenkhorn line
update costs 1/n.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .core import NumericFailure, OTInstance, TransportPlan, marginal_violation
from .extragrad import default_cadence
from .rounding import round_to_feasible
from .trace import TraceRecord


class ScalingState:
    """Diagonal-scaling representation: implied plan exp(logu_i + K_log_ij + logv_j)
    with K_log = -eta_reg * W."""

    __slots__ = ("eta_reg", "logu", "logv", "K_log")

    def __init__(self, instance: OTInstance, eta_reg: float):
        if not (eta_reg > 0 and math.isfinite(eta_reg)):
            raise ValueError(f"eta_reg must be positive and finite, got {eta_reg}")
        n = instance.n
        self.eta_reg = float(eta_reg)
        self.logu = np.zeros(n)
        self.logv = np.zeros(n)
        self.K_log = -eta_reg * instance.W

    def implied_plan(self) -> np.ndarray:
        return np.exp(self.logu[:, None] + self.K_log + self.logv[None, :])


def _lse_rows(M) -> np.ndarray:
    # logsumexp over axis 1, max-shifted
    m = M.max(axis=1)
    return m + np.log(np.exp(M - m[:, None]).sum(axis=1))


def _safe_log(x) -> np.ndarray:
    out = np.full_like(x, -np.inf)
    np.log(x, out=out, where=x > 0)
    return out


def _row_update(state: ScalingState, logr, omega: float) -> None:
    target = logr - _lse_rows(state.K_log + state.logv[None, :])
    with np.errstate(invalid="ignore"):  # 0 * -inf on zero-marginal rows
        state.logu = (1.0 - omega) * state.logu + omega * target
    state.logu[np.isneginf(logr)] = -np.inf  # zero-marginal rows stay empty


def _col_update(state: ScalingState, logc, omega: float) -> None:
    target = logc - _lse_rows(state.K_log.T + state.logu[None, :])
    with np.errstate(invalid="ignore"):
        state.logv = (1.0 - omega) * state.logv + omega * target
    state.logv[np.isneginf(logc)] = -np.inf


def theoretical_eta(n: int, epsilon: float) -> float:
    """The analysis-driven regularization strength 4*log(n)/epsilon."""
    if n < 2 or epsilon <= 0:
        raise ValueError("need n >= 2 and epsilon > 0")
    return 4.0 * math.log(n) / epsilon


def _measure(P_hat, instance, it, matvecs, wall_ms, reference_value):
    if not np.all(np.isfinite(P_hat)):
        raise NumericFailure("non-finite implied plan (cost scale overflow)")
    plan, _ = round_to_feasible(P_hat, instance.r, instance.c)
    cost = float(np.sum(instance.W * plan.P))
    if not math.isfinite(cost):
        raise NumericFailure("non-finite objective")
    rv, cv = marginal_violation(P_hat, instance.r, instance.c)
    gap = None if reference_value is None else cost - reference_value
    return TraceRecord(iter=it, matvec_equiv=matvecs, wall_ms=wall_ms,
                       rounded_cost=cost, gap=gap, row_violation_raw=rv,
                       col_violation_raw=cv)


def sinkhorn(instance: OTInstance, eta_reg, budget, omega=1.0, trace_sink=None,
             *, reference_value=None, measure_every=None):
    """Alternating row/column rescaling toward the target marginals.

    omega in [1, 2) is the overrelaxation weight (1 recovers the plain
    method). budget counts matvec-equivalents, i.e. full row+column sweeps.
    Returns the implied plan (not rounded) and the measurement trace.
    """
    if not (1.0 <= omega < 2.0):
        raise ValueError(f"omega must lie in [1, 2), got {omega}")
    t_max = int(budget)
    if t_max < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if measure_every is None:
        measure_every = default_cadence(t_max)

    state = ScalingState(instance, eta_reg)
    logr = _safe_log(instance.r)
    logc = _safe_log(instance.c)
    wall = 0.0
    trace = []

    def record(it):
        rec = _measure(state.implied_plan(), instance, it, float(it),
                       wall * 1e3, reference_value)
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)

    record(0)
    for it in range(1, t_max + 1):
        t0 = time.perf_counter()
        _row_update(state, logr, omega)
        _col_update(state, logc, omega)
        wall += time.perf_counter() - t0
        if not (np.all(np.isfinite(state.logu[instance.r > 0])) and
                np.all(np.isfinite(state.logv[instance.c > 0]))):
            raise NumericFailure("non-finite scaling vector (cost scale overflow)")
        if it % measure_every == 0 or it == t_max:
            record(it)

    raw = TransportPlan.from_matrix(state.implied_plan(), instance.r, instance.c)
    return raw, trace


def greedy_score(target, current) -> np.ndarray:
    """rho(a, b) = b - a + a*log(a/b): the marginal-violation score that
    Greenkhorn ranks lines by. Zero iff the marginal is met exactly."""
    a = np.asarray(target, dtype=np.float64)
    b = np.asarray(current, dtype=np.float64)
    out = b - a
    pos = a > 0
    with np.errstate(divide="ignore"):
        ratio = np.divide(a, b, out=np.full_like(a, np.inf), where=b > 0)
        out[pos] += a[pos] * np.log(ratio[pos])
    return out


def greenkhorn(instance: OTInstance, eta_reg, budget, batch_size=1,
               trace_sink=None, *, reference_value=None, measure_every=None):
    """Greedy scaling: repeatedly rescale the worst rows or columns.

    Each step scores every row and column by greedy_score, picks the side
    (rows or columns) holding the largest score, and rescales that side's top
    batch_size positive-score lines simultaneously (ties break by smallest
    index). A batch of k lines charges k/n matvec-equivalents. Stops when the
    budget is spent or every marginal is exact.
    """
    n = instance.n
    if not (1 <= batch_size <= n):
        raise ValueError(f"batch_size must lie in [1, n], got {batch_size}")
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    if measure_every is None:
        total_steps = math.ceil(budget * n / batch_size)
        measure_every = default_cadence(total_steps)

    state = ScalingState(instance, eta_reg)
    logr = _safe_log(instance.r)
    logc = _safe_log(instance.c)
    P = state.implied_plan()
    row_sums = P.sum(axis=1)
    col_sums = P.sum(axis=0)
    matvecs = 0.0
    wall = 0.0
    step = 0
    trace = []

    def record():
        rec = _measure(P, instance, step, matvecs, wall * 1e3, reference_value)
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)

    record()
    while matvecs < budget:
        t0 = time.perf_counter()
        rho_r = greedy_score(instance.r, row_sums)
        rho_c = greedy_score(instance.c, col_sums)
        best_r = float(rho_r.max())
        best_c = float(rho_c.max())
        if max(best_r, best_c) <= 0.0:
            wall += time.perf_counter() - t0
            break  # every marginal exact: fixed point
        if best_r >= best_c:
            order = np.argsort(-rho_r, kind="stable")[:batch_size]
            lines = order[rho_r[order] > 0]
            state.logu[lines] = (logr[lines] -
                                 _lse_rows(state.K_log[lines] + state.logv[None, :]))
            new_rows = np.exp(state.logu[lines, None] + state.K_log[lines] +
                              state.logv[None, :])
            col_sums += (new_rows - P[lines]).sum(axis=0)
            P[lines] = new_rows
            row_sums[lines] = new_rows.sum(axis=1)
        else:
            order = np.argsort(-rho_c, kind="stable")[:batch_size]
            lines = order[rho_c[order] > 0]
            state.logv[lines] = (logc[lines] -
                                 _lse_rows(state.K_log[:, lines].T + state.logu[None, :]))
            new_cols = np.exp(state.logu[:, None] + state.K_log[:, lines] +
                              state.logv[lines][None, :])
            row_sums += (new_cols - P[:, lines]).sum(axis=1)
            P[:, lines] = new_cols
            col_sums[lines] = new_cols.sum(axis=0)
        matvecs += lines.size / n
        step += 1
        if step % (4 * n) == 0:  # shed incremental-sum drift
            row_sums = P.sum(axis=1)
            col_sums = P.sum(axis=0)
        wall += time.perf_counter() - t0
        if not np.all(np.isfinite(P)):
            raise NumericFailure("non-finite implied plan (cost scale overflow)")
        if step % measure_every == 0 or matvecs >= budget:
            record()

    if not trace or trace[-1].iter != step:
        record()
    raw = TransportPlan.from_matrix(P, instance.r, instance.c)
    return raw, trace
