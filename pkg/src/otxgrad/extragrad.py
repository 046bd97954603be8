"""Extragradient solver for the entropy-regularized OT saddle problem.

Each iteration runs three phases over log-domain probability tables:
midpoints (gradient at the current point), main updates (same base point,
gradient at the midpoints), and a clamp of the two-dimensional dual pairs so
their max/min ratio stays within exp(B). All row updates are multiplicative
and renormalized via max-shifted exponential sums, so eta = 0 (no damping, no
entropy term) is legal.

The per-phase updates are small numba kernels; `solve` drives the same kernels
from a fused jit loop in chunks between trace measurements.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import NumericFailure, OTInstance, TransportPlan, marginal_violation
from .rounding import round_to_feasible
from .trace import TraceRecord

# shaved off B before clamping so the advertised max/min ratio bound
# survives exp/divide rounding (raises the floor by ~1e-13 relative)
RATIO_GUARD = 1e-13

DEFAULT_C1 = 124.0
DEFAULT_C2 = 0.024
DEFAULT_C3 = 1.0
DEFAULT_C4 = 2.0


@dataclass(frozen=True)
class SolverParams:
    """Rates and budget for one solve.

    eta_p_times_r stores the products eta_p[i]*r_i directly (the updates only
    ever use the product, which stays finite when r_i = 0). epsilon is the
    post-normalization accuracy target; None in manual mode unless supplied.
    """

    mode: str                   # "theoretical" or "manual"
    epsilon: float | None
    B: float
    eta: float
    eta_mu: np.ndarray          # length n, positive
    eta_p_times_r: np.ndarray   # length n, positive
    t_max: int
    constants: tuple | None = None   # (C1, C2, C3, C4), theoretical mode

    def __post_init__(self):
        if self.mode not in ("theoretical", "manual"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (0.0 <= self.eta < 1.0):
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if not (self.B > 0):
            raise ValueError(f"B must be positive, got {self.B}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")
        for name in ("eta_mu", "eta_p_times_r"):
            v = getattr(self, name)
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                raise ValueError(f"{name}: rates must be finite and positive")

    @property
    def n(self) -> int:
        return self.eta_mu.shape[0]

    def tau_mu(self) -> np.ndarray:
        """Entropy weights eta/eta_mu of the dual pairs."""
        return self.eta / self.eta_mu

    def tau_p(self, r) -> np.ndarray:
        """Entropy weights eta/eta_p of the primal rows (zero where r_i = 0)."""
        return self.eta * np.asarray(r) / self.eta_p_times_r


def derive_params(n, epsilon_raw, w_inf, c, c1=DEFAULT_C1, c2=DEFAULT_C2,
                  c3=DEFAULT_C3, c4=DEFAULT_C4) -> SolverParams:
    """Theoretical parameters for accuracy epsilon_raw on a cost scale w_inf.

    Normalizes the target first (eps = epsilon_raw/w_inf), then

        B        = c1*log(n/eps)
        eta      = c2^2*eps / (sqrt(B)*log(n))
        eta_mu_j = 15*c2*sqrt(B) / (c_j + c3/n)
        eta_p_i*r_i = c2/sqrt(B)
        t_max    = ceil(c4*(1/eta)*log(n/eps))
    """
    if n < 2:
        raise ValueError("theoretical parameters need n >= 2 (formulas divide by log n)")
    if not (0 < epsilon_raw < w_inf):
        raise ValueError(f"need 0 < epsilon_raw < w_inf, got eps={epsilon_raw}, w_inf={w_inf}")
    c = np.ascontiguousarray(c, dtype=np.float64)
    if c.shape != (n,):
        raise ValueError(f"c: expected shape ({n},), got {c.shape}")
    eps = epsilon_raw / w_inf
    B = c1 * math.log(n / eps)
    eta = c2 * c2 * eps / (math.sqrt(B) * math.log(n))
    eta_mu = 15.0 * c2 * math.sqrt(B) / (c + c3 / n)
    eta_p_times_r = np.full(n, c2 / math.sqrt(B))
    t_max = math.ceil(c4 * (1.0 / eta) * math.log(n / eps))
    return SolverParams(mode="theoretical", epsilon=eps, B=B, eta=eta,
                        eta_mu=eta_mu, eta_p_times_r=eta_p_times_r,
                        t_max=t_max, constants=(c1, c2, c3, c4))


def manual_params(c, B, eta, C, C3, t_max, epsilon=None) -> SolverParams:
    """Hand-set rates eta_p_i = C/(sqrt(B)*r_i), eta_mu_j = C*sqrt(B)/(c_j + C3/n)
    (no 15x factor here; that belongs to the theoretical recipe)."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    n = c.shape[0]
    eta_mu = C * math.sqrt(B) / (c + C3 / n)
    eta_p_times_r = np.full(n, C / math.sqrt(B))
    return SolverParams(mode="manual", epsilon=epsilon, B=B, eta=eta,
                        eta_mu=eta_mu, eta_p_times_r=eta_p_times_r, t_max=t_max)


def fine_tuned_params(c, t_max, epsilon=None) -> SolverParams:
    """The aggressive preset: B=1, eta=0, C=1, C3=1e-2."""
    return manual_params(c, B=1.0, eta=0.0, C=1.0, C3=1e-2, t_max=t_max,
                         epsilon=epsilon)


def normalize(x) -> np.ndarray:
    """x / sum(x) for a nonnegative vector with positive total."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("normalize: negative entries")
    s = float(np.sum(x))
    if not (s > 0):
        raise ValueError("normalize: nonpositive total")
    return x / s


def adjust_mu(mu, B):
    """Clamp a probability pair so max/min <= exp(B), then renormalize.

    The floor is e^{-B}*max(mu); each input coordinate shrinks by at most a
    factor 1 + 2e^{-B} relative to its output.
    """
    if not (B > 0):
        raise ValueError(f"B must be positive, got {B}")
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (2,):
        raise ValueError(f"expected a probability pair, got shape {mu.shape}")
    if np.any(mu < 0) or abs(float(mu.sum()) - 1.0) > 1e-12:
        raise ValueError("mu must lie on the 2-simplex")
    floor = math.exp(RATIO_GUARD - B) * float(np.max(mu))
    q = np.maximum(mu, floor)
    return q / q.sum()


# --- numba kernels (one per phase; `solve` fuses them in a chunk loop) ---

@njit(cache=True)
def _colsum_kernel(P, r, out):
    n = P.shape[0]
    for j in range(n):
        out[j] = 0.0
    for i in range(n):
        ri = r[i]
        for j in range(n):
            out[j] += ri * P[i, j]


@njit(cache=True)
def _residual_kernel(colsum, c, out):
    for j in range(colsum.shape[0]):
        out[j] = colsum[j] - c[j]


@njit(cache=True)
def _delta_kernel(mu2, out):
    for j in range(mu2.shape[0]):
        out[j] = mu2[j, 0] - mu2[j, 1]


@njit(cache=True)
def _mu_update_kernel(log_base, residual, eta_mu, one_minus_eta, out_log, out_lin):
    # out[j, +/-] prop (base_{j,+/-})^(1-eta) * exp(+/- eta_mu_j * residual_j)
    n = log_base.shape[0]
    for j in range(n):
        g = eta_mu[j] * residual[j]
        a = one_minus_eta * log_base[j, 0] + g
        b = one_minus_eta * log_base[j, 1] - g
        m = a if a > b else b
        ea = np.exp(a - m)
        eb = np.exp(b - m)
        s = ea + eb
        out_lin[j, 0] = ea / s
        out_lin[j, 1] = eb / s
        ls = np.log(s)
        out_log[j, 0] = a - m - ls
        out_log[j, 1] = b - m - ls


@njit(cache=True)
def _p_update_kernel(log_base, A, epr, delta, one_minus_eta, out_log, out_lin):
    # out[i, j] prop (base_ij)^(1-eta) * exp(-(A_ij + epr_i*delta_j))
    # where A = epr[:, None] * 0.5 * W. Safe when out_log aliases log_base
    # (each slot is read before it is written).
    n = log_base.shape[0]
    for i in range(n):
        e = epr[i]
        m = -np.inf
        for j in range(n):
            v = one_minus_eta * log_base[i, j] - A[i, j] - e * delta[j]
            out_log[i, j] = v
            if v > m:
                m = v
        s = 0.0
        for j in range(n):
            ev = np.exp(out_log[i, j] - m)
            out_lin[i, j] = ev
            s += ev
        inv = 1.0 / s
        ls = np.log(s)
        for j in range(n):
            out_lin[i, j] *= inv
            out_log[i, j] -= m + ls


@njit(cache=True)
def _adjust_kernel(log_mu, b_eff, out_log, out_lin):
    # clamp each pair's log-gap to b_eff, renormalize
    n = log_mu.shape[0]
    for j in range(n):
        a = log_mu[j, 0]
        b = log_mu[j, 1]
        m = a if a > b else b
        floor = m - b_eff
        if a < floor:
            a = floor
        if b < floor:
            b = floor
        ea = np.exp(a - m)
        eb = np.exp(b - m)
        s = ea + eb
        out_lin[j, 0] = ea / s
        out_lin[j, 1] = eb / s
        ls = np.log(s)
        out_log[j, 0] = a - m - ls
        out_log[j, 1] = b - m - ls


@njit(cache=True)
def _run_chunk(n_iters, logP, P, logP_bar, P_bar, logMu, Mu, logMu_bar, Mu_bar,
               logMu_adjust, Mu_adjust, colsum, colsum_bar, r, c, A, epr,
               eta_mu, one_minus_eta, b_eff, buf_res, buf_delta):
    for _ in range(n_iters):
        # midpoints: gradient at (p^t, mu^{t,adjust})
        _residual_kernel(colsum, c, buf_res)
        _mu_update_kernel(logMu_adjust, buf_res, eta_mu, one_minus_eta,
                          logMu_bar, Mu_bar)
        _delta_kernel(Mu_adjust, buf_delta)
        _p_update_kernel(logP, A, epr, buf_delta, one_minus_eta, logP_bar, P_bar)
        _colsum_kernel(P_bar, r, colsum_bar)
        # main: same base point, gradient at the midpoints
        _residual_kernel(colsum_bar, c, buf_res)
        _mu_update_kernel(logMu_adjust, buf_res, eta_mu, one_minus_eta,
                          logMu, Mu)
        _delta_kernel(Mu_bar, buf_delta)
        _p_update_kernel(logP, A, epr, buf_delta, one_minus_eta, logP, P)
        _colsum_kernel(P, r, colsum)
        # clamp the new duals
        _adjust_kernel(logMu, b_eff, logMu_adjust, Mu_adjust)


class ExtragradState:
    """All iterate tables, stored as logs with linear-domain mirrors.

    logP / logP_bar: (n, n) main and midpoint rows. logMu / logMu_bar /
    logMu_adjust: (n, 2) dual pairs. colsum caches sum_i r_i p_ij for the
    current main rows; colsum_bar the same for the midpoints. matvecs counts
    charged matrix-vector-equivalents (2 per full iteration).
    """

    __slots__ = ("t", "matvecs", "logP", "P", "logP_bar", "P_bar",
                 "logMu", "Mu", "logMu_bar", "Mu_bar",
                 "logMu_adjust", "Mu_adjust", "colsum", "colsum_bar")

    def __init__(self, n, r):
        self.t = 0
        self.matvecs = 0.0
        self.logP = np.full((n, n), -math.log(n))
        self.P = np.full((n, n), 1.0 / n)
        self.logP_bar = self.logP.copy()
        self.P_bar = self.P.copy()
        self.logMu = np.full((n, 2), -math.log(2.0))
        self.Mu = np.full((n, 2), 0.5)
        self.logMu_bar = self.logMu.copy()
        self.Mu_bar = self.Mu.copy()
        self.logMu_adjust = self.logMu.copy()
        self.Mu_adjust = self.Mu.copy()
        self.colsum = np.empty(n)
        self.colsum_bar = np.empty(n)
        _colsum_kernel(self.P, r, self.colsum)
        _colsum_kernel(self.P_bar, r, self.colsum_bar)


class _Workspace:
    """Constant arrays shared by the step functions and the chunk loop."""

    __slots__ = ("r", "c", "A", "epr", "eta_mu", "one_minus_eta", "b_eff")

    def __init__(self, instance: OTInstance, params: SolverParams):
        if params.n != instance.n:
            raise ValueError(f"params are for n={params.n}, instance has n={instance.n}")
        self.r = np.ascontiguousarray(instance.r)
        self.c = np.ascontiguousarray(instance.c)
        W_norm = instance.W / instance.w_inf if instance.w_inf > 0 else instance.W
        self.epr = np.ascontiguousarray(params.eta_p_times_r)
        self.A = np.ascontiguousarray(self.epr[:, None] * (0.5 * W_norm))
        self.eta_mu = np.ascontiguousarray(params.eta_mu)
        self.one_minus_eta = 1.0 - params.eta
        self.b_eff = params.B - RATIO_GUARD


def midpoint_step(state: ExtragradState, params: SolverParams,
                  instance: OTInstance) -> None:
    """One midpoint phase: writes the bar tables and colsum_bar; charges one
    matvec-equivalent (colsum reduction plus the n^2 exponent pass)."""
    ws = _Workspace(instance, params)
    n = instance.n
    buf_res = np.empty(n)
    buf_delta = np.empty(n)
    _residual_kernel(state.colsum, ws.c, buf_res)
    _mu_update_kernel(state.logMu_adjust, buf_res, ws.eta_mu, ws.one_minus_eta,
                      state.logMu_bar, state.Mu_bar)
    _delta_kernel(state.Mu_adjust, buf_delta)
    _p_update_kernel(state.logP, ws.A, ws.epr, buf_delta, ws.one_minus_eta,
                     state.logP_bar, state.P_bar)
    _colsum_kernel(state.P_bar, ws.r, state.colsum_bar)
    state.matvecs += 1.0
    if not np.all(np.isfinite(state.colsum_bar)):
        raise NumericFailure("non-finite midpoint state (parameter blow-up)")


def main_step(state: ExtragradState, params: SolverParams,
              instance: OTInstance) -> None:
    """One main phase: same base point as the midpoint phase, gradient taken
    at the midpoints; writes the main tables and refreshes colsum."""
    ws = _Workspace(instance, params)
    n = instance.n
    buf_res = np.empty(n)
    buf_delta = np.empty(n)
    _residual_kernel(state.colsum_bar, ws.c, buf_res)
    _mu_update_kernel(state.logMu_adjust, buf_res, ws.eta_mu, ws.one_minus_eta,
                      state.logMu, state.Mu)
    _delta_kernel(state.Mu_bar, buf_delta)
    _p_update_kernel(state.logP, ws.A, ws.epr, buf_delta, ws.one_minus_eta,
                     state.logP, state.P)
    _colsum_kernel(state.P, ws.r, state.colsum)
    state.matvecs += 1.0
    if not np.all(np.isfinite(state.colsum)):
        raise NumericFailure("non-finite main state (parameter blow-up)")


def adjust_step(state: ExtragradState, params: SolverParams) -> None:
    """Clamp the freshly updated dual pairs and close the iteration."""
    b_eff = params.B - RATIO_GUARD
    _adjust_kernel(state.logMu, b_eff, state.logMu_adjust, state.Mu_adjust)
    state.t += 1


def _assemble_p_hat(state: ExtragradState, instance: OTInstance) -> np.ndarray:
    return instance.r[:, None] * state.P


def _measure(state, instance, wall_ms, reference_value):
    # rounds a copy of the current plan; not charged to the matvec counter
    P_hat = _assemble_p_hat(state, instance)
    plan, _ = round_to_feasible(P_hat, instance.r, instance.c)
    cost = float(np.sum(instance.W * plan.P))
    if not math.isfinite(cost):
        raise NumericFailure("non-finite objective")
    rv, cv = marginal_violation(P_hat, instance.r, instance.c)
    gap = None if reference_value is None else cost - reference_value
    return TraceRecord(iter=state.t, matvec_equiv=state.matvecs,
                       wall_ms=wall_ms, rounded_cost=cost, gap=gap,
                       row_violation_raw=rv, col_violation_raw=cv)


def default_cadence(t_max: int) -> int:
    return 1 if t_max <= 200 else math.ceil(t_max / 200)


def solve(instance: OTInstance, params: SolverParams, trace_sink=None, *,
          reference_value=None, early_stop=False, measure_every=None):
    """Run t_max extragradient iterations and round the result.

    Returns (feasible plan, raw plan, trace). The raw plan is
    P_hat = diag(r) @ rows at the final iterate; the feasible plan is its
    rounding onto the transportation polytope. Measurements happen every
    measure_every iterations (default ceil(t_max/200), every iteration for
    small budgets) plus once at iteration 0 and once at the end; each
    measurement rounds a copy of the current iterate and is excluded from
    both the matvec counter and the reported wall time.

    With early_stop=True the loop exits at the first measurement whose
    rounded gap against reference_value drops to params.epsilon * w_inf.
    """
    ws = _Workspace(instance, params)
    if early_stop and (reference_value is None or params.epsilon is None):
        raise ValueError("early_stop needs reference_value and params.epsilon")
    if measure_every is None:
        measure_every = default_cadence(params.t_max)
    if measure_every < 1:
        raise ValueError(f"measure_every must be >= 1, got {measure_every}")

    n = instance.n
    state = ExtragradState(n, ws.r)
    buf_res = np.empty(n)
    buf_delta = np.empty(n)
    wall = 0.0
    trace = []

    def record():
        rec = _measure(state, instance, wall * 1e3, reference_value)
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)
        return rec

    rec = record()
    stop_at = (params.epsilon * instance.w_inf
               if params.epsilon is not None else None)
    while state.t < params.t_max:
        if early_stop and rec.gap is not None and rec.gap <= stop_at:
            break
        target = min(state.t + measure_every, params.t_max)
        chunk = target - state.t
        t0 = time.perf_counter()
        _run_chunk(chunk, state.logP, state.P, state.logP_bar, state.P_bar,
                   state.logMu, state.Mu, state.logMu_bar, state.Mu_bar,
                   state.logMu_adjust, state.Mu_adjust, state.colsum,
                   state.colsum_bar, ws.r, ws.c, ws.A, ws.epr, ws.eta_mu,
                   ws.one_minus_eta, ws.b_eff, buf_res, buf_delta)
        wall += time.perf_counter() - t0
        state.t = target
        state.matvecs += 2.0 * chunk
        if not np.all(np.isfinite(state.colsum)):
            raise NumericFailure("non-finite iterate (parameter blow-up)")
        rec = record()

    P_hat = _assemble_p_hat(state, instance)
    raw = TransportPlan.from_matrix(P_hat, instance.r, instance.c)
    feasible, _ = round_to_feasible(P_hat, instance.r, instance.c)
    return feasible, raw, trace
