"""Dual and primal solvers for lp-regularized regression and classification.

The dual objective is

    Lambda(alpha) = (1/q) ||Phi* alpha||_q^q + gamma * sum_i L*(y_i, -alpha_i/gamma)

minimized either through the order-4 Gram tensor (kernelized, q = 4) or
through an explicit feature matrix (any q > 2). Two loops are provided:
the gradient descent with sufficient-decrease linesearch specialized to
the square loss, and a proximal gradient with quadratic-upper-bound
linesearch for the whole loss catalog. Primal baselines (plain gradient
descent with linesearch, FISTA with the power prox, ridge closed form)
exist for rate comparisons and sanity oracles.

A useful identity drives the stopping rule everywhere: with
``w = J_q(Phi* alpha)`` the fitted values ``Phi w`` equal the gradient of
the leading q-form and ``||w||_p^p = q`` times its value, so the duality
gap F(w) + Lambda(alpha) is computable on the kernel path without ever
materializing features.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .duality import Exponents, duality_map, lp_norm, prox_power_vec
from .kernels import (
    FeatureOperator,
    GramTensor,
    MultiplyCounter,
    feature_qform_delta,
    feature_qform_state,
    feature_qform_value,
    quartic_delta,
    quartic_state,
    quartic_value,
    quartic_value_and_gradient,
)
from .losses import (
    LossSpec,
    dual_conjugate_term,
    dual_split,
    loss_subdifferential,
    loss_value,
)

__all__ = [
    "SolverConfig",
    "DualState",
    "Solution",
    "PrimalState",
    "TraceHistory",
    "SolverError",
    "DivergenceError",
    "CertificateError",
    "StagnationError",
    "solve_dual_ls_q4",
    "solve_dual_prox_grad",
    "recover_primal",
    "primal_objective",
    "dual_objective",
    "duality_gap",
    "kkt_residual",
    "primal_gd_linesearch",
    "primal_fista",
    "ridge_closed_form",
    "error_bound_diagnostic",
    "DiagnosticReport",
    "verify_decay_certificate",
    "solution_from_features",
    "solution_from_gram",
    "iterations_to_precision",
    "write_trace_csv",
]

_EPS = np.finfo(float).eps


class SolverError(RuntimeError):
    """Base class for solver failures."""


class DivergenceError(SolverError):
    """The objective became non-finite at an accepted iterate."""


class CertificateError(SolverError):
    """A per-iteration decay certificate was violated beyond slack."""


class StagnationError(SolverError):
    """A linesearch could not find an acceptable stepsize."""


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by the dual solvers.

    ``delta`` and ``lambda_bar`` default per algorithm when left None
    (gradient-descent loop: delta 0.9 and lambda_bar just below its
    admissible supremum gamma/(2(1-delta)); proximal loop: delta 0.5,
    lambda_bar 1). ``tol`` is a relative duality-gap tolerance.
    """

    gamma: float
    exps: Exponents
    delta: float | None = None
    theta: float = 0.5
    lambda_bar: float | None = None
    max_iter: int = 10_000
    tol: float = 1e-8
    check_certificate: bool = False
    seed: int = 0
    max_backtracks: int = 60
    record_alphas: bool = False

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if self.delta is not None and not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.lambda_bar is not None and self.lambda_bar <= 0:
            raise ValueError(f"lambda_bar must be positive, got {self.lambda_bar}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def resolve_ls(self) -> tuple[float, float]:
        """(delta, lambda_bar) for the gradient-descent loop, validated
        against the admissible interval ]0, gamma/(2(1-delta))[."""
        delta = 0.9 if self.delta is None else self.delta
        sup = self.gamma / (2.0 * (1.0 - delta))
        lam = 0.99 * sup if self.lambda_bar is None else self.lambda_bar
        if not (0.0 < lam < sup):
            raise ValueError(
                f"lambda_bar={lam} outside ]0, {sup}[ = ]0, gamma/(2(1-delta))["
            )
        return delta, lam

    def resolve_prox(self) -> tuple[float, float]:
        delta = 0.5 if self.delta is None else self.delta
        lam = 1.0 if self.lambda_bar is None else self.lambda_bar
        return delta, lam


@dataclass
class TraceHistory:
    """Per-iteration trace; row 0 is the initial point."""

    iters: list = field(default_factory=list)
    lams: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    primal_errs: list = field(default_factory=list)
    wall_ns: list = field(default_factory=list)

    def append(self, m, lam, obj, gnorm, gap, perr, wall):
        self.iters.append(m)
        self.lams.append(lam)
        self.objectives.append(obj)
        self.grad_norms.append(gnorm)
        self.gaps.append(gap)
        self.primal_errs.append(perr)
        self.wall_ns.append(wall)


def write_trace_csv(history: TraceHistory, path, header: dict | None = None) -> None:
    """Write a trace as CSV, with the effective config echoed as comments."""
    with open(path, "w", newline="") as fh:
        for key, val in (header or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(["iter", "lambda", "objective", "grad_norm", "gap", "primal_err", "wall_ns"])
        for row in zip(
            history.iters, history.lams, history.objectives,
            history.grad_norms, history.gaps, history.primal_errs, history.wall_ns,
        ):
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


@dataclass
class DualState:
    """Solver output: final iterate plus the full iteration trace."""

    alpha: np.ndarray
    lambda_last: float
    objective: float
    grad_norm: float
    iterations: int
    linesearch_backtracks: int
    converged: bool
    stop_reason: str
    history: TraceHistory
    counter: MultiplyCounter
    delta: float
    lambda_bar: float
    alphas: list | None = None


@dataclass
class Solution:
    """Primal-dual pair with its certificates."""

    alpha: np.ndarray
    w: np.ndarray | None
    primal_value: float
    dual_value: float
    gap: float
    kkt_residual: float


@dataclass
class PrimalState:
    """Output of the primal baselines."""

    w: np.ndarray
    objective: float
    iterations: int
    converged: bool
    stop_reason: str
    history: TraceHistory


# ---------------------------------------------------------------------------
# objective assembly


def recover_primal(phi: FeatureOperator, alpha, q: float) -> np.ndarray:
    """Primal vector from dual coefficients: ``w = J_q(Phi* alpha)``."""
    return duality_map(phi.adjoint(np.asarray(alpha, dtype=float)), q)


def primal_objective(phi: FeatureOperator, w, y, loss: LossSpec, gamma: float, exps: Exponents) -> float:
    t = phi.apply(np.asarray(w, dtype=float))
    return float(
        gamma * np.sum(loss_value(loss, y, t)) + lp_norm(w, exps.p) ** exps.p / exps.p
    )


def dual_objective(phi: FeatureOperator, alpha, y, loss: LossSpec, gamma: float, exps: Exponents) -> float:
    u = phi.adjoint(np.asarray(alpha, dtype=float))
    return float(
        lp_norm(u, exps.q) ** exps.q / exps.q + dual_conjugate_term(loss, y, alpha, gamma)
    )


def duality_gap(phi, w, alpha, y, loss: LossSpec, gamma: float, exps: Exponents) -> float:
    """F(w) + Lambda(alpha); nonnegative, zero exactly at the optimal pair."""
    return primal_objective(phi, w, y, loss, gamma, exps) + dual_objective(
        phi, alpha, y, loss, gamma, exps
    )


def _subdiff_distance(loss: LossSpec, y, t, alpha, gamma: float) -> float:
    s = -np.asarray(alpha, dtype=float) / gamma
    lo, hi = loss_subdifferential(loss, y, t)
    return float(np.max(np.maximum(0.0, np.maximum(lo - s, s - hi)), initial=0.0))


def kkt_residual(phi, w, alpha, y, loss: LossSpec, gamma: float, exps: Exponents) -> float:
    """Distance of -alpha/gamma to the loss subdifferential at the fitted
    values, plus the p-norm mismatch between w and J_q(Phi* alpha)."""
    w = np.asarray(w, dtype=float)
    t = phi.apply(w)
    link = lp_norm(w - recover_primal(phi, alpha, exps.q), exps.p)
    return _subdiff_distance(loss, y, t, alpha, gamma) + link


# ---------------------------------------------------------------------------
# quartic / q-form oracles

@dataclass
class _QformOracle:
    """Leading dual term: value, state (value/gradient/context), and the
    cancellation-free increment ``qform(cand) - qform(alpha)``."""

    value: Callable[[np.ndarray], float]
    state: Callable[[np.ndarray], tuple]
    delta: Callable[[tuple, np.ndarray, np.ndarray, np.ndarray], float]
    q: float


def _make_oracle(op, exps: Exponents, counter: MultiplyCounter) -> _QformOracle:
    if isinstance(op, GramTensor):
        if exps.q != 4:
            raise ValueError(f"the Gram path requires q=4, got q={exps.q}")

        def state(a):
            val, grad, u, v = quartic_state(op, a, counter)
            return val, grad, (u, v)

        def delta(ctx, a, cand, diff):
            u, v = ctx
            return quartic_delta(op, a, u, v, cand, counter)

        return _QformOracle(
            value=lambda a: quartic_value(op, a, counter), state=state, delta=delta, q=4.0
        )
    if isinstance(op, FeatureOperator):
        if exps.q <= 2:
            raise ValueError(f"the dual q-form needs q > 2, got q={exps.q}")

        def state(a):
            val, grad, u = feature_qform_state(op, a, exps.q, counter)
            return val, grad, u

        def delta(ctx, a, cand, diff):
            return feature_qform_delta(op, ctx, diff, exps.q, counter)

        return _QformOracle(
            value=lambda a: feature_qform_value(op, a, exps.q, counter),
            state=state,
            delta=delta,
            q=exps.q,
        )
    raise TypeError(f"expected GramTensor or FeatureOperator, got {type(op)!r}")


def _implied_primal_value(
    qv: float, omega: np.ndarray, y, loss: LossSpec, gamma: float, exps: Exponents
) -> float:
    """F(J_q(Phi* alpha)) from the q-form value and gradient alone."""
    reg = exps.q * qv / exps.p  # ||w||_p^p / p for w = J_q(Phi* alpha)
    return float(gamma * np.sum(loss_value(loss, y, omega)) + reg)


def _rel_gap_ok(gap: float, primal: float, tol: float) -> bool:
    return gap <= tol * (1.0 + abs(primal))


# ---------------------------------------------------------------------------
# Algorithm 1: dual gradient descent with linesearch (square loss, q = 4)


def solve_dual_ls_q4(
    g: GramTensor,
    y,
    cfg: SolverConfig,
    w_ref: np.ndarray | None = None,
    phi_ref: FeatureOperator | None = None,
) -> DualState:
    """Kernelized dual gradient descent with backtracking linesearch.

    Minimizes the square-loss dual through the matricized Gram tensor.
    Each iteration resets the stepsize to lambda_bar and shrinks it by
    theta until the sufficient-decrease test passes. Stops when the
    relative duality gap reaches ``cfg.tol`` (the gap is computable from
    the Gram tensor alone), the gap stalls at its numerical floor, or
    ``max_iter`` is hit.

    ``w_ref``/``phi_ref`` only feed the trace's primal-error column.
    """
    if cfg.exps.q != 4:
        raise ValueError(f"Algorithm requires q=4, got q={cfg.exps.q}")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != g.n:
        raise ValueError(f"y has length {y.size}, expected {g.n}")
    delta, lambda_bar = cfg.resolve_ls()
    gamma = cfg.gamma
    counter = MultiplyCounter()
    loss = LossSpec("square")

    def quad_lin_delta(a: np.ndarray, c: np.ndarray, d: np.ndarray) -> float:
        return 0.5 * float(d @ (a + c)) / gamma - float(y @ d)

    alpha = np.zeros(g.n)
    history = TraceHistory()
    alphas = [alpha.copy()] if cfg.record_alphas else None
    backtracks = 0
    lam_accept = np.nan
    tiny_steps = 0
    stop_reason = "max_iter"
    t0 = time.perf_counter_ns()

    m = 0
    while True:
        qv, omega, u_pairs, v_pairs = quartic_state(g, alpha, counter)
        obj = qv + 0.5 * (alpha @ alpha) / gamma - y @ alpha
        if not np.isfinite(obj):
            raise DivergenceError(f"dual objective non-finite at iteration {m}")
        grad = omega - y + alpha / gamma
        gnorm = float(np.linalg.norm(grad))
        primal = _implied_primal_value(qv, omega, y, loss, gamma, cfg.exps)
        gap = primal + obj
        perr = np.nan
        if w_ref is not None and phi_ref is not None:
            w_m = recover_primal(phi_ref, alpha, 4.0)
            perr = float(np.linalg.norm(w_m - w_ref))
        history.append(m, lam_accept, obj, gnorm, gap, perr, time.perf_counter_ns() - t0)

        if _rel_gap_ok(gap, primal, cfg.tol):
            stop_reason = "gap"
            break
        if tiny_steps >= 3:  # iterates no longer move at double precision
            stop_reason = "floor"
            break
        if m >= cfg.max_iter:
            stop_reason = "max_iter"
            break

        lam = lambda_bar
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = alpha - lam * grad
            diff = trial - alpha
            with np.errstate(over="ignore", invalid="ignore"):
                delta_obj = quartic_delta(g, alpha, u_pairs, v_pairs, trial, counter)
                delta_obj += quad_lin_delta(alpha, trial, diff)
            # decrease test in increment form: Lam(a) - Lam(trial) >= lam (1-d) |grad|^2
            if np.isfinite(delta_obj) and -delta_obj >= lam * (1.0 - delta) * gnorm**2:
                accepted = True
                break
            lam *= cfg.theta
            backtracks += 1
        if not accepted:
            required = lam * (1.0 - delta) * gnorm**2
            if required <= 100.0 * _EPS * (1.0 + abs(obj)):
                stop_reason = "floor"  # decrease demanded is below roundoff
                break
            raise StagnationError(
                f"linesearch exhausted {cfg.max_backtracks} backtracks at iteration {m}"
            )
        step = lam * gnorm
        alpha = (1.0 - lam / gamma) * alpha - lam * (omega - y)
        lam_accept = lam
        tiny_steps = tiny_steps + 1 if step <= 4.0 * _EPS * (1.0 + float(np.linalg.norm(alpha))) else 0
        if alphas is not None:
            alphas.append(alpha.copy())
        m += 1

    state = DualState(
        alpha=alpha,
        lambda_last=float(lam_accept) if np.isfinite(lam_accept) else lambda_bar,
        objective=history.objectives[-1],
        grad_norm=history.grad_norms[-1],
        iterations=m,
        linesearch_backtracks=backtracks,
        converged=stop_reason == "gap",
        stop_reason=stop_reason,
        history=history,
        counter=counter,
        delta=delta,
        lambda_bar=lambda_bar,
        alphas=alphas,
    )
    if cfg.check_certificate:
        violation = verify_decay_certificate(
            history.objectives, history.lams, min(history.objectives), gamma, delta
        )
        if violation > 1e-8:
            raise CertificateError(
                f"geometric decay certificate violated by {violation:.3e}"
            )
    return state


def verify_decay_certificate(objectives, lams, lambda_star, gamma, delta) -> float:
    """Max violation of the per-iteration decay inequality

    ``Lambda(a_{m+1}) - L* <= (1 - (2/gamma) lam_m (1-delta)) (Lambda(a_m) - L*)``

    against the best-known optimum ``lambda_star``; <= 0 means it held.
    """
    worst = -np.inf
    for m in range(len(objectives) - 1):
        lam = lams[m + 1]
        factor = 1.0 - (2.0 / gamma) * lam * (1.0 - delta)
        bound = factor * (objectives[m] - lambda_star)
        worst = max(worst, (objectives[m + 1] - lambda_star) - bound)
    return worst if np.isfinite(worst) else 0.0


# ---------------------------------------------------------------------------
# Algorithm 2: dual proximal gradient with linesearch (any catalog loss)


def solve_dual_prox_grad(
    phi_or_gram,
    y,
    loss: LossSpec,
    cfg: SolverConfig,
    w_ref: np.ndarray | None = None,
    phi_ref: FeatureOperator | None = None,
) -> DualState:
    """Proximal gradient on the split dual with backtracking linesearch.

    The stepsize ``lambda_bar * theta^j`` takes the smallest j whose
    prox-trial satisfies the quadratic upper bound
    ``phi1(a^) - phi1(a) - <a^ - a, grad phi1(a)> <= (delta/lam) ||a^ - a||^2``;
    a non-finite trial value (logistic boundary) simply fails the test.
    With the square loss (phi2 = 0) the iterates coincide with
    :func:`solve_dual_ls_q4` under a matched stepsize policy.
    """
    y = np.asarray(y, dtype=float).ravel()
    counter = MultiplyCounter()
    oracle = _make_oracle(phi_or_gram, cfg.exps, counter)
    split = dual_split(loss, y, cfg.gamma)
    delta, lambda_bar = cfg.resolve_prox()
    gamma = cfg.gamma

    alpha = split.alpha0.copy()
    if alpha.size != y.size:
        raise ValueError("label vector length mismatch")
    history = TraceHistory()
    alphas = [alpha.copy()] if cfg.record_alphas else None
    backtracks = 0
    lam_accept = np.nan
    tiny_steps = 0
    stop_reason = "max_iter"
    t0 = time.perf_counter_ns()

    m = 0
    while True:
        qv, omega, qctx = oracle.state(alpha)
        extra_v = split.phi1_value(alpha)
        phi1_v = qv + extra_v
        obj = phi1_v + split.phi2_value(alpha)
        if not np.isfinite(obj):
            raise DivergenceError(f"dual objective non-finite at iteration {m}")
        grad = omega + split.phi1_grad(alpha)
        gnorm = float(np.linalg.norm(grad))
        primal = _implied_primal_value(qv, omega, y, loss, gamma, cfg.exps)
        gap = primal + obj
        perr = np.nan
        if w_ref is not None and phi_ref is not None:
            w_m = recover_primal(phi_ref, alpha, cfg.exps.q)
            perr = float(np.linalg.norm(w_m - w_ref))
        history.append(m, lam_accept, obj, gnorm, gap, perr, time.perf_counter_ns() - t0)

        if _rel_gap_ok(gap, primal, cfg.tol):
            stop_reason = "gap"
            break
        if tiny_steps >= 3:  # iterates no longer move at double precision
            stop_reason = "floor"
            break
        if m >= cfg.max_iter:
            stop_reason = "max_iter"
            break

        lam = lambda_bar
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = split.prox(alpha - lam * grad, lam)
            diff = cand - alpha
            sq = float(diff @ diff)
            # in-domain check (logistic boundary) and increment-form test
            if np.isfinite(split.phi1_value(cand)):
                with np.errstate(over="ignore", invalid="ignore"):
                    dphi1 = oracle.delta(qctx, alpha, cand, diff) + split.phi1_delta(
                        alpha, cand, diff
                    )
                if np.isfinite(dphi1) and dphi1 - diff @ grad <= (delta / lam) * sq:
                    accepted = True
                    break
            lam *= cfg.theta
            backtracks += 1
        if not accepted:
            if (delta / lam) * sq + abs(float(diff @ grad)) <= 100.0 * _EPS * (1.0 + abs(phi1_v)):
                stop_reason = "floor"  # no certifiable progress at double precision
                break
            raise StagnationError(
                f"linesearch exhausted {cfg.max_backtracks} backtracks at iteration {m}"
            )
        alpha = cand
        lam_accept = lam
        tiny_steps = (
            tiny_steps + 1
            if np.sqrt(sq) <= 4.0 * _EPS * (1.0 + float(np.linalg.norm(alpha)))
            else 0
        )
        if alphas is not None:
            alphas.append(alpha.copy())
        m += 1

    return DualState(
        alpha=alpha,
        lambda_last=float(lam_accept) if np.isfinite(lam_accept) else lambda_bar,
        objective=history.objectives[-1],
        grad_norm=history.grad_norms[-1],
        iterations=m,
        linesearch_backtracks=backtracks,
        converged=stop_reason == "gap",
        stop_reason=stop_reason,
        history=history,
        counter=counter,
        delta=delta,
        lambda_bar=lambda_bar,
        alphas=alphas,
    )


def solution_from_features(
    phi: FeatureOperator, alpha, y, loss: LossSpec, gamma: float, exps: Exponents
) -> Solution:
    """Assemble the primal-dual pair and its certificates (feature path)."""
    alpha = np.asarray(alpha, dtype=float)
    w = recover_primal(phi, alpha, exps.q)
    f = primal_objective(phi, w, y, loss, gamma, exps)
    lam = dual_objective(phi, alpha, y, loss, gamma, exps)
    res = kkt_residual(phi, w, alpha, y, loss, gamma, exps)
    return Solution(alpha=alpha, w=w, primal_value=f, dual_value=lam, gap=f + lam, kkt_residual=res)


def solution_from_gram(
    g: GramTensor, alpha, y, loss: LossSpec, gamma: float, exps: Exponents
) -> Solution:
    """Kernel-path certificates; the primal vector itself stays implicit."""
    alpha = np.asarray(alpha, dtype=float)
    qv, omega = quartic_value_and_gradient(g, alpha)
    f = _implied_primal_value(qv, omega, y, loss, gamma, exps)
    lam = qv + dual_conjugate_term(loss, y, alpha, gamma)
    res = _subdiff_distance(loss, y, omega, alpha, gamma)
    return Solution(alpha=alpha, w=None, primal_value=f, dual_value=lam, gap=f + lam, kkt_residual=res)


# ---------------------------------------------------------------------------
# primal baselines


def _power_method_lipschitz(phi: FeatureOperator, gamma: float, iters: int = 50) -> float:
    """Largest eigenvalue of gamma * Phi Phi^T by the power method."""
    G = phi.matrix @ phi.matrix.T
    v = np.full(G.shape[0], 1.0 / np.sqrt(G.shape[0]))
    for _ in range(iters):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
    return float(gamma * (v @ (G @ v)))


def primal_gd_linesearch(
    phi: FeatureOperator,
    y,
    cfg: SolverConfig,
    loss: LossSpec | None = None,
    max_iter: int = 5000,
    f_target: float | None = None,
    rel_precision: float = 1e-8,
) -> PrimalState:
    """Gradient descent with backtracking linesearch on the primal F.

    Baseline only; the smooth square loss is required. The stepsize warm
    starts from the previous accepted value (doubled, capped) because the
    gradient of the lp term is not locally Lipschitz and accepted steps
    can shrink toward zero; underflow below 1e-16 is reported as
    stagnation rather than an error.
    """
    loss = loss or LossSpec("square")
    if loss.kind != "square":
        raise ValueError("the primal gradient baseline requires the square loss")
    y = np.asarray(y, dtype=float).ravel()
    gamma, exps = cfg.gamma, cfg.exps
    delta = 0.9 if cfg.delta is None else cfg.delta

    def F(w):
        return primal_objective(phi, w, y, loss, gamma, exps)

    w = np.zeros(phi.dim)
    obj = F(w)
    lam_cap = cfg.lambda_bar if cfg.lambda_bar is not None else 1.0
    lam_prev = lam_cap
    history = TraceHistory()
    t0 = time.perf_counter_ns()
    stop_reason = "max_iter"
    converged = False
    m = 0
    while True:
        resid = phi.apply(w) - y
        grad = gamma * phi.adjoint(resid) + duality_map(w, exps.p)
        gnorm = float(np.linalg.norm(grad))
        history.append(m, lam_prev if m else np.nan, obj, gnorm, np.nan, np.nan,
                       time.perf_counter_ns() - t0)
        if f_target is not None and obj - f_target <= rel_precision * max(1.0, abs(f_target)):
            stop_reason, converged = "objective", True
            break
        if m >= max_iter:
            break
        lam = min(2.0 * lam_prev, lam_cap)
        accepted = False
        for _ in range(200):
            if lam < 1e-16:
                break
            trial = F(w - lam * grad)
            if np.isfinite(trial) and obj - trial >= lam * (1.0 - delta) * gnorm**2:
                accepted = True
                break
            lam *= cfg.theta
        if not accepted:
            stop_reason = "stagnation"
            break
        w = w - lam * grad
        obj = F(w)
        lam_prev = lam
        m += 1
    return PrimalState(
        w=w, objective=obj, iterations=m, converged=converged,
        stop_reason=stop_reason, history=history,
    )


def primal_fista(
    phi: FeatureOperator,
    y,
    cfg: SolverConfig,
    max_iter: int = 20_000,
    f_target: float | None = None,
    rel_precision: float = 1e-8,
    monotone: bool = True,
) -> PrimalState:
    """FISTA on the primal with the power prox and fixed stepsize 1/L.

    L is a 50-step power-method estimate of the largest eigenvalue of
    ``gamma * Phi Phi^T``. With ``monotone`` the accepted iterate never
    increases the objective (the plain variant is available for
    comparison).
    """
    y = np.asarray(y, dtype=float).ravel()
    gamma, exps = cfg.gamma, cfg.exps
    loss = LossSpec("square")
    L = _power_method_lipschitz(phi, gamma)
    if L <= 0.0:
        L = 1.0

    def F(w):
        return primal_objective(phi, w, y, loss, gamma, exps)

    w = np.zeros(phi.dim)
    z = w.copy()
    t = 1.0
    obj = F(w)
    history = TraceHistory()
    t0 = time.perf_counter_ns()
    stop_reason = "max_iter"
    converged = False
    m = 0
    while True:
        history.append(m, 1.0 / L, obj, np.nan, np.nan, np.nan, time.perf_counter_ns() - t0)
        if f_target is not None and obj - f_target <= rel_precision * max(1.0, abs(f_target)):
            stop_reason, converged = "objective", True
            break
        if m >= max_iter:
            break
        grad_z = gamma * phi.adjoint(phi.apply(z) - y)
        u = prox_power_vec(z - grad_z / L, 1.0 / L, exps.p)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        fu = F(u)
        if monotone and fu > obj:
            w_next, obj_next = w, obj
        else:
            w_next, obj_next = u, fu
        z = w_next + (t / t_next) * (u - w_next) + ((t - 1.0) / t_next) * (w_next - w)
        w, obj, t = w_next, obj_next, t_next
        m += 1
    return PrimalState(
        w=w, objective=obj, iterations=m, converged=converged,
        stop_reason=stop_reason, history=history,
    )


def ridge_closed_form(phi: FeatureOperator, y, gamma: float) -> np.ndarray:
    """Exact p = 2 solution via the dual normal equations
    ``(Phi Phi^T + I/gamma) alpha = y``, then ``w = Phi^T alpha``."""
    y = np.asarray(y, dtype=float).ravel()
    G = phi.matrix @ phi.matrix.T
    alpha = np.linalg.solve(G + np.eye(G.shape[0]) / gamma, y)
    return phi.adjoint(alpha)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class DiagnosticReport:
    """Per-iteration dual suboptimality vs primal error, with the
    guaranteed geometric envelope and the implied convexity constant."""

    dual_subopt: np.ndarray
    primal_err_p: np.ndarray
    envelope: np.ndarray | None
    c_hat: float
    p: float


def error_bound_diagnostic(
    state: DualState,
    phi: FeatureOperator,
    y,
    loss: LossSpec,
    gamma: float,
    exps: Exponents,
    alpha_star: np.ndarray,
    lambda_star: float,
) -> DiagnosticReport:
    """Relate dual suboptimality to primal error along a recorded run.

    Emits ``Lambda(a_m) - Lambda*``, ``||w_m - w*||_p``, the geometric
    envelope implied by the accepted stepsizes (square loss only), and
    the empirical constant

        C^ = inf_m (Lambda(a_m) - Lambda*)
             * [(2^p q)(Lambda(a_m) + gamma ||xi||_1)]^((2-p)/p)
             / ||w_m - w*||_p^2,

    the largest constant consistent with the dual-to-primal error bound
    along this trajectory (positive whenever the bound is meaningful).
    """
    if state.alphas is None:
        raise ValueError("run the solver with record_alphas=True for diagnostics")
    from .losses import xi_vector  # local import to avoid cycle noise

    w_star = recover_primal(phi, alpha_star, exps.q)
    xi_l1 = float(np.sum(np.abs(xi_vector(loss, y))))
    objs = np.asarray(state.history.objectives)
    subopt = objs - lambda_star
    errs = np.array(
        [lp_norm(recover_primal(phi, a, exps.q) - w_star, exps.p) for a in state.alphas]
    )
    n_rows = min(errs.size, subopt.size)
    errs, subopt = errs[:n_rows], subopt[:n_rows]

    envelope = None
    if loss.kind == "square":
        lams = state.history.lams[:n_rows]
        env = [subopt[0]]
        for mm in range(1, n_rows):
            env.append(env[-1] * (1.0 - (2.0 / gamma) * lams[mm] * (1.0 - state.delta)))
        envelope = np.asarray(env)

    c_hat = np.inf
    exponent = (2.0 - exps.p) / exps.p
    for so, pe, ob in zip(subopt, errs, objs):
        if pe**2 <= 1e-24 or so <= 1e-13 * (1.0 + abs(lambda_star)):
            continue
        bracket = (2.0**exps.p * exps.q) * (ob + gamma * xi_l1)
        c_hat = min(c_hat, so * bracket**exponent / pe**2)
    if not np.isfinite(c_hat):
        c_hat = 0.0
    return DiagnosticReport(
        dual_subopt=subopt, primal_err_p=errs, envelope=envelope, c_hat=float(c_hat), p=exps.p
    )


def iterations_to_precision(objectives, optimum: float, rel: float = 1e-8) -> int | None:
    """First recorded iteration whose objective is within ``rel`` of the
    optimum (relative to max(1, |optimum|)); None if never reached."""
    thr = rel * max(1.0, abs(optimum))
    for m, obj in enumerate(objectives):
        if obj - optimum <= thr:
            return m
    return None
