"""Convex loss catalog: values, Fenchel conjugates, and dual splittings.

Every loss is either distance-based, ``L(y, t) = psi(y - t)`` with real
labels, or margin-based, ``L(y, t) = psi(y t)`` with labels in {-1, +1}.
Each concrete loss only supplies psi and psi*; the two compositions below
produce the conjugate ``L*(y, .)``, the dual objective term
``gamma * sum_i L*(y_i, -alpha_i / gamma)``, and its smooth/nonsmooth
splitting for the proximal gradient solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

__all__ = [
    "LossSpec",
    "DualSplit",
    "loss_value",
    "conjugate_value",
    "phi2_prox",
    "xi_vector",
    "dual_split",
    "dual_conjugate_term",
    "loss_subdifferential",
    "LOSS_KINDS",
]

LOSS_KINDS = ("square", "eps_insensitive", "huber", "logistic", "hinge")
_MARGIN = ("logistic", "hinge")

_BOX_TOL = 1e-9  # slack when testing conjugate domains at projected points
_KINK_TOL = 1e-6  # half-width treated as "at the kink" for subdifferentials


@dataclass(frozen=True)
class LossSpec:
    """A catalog loss. ``eps`` and ``rho`` apply to the epsilon-insensitive
    and Huber losses respectively and are ignored elsewhere."""

    kind: str = "square"
    eps: float = 0.1
    rho: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "eps_insensitive" and self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.kind == "huber" and self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    @property
    def is_margin(self) -> bool:
        return self.kind in _MARGIN

    def check_labels(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise ValueError("labels must be finite")
        if self.is_margin and not np.all(np.abs(y) == 1.0):
            raise ValueError(f"{self.kind} loss requires labels in {{-1, +1}}")
        return y


def _psi(spec: LossSpec, r: np.ndarray) -> np.ndarray:
    if spec.kind == "square":
        return 0.5 * r**2
    if spec.kind == "eps_insensitive":
        return np.maximum(np.abs(r) - spec.eps, 0.0)
    if spec.kind == "huber":
        rho = spec.rho
        return np.where(np.abs(r) <= rho, 0.5 * r**2, rho * np.abs(r) - 0.5 * rho**2)
    if spec.kind == "logistic":
        return np.logaddexp(0.0, -r)
    return np.maximum(1.0 - r, 0.0)  # hinge


def _psi_star(spec: LossSpec, s: np.ndarray) -> np.ndarray:
    """psi*(s), with +inf outside the domain (small slack at the edges)."""
    s = np.asarray(s, dtype=float)
    if spec.kind == "square":
        return 0.5 * s**2
    if spec.kind == "eps_insensitive":
        inside = np.abs(s) <= 1.0 + _BOX_TOL
        return np.where(inside, spec.eps * np.abs(s), np.inf)
    if spec.kind == "huber":
        inside = np.abs(s) <= spec.rho * (1.0 + _BOX_TOL) + _BOX_TOL
        return np.where(inside, 0.5 * s**2, np.inf)
    if spec.kind == "logistic":
        inside = (s >= -1.0 - _BOX_TOL) & (s <= _BOX_TOL)
        sc = np.clip(s, -1.0, 0.0)
        with np.errstate(invalid="ignore"):
            val = xlogy(1.0 + sc, 1.0 + sc) - xlogy(sc, -sc)
        return np.where(inside, val, np.inf)
    inside = (s >= -1.0 - _BOX_TOL) & (s <= _BOX_TOL)  # hinge
    return np.where(inside, s, np.inf)


def _assert_scalar_shapes(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    return y, t


def loss_value(spec: LossSpec, y, t):
    """L(y, t); elementwise over arrays, plain float for scalars."""
    y, t = _assert_scalar_shapes(y, t)
    spec.check_labels(y)
    val = _psi(spec, y * t) if spec.is_margin else _psi(spec, y - t)
    return float(val) if val.ndim == 0 else val


def conjugate_value(spec: LossSpec, y, s):
    """The Fenchel conjugate L*(y, s) = sup_t (s t - L(y, t)).

    Distance-based losses give ``y s + psi*(-s)``; margin-based losses
    give ``psi*(y s)``. Values outside the domain are +inf in-band.
    """
    y, s = _assert_scalar_shapes(y, s)
    spec.check_labels(y)
    if spec.is_margin:
        val = _psi_star(spec, y * s)
    else:
        val = y * s + _psi_star(spec, -s)
    return float(val) if val.ndim == 0 else val


def dual_conjugate_term(spec: LossSpec, y, alpha, gamma: float) -> float:
    """``gamma * sum_i L*(y_i, -alpha_i / gamma)`` (may be +inf)."""
    y = spec.check_labels(y)
    alpha = np.asarray(alpha, dtype=float)
    vals = conjugate_value(spec, y, -alpha / gamma)
    return float(gamma * np.sum(vals))


def _soft_threshold(v: np.ndarray, thr: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def phi2_prox(spec: LossSpec, y, v, lam: float, gamma: float) -> np.ndarray:
    """Prox of the nonsmooth dual part phi2 at v with stepsize lam.

    phi2 keeps only boxes and l1 terms (linear and quadratic parts of the
    dual sit in the smooth phi1), so the prox is a soft-threshold and/or
    a box projection; for square and logistic losses phi2 = 0.
    """
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    y = spec.check_labels(y)
    v = np.asarray(v, dtype=float)
    if spec.kind in ("square", "logistic"):
        return v.copy()
    if spec.kind == "hinge":
        lo = np.where(y > 0, 0.0, -gamma)
        hi = np.where(y > 0, gamma, 0.0)
        return np.clip(v, lo, hi)
    if spec.kind == "eps_insensitive":
        return np.clip(_soft_threshold(v, lam * spec.eps), -gamma, gamma)
    return np.clip(v, -spec.rho * gamma, spec.rho * gamma)  # huber


def _phi2_value(spec: LossSpec, y: np.ndarray, alpha: np.ndarray, gamma: float) -> float:
    tol = _BOX_TOL * max(1.0, gamma)
    if spec.kind in ("square", "logistic"):
        return 0.0
    if spec.kind == "hinge":
        inside = np.all((y * alpha >= -tol) & (y * alpha <= gamma + tol))
        return 0.0 if inside else np.inf
    if spec.kind == "eps_insensitive":
        inside = np.all(np.abs(alpha) <= gamma + tol)
        return float(spec.eps * np.sum(np.abs(alpha))) if inside else np.inf
    inside = np.all(np.abs(alpha) <= spec.rho * gamma * (1 + _BOX_TOL) + tol)
    return 0.0 if inside else np.inf


def xi_vector(spec: LossSpec, y) -> np.ndarray:
    """Per-label conjugate infimum ``xi_i = inf L*(y_i, .)`` (always finite)."""
    y = spec.check_labels(y)
    if spec.kind == "square":
        return -0.5 * y**2
    if spec.kind == "eps_insensitive":
        return np.minimum(0.0, spec.eps - np.abs(y))
    if spec.kind == "huber":
        rho = spec.rho
        return np.where(
            np.abs(y) <= rho, -0.5 * y**2, -rho * np.abs(y) + 0.5 * rho**2
        )
    if spec.kind == "logistic":
        return np.full_like(y, -np.log(2.0))
    return np.full_like(y, -1.0)  # hinge


@dataclass(frozen=True)
class DualSplit:
    """Smooth/nonsmooth splitting of the dual conjugate term.

    phi1_value/phi1_grad cover everything smooth beyond the leading
    q-form (quadratic, linear, and the logistic barrier-like term);
    ``prox`` is the closed-form prox of phi2. ``mu`` is the strong
    convexity modulus of the full dual objective (0 when none) and
    ``xi`` the vector of per-label conjugate infima.
    """

    loss: LossSpec
    y: np.ndarray
    gamma: float
    phi1_value: Callable[[np.ndarray], float]
    phi1_grad: Callable[[np.ndarray], np.ndarray]
    phi1_delta: Callable[[np.ndarray, np.ndarray, np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    phi2_value: Callable[[np.ndarray], float]
    mu: float
    xi: np.ndarray
    alpha0: np.ndarray

    def conjugate_term_value(self, alpha: np.ndarray) -> float:
        """phi1_extra + phi2 at alpha; equals the composed conjugate term."""
        return self.phi1_value(alpha) + self.phi2_value(alpha)


def dual_split(spec: LossSpec, y, gamma: float) -> DualSplit:
    """Build the phi1/phi2 splitting of the dual for the given loss.

    Linear terms always live in phi1; boxes and l1 terms in phi2. The
    logistic loss keeps its whole (domain-restricted) conjugate term in
    phi1 with phi2 = 0, and starts iterations at the domain center.
    """
    y = spec.check_labels(y)
    n = y.size
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    if spec.kind in ("square", "huber"):

        def phi1_value(a, y=y, g=gamma):
            return float(np.sum(a**2) / (2 * g) - y @ a)

        def phi1_grad(a, y=y, g=gamma):
            return a / g - y

        def phi1_delta(a, c, d, y=y, g=gamma):
            # quadratic difference via the bilinear identity, exact in d
            return float(d @ (a + c)) / (2 * g) - float(y @ d)

    elif spec.kind in ("eps_insensitive", "hinge"):

        def phi1_value(a, y=y):
            return float(-(y @ a))

        def phi1_grad(a, y=y):
            return -y

        def phi1_delta(a, c, d, y=y):
            return -float(y @ d)

    else:  # logistic: the full conjugate term, restricted to y_i a_i in ]0, gamma[
        # The conjugate itself is finite on the closed box, but its gradient
        # blows up at the boundary; reporting +inf there makes the linesearch
        # back off and keeps iterates strictly interior.

        def phi1_value(a, spec=spec, y=y, g=gamma):
            s = -y * a / g
            if np.any(s <= -1.0) or np.any(s >= 0.0):
                return np.inf
            return g * float(np.sum(_psi_star(spec, s)))

        def phi1_grad(a, y=y, g=gamma):
            s = -y * a / g
            if np.any(s <= -1.0) or np.any(s >= 0.0):
                raise FloatingPointError("logistic dual gradient at domain boundary")
            return -y * (np.log1p(s) - np.log(-s))

        def phi1_delta(a, c, d, _value=phi1_value):
            return _value(c) - _value(a)

    mu = 1.0 / gamma if spec.kind == "square" else (4.0 / gamma if spec.kind == "logistic" else 0.0)
    alpha0 = 0.5 * gamma * y if spec.kind == "logistic" else np.zeros(n)
    return DualSplit(
        loss=spec,
        y=y,
        gamma=gamma,
        phi1_value=phi1_value,
        phi1_grad=phi1_grad,
        phi1_delta=phi1_delta,
        prox=lambda v, lam: phi2_prox(spec, y, v, lam, gamma),
        phi2_value=lambda a: _phi2_value(spec, y, np.asarray(a, dtype=float), gamma),
        mu=mu,
        xi=xi_vector(spec, y),
        alpha0=alpha0,
    )


def _psi_subdiff(spec: LossSpec, r: np.ndarray):
    """Subdifferential of psi at r as an interval [lo, hi], widened to the
    full interval within ``_KINK_TOL`` of each kink."""
    k = _KINK_TOL
    if spec.kind == "square":
        return r, r
    if spec.kind == "huber":
        d = np.clip(r, -spec.rho, spec.rho)
        return d, d
    if spec.kind == "logistic":
        d = -1.0 / (1.0 + np.exp(r))
        return d, d
    if spec.kind == "hinge":
        lo = np.where(r < 1.0 + k, -1.0, 0.0)
        hi = np.where(r > 1.0 - k, 0.0, -1.0)
        return lo, hi
    e = spec.eps  # eps_insensitive: kinks at +-eps
    lo = np.where(r < -e + k, -1.0, np.where(r < e - k, 0.0, np.where(r <= e + k, 0.0, 1.0)))
    hi = np.where(r < -e - k, -1.0, np.where(r <= -e + k, 0.0, np.where(r < e - k, 0.0, 1.0)))
    return lo, hi


def loss_subdifferential(spec: LossSpec, y, t):
    """Interval [lo, hi] of the subdifferential of L(y, .) at t."""
    y, t = _assert_scalar_shapes(y, t)
    spec.check_labels(y)
    if spec.is_margin:
        lo, hi = _psi_subdiff(spec, y * t)
        lo, hi = y * lo, y * hi
    else:
        lo, hi = _psi_subdiff(spec, y - t)
        lo, hi = -hi, -lo
    return np.minimum(lo, hi), np.maximum(lo, hi)
