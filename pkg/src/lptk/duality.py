"""Duality maps, lp norms, and proximity operators of power penalties.

These are the scalar/vector primitives shared by every solver: the
componentwise map ``u -> sign(u)|u|^(r-1)`` (the gradient of
``(1/r)||.||_r^r``), its conjugate-exponent bookkeeping, and the prox of
``lam * (1/r)|.|^r`` which only needs a one-dimensional monotone root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Exponents",
    "duality_map",
    "lp_norm",
    "prox_power",
    "prox_power_vec",
]

_EXP_TOL = 1e-12


@dataclass(frozen=True)
class Exponents:
    """A conjugate exponent pair 1/p + 1/q = 1 with p in (1, 2].

    ``q_even`` marks the pairs (q in {4, 6, 8, ...}) for which the dual
    q-form can be expanded multilinearly and evaluated through a tensor
    kernel; every other pair is only reachable through a finite feature
    map.
    """

    p: float
    q: float
    q_even: bool

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ValueError(f"p must lie in (1, 2], got {self.p}")
        if self.q < 2.0 - _EXP_TOL:
            raise ValueError(f"q must be >= 2, got {self.q}")
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > _EXP_TOL:
            raise ValueError(f"p={self.p} and q={self.q} are not conjugate")
        even = (
            abs(self.q - round(self.q)) <= _EXP_TOL
            and round(self.q) % 2 == 0
            and self.q >= 4.0 - _EXP_TOL
        )
        if self.q_even != even:
            raise ValueError(
                f"q_even={self.q_even} inconsistent with q={self.q}"
            )

    @classmethod
    def from_p(cls, p: float) -> "Exponents":
        p = float(p)
        if not (1.0 < p <= 2.0):
            raise ValueError(f"p must lie in (1, 2], got {p}")
        q = p / (p - 1.0)
        # a decimal like 1.3333333333 means q/(q-1): snap to the integer q
        # and re-derive p so the pair is exactly conjugate
        if abs(q - round(q)) <= 1e-9:
            q = float(round(q))
            p = q / (q - 1.0)
        even = q == round(q) and int(round(q)) % 2 == 0 and q >= 4
        return cls(p=p, q=q, q_even=even)

    @classmethod
    def from_q(cls, q: float) -> "Exponents":
        q = float(q)
        if q < 2.0:
            raise ValueError(f"q must be >= 2, got {q}")
        p = q / (q - 1.0)
        even = abs(q - round(q)) <= _EXP_TOL and int(round(q)) % 2 == 0 and q >= 4
        return cls(p=p, q=q, q_even=even)


def _check_finite(u: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} must be finite")


def duality_map(u, r: float):
    """Componentwise signed power ``sign(u) |u|^(r-1)``.

    This is the gradient of ``(1/r)||.||_r^r``; for conjugate exponents
    the maps with r=p and r=q are mutual inverses.
    """
    if r < 1.0:
        raise ValueError(f"exponent r must be >= 1, got {r}")
    u = np.asarray(u, dtype=float)
    _check_finite(u, "u")
    if r == 2.0:
        return u.copy()
    out = np.zeros_like(u)
    nz = u != 0.0  # short-circuit exact zeros: |0|^(r-1) may hit log(0)
    out[nz] = np.sign(u[nz]) * np.abs(u[nz]) ** (r - 1.0)
    return out


def lp_norm(w, r: float) -> float:
    """The r-norm ``(sum |w_k|^r)^(1/r)``, overflow-safe via max scaling."""
    if r < 1.0:
        raise ValueError(f"exponent r must be >= 1, got {r}")
    w = np.asarray(w, dtype=float)
    _check_finite(w, "w")
    m = np.max(np.abs(w)) if w.size else 0.0
    if m == 0.0:
        return 0.0
    return float(m * np.sum((np.abs(w) / m) ** r) ** (1.0 / r))


def _prox_root_4_3(x_abs: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form prox root for r=4/3 via a depressed cubic.

    With s = t^(1/3), the residual equation t + lam*t^(1/3) = x becomes
    s^3 + lam*s = x. Cardano gives s = cbrt(a) - cbrt(|b|) where a and
    -|b| multiply to -(lam/3)^3 and differ by exactly x; rewriting the
    cube-root difference through the difference-of-cubes identity,
    s = x / (c^2 + c*cb + cb^2), keeps every regime cancellation-free
    (both lam >> x and x >> lam).
    """
    half = x_abs / 2.0
    disc = np.hypot(half, (lam / 3.0) ** 1.5)
    a = half + disc  # the positive root of z^2 - x z - (lam/3)^3
    c = np.cbrt(a)
    cb = (lam / 3.0) / np.where(c > 0.0, c, 1.0)  # cbrt((lam/3)^3 / a)
    denom = c * c + c * cb + cb * cb
    s = x_abs / np.where(denom > 0.0, denom, 1.0)
    # the root lives in [0, x]; the clamp absorbs the final powering noise
    return np.clip(np.where(x_abs > 0.0, s**3, 0.0), 0.0, x_abs)


def _prox_root_newton(x_abs: np.ndarray, lam: float, r: float) -> np.ndarray:
    """Root of t + lam*t^(r-1) = x for t in [0, x], vectorized.

    Solved in the substituted variable s = t^(r-1), where the residual
    equation reads g(s) = s^(1/(r-1)) + lam*s - x. Unlike the root in t
    (which can underflow for r near 1), the s-root is bracketed by the
    well-scaled bound min(x^(r-1), x/lam); g is convex and increasing in
    s, so Newton from the upper end converges monotonically, with a
    bisection fallback. The s-space residual equals the t-space
    optimality residual exactly; target 1e-14 absolute.
    """
    qh = 1.0 / (r - 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        s_hi = np.minimum(x_abs ** (r - 1.0), x_abs / lam)
    s = s_hi.copy()
    lo = np.zeros_like(x_abs)
    hi = s_hi.copy()
    active = x_abs > 0.0
    for _ in range(200):
        if not np.any(active):
            break
        sa = s[active]
        g = sa**qh + lam * sa - x_abs[active]
        done = np.abs(g) <= 1e-14
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(g < 0.0, sa, lo_a)
        hi_a = np.where(g > 0.0, sa, hi_a)
        dg = qh * sa ** (qh - 1.0) + lam
        with np.errstate(invalid="ignore"):
            step = np.where(np.isfinite(dg) & (dg > 0.0), g / dg, 0.0)
        s_new = sa - step
        out_of_bracket = (s_new < lo_a) | (s_new > hi_a)
        s_new = np.where(out_of_bracket, 0.5 * (lo_a + hi_a), s_new)
        stalled = s_new == sa
        lo[active], hi[active] = lo_a, hi_a
        s[active] = s_new
        active[active] = ~(done | stalled)
    # powering s back up multiplies its rounding error by 1/(r-1); the
    # clamp keeps |t| <= |x| exact at extreme magnitudes
    return np.clip(s**qh, 0.0, x_abs)


def prox_power_vec(x, lam: float, r: float):
    """Proximity operator of ``lam * (1/r)||.||_r^r``, componentwise.

    Returns the unique t with ``t + lam*sign(t)|t|^(r-1) = x`` in each
    coordinate; sign(t) = sign(x) and |t| <= |x|.
    """
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    if not (1.0 < r <= 2.0):
        raise ValueError(f"r must lie in (1, 2], got {r}")
    x = np.asarray(x, dtype=float)
    _check_finite(x, "x")
    if r == 2.0:
        return x / (1.0 + lam)
    x_abs = np.abs(x)
    if abs(r - 4.0 / 3.0) <= 1e-12:
        t = _prox_root_4_3(x_abs, lam)
    else:
        t = _prox_root_newton(x_abs, lam, r)
    return np.sign(x) * t


def prox_power(x: float, lam: float, r: float) -> float:
    """Scalar proximity operator of ``lam * (1/r)|.|^r``."""
    return float(prox_power_vec(np.asarray([x], dtype=float), lam, r)[0])
