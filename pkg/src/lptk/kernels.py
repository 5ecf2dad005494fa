"""Tensor kernels, Gram tensors, feature operators, and quartic forms.

A tensor kernel of arity q is ``K(x1, ..., xq) = sum(phi(x1) * ... * phi(xq))``
for some feature map phi. For q = 4 the Gram tensor over n training points
matricizes to a symmetric n^2 x n^2 matrix, which turns the gradient of the
dual quartic form into a single matrix-vector product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .duality import duality_map, lp_norm

__all__ = [
    "TensorKernelSpec",
    "GramTensor",
    "FeatureOperator",
    "GramSizeError",
    "UnsupportedArityError",
    "MultiplyCounter",
    "kernel_eval",
    "feature_map_poly2",
    "poly2_feature_matrix",
    "poly2_dim",
    "build_gram",
    "quartic_value",
    "quartic_gradient",
    "quartic_value_and_gradient",
    "kernel_predict",
    "feature_dual_gradient",
    "feature_qform_value",
    "feature_qform_value_and_gradient",
    "rkbs_norm",
]

_KIND_CODES = {"linear": 0, "polynomial": 1, "exponential": 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

_GRAM_MAGIC = b"LPTKGRAM"
_GRAM_VERSION = 1


class GramSizeError(ValueError):
    """Raised when a Gram build would exceed the dense-storage cap."""


class UnsupportedArityError(ValueError):
    """Raised when a kernelized operation needs an arity other than 4."""


@dataclass
class MultiplyCounter:
    """Tally of scalar multiplications, split by operation."""

    gradient: int = 0
    value: int = 0
    build: int = 0

    def total(self) -> int:
        return self.gradient + self.value + self.build


@dataclass(frozen=True)
class TensorKernelSpec:
    """Kernel kind plus arity. ``degree`` only applies to polynomial kind."""

    kind: str = "linear"
    degree: int = 1
    q: int = 4

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {self.degree}")
        if self.q < 4 or self.q % 2 != 0:
            raise ValueError(f"tensor-kernel arity must be an even integer >= 4, got {self.q}")

    def apply(self, base):
        """Map the product-sum ``sum(x1 * ... * xq)`` to the kernel value."""
        if self.kind == "linear":
            return base
        if self.kind == "polynomial":
            return base**self.degree
        return np.exp(base)

    @property
    def has_finite_features(self) -> bool:
        return self.kind in ("linear", "polynomial")


def kernel_eval(spec: TensorKernelSpec, points) -> float:
    """Evaluate the tensor kernel at q points of equal dimension."""
    pts = [np.asarray(p, dtype=float).ravel() for p in points]
    if len(pts) != spec.q:
        raise ValueError(f"expected {spec.q} points, got {len(pts)}")
    d = pts[0].size
    for p in pts[1:]:
        if p.size != d:
            raise ValueError("all points must have the same dimension")
    prod = pts[0].copy()
    for p in pts[1:]:
        prod *= p
    return float(spec.apply(np.sum(prod)))


def poly2_dim(d: int) -> int:
    """Feature dimension of the degree-2 polynomial map: d(d+1)/2."""
    return d * (d + 1) // 2


def feature_map_poly2(x, q: int = 4) -> np.ndarray:
    """Degree-2 polynomial feature map.

    Ordering: the d squares ``x_j^2`` first, then the pairs
    ``2^(1/q) * x_i x_j`` for i < j in lexicographic order. The 2^(1/q)
    weight makes the q-fold product-sum of features equal the degree-2
    polynomial tensor kernel.
    """
    x = np.asarray(x, dtype=float).ravel()
    i, j = np.triu_indices(x.size, k=1)
    return np.concatenate([x**2, 2.0 ** (1.0 / q) * x[i] * x[j]])


def poly2_feature_matrix(X, q: int = 4) -> np.ndarray:
    """Row-wise :func:`feature_map_poly2` of an n x d matrix."""
    X = np.asarray(X, dtype=float)
    i, j = np.triu_indices(X.shape[1], k=1)
    return np.concatenate([X**2, 2.0 ** (1.0 / q) * X[:, i] * X[:, j]], axis=1)


@dataclass(frozen=True)
class FeatureOperator:
    """The linear map w -> (<phi(x_i), w>)_i as an explicit n x N matrix."""

    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ w

    def adjoint(self, alpha: np.ndarray) -> np.ndarray:
        """Row combination ``sum_i alpha_i phi(x_i)``."""
        return self.matrix.T @ alpha

    @classmethod
    def identity(cls, X) -> "FeatureOperator":
        return cls(np.asarray(X, dtype=float))

    @classmethod
    def poly2(cls, X, q: int = 4) -> "FeatureOperator":
        return cls(poly2_feature_matrix(X, q=q))


def _pair_indices(n: int):
    """Sorted index pairs (a <= b), their flat positions, and multiplicities."""
    a, b = np.triu_indices(n)
    mult = np.where(a == b, 1.0, 2.0)
    return a, b, a * n + b, b * n + a, mult


@dataclass(frozen=True)
class GramTensor:
    """Order-4 Gram tensor stored as its symmetric n^2 x n^2 matricization.

    ``matricized[i1*n + i2, i3*n + i4] = K(x_i1, x_i2, x_i3, x_i4)``.
    """

    n: int
    matricized: np.ndarray
    kernel: TensorKernelSpec
    build_evals: int = 0
    points: np.ndarray | None = field(default=None, compare=False)

    @cached_property
    def _tri(self):
        return _pair_indices(self.n)

    @cached_property
    def _tri_block(self) -> np.ndarray:
        """The P x P block over sorted pairs, P = n(n+1)/2.

        Because the tensor is invariant under swapping within each index
        pair, this block carries the whole matricization; the quartic
        value and gradient only ever multiply against it.
        """
        _, _, flat_ab, _, _ = self._tri
        return self.matricized[np.ix_(flat_ab, flat_ab)]

    def save(self, path) -> None:
        """Flat binary dump: header then n^4 little-endian float64."""
        header = _GRAM_MAGIC + struct.pack(
            "<IQII",
            _GRAM_VERSION,
            self.n,
            _KIND_CODES[self.kernel.kind],
            self.kernel.degree,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.matricized, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GramTensor":
        raw = Path(path).read_bytes()
        if raw[:8] != _GRAM_MAGIC:
            raise ValueError(f"{path}: not a Gram tensor file")
        version, n, kind_code, degree = struct.unpack("<IQII", raw[8:28])
        if version != _GRAM_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        mat = np.frombuffer(raw[28:], dtype="<f8").astype(float)
        if mat.size != n**4:
            raise ValueError(f"{path}: expected {n**4} entries, found {mat.size}")
        spec = TensorKernelSpec(kind=_CODE_KINDS[kind_code], degree=degree, q=4)
        return cls(n=int(n), matricized=mat.reshape(n * n, n * n), kernel=spec)


def build_gram(points, spec: TensorKernelSpec, max_n: int = 150) -> GramTensor:
    """Build the order-4 Gram tensor of ``spec`` at the given points.

    Every entry is a function of the inner product of two Hadamard pair
    products, so only the block over sorted pairs (n(n+1)/2 per side) is
    evaluated; the rest is filled by pair-swap symmetry. The evaluation
    count is exactly n^2 (n+1)^2 / 4.
    """
    if spec.q != 4:
        raise UnsupportedArityError(
            f"Gram construction is kernelized only for arity 4, got q={spec.q}"
        )
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = X.shape[0]
    if n > max_n:
        raise GramSizeError(
            f"n={n} exceeds the dense Gram cap ({max_n}): the matricized tensor "
            f"would hold {n**4} float64 entries (~{8 * n**4 / 2**30:.1f} GiB). "
            "Use the feature-map path or raise max_n explicitly."
        )
    a, b, flat_ab, flat_ba, _ = _pair_indices(n)
    Z = X[a] * X[b]  # P x d rows of Hadamard pair products
    block = spec.apply(Z @ Z.T)
    evals = block.shape[0] ** 2

    mat = np.empty((n * n, n * n), dtype=float)
    for rows in (flat_ab, flat_ba):
        for cols in (flat_ab, flat_ba):
            mat[np.ix_(rows, cols)] = block
    gram = GramTensor(n=n, matricized=mat, kernel=spec, build_evals=evals, points=X)
    gram.__dict__["_tri_block"] = block
    return gram


def _pair_weights(g: GramTensor, alpha: np.ndarray) -> np.ndarray:
    """Multiplicity-weighted entries of alpha (x) alpha over sorted pairs."""
    a, b, _, _, mult = g._tri
    return mult * alpha[a] * alpha[b]


def quartic_value(g: GramTensor, alpha, counter: MultiplyCounter | None = None) -> float:
    """The quartic dual term ``(1/4) <[alpha (x) alpha], [K][alpha (x) alpha]>``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != g.n:
        raise ValueError(f"alpha has length {alpha.size}, expected {g.n}")
    u = _pair_weights(g, alpha)
    v = g._tri_block @ u
    if counter is not None:
        counter.value += u.size**2 + 2 * u.size
    return 0.25 * float(u @ v)


def quartic_gradient(g: GramTensor, alpha, counter: MultiplyCounter | None = None) -> np.ndarray:
    """Gradient of :func:`quartic_value`: ``reshape([K][a (x) a], n, n) a``.

    Exploits the pair symmetry of both the tensor and alpha (x) alpha, so
    the dominant cost is one P x P matvec with P = n(n+1)/2, i.e. about
    n^2 (n+1)^2 / 4 multiplications per call.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != g.n:
        raise ValueError(f"alpha has length {alpha.size}, expected {g.n}")
    a, b, _, _, _ = g._tri
    u = _pair_weights(g, alpha)
    v = g._tri_block @ u
    B = np.zeros((g.n, g.n))
    B[a, b] = v
    B[b, a] = v
    omega = B @ alpha
    if counter is not None:
        counter.gradient += u.size**2 + g.n**2 + 2 * u.size
    return omega


def quartic_value_and_gradient(
    g: GramTensor, alpha, counter: MultiplyCounter | None = None
) -> tuple[float, np.ndarray]:
    """Value and gradient of the quartic term off a single P x P matvec."""
    val, omega, _, _ = quartic_state(g, alpha, counter)
    return val, omega


def quartic_state(
    g: GramTensor, alpha, counter: MultiplyCounter | None = None
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient, and the pair-space vectors (u, v = [K]u) at alpha."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size != g.n:
        raise ValueError(f"alpha has length {alpha.size}, expected {g.n}")
    a, b, _, _, _ = g._tri
    u = _pair_weights(g, alpha)
    v = g._tri_block @ u
    B = np.zeros((g.n, g.n))
    B[a, b] = v
    B[b, a] = v
    omega = B @ alpha
    if counter is not None:
        counter.gradient += u.size**2 + g.n**2 + 3 * u.size
    return 0.25 * float(u @ v), omega, u, v


def quartic_delta(
    g: GramTensor,
    alpha,
    u: np.ndarray,
    v: np.ndarray,
    cand,
    counter: MultiplyCounter | None = None,
) -> float:
    """``quartic(cand) - quartic(alpha)``, cancellation-free.

    The quartic term is quadratic in the pair vector u, so the difference
    is the exact bilinear form ``(1/4) du^T [K] (u_c + u)`` with
    ``du = u_c - u`` assembled from products of the iterate difference;
    no subtraction of two large values occurs, which keeps the linesearch
    test meaningful down to machine-sized steps.
    """
    alpha = np.asarray(alpha, dtype=float)
    cand = np.asarray(cand, dtype=float)
    a, b, _, _, mult = g._tri
    d = cand - alpha
    du = mult * (cand[a] * d[b] + d[a] * alpha[b])
    v_c = g._tri_block @ (u + du)
    if counter is not None:
        counter.value += u.size**2 + 4 * u.size
    return 0.25 * float(du @ (v_c + v))


def kernel_predict(points, alpha, x, spec: TensorKernelSpec) -> float:
    """Predict at x from dual coefficients via the representer sum.

    ``sum_{i1,i2,i3} K(x_i1, x_i2, x_i3, x) alpha_i1 alpha_i2 alpha_i3``,
    reduced to sorted triples with multinomial multiplicities (O(n^3)
    kernel evaluations).
    """
    if spec.q != 4:
        raise UnsupportedArityError(
            f"kernelized prediction requires arity 4, got q={spec.q}"
        )
    X = np.atleast_2d(np.asarray(points, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != X.shape[1]:
        raise ValueError("x must match the training dimension")
    n = X.shape[0]
    i, j = np.triu_indices(n)
    t1 = np.repeat(i, [n - v for v in j])  # sorted triples i <= j <= k
    t2 = np.repeat(j, [n - v for v in j])
    t3 = np.concatenate([np.arange(v, n) for v in j]) if n else np.array([], int)
    # permutations of a multiset of size 3: 6 distinct, 3 one repeat, 1 all equal
    mult = np.where(
        (t1 == t2) & (t2 == t3), 1.0, np.where((t1 == t2) | (t2 == t3) | (t1 == t3), 3.0, 6.0)
    )
    total = 0.0
    chunk = max(1, 2_000_000 // max(1, X.shape[1]))
    for s in range(0, t1.size, chunk):
        sl = slice(s, s + chunk)
        base = (X[t1[sl]] * X[t2[sl]] * X[t3[sl]]) @ x
        total += float(
            np.sum(mult[sl] * spec.apply(base) * alpha[t1[sl]] * alpha[t2[sl]] * alpha[t3[sl]])
        )
    return total


def feature_dual_gradient(
    phi: FeatureOperator, alpha, q: float, counter: MultiplyCounter | None = None
) -> np.ndarray:
    """Gradient of ``(1/q)||Phi* alpha||_q^q`` computed through the feature map.

    Valid for any real q > 2, not only the kernelizable even integers.
    """
    if q <= 2.0:
        raise ValueError(f"q must exceed 2, got {q}")
    u = phi.adjoint(np.asarray(alpha, dtype=float))
    grad = phi.apply(duality_map(u, q))
    if counter is not None:
        counter.gradient += 2 * phi.n * phi.dim + phi.dim
    return grad


def feature_qform_value(
    phi: FeatureOperator, alpha, q: float, counter: MultiplyCounter | None = None
) -> float:
    """The dual leading term ``(1/q)||Phi* alpha||_q^q`` via the feature map."""
    u = phi.adjoint(np.asarray(alpha, dtype=float))
    if counter is not None:
        counter.value += phi.n * phi.dim + phi.dim
    return lp_norm(u, q) ** q / q


def feature_qform_value_and_gradient(
    phi: FeatureOperator, alpha, q: float, counter: MultiplyCounter | None = None
) -> tuple[float, np.ndarray]:
    """Value and gradient of the q-form sharing the adjoint product."""
    val, grad, _ = feature_qform_state(phi, alpha, q, counter)
    return val, grad


def feature_qform_state(
    phi: FeatureOperator, alpha, q: float, counter: MultiplyCounter | None = None
) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient, and the feature-space vector u = Phi* alpha."""
    if q <= 2.0:
        raise ValueError(f"q must exceed 2, got {q}")
    u = phi.adjoint(np.asarray(alpha, dtype=float))
    grad = phi.apply(duality_map(u, q))
    if counter is not None:
        counter.gradient += 2 * phi.n * phi.dim + 2 * phi.dim
    return lp_norm(u, q) ** q / q, grad, u


def _signed_pow_diff_sum(u: np.ndarray, du: np.ndarray, q: float) -> float:
    """``sum_j |u_j + du_j|^q - |u_j|^q`` with per-term relative accuracy.

    Terms with a small relative perturbation go through
    ``|u|^q expm1(q log1p(du/u))`` so the result scales with the true
    difference instead of with the summands.
    """
    u = np.asarray(u, dtype=float)
    du = np.asarray(du, dtype=float)
    out = 0.0
    small = (np.abs(du) <= 0.5 * np.abs(u)) & (du != 0.0)
    if np.any(small):
        us, dus = u[small], du[small]
        out += float(np.sum(np.abs(us) ** q * np.expm1(q * np.log1p(dus / us))))
    big = ~small & (du != 0.0)
    if np.any(big):
        ub, dub = u[big], du[big]
        out += float(np.sum(np.abs(ub + dub) ** q - np.abs(ub) ** q))
    return out


def feature_qform_delta(
    phi: FeatureOperator,
    u: np.ndarray,
    diff: np.ndarray,
    q: float,
    counter: MultiplyCounter | None = None,
) -> float:
    """``qform(alpha + diff) - qform(alpha)`` given u = Phi* alpha.

    Computed from the feature-space increment Phi* diff so the noise
    floor follows the step size rather than the objective magnitude.
    """
    du = phi.adjoint(np.asarray(diff, dtype=float))
    if counter is not None:
        counter.value += phi.n * phi.dim + phi.dim
    return _signed_pow_diff_sum(u, du, q) / q


def rkbs_norm(op, alpha, exps) -> float:
    """Norm of the represented function ``<J_q(Phi* alpha), phi(.)>``.

    Equals ``||w||_p`` for ``w = J_q(Phi* alpha)``, and is computable from
    the Gram tensor alone as the q-form raised to 1/p.
    """
    if isinstance(op, GramTensor):
        return float((4.0 * quartic_value(op, alpha)) ** (1.0 / exps.p))
    return float((exps.q * feature_qform_value(op, alpha, exps.q)) ** (1.0 / exps.p))
