"""Synthetic sparse-regression data and its on-disk format.

Generation is a pure function of the spec (sizes, noise scale, seed): a
Gaussian design matrix, a sparse coefficient vector with randomly located
standard-normal entries, and targets ``y = X w* + sigma * eps``. In poly2
feature mode the degree-2 polynomial feature matrix replaces X when
forming y, and w* lives in the d(d+1)/2-dimensional feature space.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import FeatureOperator, poly2_dim, poly2_feature_matrix
from .randomness import RNG_ALGORITHM, SeededRng

__all__ = ["SyntheticSpec", "Dataset", "generate_sparse_regression"]

_DATA_MAGIC = b"LPTKDATA"
_DATA_VERSION = 1
_MODE_CODES = {"identity": 0, "poly2": 1}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}
_COEF_CODES = {"normal": 0, "unit": 1}
_CODE_COEFS = {v: k for k, v in _COEF_CODES.items()}


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape, sparsity, noise, and seed of a synthetic regression task.

    ``coef_mode`` picks the nonzero-coefficient magnitudes: "normal"
    draws them N(0, 1); "unit" keeps only the signs of the same draws
    (the usual convention for support-recovery figures, where
    sub-threshold magnitudes would make the target ill-posed).
    """

    n: int
    d: int
    k: int
    sigma: float = 0.05
    seed: int = 0
    feature_mode: str = "identity"
    coef_mode: str = "normal"

    def __post_init__(self):
        if self.feature_mode not in _MODE_CODES:
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        if self.coef_mode not in _COEF_CODES:
            raise ValueError(f"unknown coef_mode {self.coef_mode!r}")
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if not (0 <= self.k <= self.coef_dim):
            raise ValueError(f"k={self.k} exceeds the coefficient dimension {self.coef_dim}")

    @property
    def coef_dim(self) -> int:
        return self.d if self.feature_mode == "identity" else poly2_dim(self.d)


@dataclass(frozen=True)
class Dataset:
    """Inputs, targets, and the generating sparse vector (when known)."""

    x: np.ndarray
    y: np.ndarray
    w_true: np.ndarray
    spec: SyntheticSpec

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.w_true)

    def feature_operator(self) -> FeatureOperator:
        if self.spec.feature_mode == "poly2":
            return FeatureOperator.poly2(self.x)
        return FeatureOperator.identity(self.x)

    def save(self, path) -> None:
        """Binary dump: header, then row-major float64 X, y, w*."""
        header = _DATA_MAGIC + struct.pack(
            "<IIIQQQdQ",
            _DATA_VERSION,
            _MODE_CODES[self.spec.feature_mode],
            _COEF_CODES[self.spec.coef_mode],
            self.n,
            self.d,
            self.spec.seed,
            self.spec.sigma,
            self.spec.k,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.x, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.y, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.w_true, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        raw = Path(path).read_bytes()
        if raw[:8] != _DATA_MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        version, mode, coef, n, d, seed, sigma, k = struct.unpack("<IIIQQQdQ", raw[8:60])
        if version != _DATA_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        spec = SyntheticSpec(
            n=int(n), d=int(d), k=int(k), sigma=sigma, seed=int(seed),
            feature_mode=_CODE_MODES[mode], coef_mode=_CODE_COEFS[coef],
        )
        body = np.frombuffer(raw[60:], dtype="<f8").astype(float)
        nx = spec.n * spec.d
        expected = nx + spec.n + spec.coef_dim
        if body.size != expected:
            raise ValueError(f"{path}: expected {expected} floats, found {body.size}")
        x = body[:nx].reshape(spec.n, spec.d)
        y = body[nx : nx + spec.n]
        w = body[nx + spec.n :]
        return cls(x=x, y=y, w_true=w, spec=spec)


def generate_sparse_regression(spec: SyntheticSpec) -> Dataset:
    """Draw a seeded sparse-regression instance.

    Draw order (fixed for reproducibility, stream ``pcg64-polar-v1``):
    X row-major, then the support indices, then the k nonzero
    coefficients, then the noise vector.
    """
    rng = SeededRng(spec.seed)
    x = rng.normal(spec.n * spec.d).reshape(spec.n, spec.d)
    support = rng.choice_without_replacement(spec.coef_dim, spec.k)
    w_true = np.zeros(spec.coef_dim)
    vals = rng.normal(spec.k)
    if spec.coef_mode == "unit":
        vals = np.where(vals >= 0, 1.0, -1.0)
    w_true[support] = vals
    noise = rng.normal(spec.n)
    design = poly2_feature_matrix(x) if spec.feature_mode == "poly2" else x
    y = design @ w_true + spec.sigma * noise
    return Dataset(x=x, y=y, w_true=w_true, spec=spec)

