"""Core data types, symmetric eigendecomposition and spiked Gaussian sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FitError(ValueError):
    """Raised when a classifier or estimator cannot be fit on the given data."""


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {x.shape}")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels must be a vector with one entry per row")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if x.shape[1] < 1:
            raise ValueError("need at least one feature")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        x.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def class_rows(self, class_index: int) -> np.ndarray:
        return self.features[self.labels == class_index]

    def counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.features[idx], self.labels[idx])

    @classmethod
    def from_classes(cls, x0: np.ndarray, x1: np.ndarray) -> "LabeledDataset":
        x = np.vstack([x0, x1])
        y = np.concatenate([np.zeros(len(x0), dtype=np.int64), np.ones(len(x1), dtype=np.int64)])
        return cls(x, y)


@dataclass(frozen=True)
class SpikedCovarianceSpec:
    """Population parameters of one class: sigma^2 (I + sum_j lambda_j v_j v_j^T), mean mu.

    ``directions`` holds the upper-spike directions first, then the lower ones,
    in the same order as ``spikes_upper`` and ``spikes_lower``.
    """

    sigma_sq: float
    spikes_upper: tuple[float, ...]
    spikes_lower: tuple[float, ...]
    directions: np.ndarray
    mean: np.ndarray

    def __post_init__(self):
        up = tuple(float(v) for v in self.spikes_upper)
        lo = tuple(float(v) for v in self.spikes_lower)
        v = np.asarray(self.directions, dtype=float)
        mu = np.asarray(self.mean, dtype=float).ravel()
        if self.sigma_sq <= 0:
            raise ValueError("sigma_sq must be positive")
        if any(s <= 0 for s in up):
            raise ValueError("upper spikes must be strictly positive")
        if any(not (-1.0 < s < 0.0) for s in lo):
            raise ValueError("lower spikes must lie in (-1, 0)")
        if v.ndim != 2 or v.shape[1] != len(up) + len(lo):
            raise ValueError("directions must be p x (r1 + r2)")
        if v.shape[0] != mu.shape[0]:
            raise ValueError("mean length must equal p")
        if v.shape[1] and not np.allclose(v.T @ v, np.eye(v.shape[1]), atol=1e-10, rtol=0):
            raise ValueError("directions must be orthonormal")
        object.__setattr__(self, "spikes_upper", up)
        object.__setattr__(self, "spikes_lower", lo)
        object.__setattr__(self, "directions", _frozen(v))
        object.__setattr__(self, "mean", _frozen(mu))
        object.__setattr__(self, "sigma_sq", float(self.sigma_sq))

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    @property
    def spikes(self) -> np.ndarray:
        return np.array(self.spikes_upper + self.spikes_lower)

    def covariance(self) -> np.ndarray:
        v = self.directions
        return self.sigma_sq * (np.eye(self.p) + (v * self.spikes) @ v.T)


@dataclass(frozen=True)
class EigenSummary:
    values: np.ndarray
    vectors: np.ndarray

    @property
    def p(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ClassMoments:
    mean: np.ndarray
    covariance: np.ndarray
    count: int
    eigen: EigenSummary | None = field(default=None, compare=False)


def class_moments(data: LabeledDataset, class_index: int) -> ClassMoments:
    rows = data.class_rows(class_index)
    n = rows.shape[0]
    if n < 2:
        raise FitError(f"class {class_index} has {n} member(s); need at least 2")
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return ClassMoments(_frozen(mean), _frozen(cov), n)


def symmetric_eigen(m: np.ndarray, tol: float = 1e-10) -> EigenSummary:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    return EigenSummary(_frozen(vals[::-1]), _frozen(vecs[:, ::-1]))


def align_signs(eig: EigenSummary, reference: np.ndarray) -> EigenSummary:
    """Flip eigenvectors so their inner product with ``reference`` is nonnegative."""
    dots = reference @ eig.vectors
    signs = np.where(dots < 0, -1.0, 1.0)
    return EigenSummary(eig.values, _frozen(eig.vectors * signs))


def spiked_sqrt(spec: SpikedCovarianceSpec) -> np.ndarray:
    v = spec.directions
    factors = np.sqrt(1.0 + spec.spikes) - 1.0
    return np.sqrt(spec.sigma_sq) * (np.eye(spec.p) + (v * factors) @ v.T)


def sample_class(spec: SpikedCovarianceSpec, n: int, rng_seed: int | np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
    z = rng.standard_normal((n, spec.p))
    v = spec.directions
    if v.shape[1]:
        # Sigma^{1/2} z without materialising the p x p root
        z = z + ((z @ v) * (np.sqrt(1.0 + spec.spikes) - 1.0)) @ v.T
    return spec.mean + np.sqrt(spec.sigma_sq) * z


def make_orthonormal_directions(p: int, k: int, rng_seed: int | np.random.Generator) -> np.ndarray:
    """Seeded Gaussian matrix orthonormalised by modified Gram-Schmidt."""
    if k > p:
        raise ValueError(f"cannot draw {k} orthonormal directions in dimension {p}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
    q = rng.standard_normal((p, k))
    for j in range(k):
        # two passes keep orthogonality at machine precision
        for _ in range(2):
            for i in range(j):
                q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
        q[:, j] /= np.linalg.norm(q[:, j])
    return q
