"""QDA, ridge-regularised QDA, SR-QDA and a k-nearest-neighbour baseline.

Every model exposes ``scores(X)`` (discriminant values, positive means class 0),
``predict(X)`` and ``priors``. A score of exactly zero goes to class 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fisher
from .model import (EigenSummary, FitError, LabeledDataset, align_signs, class_moments, make_rng,
                    symmetric_eigen)
from .spikes import (SpikeCounts, SpikeEstimates, detect_spike_counts, estimate_class_spectrum,
                     estimate_pair)

log = logging.getLogger(__name__)

RQDA_GAMMA_GRID = tuple(10 ** (i / 10) for i in range(-10, 11))


@dataclass(frozen=True)
class DiscriminantScore:
    value: float
    predicted_class: int


def _decide(values: np.ndarray) -> np.ndarray:
    return np.where(values > 0, 0, 1).astype(np.int64)


def _check_dim(x: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x2 = x.reshape(1, -1) if x.ndim == 1 else x
    if x2.ndim != 2 or x2.shape[1] != p:
        raise ValueError(f"expected {p} features, got shape {x.shape}")
    return x2


def _resolve_priors(data: LabeledDataset, priors) -> tuple[float, float]:
    if priors is None:
        n0, n1 = data.counts()
        return n0 / data.n, n1 / data.n
    pi0, pi1 = float(priors[0]), float(priors[1])
    if pi0 <= 0 or pi1 <= 0 or abs(pi0 + pi1 - 1) > 1e-12:
        raise ValueError("priors must be positive and sum to 1")
    return pi0, pi1


class _Scored:
    priors: tuple[float, float]

    def scores(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _decide(self.scores(x))

    def score_one(self, x: np.ndarray) -> DiscriminantScore:
        v = float(self.scores(x)[0])
        return DiscriminantScore(v, 0 if v > 0 else 1)


# ---------------------------------------------------------------- QDA

@dataclass(frozen=True)
class QdaModel(_Scored):
    means: np.ndarray           # 2 x p
    inverses: np.ndarray        # 2 x p x p (pseudo-inverse when singular)
    log_dets: tuple[float, float]
    priors: tuple[float, float]
    ranks: tuple[int, int] = (0, 0)

    @property
    def p(self) -> int:
        return self.means.shape[1]

    @property
    def eta(self) -> float:
        return -0.5 * (self.log_dets[0] - self.log_dets[1]) - np.log(self.priors[1] / self.priors[0])

    def scores(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.p)
        q = []
        for i in (0, 1):
            w = x - self.means[i]
            q.append(np.einsum("ij,jk,ik->i", w, self.inverses[i], w))
        return self.eta - 0.5 * q[0] + 0.5 * q[1]


def pseudo_inverse(cov: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Eigenvalue-thresholded pseudo-inverse and log pseudo-determinant.

    Eigenvalues at or below ``p * eps * l_max`` are discarded.
    """
    eig = symmetric_eigen(cov)
    p = cov.shape[0]
    top = max(float(eig.values[0]), 0.0)
    keep = eig.values > p * np.finfo(float).eps * top
    if not np.any(keep):
        raise FitError("covariance is numerically zero")
    u = eig.vectors[:, keep]
    inv = (u / eig.values[keep]) @ u.T
    return inv, float(np.sum(np.log(eig.values[keep]))), int(keep.sum())


def fit_qda(data: LabeledDataset, priors=None) -> QdaModel:
    pri = _resolve_priors(data, priors)
    means, invs, dets, ranks = [], [], [], []
    for i in (0, 1):
        mom = class_moments(data, i)
        inv, ld, rank = pseudo_inverse(mom.covariance)
        if rank < data.p:
            log.debug("class %d covariance has rank %d < p=%d; using pseudo-inverse", i, rank, data.p)
        means.append(mom.mean)
        invs.append(inv)
        dets.append(ld)
        ranks.append(rank)
    return QdaModel(np.array(means), np.array(invs), (dets[0], dets[1]), pri, (ranks[0], ranks[1]))


def oracle_qda(mean0, cov0, mean1, cov1, priors=(0.5, 0.5)) -> QdaModel:
    """QDA rule built from known population parameters."""
    invs, dets = [], []
    for cov in (cov0, cov1):
        sign, ld = np.linalg.slogdet(cov)
        if sign <= 0:
            raise ValueError("population covariance must be positive definite")
        invs.append(np.linalg.inv(cov))
        dets.append(float(ld))
    p = len(mean0)
    return QdaModel(np.array([mean0, mean1], float), np.array(invs), (dets[0], dets[1]),
                    (float(priors[0]), float(priors[1])), (p, p))


def qda_score(model: QdaModel, x: np.ndarray) -> DiscriminantScore:
    return model.score_one(x)


# ---------------------------------------------------------------- R-QDA

@dataclass(frozen=True)
class RqdaModel(_Scored):
    means: np.ndarray                 # 2 x p
    eigen: tuple[EigenSummary, EigenSummary]
    gamma: float
    priors: tuple[float, float]
    eta_form: str = "literal"

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def log_det_h(self, i: int) -> float:
        return float(-np.sum(np.log1p(self.gamma * np.maximum(self.eigen[i].values, 0.0))))

    @property
    def eta(self) -> float:
        ratio = self.log_det_h(0) - self.log_det_h(1)
        # literal: -1/2 log(|H0|/|H1|); "bayes" treats H as a precision estimate
        sign = -0.5 if self.eta_form == "literal" else 0.5
        return sign * ratio - np.log(self.priors[1] / self.priors[0])

    def ridge_operator(self, i: int) -> np.ndarray:
        e = self.eigen[i]
        return (e.vectors / (1 + self.gamma * np.maximum(e.values, 0.0))) @ e.vectors.T

    def scores(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.p)
        q = []
        for i in (0, 1):
            e = self.eigen[i]
            proj = (x - self.means[i]) @ e.vectors
            q.append(np.sum(proj ** 2 / (1 + self.gamma * np.maximum(e.values, 0.0)), axis=1))
        return self.eta - 0.5 * q[0] + 0.5 * q[1]


def _rqda_from_parts(means, eigs, gamma, priors, eta_form) -> RqdaModel:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if eta_form not in ("literal", "bayes"):
        raise ValueError(f"unknown eta_form {eta_form!r}")
    return RqdaModel(np.asarray(means), (eigs[0], eigs[1]), float(gamma), priors, eta_form)


def fit_rqda(data: LabeledDataset, gamma: float, priors=None, eta_form: str = "literal") -> RqdaModel:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    pri = _resolve_priors(data, priors)
    moms = [class_moments(data, i) for i in (0, 1)]
    eigs = [symmetric_eigen(m.covariance) for m in moms]
    return _rqda_from_parts([m.mean for m in moms], eigs, gamma, pri, eta_form)


def stratified_folds(labels: np.ndarray, folds: int, rng_seed) -> list[np.ndarray]:
    """Validation index sets; each class is shuffled and dealt into ``folds`` parts."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else make_rng(rng_seed)
    parts: list[list[np.ndarray]] = [[] for _ in range(folds)]
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        for k, chunk in enumerate(np.array_split(idx, folds)):
            parts[k].append(chunk)
    return [np.sort(np.concatenate(p)) for p in parts]


def select_rqda_gamma(data: LabeledDataset, candidates=RQDA_GAMMA_GRID, folds: int = 5,
                      rng_seed: int = 0, priors=None, eta_form: str = "literal") -> float:
    """Stratified k-fold CV accuracy maximiser; ties go to the smallest candidate."""
    cands = np.sort(np.asarray(candidates, dtype=float))
    if cands.shape[0] < 2:
        raise ValueError("need at least 2 candidates")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if np.any(cands <= 0):
        raise ValueError("candidates must be positive")
    acc = np.zeros(cands.shape[0])
    for val_idx in stratified_folds(data.labels, folds, rng_seed):
        mask = np.ones(data.n, dtype=bool)
        mask[val_idx] = False
        train, val = data.subset(np.flatnonzero(mask)), data.subset(val_idx)
        if min(val.counts()) == 0 or min(train.counts()) < 2:
            raise FitError("a cross-validation fold is missing a class")
        pri = _resolve_priors(train, priors)
        moms = [class_moments(train, i) for i in (0, 1)]
        eigs = [symmetric_eigen(m.covariance) for m in moms]
        for k, g in enumerate(cands):
            model = _rqda_from_parts([m.mean for m in moms], eigs, g, pri, eta_form)
            acc[k] += np.mean(model.predict(val.features) == val.labels)
    return float(cands[int(np.argmax(acc))])


def rqda_score(model: RqdaModel, x: np.ndarray) -> DiscriminantScore:
    return model.score_one(x)


# ---------------------------------------------------------------- SR-QDA

@dataclass(frozen=True)
class SrqdaModel(_Scored):
    means: np.ndarray                         # 2 x p
    vectors: tuple[np.ndarray, np.ndarray]    # spike eigenvectors per class, lower-then-upper
    sigma_sq: tuple[float, float]
    shrink: tuple[np.ndarray, np.ndarray]     # per-class shrinkage coefficients
    priors: tuple[float, float]
    gamma_star: fisher.GammaParams | None = None
    omega_star: fisher.OmegaParams | None = None
    objective: float = float("nan")
    estimates: tuple[SpikeEstimates, SpikeEstimates] | None = field(default=None, compare=False)
    diagnostics: tuple[str, ...] = ()

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def log_det_inverse(self, i: int) -> float:
        return float(-self.p * np.log(self.sigma_sq[i]) + np.sum(np.log(np.abs(1 - self.shrink[i]))))

    @property
    def eta(self) -> float:
        return (-0.5 * (self.log_det_inverse(1) - self.log_det_inverse(0))
                - np.log(self.priors[1] / self.priors[0]))

    def quad(self, x: np.ndarray, i: int) -> np.ndarray:
        w = x - self.means[i]
        proj = w @ self.vectors[i]
        return (np.sum(w ** 2, axis=1) - proj ** 2 @ self.shrink[i]) / self.sigma_sq[i]

    def inverse_dense(self, i: int) -> np.ndarray:
        u = self.vectors[i]
        return (np.eye(self.p) - (u * self.shrink[i]) @ u.T) / self.sigma_sq[i]

    def scores(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.p)
        return self.eta - 0.5 * self.quad(x, 0) + 0.5 * self.quad(x, 1)


@dataclass(frozen=True)
class SrqdaSettings:
    grid_resolution: int = 20
    refine_resolution: int = 10
    use_corrected: bool = True
    b_form: str = "angle"
    component_form: str = "derived"
    alpha_fallback: bool = True
    safety_margin: float = 0.10
    delta_omega: float = fisher.DELTA_OMEGA
    isotropic_variance: bool = False


def fit_srqda(data: LabeledDataset, counts=None, priors=None, grid_resolution: int | None = None,
              settings: SrqdaSettings = SrqdaSettings()) -> SrqdaModel:
    """Fit SR-QDA; ``counts`` is a pair of :class:`SpikeCounts` or ``None``/"auto" for detection."""
    if grid_resolution is not None:
        settings = SrqdaSettings(**{**settings.__dict__, "grid_resolution": grid_resolution})
    pri = _resolve_priors(data, priors)
    n = data.counts()
    if min(n) < 4:
        raise FitError(f"SR-QDA needs at least 4 samples per class, got {n}")
    moms = [class_moments(data, i) for i in (0, 1)]
    mu_hat = moms[0].mean - moms[1].mean
    eigs = [align_signs(symmetric_eigen(m.covariance), mu_hat) for m in moms]
    if counts is None or counts == "auto":
        counts = tuple(detect_spike_counts(eigs[i], n[i], settings.safety_margin) for i in (0, 1))
    specs = [estimate_class_spectrum(eigs[i], counts[i], n[i]) for i in (0, 1)]
    est = estimate_pair(mu_hat, eigs[0], eigs[1], specs[0], specs[1], n[0], n[1],
                        use_corrected=settings.use_corrected, b_form=settings.b_form,
                        alpha_fallback=settings.alpha_fallback)
    diag = tuple(f"class {i}: {d}" for i in (0, 1) for d in est[i].dropped)
    for d in diag:
        log.info(d)
    q = fisher.plugin_quantities(est[0], est[1], data.p, n[0], n[1], pri[0],
                                 use_corrected=settings.use_corrected, form=settings.component_form)
    res = fisher.optimize_omega(q, settings.grid_resolution, settings.refine_resolution,
                                settings.delta_omega, settings.isotropic_variance)
    coeffs = fisher.shrinkage_coefficients(res.gamma, q)
    s = q.sigma_sq
    vectors = tuple(np.ascontiguousarray(eigs[i].vectors[:, est[i].eigen_index]) for i in (0, 1))
    return SrqdaModel(np.array([m.mean for m in moms]), vectors, (float(s[0]), float(s[1])),
                      (coeffs.block(0).copy(), coeffs.block(1).copy()), pri, res.gamma, res.omega,
                      res.value, est, diag)


def srqda_score(model: SrqdaModel, x: np.ndarray) -> DiscriminantScore:
    return model.score_one(x)


# ---------------------------------------------------------------- KNN

@dataclass(frozen=True)
class KnnModel(_Scored):
    features: np.ndarray
    labels: np.ndarray
    k: int
    priors: tuple[float, float]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def scores(self, x: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Class-0 votes minus class-1 votes among the k nearest training points."""
        x = _check_dim(x, self.p)
        out = np.empty(x.shape[0])
        sq = np.sum(self.features ** 2, axis=1)
        for s in range(0, x.shape[0], chunk):
            xb = x[s:s + chunk]
            d = sq[None, :] - 2 * xb @ self.features.T + np.sum(xb ** 2, axis=1)[:, None]
            # stable sort: equal distances keep the lower training index first
            nn = np.argsort(d, axis=1, kind="stable")[:, :self.k]
            ones = np.sum(self.labels[nn], axis=1)
            out[s:s + chunk] = (self.k - ones) - ones
        return out


def fit_knn(data: LabeledDataset, k: int) -> KnnModel:
    if k < 1 or k > data.n:
        raise ValueError(f"k must lie in [1, {data.n}], got {k}")
    return KnnModel(data.features, data.labels, int(k), _resolve_priors(data, None))


def knn_predict(model: KnnModel, x: np.ndarray) -> np.ndarray:
    return model.predict(x)


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class EvaluationResult:
    class_errors: tuple[float, float]
    global_error: float

    @property
    def accuracy(self) -> float:
        return 1.0 - self.global_error


def evaluate(model, test: LabeledDataset) -> EvaluationResult:
    pred = model.predict(test.features)
    errs = []
    for i in (0, 1):
        mask = test.labels == i
        if not np.any(mask):
            raise ValueError(f"test set has no class-{i} samples")
        errs.append(float(np.mean(pred[mask] != i)))
    pi0, pi1 = model.priors
    return EvaluationResult((errs[0], errs[1]), pi0 * errs[0] + pi1 * errs[1])


def fit_method(method: str, data: LabeledDataset, *, priors=None, counts=None, seed: int = 0,
               rqda_candidates=RQDA_GAMMA_GRID, rqda_folds: int = 5, rqda_eta_form: str = "literal",
               srqda: SrqdaSettings = SrqdaSettings(), knn_k: int = 1):
    """Dispatch by method name: qda, rqda, srqda or knn."""
    if method == "qda":
        return fit_qda(data, priors)
    if method == "rqda":
        g = select_rqda_gamma(data, rqda_candidates, rqda_folds, seed, priors, rqda_eta_form)
        return fit_rqda(data, g, priors, rqda_eta_form)
    if method == "srqda":
        return fit_srqda(data, counts, priors, settings=srqda)
    if method == "knn":
        return fit_knn(data, knn_k)
    raise ValueError(f"unknown method {method!r}")
