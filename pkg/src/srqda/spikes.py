"""Random-matrix estimators for spiked covariance models.

Spike magnitudes are always *relative*: a class covariance
``sigma^2 (I + sum_j lambda_j v_j v_j^T)`` has population eigenvalue
``sigma^2 (1 + lambda_j)`` along ``v_j``.

Within a class the spikes are ordered lower block first, then upper block:
``(lambda_{-r2}, ..., lambda_{-1}, lambda_1, ..., lambda_{r1})``. Lower spikes
pair with the smallest sample eigenvalues in that same order, so the lower
block uses eigen-indices ``p - r2, ..., p - 1`` and the upper block ``0, ..., r1 - 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import EigenSummary, FitError

log = logging.getLogger(__name__)

REL_GAP_TOL = 1e-12


class SpikeDetectionError(RuntimeError):
    def __init__(self, message: str, last: "SpikeCounts"):
        super().__init__(message)
        self.last = last


class MeanSeparationError(FitError):
    """The estimated mean separation is too small to estimate alpha at this dimension."""


@dataclass(frozen=True)
class SpikeCounts:
    upper: int
    lower: int

    def __post_init__(self):
        if self.upper < 0 or self.lower < 0:
            raise ValueError("spike counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.upper + self.lower


@dataclass(frozen=True)
class NoiseVarianceEstimate:
    raw: float
    corrected: float
    ratio_c: float


@dataclass(frozen=True)
class SpikeEstimates:
    """Plug-in quantities for one class.

    Arrays are in the class's lower-then-upper spike order. ``psi_hat`` has one
    row per spike of the *other* class and one column per spike of this class.
    """

    counts: SpikeCounts
    lambda_hat: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    psi_hat: np.ndarray
    alpha_inv_hat: float
    noise: NoiseVarianceEstimate
    eigen_index: np.ndarray
    b_clamped: int = 0
    dropped: tuple[str, ...] = field(default=())


def spike_indices(p: int, counts: SpikeCounts) -> np.ndarray:
    lower = np.arange(p - counts.lower, p)
    upper = np.arange(counts.upper)
    return np.concatenate([lower, upper]).astype(int)


def detect_spike_counts(eig: EigenSummary, n: int, safety_margin: float = 0.10,
                        max_iter: int = 20) -> SpikeCounts:
    """Iterated Marchenko-Pastur edge detector.

    Eigenvalues above ``s2 (1 + sqrt(c))^2 (1 + margin)`` count as upper spikes,
    those below ``s2 (1 - sqrt(c))^2 (1 - margin)`` as lower spikes, where ``s2``
    is re-estimated from the non-spiked eigenvalues until the counts stop moving.
    Lower spikes are only looked for when ``p < n - 1`` (otherwise the bottom of
    the spectrum is the exact-zero null space).
    """
    l = eig.values
    p = l.shape[0]
    if p < 4 or n < 4:
        raise ValueError("detect_spike_counts needs p >= 4 and n >= 4")
    c = p / n
    full_rank = p < n - 1
    s2 = float(np.median(l)) if full_rank else float(np.mean(l))
    counts = SpikeCounts(0, 0)
    for _ in range(max_iter):
        hi = s2 * (1 + np.sqrt(c)) ** 2 * (1 + safety_margin)
        upper = int(np.sum(l > hi))
        lower = 0
        if full_rank:
            lo = s2 * (1 - np.sqrt(c)) ** 2 * (1 - safety_margin)
            lower = int(np.sum(l < lo))
        upper = min(upper, p - 1)
        lower = min(lower, p - 1 - upper)
        new = SpikeCounts(upper, lower)
        s2 = noise_variance_raw(eig, new)
        if new == counts:
            return new
        counts = new
    raise SpikeDetectionError(f"spike counts did not stabilise in {max_iter} iterations", counts)


def noise_variance_raw(eig: EigenSummary, counts: SpikeCounts) -> float:
    p = eig.p
    if p <= counts.total:
        raise ValueError(f"p={p} must exceed the number of spikes {counts.total}")
    l = eig.values
    bulk = l[counts.upper:p - counts.lower]
    return float(np.mean(bulk))


def noise_variance_corrected(raw: float, counts: SpikeCounts, lambda_hat, p: int, n: int) -> float:
    """Bias-corrected noise variance ``raw + raw J / (p - r) (r + sum 1/lambda_hat)``."""
    lam = np.asarray(lambda_hat, dtype=float)
    r = counts.total
    if p <= r:
        raise ValueError("p must exceed the number of spikes")
    if lam.shape[0] != r:
        raise ValueError(f"expected {r} spike estimates, got {lam.shape[0]}")
    if np.any(lam == 0):
        raise ValueError("spike estimates must be nonzero")
    if r == 0:
        return float(raw)
    J = p / n
    return float(raw + raw * J / (p - r) * (r + np.sum(1.0 / lam)))


def standardized_noise_statistic(estimate: float, sigma_sq_true: float, counts: SpikeCounts,
                                 p: int, n: int) -> float:
    if sigma_sq_true <= 0:
        raise ValueError("sigma_sq_true must be positive")
    J = p / n
    return float((p - counts.total) / (sigma_sq_true * np.sqrt(2 * J)) * (estimate - sigma_sq_true))


def noise_statistic_bias(sigma_sq: float, lambdas, p: int, n: int) -> float:
    """Asymptotic mean of the uncorrected standardized statistic."""
    lam = np.asarray(lambdas, dtype=float)
    J = p / n
    return float(-np.sqrt(J / 2) * (lam.shape[0] + np.sum(1.0 / lam)))


def spike_forward_map(x: float, J: float) -> float:
    """``x + J x / (x - 1)``: limit of l_j / sigma^2 for a population eigenvalue x sigma^2."""
    if x == 1:
        raise ValueError("spike_forward_map has a pole at x = 1")
    return x + J * x / (x - 1)


def estimate_spiked_eigenvalues(eig: EigenSummary, counts: SpikeCounts, sigma_sq: float,
                                n: int) -> np.ndarray:
    """Consistent spike estimates via the companion Stieltjes transform.

    ``lambda_hat_j = -(1/sigma^2) m(l_j)^{-1} - 1`` with
    ``m(l_j) = -(1 - c)/l_j + (1/n) sum_{k != j} 1/(l_k - l_j)``; the sum runs over
    all p sample eigenvalues.
    """
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    l = eig.values
    p = l.shape[0]
    c = p / n
    idx = spike_indices(p, counts)
    out = np.empty(idx.shape[0])
    scale = max(float(np.max(np.abs(l))), np.finfo(float).tiny)
    for k, j in enumerate(idx):
        lj = l[j]
        diffs = np.delete(l, j) - lj
        if abs(lj) <= REL_GAP_TOL * scale or np.min(np.abs(diffs)) <= REL_GAP_TOL * scale:
            raise FitError(f"sample eigenvalue {j} coincides with another (or with zero)")
        m = -(1 - c) / lj + np.sum(1.0 / diffs) / n
        out[k] = -1.0 / (sigma_sq * m) - 1.0
    return out


def compute_a(lam, c: float):
    """Limiting squared cosine between a sample spike eigenvector and its population direction."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam_arr) <= np.sqrt(c)):
        raise ValueError(f"spike(s) {lam_arr} not above the detection threshold sqrt(c)={np.sqrt(c):.4g}")
    a = (lam_arr ** 2 - c) / (lam_arr * (lam_arr + c))
    return float(a) if np.ndim(lam) == 0 else a


def _separation(mu_hat, sigma0_sq, sigma1_sq, c0, c1) -> float:
    mu_hat = np.asarray(mu_hat, dtype=float)
    return float(mu_hat @ mu_hat - c1 * sigma1_sq - c0 * sigma0_sq)


def estimate_alpha_inverse(mu_hat, sigma0_sq: float, sigma1_sq: float, c0: float, c1: float,
                           which: int) -> float:
    denom = _separation(mu_hat, sigma0_sq, sigma1_sq, c0, c1)
    if denom <= 0:
        raise MeanSeparationError(
            f"||mu_hat||^2 - c1 s1^2 - c0 s0^2 = {denom:.4g} <= 0: mean separation too small "
            "to estimate alpha at this dimension")
    return float((sigma0_sq, sigma1_sq)[which] / denom)


def estimate_b(mu_hat, u_j, lambda_hat_j: float, c: float, sigma0_sq: float, sigma1_sq: float,
               c0: float, c1: float, form: str = "angle") -> tuple[float, bool]:
    """Squared normalised projection of the mean difference on a spike direction.

    ``form="angle"`` divides the squared sample cosine by ``a(lambda_hat, c)``, the
    eigenvector-angle limit; ``form="display"`` uses the factor
    ``(1 + c/lambda)/(1 - c/lambda)`` instead. Returns ``(b_hat, clamped)``.
    """
    denom = _separation(mu_hat, sigma0_sq, sigma1_sq, c0, c1)
    if denom <= 0:
        raise MeanSeparationError("mean separation too small to estimate b")
    proj = float(np.asarray(mu_hat) @ np.asarray(u_j)) ** 2 / denom
    if form == "angle":
        factor = 1.0 if c == 0 else 1.0 / compute_a(lambda_hat_j, c)
    elif form == "display":
        if 1 - c / lambda_hat_j == 0:
            raise ValueError("1 - c/lambda_hat vanishes")
        factor = (1 + c / lambda_hat_j) / (1 - c / lambda_hat_j)
    else:
        raise ValueError(f"unknown form {form!r}")
    b = factor * proj
    if b < 0:
        return 0.0, True
    return float(b), False


def estimate_psi(u_l, u_j, a_l: float, a_j: float) -> float:
    if a_l <= 0 or a_j <= 0:
        raise ValueError("a values must be positive")
    return float(np.asarray(u_l) @ np.asarray(u_j) / np.sqrt(a_l * a_j))


@dataclass(frozen=True)
class ClassSpectrum:
    """Per-class output of the first estimation stage (before cross-class quantities)."""

    counts: SpikeCounts
    noise: NoiseVarianceEstimate
    lambda_hat: np.ndarray
    a_hat: np.ndarray
    eigen_index: np.ndarray
    dropped: tuple[str, ...]


def estimate_class_spectrum(eig: EigenSummary, counts: SpikeCounts, n: int,
                            drop_unidentifiable: bool = True) -> ClassSpectrum:
    """raw sigma^2 -> provisional lambda_hat -> corrected sigma^2 -> final lambda_hat.

    With ``drop_unidentifiable`` spikes that cannot be estimated are removed and
    listed in ``dropped``: lower spikes when the sample covariance is rank
    deficient, and any spike whose estimate falls inside the detection threshold.
    """
    p = eig.p
    c = p / n
    dropped: list[str] = []
    if drop_unidentifiable and counts.lower and p >= n - 1:
        dropped.append(f"{counts.lower} lower spike(s): sample covariance is rank deficient (p={p}, n={n})")
        counts = SpikeCounts(counts.upper, 0)
    for _ in range(counts.total + 1):
        raw = noise_variance_raw(eig, counts)
        provisional = estimate_spiked_eigenvalues(eig, counts, raw, n)
        corrected = noise_variance_corrected(raw, counts, provisional, p, n)
        lam = estimate_spiked_eigenvalues(eig, counts, corrected, n)
        if not drop_unidentifiable:
            break
        lower_ok = (lam[:counts.lower] < -np.sqrt(c)) & (lam[:counts.lower] > -1)
        upper_ok = lam[counts.lower:] > np.sqrt(c)
        if lower_ok.all() and upper_ok.all():
            break
        # peel the innermost offending spikes and re-estimate
        new_lower = int(np.sum(np.cumprod(lower_ok[::-1])))
        new_upper = int(np.sum(np.cumprod(upper_ok)))
        dropped.append(f"spikes outside the detectable range: lower {counts.lower}->{new_lower}, "
                       f"upper {counts.upper}->{new_upper}")
        counts = SpikeCounts(new_upper, new_lower)
    a = compute_a(lam, c) if lam.size else np.zeros(0)
    return ClassSpectrum(counts, NoiseVarianceEstimate(raw, corrected, c), np.atleast_1d(lam),
                         np.atleast_1d(a), spike_indices(p, counts), tuple(dropped))


def estimate_pair(mu_hat: np.ndarray, eig0: EigenSummary, eig1: EigenSummary,
                  spec0: ClassSpectrum, spec1: ClassSpectrum, n0: int, n1: int,
                  use_corrected: bool = True, b_form: str = "angle",
                  alpha_fallback: bool = True) -> tuple[SpikeEstimates, SpikeEstimates]:
    """Cross-class plug-ins: alpha, b and psi for both classes.

    With ``alpha_fallback`` a nonpositive separation estimate sets ``1/alpha = inf``
    (alpha = 0) and all ``b = 0`` instead of raising.
    """
    p = eig0.p
    c0, c1 = p / n0, p / n1
    s = [spec0.noise.corrected if use_corrected else spec0.noise.raw,
         spec1.noise.corrected if use_corrected else spec1.noise.raw]
    specs = (spec0, spec1)
    eigs = (eig0, eig1)
    cs = (c0, c1)
    u = [eigs[i].vectors[:, specs[i].eigen_index] for i in (0, 1)]
    out = []
    for i in (0, 1):
        other = 1 - i
        sp = specs[i]
        dropped = list(sp.dropped)
        try:
            alpha_inv = estimate_alpha_inverse(mu_hat, s[0], s[1], c0, c1, i)
            b = np.empty(sp.lambda_hat.shape[0])
            clamped = 0
            for k in range(b.shape[0]):
                b[k], was = estimate_b(mu_hat, u[i][:, k], sp.lambda_hat[k], cs[i], s[0], s[1],
                                       c0, c1, form=b_form)
                clamped += was
            if clamped:
                log.warning("class %d: %d negative b estimate(s) clamped to 0", i, clamped)
        except MeanSeparationError:
            if not alpha_fallback:
                raise
            alpha_inv = float("inf")
            b = np.zeros(sp.lambda_hat.shape[0])
            clamped = 0
            dropped.append("mean separation not detectable: alpha set to 0")
        psi = np.zeros((specs[other].lambda_hat.shape[0], sp.lambda_hat.shape[0]))
        for l in range(psi.shape[0]):
            for j in range(psi.shape[1]):
                psi[l, j] = estimate_psi(u[other][:, l], u[i][:, j], specs[other].a_hat[l], sp.a_hat[j])
        out.append(SpikeEstimates(sp.counts, sp.lambda_hat, sp.a_hat, b, psi, alpha_inv, sp.noise,
                                  sp.eigen_index, clamped, tuple(dropped)))
    return out[0], out[1]
