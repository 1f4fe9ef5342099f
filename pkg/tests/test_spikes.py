from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srqda.model import (EigenSummary, FitError, LabeledDataset, SpikedCovarianceSpec,
                         class_moments, make_orthonormal_directions, make_rng, sample_class,
                         symmetric_eigen)
from srqda.spikes import (MeanSeparationError, SpikeCounts, compute_a, detect_spike_counts,
                          estimate_alpha_inverse, estimate_b, estimate_class_spectrum,
                          estimate_psi, estimate_spiked_eigenvalues, noise_variance_corrected,
                          noise_variance_raw, spike_forward_map, standardized_noise_statistic)

from conftest import single_spike_spec


def _eig(values) -> EigenSummary:
    v = np.asarray(values, dtype=float)
    return EigenSummary(v, np.eye(v.shape[0]))


def sample_eigen(spec, n, seed):
    x = sample_class(spec, n, seed)
    return symmetric_eigen(class_moments(LabeledDataset(x, np.zeros(n, dtype=int)), 0).covariance)


@pytest.mark.parametrize("values, counts, expected", [
    ((5, 1, 1, 1), SpikeCounts(1, 0), 1.0),
    ((5, 2, 1, 0.1), SpikeCounts(1, 1), 1.5),
])
def test_noise_variance_raw(values, counts, expected):
    assert noise_variance_raw(_eig(values), counts) == pytest.approx(expected, abs=1e-15)


def test_noise_variance_raw_too_many_spikes():
    with pytest.raises(ValueError):
        noise_variance_raw(_eig((3, 2)), SpikeCounts(1, 1))


def test_noise_variance_corrected_examples():
    assert noise_variance_corrected(1.3, SpikeCounts(0, 0), [], 100, 200) == 1.3
    # hand arithmetic: 1 + 0.5/99 * 1.1
    oracle = float(Fraction(1) + Fraction(1, 2) / 99 * Fraction(11, 10))
    got = noise_variance_corrected(1.0, SpikeCounts(1, 0), [10.0], 100, 200)
    assert got == pytest.approx(oracle, rel=1e-14)
    assert got == pytest.approx(1.0055555555, rel=1e-9)


def test_noise_variance_corrected_zero_spike():
    with pytest.raises(ValueError):
        noise_variance_corrected(1.0, SpikeCounts(1, 0), [0.0], 100, 200)


def test_standardized_statistic_examples():
    assert standardized_noise_statistic(1.0, 1.0, SpikeCounts(1, 0), 101, 202) == 0
    assert standardized_noise_statistic(1.01, 1.0, SpikeCounts(1, 0), 101, 202) == pytest.approx(1.0)


def test_raw_underestimates_and_correction_helps():
    spec = single_spike_spec(200, 10.0, seed=1)
    raw, cor = [], []
    for t in range(100):
        eig = sample_eigen(spec, 400, 1000 + t)
        sp = estimate_class_spectrum(eig, SpikeCounts(1, 0), 400)
        raw.append(sp.noise.raw)
        cor.append(sp.noise.corrected)
    assert np.mean(raw) < 1
    assert abs(np.mean(cor) - 1) < abs(np.mean(raw) - 1)


@pytest.mark.parametrize("x, J, expected", [(26.0, 1.0, 27.04), (7.0, 0.0, 7.0)])
def test_spike_forward_map(x, J, expected):
    assert spike_forward_map(x, J) == pytest.approx(expected, rel=1e-14)


@given(st.floats(0.01, 4.0))
def test_spike_forward_map_edge(J):
    x = 1 + np.sqrt(J)
    assert spike_forward_map(x, J) == pytest.approx(x ** 2, rel=1e-12)


def test_spike_forward_map_pole():
    with pytest.raises(ValueError):
        spike_forward_map(1.0, 0.5)


@pytest.mark.parametrize("lam, c, expected", [
    (25.0, 1.0, Fraction(624, 650)),
    (-0.95, 0.5, Fraction(4025, 4275)),
])
def test_compute_a_hand(lam, c, expected):
    assert compute_a(lam, c) == pytest.approx(float(expected), rel=1e-14)


@pytest.mark.parametrize("lam, c", [(1.0, 1.0), (0.5, 1.0), (-0.7, 0.5)])
def test_compute_a_subcritical(lam, c):
    with pytest.raises(ValueError):
        compute_a(lam, c)


@given(st.floats(0.01, 3.0))
def test_compute_a_monotone_and_bounded(c):
    lam = np.linspace(np.sqrt(c) * 1.001, 100, 400)
    a = compute_a(lam, c)
    assert np.all((a >= 0) & (a < 1))
    assert np.all(np.diff(a) > 0)


def test_spiked_eigenvalues_upper_consistent():
    # spread is set by the eigenvalue CLT: sd(l) ~ (1+lam) sqrt(2(1 - c/lam^2)/n)
    spec = single_spike_spec(200, 25.0, seed=2)
    est = np.array([estimate_spiked_eigenvalues(sample_eigen(spec, 400, 50 + t), SpikeCounts(1, 0),
                                                1.0, 400)[0] for t in range(100)])
    clt_sd = 26 * np.sqrt(2 / 400 * (1 - 0.5 / 625))
    assert abs(est.mean() - 25) <= 3 * clt_sd / np.sqrt(100) + 0.2
    assert 0.75 * clt_sd <= est.std() <= 1.25 * clt_sd


def test_spiked_eigenvalues_lower_consistent():
    spec = single_spike_spec(200, -0.9, seed=3)
    errs = [abs(estimate_spiked_eigenvalues(sample_eigen(spec, 400, 90 + t), SpikeCounts(0, 1),
                                            1.0, 400)[0] + 0.9) for t in range(50)]
    assert np.mean(errs) <= 0.05


def test_spiked_eigenvalues_classical_limit():
    spec = single_spike_spec(10, 5.0, seed=4)
    eig = sample_eigen(spec, 100_000, 5)
    lam = estimate_spiked_eigenvalues(eig, SpikeCounts(1, 0), 1.0, 100_000)[0]
    assert lam == pytest.approx(eig.values[0] - 1, rel=0.02)


def test_spiked_eigenvalues_coincident():
    with pytest.raises(FitError):
        estimate_spiked_eigenvalues(_eig((3.0, 3.0, 1.0, 0.5)), SpikeCounts(1, 0), 1.0, 10)


def test_alpha_inverse_examples():
    mu = np.array([np.sqrt(3.0), 0.0])
    assert estimate_alpha_inverse(mu, 1.0, 1.0, 1.0, 1.0, 0) == pytest.approx(1.0)
    mu = np.array([1.0, 2.0])
    assert estimate_alpha_inverse(mu, 2.0, 1.0, 0.0, 0.0, 0) == pytest.approx(2.0 / 5.0)


def test_alpha_inverse_too_small():
    with pytest.raises(MeanSeparationError):
        estimate_alpha_inverse(np.array([1.0, 0.0]), 1.0, 1.0, 1.0, 1.0, 0)


def test_estimate_b_limits():
    mu = np.array([1.0, 2.0, 0.0])
    b, clamped = estimate_b(mu, np.array([0.0, 0.0, 1.0]), 5.0, 0.5, 1.0, 1.0, 0.1, 0.1)
    assert b == 0 and not clamped
    u = np.array([0.6, 0.8, 0.0])
    b, _ = estimate_b(mu, u, 5.0, 0.0, 1.0, 1.0, 0.0, 0.0)
    assert b == pytest.approx((mu @ u) ** 2 / (mu @ mu))
    b_disp, _ = estimate_b(mu, u, 5.0, 0.0, 1.0, 1.0, 0.0, 0.0, form="display")
    assert b_disp == pytest.approx(b)


def test_estimate_b_recovers_unit_projection():
    p, n = 200, 800
    v = make_orthonormal_directions(p, 1, 7)
    s0 = SpikedCovarianceSpec(1.0, (25.0,), (), v, 3.0 * v[:, 0])
    s1 = SpikedCovarianceSpec(1.0, (), (), np.zeros((p, 0)), np.zeros(p))
    c = p / n
    errs = []
    for t in range(50):
        rng = make_rng(300 + t)
        x0, x1 = sample_class(s0, n, rng), sample_class(s1, n, rng)
        mu_hat = x0.mean(0) - x1.mean(0)
        eig = symmetric_eigen(np.cov(x0.T))
        sp = estimate_class_spectrum(eig, SpikeCounts(1, 0), n)
        b, _ = estimate_b(mu_hat, eig.vectors[:, 0], sp.lambda_hat[0], c, sp.noise.corrected,
                          1.0, c, c)
        errs.append(abs(b - 1))
    assert np.mean(errs) <= 0.1


def test_estimate_psi_trivial():
    e = np.array([1.0, 0.0])
    assert estimate_psi(e, e, 1.0, 1.0) == 1.0
    assert estimate_psi(e, np.array([0.0, 1.0]), 0.5, 0.7) == 0.0
    with pytest.raises(ValueError):
        estimate_psi(e, e, 0.0, 1.0)


def test_detect_isotropic():
    spec = SpikedCovarianceSpec(1.0, (), (), np.zeros((100, 0)), np.zeros(100))
    hits = sum(detect_spike_counts(sample_eigen(spec, 400, t), 400, 0.1) == SpikeCounts(0, 0)
               for t in range(100))
    assert hits >= 95


def test_detect_single_spike():
    spec = single_spike_spec(100, 25.0, seed=8)
    hits = sum(detect_spike_counts(sample_eigen(spec, 400, 500 + t), 400, 0.1) == SpikeCounts(1, 0)
               for t in range(100))
    assert hits >= 95


def test_detect_simulation_design():
    p = 150
    v = make_orthonormal_directions(p, 4, 9)
    spec = SpikedCovarianceSpec(1.0, (25.0, 20.0, 15.0), (-0.95,), v, np.zeros(p))
    hits = sum(detect_spike_counts(sample_eigen(spec, 300, 700 + t), 300, 0.1) == SpikeCounts(3, 1)
               for t in range(100))
    assert hits >= 90


def test_detect_needs_dimensions():
    with pytest.raises(ValueError):
        detect_spike_counts(_eig((3.0, 2.0, 1.0)), 10)


def test_class_spectrum_drops_lower_when_rank_deficient():
    p = 150
    v = make_orthonormal_directions(p, 2, 10)
    spec = SpikedCovarianceSpec(1.0, (25.0,), (-0.95,), v, np.zeros(p))
    sp = estimate_class_spectrum(sample_eigen(spec, 50, 11), SpikeCounts(1, 1), 50)
    assert sp.counts == SpikeCounts(1, 0)
    assert sp.dropped


def test_estimators_deterministic():
    spec = single_spike_spec(60, 12.0, seed=12)
    eig = sample_eigen(spec, 200, 13)
    a = estimate_class_spectrum(eig, SpikeCounts(1, 0), 200)
    b = estimate_class_spectrum(eig, SpikeCounts(1, 0), 200)
    assert np.array_equal(a.lambda_hat, b.lambda_hat) and a.noise == b.noise
