from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from srqda import classifiers as C
from srqda.model import (LabeledDataset, SpikedCovarianceSpec, make_orthonormal_directions,
                         make_rng, sample_class, spiked_sqrt)
from srqda.persist import ModelFileError, load_model, model_from_dict, model_to_dict, save_model
from srqda.spikes import SpikeCounts


def two_class(spec0, spec1, n0, n1, seed) -> LabeledDataset:
    rng = make_rng(seed)
    x = np.vstack([sample_class(spec0, n0, rng), sample_class(spec1, n1, rng)])
    return LabeledDataset(x, np.r_[np.zeros(n0, int), np.ones(n1, int)])


def spiked_pair(p=60, seed=0, mean_norm=2.0):
    v0 = make_orthonormal_directions(p, 3, seed)
    v1 = make_orthonormal_directions(p, 3, seed + 1)
    mu = np.full(p, mean_norm / np.sqrt(p))
    s0 = SpikedCovarianceSpec(1.0, (20.0, 10.0), (-0.9,), v0, mu)
    s1 = SpikedCovarianceSpec(1.5, (12.0, 6.0), (-0.8,), v1, np.zeros(p))
    return s0, s1


COUNTS = (SpikeCounts(2, 1), SpikeCounts(2, 1))


@pytest.fixture(scope="module")
def srqda_fit():
    s0, s1 = spiked_pair()
    data = two_class(s0, s1, 200, 200, 3)
    return C.fit_srqda(data, COUNTS, priors=(0.5, 0.5), grid_resolution=8), data, (s0, s1)


def flipped(data: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(data.features, 1 - data.labels)


# ---------------------------------------------------------------- QDA

def test_qda_one_dimensional_bayes():
    rng = make_rng(0)
    n = 10_000
    x = np.r_[rng.normal(0, 1, n), rng.normal(2, 1, n)][:, None]
    model = C.fit_qda(LabeledDataset(x, np.r_[np.zeros(n, int), np.ones(n, int)]))
    fresh = np.r_[rng.normal(0, 1, n), rng.normal(2, 1, n)][:, None]
    acc = np.mean(model.predict(fresh) == np.r_[np.zeros(n), np.ones(n)])
    assert acc == pytest.approx(norm.cdf(1), abs=0.01)
    # threshold near x = 1
    assert model.predict(np.array([[0.9]]))[0] == 0 and model.predict(np.array([[1.1]]))[0] == 1


def test_qda_identical_classes_tie():
    x = make_rng(1).standard_normal((20, 3))
    data = LabeledDataset(np.vstack([x, x]), np.r_[np.zeros(20, int), np.ones(20, int)])
    model = C.fit_qda(data)
    s = model.scores(make_rng(2).standard_normal((50, 3)))
    assert np.allclose(s, 0) and np.all(model.predict(x) == 1)


def test_qda_symmetric_zero():
    m = C.oracle_qda(np.zeros(2), np.eye(2), np.zeros(2), np.eye(2))
    assert C.qda_score(m, np.zeros(2)) == C.DiscriminantScore(0.0, 1)


def test_qda_log2_example():
    m = C.oracle_qda([0.0], [[1.0]], [0.0], [[4.0]])
    s = C.qda_score(m, np.zeros(1))
    assert s.value == pytest.approx(math.log(2), rel=1e-14) and s.predicted_class == 0


def test_qda_matches_brute_force_bayes():
    m0, m1 = np.array([0.0, 0.5]), np.array([1.0, -0.5])
    c0 = np.array([[1.0, 0.3], [0.3, 0.5]])
    c1 = np.array([[2.0, -0.4], [-0.4, 1.0]])
    model = C.oracle_qda(m0, c0, m1, c1, (0.4, 0.6))
    g = np.linspace(-4, 4, 201)
    pts = np.stack(np.meshgrid(g, g), -1).reshape(-1, 2)
    pts = np.vstack([pts, make_rng(3).uniform(-4, 4, (1000, 2))])
    bayes = np.where(np.log(0.4) + multivariate_normal(m0, c0).logpdf(pts)
                     > np.log(0.6) + multivariate_normal(m1, c1).logpdf(pts), 0, 1)
    assert np.array_equal(model.predict(pts), bayes)


def test_qda_dimension_mismatch():
    m = C.oracle_qda(np.zeros(2), np.eye(2), np.ones(2), np.eye(2))
    with pytest.raises(ValueError):
        m.scores(np.zeros((3, 3)))


def test_pseudo_inverse_rank_deficient():
    x = make_rng(4).standard_normal((5, 10))
    inv, logdet, rank = C.pseudo_inverse(np.cov(x.T))
    assert rank == 4
    cov = np.cov(x.T)
    np.testing.assert_allclose(cov @ inv @ cov, cov, atol=1e-10)


# ---------------------------------------------------------------- R-QDA

def test_rqda_identity_limit():
    s0, s1 = spiked_pair(p=20)
    data = two_class(s0, s1, 40, 40, 5)
    model = C.fit_rqda(data, 1e-12, priors=(0.5, 0.5))
    x = make_rng(6).standard_normal((30, 20))
    ref = 0.5 * (np.sum((x - model.means[1]) ** 2, 1) - np.sum((x - model.means[0]) ** 2, 1))
    np.testing.assert_allclose(model.scores(x), ref, atol=1e-8)


def test_rqda_half_identity():
    from srqda.model import EigenSummary
    eig = EigenSummary(np.ones(4), np.eye(4))
    model = C.RqdaModel(np.zeros((2, 4)), (eig, eig), 1.0, (0.5, 0.5))
    np.testing.assert_allclose(model.ridge_operator(0), 0.5 * np.eye(4))
    assert model.log_det_h(0) == pytest.approx(-4 * math.log(2))


def test_rqda_eigenvalues():
    s0, s1 = spiked_pair(p=15)
    data = two_class(s0, s1, 30, 30, 7)
    model = C.fit_rqda(data, 0.7)
    h = model.ridge_operator(1)
    expected = np.sort(1 / (1 + 0.7 * np.maximum(model.eigen[1].values, 0)))
    np.testing.assert_allclose(np.linalg.eigvalsh(h), expected, atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_rqda_gamma_positive(gamma):
    s0, s1 = spiked_pair(p=5)
    with pytest.raises(ValueError):
        C.fit_rqda(two_class(s0, s1, 10, 10, 0), gamma)


def test_rqda_default_grid():
    assert len(C.RQDA_GAMMA_GRID) == 21
    assert C.RQDA_GAMMA_GRID[0] == pytest.approx(0.1) and C.RQDA_GAMMA_GRID[-1] == pytest.approx(10)


def test_rqda_cv_tie_goes_to_smallest():
    rng = make_rng(8)
    x = np.vstack([rng.normal(-10, 1, (30, 2)), rng.normal(10, 1, (30, 2))])
    data = LabeledDataset(x, np.r_[np.zeros(30, int), np.ones(30, int)])
    assert C.select_rqda_gamma(data, [5.0, 0.3, 2.0], folds=3, rng_seed=1) == 0.3


def test_rqda_cv_deterministic():
    s0, s1 = spiked_pair(p=30)
    data = two_class(s0, s1, 40, 40, 9)
    picks = {C.select_rqda_gamma(data, rng_seed=42) for _ in range(3)}
    assert len(picks) == 1


def test_rqda_cv_missing_class():
    data = LabeledDataset(make_rng(0).standard_normal((12, 2)), np.r_[np.zeros(10, int), 1, 1])
    with pytest.raises(Exception):
        C.select_rqda_gamma(data, folds=5)


@pytest.mark.parametrize("bad", [dict(candidates=[1.0]), dict(folds=1)])
def test_rqda_cv_arguments(bad):
    s0, s1 = spiked_pair(p=5)
    with pytest.raises(ValueError):
        C.select_rqda_gamma(two_class(s0, s1, 20, 20, 0), **bad)


# ---------------------------------------------------------------- SR-QDA

def test_srqda_dense_matches_low_rank(srqda_fit):
    model, _, _ = srqda_fit
    x = make_rng(10).standard_normal((100, model.p)) * 2
    dense = np.zeros(100) + model.eta
    for i, sgn in ((0, -0.5), (1, 0.5)):
        w = x - model.means[i]
        dense += sgn * np.einsum("ij,jk,ik->i", w, model.inverse_dense(i), w)
    np.testing.assert_allclose(model.scores(x), dense, rtol=1e-9, atol=1e-9)


def test_srqda_at_common_mean_gives_eta(srqda_fit):
    model, _, _ = srqda_fit
    common = C.SrqdaModel(np.zeros((2, model.p)), model.vectors, model.sigma_sq, model.shrink,
                          model.priors)
    assert common.scores(np.zeros(model.p))[0] == pytest.approx(model.eta, abs=1e-12)


def test_srqda_zero_correction_limit():
    p = 10
    u = np.zeros((p, 0))
    model = C.SrqdaModel(np.vstack([np.ones(p), -np.ones(p)]), (u, u), (2.0, 2.0),
                         (np.zeros(0), np.zeros(0)), (0.5, 0.5))
    x = make_rng(11).standard_normal((20, p))
    ref = -0.5 / 2.0 * (np.sum((x - 1) ** 2, 1) - np.sum((x + 1) ** 2, 1))
    np.testing.assert_allclose(model.scores(x), ref, rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_inversion_lemma_identity(seed):
    rng = make_rng(seed)
    p = 50
    u, _ = np.linalg.qr(rng.standard_normal((p, 4)))
    lam = np.array([-0.8, -0.3, 15.0, 4.0])
    g1, g2 = rng.uniform(0.05, 3), rng.uniform(0.05, 1.0)
    gam = np.r_[g2, g2, g1, g1]
    h = np.eye(p) + (u * gam * lam) @ u.T
    coeff = gam * lam / (1 + gam * lam)
    v = rng.standard_normal((p, 100))
    np.testing.assert_allclose(np.linalg.solve(h, v), v - (u * coeff) @ (u.T @ v), atol=1e-10)


def test_log_det_closed_form(srqda_fit):
    model, _, _ = srqda_fit
    for i in (0, 1):
        sign, ld = np.linalg.slogdet(model.inverse_dense(i))
        assert model.log_det_inverse(i) == pytest.approx(ld, abs=1e-8)


def test_srqda_records_estimates(srqda_fit):
    model, _, _ = srqda_fit
    assert model.gamma_star is not None and np.isfinite(model.objective)
    assert all(len(s) == 3 for s in model.shrink)


def test_srqda_statistic_reconstruction(srqda_fit):
    model, _, specs = srqda_fit
    rng = make_rng(12)
    h_inv = [model.inverse_dense(i) for i in (0, 1)]
    for i, spec in enumerate(specs):
        root = spiked_sqrt(spec)
        z = rng.standard_normal((50, model.p))
        x = spec.mean + z @ root
        d0, d1 = spec.mean - model.means[0], spec.mean - model.means[1]
        b = root @ (h_inv[1] - h_inv[0]) @ root
        y = root @ (h_inv[1] @ d1 - h_inv[0] @ d0)
        xi = -2 * model.eta + d0 @ h_inv[0] @ d0 - d1 @ h_inv[1] @ d1
        recon = np.einsum("ij,jk,ik->i", z, b, z) + 2 * z @ y - xi
        np.testing.assert_allclose(2 * model.scores(x), recon, rtol=1e-8, atol=1e-8)


def test_srqda_antisymmetry():
    s0, s1 = spiked_pair(p=40, seed=20)
    data = two_class(s0, s1, 150, 150, 21)
    counts = (SpikeCounts(2, 1), SpikeCounts(2, 1))
    a = C.fit_srqda(data, counts, priors=(0.3, 0.7), grid_resolution=6)
    b = C.fit_srqda(flipped(data), counts, priors=(0.7, 0.3), grid_resolution=6)
    x = make_rng(22).standard_normal((40, 40))
    np.testing.assert_allclose(b.scores(x), -a.scores(x), rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("method", ["qda", "rqda"])
def test_antisymmetry_baselines(method):
    s0, s1 = spiked_pair(p=10, seed=30)
    data = two_class(s0, s1, 60, 60, 31)
    fit = (lambda d, pr: C.fit_qda(d, pr)) if method == "qda" else (lambda d, pr: C.fit_rqda(d, 0.5, pr))
    a, b = fit(data, (0.3, 0.7)), fit(flipped(data), (0.7, 0.3))
    x = make_rng(32).standard_normal((40, 10))
    np.testing.assert_allclose(b.scores(x), -a.scores(x), rtol=1e-10, atol=1e-10)


def test_srqda_needs_four_per_class():
    s0, s1 = spiked_pair(p=10)
    with pytest.raises(C.FitError):
        C.fit_srqda(two_class(s0, s1, 3, 20, 0), (SpikeCounts(0, 0), SpikeCounts(0, 0)))


def test_srqda_identical_isotropic_classes():
    p = 50
    spec = SpikedCovarianceSpec(1.0, (), (), np.zeros((p, 0)), np.zeros(p))
    data = two_class(spec, spec, 200, 200, 40)
    model = C.fit_srqda(data, (SpikeCounts(0, 0), SpikeCounts(0, 0)), priors=(0.5, 0.5))
    assert all(s.size == 0 for s in model.shrink)
    assert model.sigma_sq[0] == pytest.approx(model.sigma_sq[1], rel=0.05)
    fresh = two_class(spec, spec, 2000, 2000, 41)
    assert C.evaluate(model, fresh).accuracy == pytest.approx(0.5, abs=0.05)


def test_srqda_auto_counts():
    s0, s1 = spiked_pair(p=60, seed=50, mean_norm=3.0)
    data = two_class(s0, s1, 300, 300, 51)
    model = C.fit_srqda(data, "auto", grid_resolution=6)
    assert [len(s) for s in model.shrink] == [3, 3]


# ---------------------------------------------------------------- evaluation and KNN

@dataclass
class Constant:
    labels: np.ndarray | None = None
    value: int = 1
    priors: tuple[float, float] = (0.5, 0.5)

    def predict(self, x):
        return self.labels if self.labels is not None else np.full(len(x), self.value)


def test_evaluate_examples():
    y = np.r_[np.zeros(50, int), np.ones(50, int)]
    data = LabeledDataset(np.zeros((100, 1)), y)
    assert C.evaluate(Constant(labels=y), data).global_error == 0
    res = C.evaluate(Constant(value=1), data)
    assert res.class_errors == (1.0, 0.0) and res.global_error == 0.5
    coin = make_rng(0).integers(0, 2, 10_000)
    y = np.r_[np.zeros(5000, int), np.ones(5000, int)]
    big = LabeledDataset(np.zeros((10_000, 1)), y)
    assert C.evaluate(Constant(labels=coin), big).global_error == pytest.approx(0.5, abs=0.02)


def test_evaluate_missing_class():
    with pytest.raises(ValueError):
        C.evaluate(Constant(), LabeledDataset(np.zeros((3, 1)), np.zeros(3, int)))


def test_knn_examples():
    rng = make_rng(60)
    x = np.vstack([rng.normal(-3, 0.5, (50, 2)), rng.normal(3, 0.5, (50, 2))])
    y = np.r_[np.zeros(50, int), np.ones(50, int)]
    data = LabeledDataset(x, y)
    assert np.array_equal(C.knn_predict(C.fit_knn(data, 1), x), y)
    assert np.all(C.knn_predict(C.fit_knn(data, 100), x[:5]) == 1)
    fresh = np.vstack([rng.normal(-3, 0.5, (200, 2)), rng.normal(3, 0.5, (200, 2))])
    acc = np.mean(C.knn_predict(C.fit_knn(data, 3), fresh) == np.r_[np.zeros(200), np.ones(200)])
    assert acc >= 0.99
    with pytest.raises(ValueError):
        C.fit_knn(data, 101)


def test_knn_distance_tie_uses_lower_index():
    x = np.array([[1.0], [-1.0]])
    data = LabeledDataset(x, np.array([1, 0]))
    assert C.knn_predict(C.fit_knn(data, 1), np.zeros((1, 1)))[0] == 1


# ---------------------------------------------------------------- persistence

@pytest.mark.parametrize("method", ["qda", "rqda", "srqda", "knn"])
def test_model_file_roundtrip(method, tmp_path):
    s0, s1 = spiked_pair(p=30, seed=70)
    data = two_class(s0, s1, 80, 80, 71)
    model = C.fit_method(method, data, counts=COUNTS, knn_k=3, rqda_folds=3,
                         srqda=C.SrqdaSettings(grid_resolution=5))
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    x = make_rng(72).standard_normal((25, 30))
    assert np.array_equal(back.scores(x), model.scores(x))


def test_model_file_rejects_bad_input(tmp_path):
    s0, s1 = spiked_pair(p=5)
    d = model_to_dict(C.fit_qda(two_class(s0, s1, 20, 20, 0)))
    with pytest.raises(ModelFileError):
        model_from_dict({**d, "schema_version": 99})
    with pytest.raises(ModelFileError):
        model_from_dict({**d, "format": "other"})
    with pytest.raises(ModelFileError):
        model_from_dict({**d, "params": {}})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelFileError):
        load_model(bad)
