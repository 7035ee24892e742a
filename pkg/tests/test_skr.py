import numpy as np
import pytest

from ris_skg import skr
from ris_skg.chansim import SystemParams
from ris_skg.skr import (CovarianceModel, estimate_covariance,
                         positivity_condition, skr_gap,
                         verify_det_factorization, verify_quadratic_identity,
                         weighted_probe_variance)


def params_published(sigma2=1e-11, amp_db=40.0, mx=4, my=4):
    return SystemParams(mx=mx, my=my, c0=1e-3, alpha=3.0, pt=0.1,
                        sigma2=sigma2, amp_ae=10 ** (amp_db / 10))


def random_cov(m, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    sigma = a @ a.conj().T / m * scale
    return 0.5 * (sigma + sigma.conj().T)


# ---------------------------------------------------------------------------
# weighted probe variance
# ---------------------------------------------------------------------------

def test_probe_variance_direct_arithmetic():
    p = params_published()
    # 0.1 * 1e4 * 1e-3 * 10^-3 + 1e4 * 1e-11
    assert weighted_probe_variance(p, 10.0) == pytest.approx(1.0001e-3, rel=1e-12)


def test_probe_variance_noiseless_term():
    p = params_published(sigma2=0.0)
    assert weighted_probe_variance(p, 10.0) == pytest.approx(1e-3, rel=1e-12)


def test_probe_variance_distance_power_law():
    p = params_published(sigma2=0.0)
    assert weighted_probe_variance(p, 10.0) / weighted_probe_variance(p, 20.0) == \
        pytest.approx(8.0, rel=1e-12)


def test_probe_variance_distance_clamp():
    with pytest.raises(ValueError):
        weighted_probe_variance(params_published(), 0.5)


# ---------------------------------------------------------------------------
# covariance estimation
# ---------------------------------------------------------------------------

def test_estimate_covariance_iid_eigenvalues():
    rng = np.random.default_rng(0)
    m, k, v = 8, 20_000, 2.5e-6
    samples = np.sqrt(v / 2) * (rng.standard_normal((k, m))
                                + 1j * rng.standard_normal((k, m)))
    combined = np.sqrt(1.0 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    cov = estimate_covariance(samples, combined, 5.0)
    assert cov.eigenvalues.shape == (m,)
    np.testing.assert_allclose(cov.eigenvalues, v, rtol=0.15)
    assert cov.sigma_g2 == pytest.approx(1.0, rel=0.05)


def test_estimate_covariance_rank_one_for_repeats():
    g = np.array([1.0 + 1j, -2.0, 0.5j, 3.0])
    samples = np.tile(g, (40, 1))
    cov = estimate_covariance(samples, np.ones(40), 5.0)
    eig = np.sort(cov.eigenvalues)
    np.testing.assert_allclose(eig[:-1], 0.0, atol=1e-12)
    assert eig[-1] == pytest.approx(np.sum(np.abs(g) ** 2), rel=1e-12)


def test_estimate_covariance_insufficient_samples():
    with pytest.raises(ValueError):
        estimate_covariance(np.zeros((5, 4), dtype=complex), np.ones(5), 5.0)
    with pytest.raises(ValueError):
        estimate_covariance(np.zeros((0, 4), dtype=complex), np.ones(1), 5.0)


def test_covariance_model_validation():
    with pytest.raises(ValueError):
        CovarianceModel(sigma_g2=1.0, eigenvalues=np.array([-1.0]), dist_ar=5.0)
    with pytest.raises(ValueError):
        CovarianceModel(sigma_g2=0.0, eigenvalues=np.array([1.0]), dist_ar=5.0)


# ---------------------------------------------------------------------------
# gap formula
# ---------------------------------------------------------------------------

def test_gap_assembled_equals_closed_form():
    rng = np.random.default_rng(1)
    eig = rng.uniform(1e-7, 1e-5, 16)
    cov = CovarianceModel(sigma_g2=1e-4, eigenvalues=eig, dist_ar=5.0)
    p = params_published()
    bd = skr_gap(cov, p, 5.0)
    assembled = bd.h_yb - bd.h_yra + bd.h_cond_joint - bd.h_cond_pair
    assert assembled == pytest.approx(bd.gap, abs=1e-12 * max(1.0, abs(bd.gap)) * 100)
    assert bd.sigma_zeta2 == pytest.approx(weighted_probe_variance(p, 5.0))


def test_gap_boundary_case_vanishes():
    # equal eigenvalues and unit second term: amp * c0 = 1/m at unit
    # distance makes the weighted probe variance exactly pt/m, so the
    # middle term is log2(2)/2 and the gap telescopes to zero as noise
    # vanishes
    m = 16
    lam = 1e-3
    cov = CovarianceModel(sigma_g2=7e-4, eigenvalues=np.full(m, lam), dist_ar=1.0)
    p = SystemParams(mx=4, my=4, c0=1.0 / m, alpha=3.0, pt=0.1, sigma2=1e-20,
                     amp_ae=1.0)
    bd = skr_gap(cov, p, 1.0)
    assert abs(bd.gap) < 1e-6


def test_gap_monotone_in_probe_variance():
    cov = CovarianceModel(sigma_g2=1e-4,
                          eigenvalues=np.full(16, 8e-6), dist_ar=5.0)
    p1 = params_published(amp_db=40.0)
    p2 = params_published(amp_db=43.0103)  # doubles amp, doubles probe variance
    g1 = skr_gap(cov, p1, 5.0)
    g2 = skr_gap(cov, p2, 5.0)
    assert g2.sigma_zeta2 == pytest.approx(2 * g1.sigma_zeta2, rel=1e-4)
    assert g2.gap > g1.gap


def test_gap_invariant_under_rotation():
    rng = np.random.default_rng(2)
    sigma = random_cov(8, 3, scale=1e-5)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    rotated = q @ sigma @ q.conj().T
    p = params_published()
    eig1 = np.clip(np.linalg.eigvalsh(sigma), 0, None)
    eig2 = np.clip(np.linalg.eigvalsh(rotated), 0, None)
    g1 = skr_gap(CovarianceModel(1e-4, eig1, 5.0), p, 5.0)
    g2 = skr_gap(CovarianceModel(1e-4, eig2, 5.0), p, 5.0)
    assert g1.gap == pytest.approx(g2.gap, rel=1e-9)


# ---------------------------------------------------------------------------
# derivation-step oracles
# ---------------------------------------------------------------------------

def test_det_factorization_random_matrices():
    rng = np.random.default_rng(4)
    for m in (2, 8, 16):
        sigma = random_cov(m, m, scale=1.0)
        zeta = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        resid = verify_det_factorization(sigma, zeta, pt=0.1, s2=0.3)
        assert resid < 1e-10


def test_quadratic_identity_scalar_case():
    # m = 1 reduces to one line of algebra per draw
    cov = CovarianceModel(sigma_g2=1.0, eigenvalues=np.array([2.0]), dist_ar=1.0)
    p = SystemParams(mx=1, my=1, c0=1e-3, pt=0.1, sigma2=0.5, amp_ae=2.0)
    dev = verify_quadratic_identity(cov, p, trials=200_000,
                                    rng=np.random.default_rng(5))
    assert dev < 0.02


def test_quadratic_identity_isotropic():
    m = 8
    cov = CovarianceModel(sigma_g2=1.0, eigenvalues=np.full(m, 3.0), dist_ar=1.0)
    p = SystemParams(mx=2, my=4, c0=1e-3, pt=0.2, sigma2=1.0, amp_ae=4.0)
    dev = verify_quadratic_identity(cov, p, trials=100_000,
                                    rng=np.random.default_rng(6))
    assert dev < 0.01


def test_quadratic_identity_random_spectrum():
    rng = np.random.default_rng(7)
    eig = np.clip(np.linalg.eigvalsh(random_cov(16, 8)), 0, None)
    cov = CovarianceModel(sigma_g2=1.0, eigenvalues=eig, dist_ar=2.0)
    p = SystemParams(mx=4, my=4, c0=1e-3, pt=0.1, sigma2=0.3, amp_ae=2.0)
    dev = verify_quadratic_identity(cov, p, trials=100_000, rng=rng)
    assert dev < 0.01


def test_quadratic_identity_size_guard():
    cov = CovarianceModel(sigma_g2=1.0, eigenvalues=np.ones(65), dist_ar=1.0)
    with pytest.raises(ValueError):
        verify_quadratic_identity(cov, params_published(), 10,
                                  np.random.default_rng(8))


# ---------------------------------------------------------------------------
# entropy formulas vs Monte Carlo log-determinants
# ---------------------------------------------------------------------------

def _mc_entropy_scalar(var_samples):
    return 0.5 * np.log2(2 * np.pi * np.e * np.mean(var_samples))


def test_scalar_receive_entropy_matches_monte_carlo():
    rng = np.random.default_rng(9)
    p = params_published(sigma2=1e-9)
    sigma_g2 = 4e-4
    k = 200_000
    g = np.sqrt(sigma_g2 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    x = np.sqrt(p.pt) * np.exp(1j * rng.uniform(0, 2 * np.pi, k))
    n = np.sqrt(p.sigma2 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    y = g * x + n
    h_mc = _mc_entropy_scalar(np.abs(y) ** 2)
    cov = CovarianceModel(sigma_g2=sigma_g2, eigenvalues=np.full(16, 1e-6), dist_ar=5.0)
    bd = skr_gap(cov, p, 5.0)
    assert h_mc == pytest.approx(bd.h_yb, rel=0.02)


def test_vector_receive_entropy_matches_monte_carlo():
    rng = np.random.default_rng(10)
    m, k = 8, 60_000
    p = SystemParams(mx=2, my=4, c0=1e-3, pt=0.1, sigma2=1e-7, amp_ae=1e4)
    sigma = random_cov(m, 11, scale=1e-5)
    chol = np.linalg.cholesky(sigma + 1e-12 * np.trace(sigma).real / m * np.eye(m))
    g = (rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))) / np.sqrt(2)
    g = g @ chol.conj().T
    x = np.sqrt(p.pt) * np.exp(1j * rng.uniform(0, 2 * np.pi, k))
    noise = np.sqrt(p.sigma2 / 2) * (rng.standard_normal((k, m))
                                     + 1j * rng.standard_normal((k, m)))
    y = g * x[:, None] + noise
    cov_hat = y.conj().T @ y / k
    h_mc = 0.5 * (m * np.log2(2 * np.pi * np.e)
                  + float(np.log2(np.abs(np.linalg.det(cov_hat)))))
    eig = np.clip(np.linalg.eigvalsh(sigma), 0, None)
    bd = skr_gap(CovarianceModel(1e-4, eig, 5.0), p, 5.0)
    assert h_mc == pytest.approx(bd.h_yra, rel=0.02)


def test_conditional_pair_entropy_matches_monte_carlo():
    rng = np.random.default_rng(12)
    p = params_published(sigma2=1e-8)
    sigma_g2 = 2e-4
    k = 400_000
    g = np.sqrt(sigma_g2 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    x_a = np.sqrt(p.pt) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    x_b = np.sqrt(p.pt) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    n_a = np.sqrt(p.sigma2 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    n_b = np.sqrt(p.sigma2 / 2) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    y_a = g * x_b + n_a
    y_b = g * x_a + n_b
    c11 = np.mean(np.abs(y_a) ** 2)
    c22 = np.mean(np.abs(y_b) ** 2)
    c12 = np.mean(y_a * np.conj(y_b))
    det = c11 * c22 - np.abs(c12) ** 2
    h_mc = 0.5 * (2 * np.log2(2 * np.pi * np.e) + np.log2(det))
    cov = CovarianceModel(sigma_g2=sigma_g2, eigenvalues=np.full(16, 1e-6), dist_ar=5.0)
    bd = skr_gap(cov, p, 5.0)
    assert h_mc == pytest.approx(bd.h_cond_pair, rel=0.02)


# ---------------------------------------------------------------------------
# sufficient positivity condition
# ---------------------------------------------------------------------------

def test_positivity_condition_published_examples():
    p = SystemParams(mx=40, my=40, c0=1e-3, alpha=3.0, amp_ae=1e4)
    ok, margin = positivity_condition(p, d_max=5.0, d_ab=10.0)
    assert ok
    # left 1.024, right 0.1
    assert margin == pytest.approx(1.024 - 0.1, rel=1e-3)
    ok2, margin2 = positivity_condition(p, d_max=25.0, d_ab=50.0)
    assert not ok2
    assert margin2 == pytest.approx(16000 * 25.0 ** -6 - 100 * 50.0 ** -3, rel=1e-6)
    assert margin2 < 0


def test_positivity_condition_grows_with_elements():
    small = SystemParams(mx=4, my=4, c0=1e-3, alpha=3.0, amp_ae=1e4)
    big = SystemParams(mx=400, my=400, c0=1e-3, alpha=3.0, amp_ae=1e4)
    _, m_small = positivity_condition(small, 25.0, 50.0)
    ok_big, m_big = positivity_condition(big, 25.0, 50.0)
    assert m_big > m_small
    assert ok_big


def test_positivity_condition_clamps():
    with pytest.raises(ValueError):
        positivity_condition(params_published(), 0.2, 10.0)
