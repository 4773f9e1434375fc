import numpy as np
import pytest

from semiblind.cgmm import GmmModel
from semiblind.errors import InvalidArgumentError, StaleFilterError
from semiblind.estimators import (
    COUNTERPART,
    ESTIMATORS,
    EstimatorBank,
    EstimatorInput,
    build_gmm_filters,
    build_lmmse_filter,
    estimate_gmm,
    estimate_ls,
    estimate_ml,
    estimate_proj_gmm,
    estimate_proj_scov,
    estimate_scov,
    estimate_sub_gmm,
    estimate_sub_scov,
)
from semiblind.subspace import SubspaceBasis

from conftest import crandn, random_model, random_pd


def basis(v):
    v = np.asarray(v, dtype=complex)
    return SubspaceBasis(v, np.ones(v.shape[1]))


def random_basis(rng, m, j):
    q, _ = np.linalg.qr(crandn(rng, m, j))
    return basis(q)


def lmmse_oracle(c, mu, s2, y):
    """Component LMMSE with an explicit inverse."""
    return c @ np.linalg.inv(c + s2 * np.eye(len(mu))) @ (y - mu) + mu


E1 = basis([[1.0], [0.0]])


# -- LS / ML --------------------------------------------------------------------


def test_ls_identity(rng):
    y = crandn(rng, 5)
    np.testing.assert_array_equal(estimate_ls(EstimatorInput(y, 0.3)).estimate, y)
    np.testing.assert_array_equal(estimate_ls(EstimatorInput(np.zeros(3), 1.0)).estimate, 0)


def test_ml_projects_onto_first_axis():
    est = estimate_ml(EstimatorInput(np.array([3 + 4j, 7]), 1.0, E1))
    np.testing.assert_allclose(est.estimate, [3 + 4j, 0], atol=1e-15)


def test_ml_full_dimension_and_orthogonal(rng):
    y = crandn(rng, 4)
    np.testing.assert_allclose(
        estimate_ml(EstimatorInput(y, 1.0, random_basis(rng, 4, 4))).estimate, y, atol=1e-12
    )
    assert np.allclose(estimate_ml(EstimatorInput(np.array([0, 2j]), 1.0, E1)).estimate, 0)


def test_ml_needs_subspace():
    with pytest.raises(InvalidArgumentError):
        estimate_ml(EstimatorInput(np.ones(2), 1.0))


def test_input_validation():
    with pytest.raises(InvalidArgumentError):
        EstimatorInput(np.ones(2), 0.0)
    with pytest.raises(InvalidArgumentError):
        estimate_ml(EstimatorInput(np.ones(3), 1.0, E1))


# -- sample covariance family ----------------------------------------------------


def test_scov_identity_covariance(rng):
    y = crandn(rng, 4)
    np.testing.assert_allclose(estimate_scov(EstimatorInput(y, 1.0), np.eye(4)).estimate, y / 2)


def test_scov_low_noise_limit(rng):
    y = crandn(rng, 6)
    est = estimate_scov(EstimatorInput(y, 1e-12), random_pd(rng, 6)).estimate
    assert np.linalg.norm(est - y) < 1e-6 * np.linalg.norm(y)


def test_scov_diagonal_closed_form():
    est = estimate_scov(EstimatorInput(np.array([4.0, 4.0]), 1.0), np.diag([3.0, 1.0]))
    np.testing.assert_allclose(est.estimate, [3.0, 2.0], atol=1e-14)


def test_scov_filter_reuse_and_staleness(rng):
    c = random_pd(rng, 3)
    f = build_lmmse_filter(c, 0.5)
    y = crandn(rng, 3)
    np.testing.assert_allclose(
        estimate_scov(EstimatorInput(y, 0.5), c, f).estimate,
        lmmse_oracle(c, np.zeros(3), 0.5, y), atol=1e-12,
    )
    with pytest.raises(StaleFilterError):
        estimate_scov(EstimatorInput(y, 0.25), c, f)


def test_sub_scov_full_dimension_equals_scov(rng):
    c = random_pd(rng, 5)
    y = crandn(rng, 5)
    inp = EstimatorInput(y, 0.7, random_basis(rng, 5, 5))
    np.testing.assert_allclose(
        estimate_sub_scov(inp, c).estimate, estimate_scov(inp, c).estimate, rtol=1e-8, atol=1e-12
    )


def test_sub_scov_identity_covariance(rng):
    b = random_basis(rng, 6, 2)
    y = crandn(rng, 6)
    p = b.basis @ b.basis.conj().T
    est = estimate_sub_scov(EstimatorInput(y, 0.4, b), np.eye(6)).estimate
    np.testing.assert_allclose(est, p @ y / 1.4, atol=1e-12)


def test_sub_scov_orthogonal_observation(rng):
    est = estimate_sub_scov(EstimatorInput(np.array([0, 1 - 1j]), 1.0, E1), random_pd(rng, 2))
    np.testing.assert_allclose(est.estimate, 0, atol=1e-15)


def test_proj_scov_full_dimension_equals_scov(rng):
    c = random_pd(rng, 5)
    y = crandn(rng, 5)
    inp = EstimatorInput(y, 0.7, random_basis(rng, 5, 5))
    np.testing.assert_allclose(
        estimate_proj_scov(inp, c).estimate, estimate_scov(inp, c).estimate, rtol=1e-8, atol=1e-12
    )


def test_proj_scov_identity_covariance_half_dimension(rng):
    b = random_basis(rng, 8, 4)
    y = crandn(rng, 8)
    p = b.basis @ b.basis.conj().T
    est = estimate_proj_scov(EstimatorInput(y, 1.0, b), np.eye(8)).estimate
    np.testing.assert_allclose(est, (2 / 3) * p @ y, atol=1e-12)


def test_proj_scov_orthogonal_observation(rng):
    est = estimate_proj_scov(EstimatorInput(np.array([0, 3j]), 1.0, E1), random_pd(rng, 2))
    np.testing.assert_allclose(est.estimate, 0, atol=1e-15)


# -- mixture family -----------------------------------------------------------------


def unit_model(m):
    return GmmModel([1.0], np.zeros((1, m)), np.eye(m)[None])


def test_gmm_single_unit_component():
    model = unit_model(2)
    inp = EstimatorInput(np.array([2.0, 0.0]), 1.0)
    for filters in (None, build_gmm_filters(model, 1.0)):
        est = estimate_gmm(inp, model, filters)
        np.testing.assert_allclose(est.estimate, [1.0, 0.0], atol=1e-14)
        np.testing.assert_array_equal(est.responsibilities, [1.0])


def test_gmm_single_component_equals_scov(rng):
    for _ in range(20):
        c = random_pd(rng, 6)
        model = GmmModel([1.0], np.zeros((1, 6)), c[None])
        inp = EstimatorInput(crandn(rng, 6), rng.uniform(0.05, 5))
        ref = estimate_scov(inp, c).estimate
        np.testing.assert_allclose(estimate_gmm(inp, model).estimate, ref, rtol=0, atol=1e-12)
        filt = build_gmm_filters(model, inp.noise_var)
        np.testing.assert_allclose(estimate_gmm(inp, model, filt).estimate, ref, rtol=0, atol=1e-12)


def test_gmm_symmetric_components_average():
    mu = np.array([[1 + 1j, 2], [-1 - 1j, -2]])
    model = GmmModel([0.5, 0.5], mu, np.stack([np.eye(2), np.eye(2)]))
    est = estimate_gmm(EstimatorInput(np.zeros(2), 1.0), model)
    np.testing.assert_allclose(est.responsibilities, [0.5, 0.5], atol=1e-15)
    comp = [lmmse_oracle(np.eye(2), mu[k], 1.0, np.zeros(2)) for k in range(2)]
    np.testing.assert_allclose(est.estimate, 0.5 * (comp[0] + comp[1]), atol=1e-15)


def test_build_filters_identity_covariance():
    f = build_gmm_filters(unit_model(3), 1.0)
    np.testing.assert_allclose(f.filters[0], 0.5 * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(f.biases[0], 0, atol=1e-15)


def test_build_filters_deterministic(rng):
    model = random_model(rng, 4, 5)
    a, b = build_gmm_filters(model, 0.3), build_gmm_filters(model, 0.3)
    np.testing.assert_array_equal(a.filters, b.filters)
    np.testing.assert_array_equal(a.biases, b.biases)


def test_build_filters_rejects_nonpositive_noise(rng):
    with pytest.raises(InvalidArgumentError):
        build_gmm_filters(random_model(rng, 2, 2), 0.0)


def test_filter_path_matches_direct_path(rng):
    model = random_model(rng, 6, 8)
    for _ in range(100):
        s2 = 10 ** rng.uniform(-2, 1)
        y = crandn(rng, 8) * rng.uniform(0.5, 3)
        inp = EstimatorInput(y, s2)
        fast = estimate_gmm(inp, model, build_gmm_filters(model, s2))
        slow = estimate_gmm(inp, model)
        assert np.linalg.norm(fast.estimate - slow.estimate) <= 1e-10 * max(1, np.linalg.norm(slow.estimate))
        np.testing.assert_allclose(fast.responsibilities, slow.responsibilities, atol=1e-10)


def test_gmm_stale_filters(rng):
    model = random_model(rng, 2, 3)
    f = build_gmm_filters(model, 1.0)
    with pytest.raises(StaleFilterError):
        estimate_gmm(EstimatorInput(np.ones(3), 2.0), model, f)
    b = random_basis(rng, 3, 1)
    with pytest.raises(StaleFilterError):
        # projected estimator needs filters for noise_var * J / M
        estimate_proj_gmm(EstimatorInput(np.ones(3), 1.0, b), model, f)


def test_component_estimates_match_explicit_lmmse(rng):
    model = random_model(rng, 3, 4)
    y = crandn(rng, 4)
    s2 = 0.6
    for filters in (None, build_gmm_filters(model, s2)):
        est = estimate_gmm(EstimatorInput(y, s2), model, filters)
        for k in range(3):
            ref = lmmse_oracle(model.covariances[k], model.means[k], s2, y)
            np.testing.assert_allclose(est.component_estimates[k], ref, atol=1e-12)
        # convex combination of the component estimates
        np.testing.assert_allclose(est.estimate, est.responsibilities @ est.component_estimates,
                                   atol=1e-12)


def test_one_hot_responsibility_reproduces_component(rng):
    # a single dominant component drives the responsibility to one-hot
    m = 3
    mu = np.array([[0, 0, 0], [50, 50j, -50]], dtype=complex)
    model = GmmModel([0.5, 0.5], mu, np.stack([np.eye(m), 2 * np.eye(m)]))
    y = crandn(rng, m) * 0.1
    est = estimate_gmm(EstimatorInput(y, 0.5), model)
    np.testing.assert_array_equal(est.responsibilities, [1.0, 0.0])
    np.testing.assert_allclose(est.estimate, lmmse_oracle(np.eye(m), mu[0], 0.5, y), atol=1e-12)


def test_sub_gmm_full_dimension_equals_gmm(rng):
    model = random_model(rng, 4, 6)
    inp = EstimatorInput(crandn(rng, 6), 0.8, random_basis(rng, 6, 6))
    a = estimate_sub_gmm(inp, model)
    b = estimate_gmm(inp, model)
    np.testing.assert_allclose(a.estimate, b.estimate, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(a.responsibilities, b.responsibilities, atol=1e-10)


def test_sub_gmm_unit_component(rng):
    b = random_basis(rng, 6, 2)
    y = crandn(rng, 6)
    p = b.basis @ b.basis.conj().T
    est = estimate_sub_gmm(EstimatorInput(y, 0.5, b), unit_model(6))
    np.testing.assert_allclose(est.estimate, p @ y / 1.5, atol=1e-12)


def test_sub_gmm_low_noise_limit(rng):
    model = random_model(rng, 3, 6, zero_mean=True)
    b = random_basis(rng, 6, 3)
    y = crandn(rng, 6)
    p = b.basis @ b.basis.conj().T
    est = estimate_sub_gmm(EstimatorInput(y, 1e-12, b), model).estimate
    assert np.linalg.norm(est - p @ y) < 1e-6 * np.linalg.norm(y)


def test_sub_gmm_uses_projected_density(rng):
    model = random_model(rng, 3, 5)
    b = random_basis(rng, 5, 2)
    y = crandn(rng, 5)
    v = b.basis
    s2 = 0.4
    logp = []
    for k in range(3):
        c = v.conj().T @ model.covariances[k] @ v + s2 * np.eye(2)
        d = v.conj().T @ (y - model.means[k])
        logp.append(np.log(model.weights[k]) - np.linalg.slogdet(c)[1]
                    - (d.conj() @ np.linalg.solve(c, d)).real)
    logp = np.array(logp)
    ref = np.exp(logp - logp.max())
    ref /= ref.sum()
    est = estimate_sub_gmm(EstimatorInput(y, s2, b), model)
    np.testing.assert_allclose(est.responsibilities, ref, atol=1e-12)
    comp = [v @ lmmse_oracle(v.conj().T @ model.covariances[k] @ v, v.conj().T @ model.means[k],
                             s2, v.conj().T @ y) for k in range(3)]
    np.testing.assert_allclose(est.estimate, ref @ np.array(comp), atol=1e-12)


def test_proj_gmm_full_dimension_equals_gmm(rng):
    model = random_model(rng, 4, 6)
    inp = EstimatorInput(crandn(rng, 6), 0.8, random_basis(rng, 6, 6))
    a = estimate_proj_gmm(inp, model, build_gmm_filters(model, 0.8))
    np.testing.assert_allclose(a.estimate, estimate_gmm(inp, model).estimate, rtol=1e-8, atol=1e-12)


def test_proj_gmm_unit_component_quarter_dimension(rng):
    b = random_basis(rng, 8, 2)
    y = crandn(rng, 8)
    p = b.basis @ b.basis.conj().T
    model = unit_model(8)
    inp = EstimatorInput(y, 1.0, b)
    for filters in (None, build_gmm_filters(model, 0.25)):
        np.testing.assert_allclose(estimate_proj_gmm(inp, model, filters).estimate, 0.8 * p @ y,
                                   atol=1e-12)


def test_proj_gmm_orthogonal_observation_zero_means(rng):
    model = random_model(rng, 3, 2, zero_mean=True)
    est = estimate_proj_gmm(EstimatorInput(np.array([0, 5 - 1j]), 1.0, E1), model)
    np.testing.assert_allclose(est.estimate, 0, atol=1e-12)


def test_batch_matches_single(rng):
    model = random_model(rng, 3, 4)
    b = random_basis(rng, 4, 2)
    ys = crandn(rng, 5, 4)
    bank = EstimatorBank(model, random_pd(rng, 4))
    for name in ESTIMATORS:
        batch = bank.estimate(name, EstimatorInput(ys, 0.3, b)).estimate
        for i in range(5):
            single = bank.estimate(name, EstimatorInput(ys[i], 0.3, b)).estimate
            np.testing.assert_allclose(batch[i], single, atol=1e-12)


def test_collapse_for_full_dimension_subspace(rng):
    for _ in range(10):
        model = random_model(rng, 3, 5)
        bank = EstimatorBank(model, random_pd(rng, 5))
        inp = EstimatorInput(crandn(rng, 5), rng.uniform(0.1, 2), random_basis(rng, 5, 5))
        for name, base in COUNTERPART.items():
            a = bank.estimate(name, inp).estimate
            b = bank.estimate(base, inp).estimate
            assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_estimates_are_finite(rng):
    m = 8
    model = random_model(rng, 4, m)
    bank = EstimatorBank(model, random_pd(rng, m))
    ys = crandn(rng, 10000, m) * 10 ** rng.uniform(-3, 3, size=(10000, 1))
    b = random_basis(rng, m, 3)
    for name in ESTIMATORS:
        assert np.all(np.isfinite(bank.estimate(name, EstimatorInput(ys, 0.1, b)).estimate)), name


def test_bank_unknown_estimator():
    with pytest.raises(InvalidArgumentError):
        EstimatorBank().estimate("wiener", EstimatorInput(np.ones(2), 1.0))
