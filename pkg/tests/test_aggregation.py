import numpy as np
import pytest

from gpcommittee import (AggregationMethod, Hyperparams, MissingCommunicationSubset,
                         OptimizerConfig, PriorVariance, bcm, beta_entropy, fit, gpoe,
                         grbcm, grbcm_fuse, grbcm_partition, npae, poe, predict,
                         prepare_grbcm, random_partition, rbcm, toy_generate, train)
from gpcommittee.ensemble import experts_predict


def hp_1d(log_sf=0.0, log_l=0.0, log_noise=-1.0):
    return Hyperparams(log_sf, np.array([log_l]), log_noise)


# ---------------------------------------------------------------------------
# entropy weight

def test_beta_entropy_uninformative_expert():
    assert beta_entropy(PriorVariance(2.0), 2.0) == 0.0


def test_beta_entropy_log_gap():
    v = 0.8
    assert beta_entropy(PriorVariance(np.e * v), v) == pytest.approx(0.5, rel=1e-12)


def test_beta_entropy_clamped_at_zero():
    assert beta_entropy(PriorVariance(1.0), 1.5) == 0.0


def test_beta_entropy_rejects_nonpositive():
    with pytest.raises(ValueError):
        beta_entropy(PriorVariance(1.0), 0.0)


# ---------------------------------------------------------------------------
# PoE / GPoE

def test_poe_single_expert_unchanged():
    means = np.array([[0.4, -1.2]])
    variances = np.array([[0.5, 0.9]])
    agg = poe(means, variances)
    np.testing.assert_allclose(agg.means, means[0], rtol=1e-15)
    np.testing.assert_allclose(agg.variances, variances[0], rtol=1e-15)


def test_poe_identical_experts_divide_variance():
    M = 5
    means = np.full((M, 3), 0.7)
    variances = np.full((M, 3), 1.3)
    agg = poe(means, variances)
    np.testing.assert_allclose(agg.means, 0.7, rtol=1e-14)
    np.testing.assert_allclose(agg.variances, 1.3 / M, rtol=1e-14)


def test_poe_two_expert_weighted_mean():
    agg = poe(np.array([[0.0], [2.0]]), np.array([[1.0], [1.0]]))
    assert agg.means[0] == pytest.approx(1.0, abs=1e-15)
    assert agg.variances[0] == pytest.approx(0.5, rel=1e-15)


def test_gpoe_uniform_identical_experts_exact():
    M = 4
    means = np.full((M, 2), -0.3)
    variances = np.full((M, 2), 0.8)
    agg = gpoe(means, variances, PriorVariance(1.5), mode="uniform")
    np.testing.assert_allclose(agg.means, -0.3, rtol=1e-15)
    np.testing.assert_allclose(agg.variances, 0.8, rtol=1e-14)


def test_gpoe_uniform_identities_with_poe():
    rng = np.random.default_rng(0)
    M, n = 6, 40
    means = rng.normal(size=(M, n))
    variances = rng.uniform(0.2, 1.4, size=(M, n))
    base = poe(means, variances)
    agg = gpoe(means, variances, PriorVariance(1.5), mode="uniform")
    np.testing.assert_allclose(agg.means, base.means, atol=1e-12)
    np.testing.assert_allclose(agg.variances, M * base.variances, rtol=1e-12)


def test_gpoe_entropy_floors_at_prior_precision():
    pv = PriorVariance(2.0)
    means = np.array([[0.5], [1.5]])
    variances = np.array([[2.0], [2.0]])  # both at the prior: betas vanish
    agg = gpoe(means, variances, pv, mode="entropy")
    assert agg.variances[0] == pytest.approx(2.0, rel=1e-14)
    assert agg.degeneracy_count == 1
    np.testing.assert_array_equal(agg.betas, 0.0)


def test_gpoe_unknown_mode():
    with pytest.raises(ValueError):
        gpoe(np.ones((1, 1)), np.ones((1, 1)), PriorVariance(1.0), mode="mixed")


# ---------------------------------------------------------------------------
# BCM family

def test_bcm_single_expert_recovers_input():
    means = np.array([[0.2, 1.0]])
    variances = np.array([[0.4, 0.6]])
    agg = bcm(means, variances, PriorVariance(1.5))
    np.testing.assert_allclose(agg.means, means[0], rtol=1e-14)
    np.testing.assert_allclose(agg.variances, variances[0], rtol=1e-14)


def test_bcm_prior_recovery_and_trio_behaviour():
    pv = 1.7
    M = 4
    means = np.zeros((M, 3))
    variances = np.full((M, 3), pv)
    agg_bcm = bcm(means, variances, PriorVariance(pv))
    np.testing.assert_allclose(agg_bcm.variances, pv, rtol=1e-12)
    np.testing.assert_allclose(agg_bcm.means, 0.0, atol=1e-15)
    agg_rbcm = rbcm(means, variances, PriorVariance(pv))
    np.testing.assert_allclose(agg_rbcm.variances, pv, rtol=1e-12)
    agg_poe = poe(means, variances)
    np.testing.assert_allclose(agg_poe.variances, pv / M, rtol=1e-14)
    agg_gpoe = gpoe(means, variances, PriorVariance(pv), mode="uniform")
    np.testing.assert_allclose(agg_gpoe.variances, pv, rtol=1e-14)


def test_bcm_remark_ratio_two_experts():
    # both experts at half the prior variance: a* = 4/3
    pv = 2.4
    means = np.array([[1.0], [0.4]])
    variances = np.full((2, 1), pv / 2)
    agg_poe = poe(means, variances)
    agg_bcm = bcm(means, variances, PriorVariance(pv))
    assert agg_bcm.variances[0] == pytest.approx(4.0 / 3.0 * agg_poe.variances[0], rel=1e-12)
    assert agg_bcm.means[0] == pytest.approx(4.0 / 3.0 * agg_poe.means[0], rel=1e-12)


def test_bcm_variance_always_above_poe():
    rng = np.random.default_rng(1)
    pv = 2.0
    M, n = 7, 60
    means = rng.normal(size=(M, n))
    variances = rng.uniform(0.05, 1.0, size=(M, n)) * pv
    agg_poe = poe(means, variances)
    agg_bcm = bcm(means, variances, PriorVariance(pv))
    assert np.all(agg_bcm.variances > agg_poe.variances)


def test_rbcm_single_informative_expert_differs_from_input():
    # entropy weight below one keeps RBCM away from the exact single-expert density
    pv = 2.0
    means = np.array([[1.0]])
    variances = np.array([[0.5]])
    agg = rbcm(means, variances, PriorVariance(pv))
    assert abs(agg.means[0] - 1.0) > 1e-3
    assert abs(agg.variances[0] - 0.5) > 1e-3


def test_rbcm_identical_experts_closed_form():
    pv = 1.9
    M = 3
    var = pv / np.e  # beta = 0.5 each
    means = np.full((M, 1), 0.6)
    variances = np.full((M, 1), var)
    agg = rbcm(means, variances, PriorVariance(pv))
    precision = M * 0.5 * (np.e / pv) + (1 - M * 0.5) / pv
    assert agg.variances[0] == pytest.approx(1.0 / precision, rel=1e-12)
    np.testing.assert_allclose(agg.betas, 0.5, rtol=1e-12)


def test_bcm_precision_floor_counts_degeneracy():
    # slightly informative experts keep the corrected precision positive
    means = np.zeros((3, 1))
    variances = np.array([[0.999999], [1.0], [1.0]])
    agg = bcm(means, variances, PriorVariance(1.0))
    assert agg.degeneracy_count == 0
    # experts worse than the prior underflow the subtraction: floor + counter
    under = bcm(np.zeros((2, 1)), np.array([[2.0], [2.0]]), PriorVariance(1.0))
    assert under.degeneracy_count == 1
    assert under.variances[0] == pytest.approx(1e12, rel=1e-6)


def test_aggregated_prediction_rejects_bad_variances():
    from gpcommittee.aggregate import AggregatedPrediction
    with pytest.raises(ValueError):
        AggregatedPrediction(np.zeros(2), np.array([1.0, -1.0]), AggregationMethod.POE)


def test_inputs_validated():
    with pytest.raises(ValueError):
        poe(np.zeros((2, 3)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        poe(np.zeros((2, 2)), np.array([[1.0, 0.0], [1.0, 1.0]]))


# ---------------------------------------------------------------------------
# NPAE

def _committee(n=200, M=4, seed=0, kind="random", max_evals=30):
    ds = toy_generate(n, 50, seed=seed)
    if kind == "grbcm":
        part = grbcm_partition(ds.X_train, M, seed=seed)
    else:
        part = random_partition(n, M, seed=seed)
    committee = train(ds.X_train, ds.y_train, part,
                      OptimizerConfig(max_evals=max_evals, initial_hp=Hyperparams.default(1)))
    return ds, committee


def test_npae_single_expert_equals_full_gp():
    ds, committee = _committee(n=200, M=1)
    full = fit(ds.X_train, ds.y_train, committee.hp)
    fm, fv = predict(full, ds.X_test)
    agg = npae(committee, ds.X_test)
    assert np.max(np.abs(agg.means - fm)) <= 1e-8 * np.max(np.abs(fm))
    assert np.max(np.abs(agg.variances - fv)) <= 1e-8 * np.max(fv)


def test_npae_far_recovers_prior():
    ds, committee = _committee(n=150, M=3)
    agg = npae(committee, np.array([[80.0]]))
    prior = committee.hp.output_variance + committee.hp.noise_variance
    assert abs(agg.means[0]) < 1e-6
    assert agg.variances[0] == pytest.approx(prior, rel=1e-8)


# ---------------------------------------------------------------------------
# GRBCM

def test_grbcm_fuse_first_row_weight_one():
    rng = np.random.default_rng(2)
    mu_c, var_c = rng.normal(size=5), rng.uniform(0.5, 1.0, size=5)
    mu_aug = rng.normal(size=(3, 5))
    var_aug = rng.uniform(0.1, 0.4, size=(3, 5))
    _, _, betas, _ = grbcm_fuse(mu_c, var_c, mu_aug, var_aug, 1.0)
    np.testing.assert_array_equal(betas[0], 1.0)


def test_grbcm_fuse_uninformative_subsets_collapse_to_first():
    # every extra augmented expert matches the communication density exactly
    rng = np.random.default_rng(3)
    n = 6
    mu_c, var_c = rng.normal(size=n), rng.uniform(0.5, 1.0, size=n)
    mu_first = rng.normal(size=n)
    var_first = rng.uniform(0.2, 0.4, size=n)
    mu_aug = np.vstack([mu_first, mu_c, mu_c])
    var_aug = np.vstack([var_first, var_c, var_c])
    mean, var, betas, floored = grbcm_fuse(mu_c, var_c, mu_aug, var_aug, 1.0)
    np.testing.assert_array_equal(betas[1:], 0.0)
    np.testing.assert_allclose(mean, mu_first, rtol=1e-12)
    np.testing.assert_allclose(var, var_first, rtol=1e-12)
    assert floored == 0


def test_grbcm_fuse_three_expert_closed_form():
    # communication variance e times the second augmented variance: beta = 0.5
    var_c = 1.1
    var_2 = 0.7
    var_3 = var_c / np.e
    mu_c, mu_2, mu_3 = 0.4, 1.2, -0.5
    mean, var, betas, _ = grbcm_fuse(
        np.array([mu_c]), np.array([var_c]),
        np.array([[mu_2], [mu_3]]), np.array([[var_2], [var_3]]), 1.0)
    beta3 = 0.5
    precision = 1.0 / var_2 + beta3 / var_3 - beta3 / var_c
    expected_var = 1.0 / precision
    expected_mean = expected_var * (mu_2 / var_2 + beta3 * mu_3 / var_3
                                    - beta3 * mu_c / var_c)
    assert betas[1, 0] == pytest.approx(beta3, rel=1e-12)
    assert var[0] == pytest.approx(expected_var, rel=1e-12)
    assert mean[0] == pytest.approx(expected_mean, rel=1e-12)


def test_grbcm_two_subsets_equals_full_gp():
    ds, committee = _committee(n=160, M=2, kind="grbcm")
    prepared = prepare_grbcm(committee)
    agg = grbcm(prepared, ds.X_test)
    full = fit(ds.X_train, ds.y_train, committee.hp)
    fm, fv = predict(full, ds.X_test)
    assert np.max(np.abs(agg.means - fm)) <= 1e-10 * max(1.0, np.max(np.abs(fm)))
    assert np.max(np.abs(agg.variances - fv)) <= 1e-10 * np.max(fv)


def test_grbcm_requires_preparation():
    ds, committee = _committee(n=120, M=3, kind="grbcm")
    with pytest.raises(MissingCommunicationSubset):
        grbcm(committee, ds.X_test)


def test_grbcm_betas_recorded_per_point():
    ds, committee = _committee(n=150, M=3, kind="grbcm")
    prepared = prepare_grbcm(committee)
    agg = grbcm(prepared, ds.X_test)
    assert agg.betas.shape == (2, ds.n_test)
    np.testing.assert_array_equal(agg.betas[0], 1.0)
    assert np.all(agg.betas >= 0.0)


# ---------------------------------------------------------------------------
# cross-rule invariants on a real committee

def test_prior_recovery_far_from_data_all_rules():
    ds, committee = _committee(n=150, M=3, kind="grbcm")
    far = np.array([[70.0]])
    means, variances = experts_predict(committee, far)
    pv = PriorVariance.from_hyperparams(committee.hp)
    M = committee.M
    assert poe(means, variances).variances[0] == pytest.approx(pv.value / M, rel=1e-8)
    assert gpoe(means, variances, pv).variances[0] == pytest.approx(pv.value, rel=1e-8)
    assert bcm(means, variances, pv).variances[0] == pytest.approx(pv.value, rel=1e-6)
    assert rbcm(means, variances, pv).variances[0] == pytest.approx(pv.value, rel=1e-6)
    prepared = prepare_grbcm(committee)
    assert grbcm(prepared, far).variances[0] == pytest.approx(pv.value, rel=1e-6)
