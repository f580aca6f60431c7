import numpy as np
import pytest

from gpcommittee import (Hyperparams, MissingCommunicationSubset, OptimizerConfig,
                         experts_predict, factorized_nlml, fit, grbcm_partition,
                         minimize, nlml, predict, prepare_grbcm, random_partition,
                         toy_generate, train)
from gpcommittee.partition import disjoint_partition


def hp_1d(log_sf=0.0, log_l=0.0, log_noise=-1.0):
    return Hyperparams(log_sf, np.array([log_l]), log_noise)


def test_single_expert_matches_exact_nlml():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(50, 1))
    y = np.sin(5 * X[:, 0]) + 0.2 * rng.normal(size=50)
    part = random_partition(50, 1, seed=0)
    hp = hp_1d()
    v_fact, g_fact = factorized_nlml(X, y, part, hp)
    v_full, g_full = nlml(X, y, hp)
    assert v_fact == pytest.approx(v_full, rel=1e-12)
    np.testing.assert_allclose(g_fact, g_full, rtol=1e-12)


def test_two_far_clusters_approximate_full_nlml():
    # far-separated clusters make the full covariance nearly block diagonal
    rng = np.random.default_rng(1)
    X = np.concatenate([rng.uniform(0, 1, 50), rng.uniform(100, 101, 50)])[:, None]
    y = np.sin(3 * X[:, 0]) + 0.3 * rng.normal(size=100)
    part = disjoint_partition(X, 2, seed=0)
    hp = hp_1d(log_noise=-0.5)
    v_fact, _ = factorized_nlml(X, y, part, hp)
    v_full, _ = nlml(X, y, hp)
    assert abs(v_fact - v_full) / abs(v_full) < 1e-3


def test_factorized_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    step = 1e-6
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    part = random_partition(30, 3, seed=1)
    vec = np.array([0.1, -0.2, 0.3, -0.6])
    _, grad = factorized_nlml(X, y, part, Hyperparams.from_vector(vec))
    fd = np.empty_like(grad)
    for j in range(vec.size):
        plus, minus = vec.copy(), vec.copy()
        plus[j] += step
        minus[j] -= step
        fd[j] = (factorized_nlml(X, y, part, Hyperparams.from_vector(plus))[0]
                 - factorized_nlml(X, y, part, Hyperparams.from_vector(minus))[0]) / (2 * step)
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)


def test_sum_decomposition():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(60, 1))
    y = rng.normal(size=60)
    part = random_partition(60, 4, seed=2)
    hp = hp_1d()
    v, _ = factorized_nlml(X, y, part, hp)
    per_expert = sum(nlml(X[idx], y[idx], hp)[0] for idx in part.subsets)
    assert v == pytest.approx(per_expert, rel=1e-12)


def test_train_recovers_noise_scale():
    ds = toy_generate(1000, 100, seed=0)
    part = disjoint_partition(ds.X_train, 4, seed=0)
    config = OptimizerConfig(max_evals=80, initial_hp=Hyperparams.default(1))
    committee = train(ds.X_train, ds.y_train, part, config)
    noise_std_raw = np.exp(committee.hp.log_noise) * ds.norm_stats.y_std
    assert 0.3 <= noise_std_raw <= 0.8  # generating noise std is 0.5
    assert committee.train_time_seconds > 0


def test_train_single_expert_equals_exact_training():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(80, 1))
    y = np.sin(4 * X[:, 0]) + 0.3 * rng.normal(size=80)
    part = random_partition(80, 1, seed=0)
    config = OptimizerConfig(max_evals=40, initial_hp=Hyperparams.default(1))
    committee = train(X, y, part, config)
    direct = minimize(lambda hp: nlml(X, y, hp), config)
    assert committee.opt_trace == tuple(direct.trace)
    np.testing.assert_array_equal(committee.hp.to_vector(), direct.best_hp.to_vector())


def test_train_budget_one_keeps_initial_hp():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(30, 1))
    y = rng.normal(size=30)
    part = random_partition(30, 3, seed=0)
    start = Hyperparams.default(1)
    committee = train(X, y, part, OptimizerConfig(max_evals=1, initial_hp=start))
    np.testing.assert_array_equal(committee.hp.to_vector(), start.to_vector())
    assert len(committee.experts) == 3
    assert all(m.chol is not None for m in committee.experts)


def _small_committee(n=120, M=3, seed=0, kind="grbcm"):
    ds = toy_generate(n, 40, seed=seed)
    if kind == "grbcm":
        part = grbcm_partition(ds.X_train, M, seed=seed)
    else:
        part = random_partition(n, M, seed=seed)
    config = OptimizerConfig(max_evals=30, initial_hp=Hyperparams.default(1))
    return ds, train(ds.X_train, ds.y_train, part, config)


def test_prepare_grbcm_two_subsets_uses_all_data():
    ds, committee = _small_committee(M=2)
    prepared = prepare_grbcm(committee)
    assert len(prepared.augmented_experts) == 1
    assert prepared.augmented_experts[0].n == ds.n_train
    # original ensemble untouched (fitted lazily, returned as a new object)
    assert committee.augmented_experts is None


def test_prepare_grbcm_sizes():
    ds, committee = _small_committee(n=120, M=3)
    prepared = prepare_grbcm(committee)
    comm_size = committee.partition.subsets[0].size
    for aug, idx in zip(prepared.augmented_experts, committee.partition.subsets[1:]):
        assert aug.n == comm_size + idx.size


def test_prepare_grbcm_requires_communication_subset():
    ds, committee = _small_committee(kind="random")
    with pytest.raises(MissingCommunicationSubset):
        prepare_grbcm(committee)


def test_augmented_expert_never_less_informative():
    ds, committee = _small_committee(n=150, M=3)
    prepared = prepare_grbcm(committee)
    comm = committee.experts[committee.partition.communication_index]
    Xstar = np.random.default_rng(6).uniform(-1.5, 1.5, size=(30, 1))
    _, var_comm = predict(comm, Xstar)
    for aug in prepared.augmented_experts:
        _, var_aug = predict(aug, Xstar)
        assert np.all(var_aug <= var_comm + 1e-8)


def test_experts_predict_single_expert_matches_full_gp():
    rng = np.random.default_rng(7)
    X = rng.uniform(size=(50, 1))
    y = np.sin(5 * X[:, 0]) + 0.2 * rng.normal(size=50)
    part = random_partition(50, 1, seed=0)
    hp = hp_1d()
    committee = train(X, y, part, OptimizerConfig(max_evals=1, initial_hp=hp))
    Xstar = rng.uniform(size=(20, 1))
    means, variances = experts_predict(committee, Xstar)
    full = fit(X, y, hp)
    fm, fv = predict(full, Xstar)
    np.testing.assert_array_equal(means[0], fm)
    np.testing.assert_array_equal(variances[0], fv)


def test_experts_predict_far_recovers_prior():
    ds, committee = _small_committee(M=3)
    means, variances = experts_predict(committee, np.array([[60.0]]))
    prior = committee.hp.output_variance + committee.hp.noise_variance
    assert np.all(np.abs(means) < 1e-8)
    np.testing.assert_allclose(variances, prior, rtol=1e-10)


def test_worker_count_does_not_change_results():
    rng = np.random.default_rng(8)
    X = rng.uniform(size=(90, 2))
    y = rng.normal(size=90)
    part = random_partition(90, 4, seed=3)
    hp = Hyperparams.default(2)
    v1, g1 = factorized_nlml(X, y, part, hp, workers=1)
    v4, g4 = factorized_nlml(X, y, part, hp, workers=4)
    assert v1 == v4
    np.testing.assert_array_equal(g1, g4)
    committee = train(X, y, part, OptimizerConfig(max_evals=5, initial_hp=hp))
    Xstar = rng.uniform(size=(15, 2))
    m1, s1 = experts_predict(committee, Xstar, workers=1)
    m4, s4 = experts_predict(committee, Xstar, workers=4)
    np.testing.assert_array_equal(m1, m4)
    np.testing.assert_array_equal(s1, s4)


def test_shared_hyperparameters_across_experts():
    ds, committee = _small_committee(M=3)
    assert all(m.hp is committee.hp for m in committee.experts)


def test_ensemble_metadata_serializable():
    import json
    ds, committee = _small_committee(M=2)
    doc = committee.metadata_dict()
    text = json.dumps(doc)
    assert "hyperparams" in json.loads(text)
