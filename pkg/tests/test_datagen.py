import numpy as np
import pytest

from stableadv.datagen import (
    ANTI_CAUSAL_SIGMAS,
    SelectionBiasSpec,
    anti_causal_means,
    gen_anti_causal,
    gen_anti_causal_envs,
    gen_selection_bias,
    gen_selection_env,
    gen_toy,
    gen_toy_training,
    one_hot,
    sample_anti_causal_coefs,
    selection_probability,
    selection_theta,
)
from stableadv.errors import SamplingBudgetError


def test_toy_noiseless_substitution():
    env, gt = gen_toy(alpha=1.0, n=50, seed=1, s_std=1.0, noise_y_std=1e-300, noise_v_std=1e-300)
    S, V = env.X[:, 0], env.X[:, 1]
    np.testing.assert_allclose(env.y, 5 * S + S**2, rtol=1e-10)
    np.testing.assert_allclose(V, env.y, rtol=1e-10)  # alpha = 1
    assert gt.stable_dims == [0] and gt.unstable_dims == [1]


def test_toy_alpha_zero_uncorrelated():
    env, _ = gen_toy(alpha=0.0, n=2000, seed=2, noise_v_std=1e-300)
    V = env.X[:, 1]
    assert np.max(np.abs(V)) < 1e-250  # V = 0*y + suppressed noise
    env2, _ = gen_toy(alpha=0.0, n=5000, seed=3)
    corr = np.corrcoef(env2.X[:, 1], env2.y)[0, 1]
    assert abs(corr) < 0.05


def test_toy_training_mixture_shape():
    envs, _ = gen_toy_training(seed=4)
    assert [e.n for e in envs] == [180, 20]
    assert [e.env_id for e in envs] == [1, 2]


def test_toy_determinism():
    a, _ = gen_toy(0.7, 100, seed=9)
    b, _ = gen_toy(0.7, 100, seed=9)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)


def test_selection_theta_pattern():
    np.testing.assert_allclose(selection_theta(5), [1 / 3, -2 / 3, 1, -1 / 3, 2 / 3])
    np.testing.assert_allclose(selection_theta(8), [1 / 3, -2 / 3, 1, -1 / 3, 2 / 3, -1, 1 / 3, -2 / 3])


def test_selection_probability_examples():
    spec = SelectionBiasSpec(r=[2.0], n=10, seed=0)
    # f(s)=1, v=1 -> exponent 0 -> probability 1
    p = selection_probability(spec, np.array([1.0]), np.array([[0, 0, 0, 0, 1.0]]))
    assert p[0] == pytest.approx(1.0)
    # f(s)=1, v=0 -> 2^-5
    p = selection_probability(spec, np.array([1.0]), np.array([[0, 0, 0, 0, 0.0]]))
    assert p[0] == pytest.approx(2.0**-5)


def test_selection_probability_in_unit_interval(rng):
    spec = SelectionBiasSpec(r=[1.7, -2.0], n=10, seed=0)
    f = rng.normal(0, 2, 500)
    V = rng.normal(0, 1, (500, 5))
    p = selection_probability(spec, f, V)
    assert np.all(p > 0) and np.all(p <= 1.0)


def test_selected_correlation_sign_follows_rate():
    for r in (2.0, -2.0):
        env, _ = gen_selection_env(SelectionBiasSpec(r=[r], n=10_000, seed=5))
        v_last = env.X[:, -1]
        corr = np.corrcoef(v_last, env.y)[0, 1]
        assert np.sign(corr) == np.sign(r)
        assert abs(corr) > 0.15


def test_selection_bias_training_counts_and_determinism():
    envs, gt = gen_selection_bias(r=[1.7], kappa=0.95, n=400, seed=6)
    assert [e.n for e in envs] == [380, 20]
    assert gt.stable_dims == list(range(5))
    envs2, _ = gen_selection_bias(r=[1.7], kappa=0.95, n=400, seed=6)
    np.testing.assert_array_equal(envs[0].X, envs2[0].X)
    np.testing.assert_array_equal(envs[1].y, envs2[1].y)


def test_selection_bias_validation():
    with pytest.raises(ValueError):
        SelectionBiasSpec(r=[1.0], n=10)  # |r| must exceed 1
    with pytest.raises(ValueError):
        gen_selection_bias(r=[1.5], kappa=0.999, n=100, seed=0)  # minority env empty


def test_selection_budget_error():
    # five simultaneous extreme rates make acceptance astronomically rare
    spec = SelectionBiasSpec(r=[1e9] * 5, n=50, seed=1)
    with pytest.raises(SamplingBudgetError):
        gen_selection_env(spec)


def test_multidim_selection_rates():
    envs, _ = gen_selection_bias(r=[2.0, 1.7, 1.5], kappa=0.9, n=300, seed=8)
    assert envs[0].dim == 10


def test_anti_causal_means_layout():
    mu = anti_causal_means(9)
    assert mu.shape == (10, 9)
    np.testing.assert_array_equal(mu[0], [0] * 7 + [1, 1])
    np.testing.assert_array_equal(mu[1], [0] * 7 + [1, -1])
    np.testing.assert_array_equal(mu[3], [0] * 7 + [-1, -1])
    np.testing.assert_array_equal(mu[9], [0] * 7 + [-1, -1])


def test_anti_causal_noiseless_recovery():
    theta_s = np.array([1.0, 2.0, -1.0])
    theta_v = np.array([0.5])
    env, _ = gen_anti_causal(
        one_hot(10, 0), 200, seed=3, theta_s=theta_s, theta_v=theta_v,
        beta=0.0, noise_y_std=1e-300,
    )
    S = env.X[:, :3]
    np.testing.assert_allclose(env.y, S @ theta_s, atol=1e-12)


def test_anti_causal_correlation_decays_with_sigma():
    theta_s, theta_v = sample_anti_causal_coefs(11, 5, 5)
    theta_v = np.full(5, 0.4)  # fixed sizeable link for a sharp monotone check
    corrs = []
    for comp in (0, 2, 5, 9):
        env, _ = gen_anti_causal(one_hot(10, comp), 10_000, seed=21, theta_s=theta_s, theta_v=theta_v)
        corrs.append(abs(np.corrcoef(env.X[:, 5], env.y)[0, 1]))
    assert corrs == sorted(corrs, reverse=True)
    assert corrs[0] > 0.8  # sigma = 0.2: strong coupling


def test_anti_causal_envs_layout_and_determinism():
    train, test, gt = gen_anti_causal_envs(seed=13, n_s=9, n_v=1, n_test=50)
    assert [e.n for e in train] == [1000, 100, 100]
    assert len(test) == 7
    assert [e.env_id for e in test] == [4, 5, 6, 7, 8, 9, 10]
    assert all(e.dim == 10 for e in train + test)
    train2, test2, _ = gen_anti_causal_envs(seed=13, n_s=9, n_v=1, n_test=50)
    np.testing.assert_array_equal(train[0].X, train2[0].X)
    np.testing.assert_array_equal(test[6].y, test2[6].y)
    assert gt.stable_dims == list(range(9))


def test_anti_causal_validation():
    with pytest.raises(ValueError):
        gen_anti_causal(np.array([0.5, 0.4]), 10, 0, np.ones(3), np.ones(1))  # not a simplex
    with pytest.raises(ValueError):
        gen_anti_causal(one_hot(10, 0), 0, 0, np.ones(3), np.ones(1))


def test_sigma_list_matches_component_count():
    assert len(ANTI_CAUSAL_SIGMAS) == 10
    assert ANTI_CAUSAL_SIGMAS[3:] == (3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0)
