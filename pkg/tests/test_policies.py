import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecop.approx import (Layout, MLPPolicy, ParamVector, TabularSoftmaxPolicy, load_checkpoint,
                         log_prob_gradient, save_checkpoint)
from ecop.approx.gradcheck import finite_diff_gradient
from ecop.approx.optim import Adam, Sgd, make_optimizer
from ecop.approx.policies import policy_from_meta, time_features


def test_layout_blocks_are_contiguous():
    lay = Layout([("a", (2, 3)), ("b", (4,))])
    assert lay.size == 10
    assert (lay["b"].start, lay["b"].stop) == (6, 10)
    theta = np.arange(10.0)
    np.testing.assert_array_equal(lay.view(theta, "a"), np.arange(6.0).reshape(2, 3))


def test_layout_rejects_duplicates():
    with pytest.raises(ValueError):
        Layout([("a", (1,)), ("a", (2,))])


def test_layout_round_trip_and_tamper_detection():
    lay = Layout([("a", (2, 3)), ("b", (4,))])
    assert Layout.from_list(lay.to_list()) == lay
    bad = lay.to_list()
    bad[1][1] = 5
    with pytest.raises(ValueError):
        Layout.from_list(bad)


def test_param_vector_is_read_only_copy():
    lay = Layout([("w", (3,))])
    src = np.zeros(3)
    pv = ParamVector(src, lay)
    src[0] = 1.0
    assert pv.values[0] == 0.0
    with pytest.raises(ValueError):
        pv.values[0] = 2.0
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4), lay)


def test_checkpoint_round_trip(tmp_path):
    pol = MLPPolicy(3, 5, num_actions=2, hidden=(4,))
    params = pol.init_params(np.random.default_rng(0))
    path = tmp_path / "ck.json"
    save_checkpoint(path, params, pol.meta())
    back, meta = load_checkpoint(path)
    np.testing.assert_array_equal(back.values, params.values)
    assert back.layout == params.layout
    rebuilt = policy_from_meta(meta)
    np.testing.assert_allclose(rebuilt.probs(back, np.array([2]), np.ones((1, 3))),
                               pol.probs(params, np.array([2]), np.ones((1, 3))))


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_tabular_init_is_uniform():
    pol = TabularSoftmaxPolicy(3, 4, 5)
    table = pol.to_table(pol.init_params())
    np.testing.assert_allclose(table, 0.2)


def test_step_out_of_range_raises():
    pol = TabularSoftmaxPolicy(3, 2, 2)
    with pytest.raises(ValueError):
        pol.logits(pol.init_params().values, np.array([4]), np.array([0]))


def test_tabular_sampling_matches_probabilities():
    pol = TabularSoftmaxPolicy(1, 1, 3)
    theta = np.array([0.0, 1.0, -1.0])
    n = 200_000
    u = np.random.default_rng(0).random((n, 1))
    acts = pol.sample(theta, np.ones(n, dtype=int), np.zeros(n, dtype=int), u)
    p = pol.probs(theta, np.array([1]), np.array([0]))[0]
    freq = np.bincount(acts, minlength=3) / n
    assert np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n))


@given(st.integers(0, 2**31 - 1))
def test_tabular_log_prob_gradient(seed):
    rng = np.random.default_rng(seed)
    pol = TabularSoftmaxPolicy(2, 3, 3)
    theta = rng.normal(size=pol.layout.size)
    h, s, a = int(rng.integers(1, 3)), int(rng.integers(3)), int(rng.integers(3))
    _, g = log_prob_gradient(pol, theta, h, s, a)
    fd = finite_diff_gradient(lambda th: log_prob_gradient(pol, th, h, s, a)[0], theta, 1e-6)
    np.testing.assert_allclose(g, fd, atol=1e-7)


@given(st.integers(0, 2**31 - 1))
def test_mlp_log_prob_gradients(seed):
    rng = np.random.default_rng(seed)
    for pol in (MLPPolicy(2, 4, num_actions=3, hidden=(5, 5)), MLPPolicy(2, 4, action_dim=2, hidden=(5,))):
        theta = pol.init_params(rng).values
        s = rng.normal(size=2)
        a = int(rng.integers(3)) if pol.discrete else rng.normal(size=2)
        _, g = log_prob_gradient(pol, theta, 2, s, a)
        fd = finite_diff_gradient(lambda th: log_prob_gradient(pol, th, 2, s, a)[0], theta, 1e-6)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_gaussian_log_prob_formula():
    pol = MLPPolicy(1, 3, action_dim=2, hidden=(3,), log_std_init=0.5)
    theta = pol.init_params(np.random.default_rng(1))
    obs = np.array([[0.3]])
    mean, std = pol.gaussian(theta, np.array([1]), obs)
    np.testing.assert_allclose(std, math.exp(0.5))
    a = mean + np.array([[0.1, -0.4]])
    expected = sum(-0.5 * (d / math.exp(0.5)) ** 2 - 0.5 - 0.5 * math.log(2 * math.pi) for d in (0.1, -0.4))
    assert pol.log_prob(theta, np.array([1]), obs, a).value[0] == pytest.approx(expected, abs=1e-12)


def test_mlp_requires_exactly_one_action_space():
    with pytest.raises(ValueError):
        MLPPolicy(2, 3)
    with pytest.raises(ValueError):
        MLPPolicy(2, 3, num_actions=2, action_dim=1)


def test_mlp_to_table_rows_sum_to_one():
    pol = MLPPolicy(2, 3, num_actions=4, hidden=(6,))
    table = pol.to_table(pol.init_params(np.random.default_rng(2)), np.random.default_rng(3).normal(size=(5, 2)))
    assert table.shape == (3, 5, 4)
    np.testing.assert_allclose(table.sum(axis=2), 1.0)


def test_time_features_append_fraction():
    f = time_features(np.array([[1.0, 2.0]]), np.array([3]), 6)
    np.testing.assert_array_equal(f, [[1.0, 2.0, 0.5]])


def test_sgd_step():
    np.testing.assert_allclose(Sgd(0.1).step(np.ones(2), np.array([1.0, -2.0])), [0.9, 1.2])


def test_adam_first_step_moves_by_lr():
    opt = Adam(0.01, 3)
    out = opt.step(np.zeros(3), np.array([5.0, -0.2, 1e-3]))
    np.testing.assert_allclose(out, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_unknown_optimizer():
    assert isinstance(make_optimizer("adam", 0.1, 2), Adam)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 0.1, 2)
