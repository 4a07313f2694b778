import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecop.approx import autodiff as ad
from ecop.losses import (InsufficientDataError, SurrogateBatch, clipped_surrogate, cost_surrogate, damped_lagrangian,
                         final_loss, psi_term, psi_terms, ratios, reward_surrogate)
from ecop.penalty import PenaltyState, damped_penalty
from ecop.verify import gradients_suite

from conftest import make_batch


@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_surrogates_at_old_policy(seed, t):
    batch, old, _ = make_batch(seed)
    np.testing.assert_allclose(ratios(batch, old, t).value, 1.0, atol=1e-12)
    adv_sum = batch.adv[:, t - 1:].mean(axis=0).sum()
    assert clipped_surrogate(batch, old, 0.2, "reward", t).item() == pytest.approx(-adv_sum, abs=1e-12)
    cost_sum = batch.cost_adv[:, t - 1:, 0].mean(axis=0).sum()
    assert cost_surrogate(batch, old, 0.2, 0, t).item() == pytest.approx(cost_sum, abs=1e-12)
    assert psi_term(batch, old, t, 0) == pytest.approx(cost_sum + batch.offsets[0], abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_pessimistic_cost_bounds_unclipped_estimate(seed, t):
    batch, _, new = make_batch(seed, drift=0.8)
    unclipped = (psi_terms(batch, new, t).value - batch.offsets)[0]
    pess = cost_surrogate(batch, new, 0.2, 0, t, "pessimistic").item()
    literal = cost_surrogate(batch, new, 0.2, 0, t, "literal").item()
    assert pess >= unclipped - 1e-12
    assert unclipped >= -literal - 1e-12


def test_clipping_stops_reward_gradient_outside_trust_region():
    batch, old, _ = make_batch(3)
    # push every sampled action's probability far up: positive advantages are clipped
    batch = SurrogateBatch(batch.policy, batch.obs, batch.actions, batch.logp_old - 5.0, np.abs(batch.adv),
                           batch.cost_adv, batch.jc_prev, batch.thresholds)
    _, g = ad.value_and_grad(lambda th: clipped_surrogate(batch, th, 0.2), old)
    np.testing.assert_array_equal(g, 0.0)


def test_damped_lagrangian_decomposes():
    batch, _, new = make_batch(5, m=2)
    pen = PenaltyState(np.abs(np.random.default_rng(0).normal(size=(3, 2))), beta=3.0)
    for t in (1, 2, 3):
        expected = reward_surrogate(batch, new, t).item() + damped_penalty(psi_terms(batch, new, t).value,
                                                                            pen.lambdas[t - 1], 3.0)
        assert damped_lagrangian(batch, new, pen, t).item() == pytest.approx(expected, abs=1e-12)


def test_final_loss_matches_hand_formula():
    batch, _, new = make_batch(8, m=2)
    pen = PenaltyState(np.array([[0.5, 0.0], [1.0, 2.0], [0.0, 0.1]]), beta=4.0, epsilon_clip=0.2)
    for t in (1, 2, 3):
        expected = clipped_surrogate(batch, new, 0.2, "reward", t).item()
        for i in range(2):
            y = cost_surrogate(batch, new, 0.2, i, t).item() + batch.offsets[i]
            lam = pen.lambdas[t - 1, i]
            expected += lam * max(y, 0.0) + 2.0 * (max(0.0, y + lam / 4.0) ** 2 - lam ** 2 / 16.0)
        assert final_loss(batch, new, pen, t).item() == pytest.approx(expected, abs=1e-12)


def test_final_loss_without_constraints_is_clipped_surrogate():
    batch, _, new = make_batch(9, m=0)
    pen = PenaltyState.initial(3, 0)
    assert final_loss(batch, new, pen, 2).item() == clipped_surrogate(batch, new, 0.2, "reward", 2).item()


def test_invalid_arguments():
    batch, old, _ = make_batch(1)
    with pytest.raises(ValueError):
        ratios(batch, old, 0)
    with pytest.raises(ValueError):
        clipped_surrogate(batch, old, 1.5)
    with pytest.raises(ValueError):
        cost_surrogate(batch, old, 0.2, 0, 1, "optimistic")
    with pytest.raises(IndexError):
        psi_term(batch, old, 1, 3)
    empty = SurrogateBatch(batch.policy, batch.obs[:0], batch.actions[:0], batch.logp_old[:0], batch.adv[:0],
                           batch.cost_adv[:0], batch.jc_prev, batch.thresholds)
    with pytest.raises(InsufficientDataError):
        ratios(empty, old, 1)


def test_non_finite_batch_rejected():
    batch, _, _ = make_batch(2)
    with pytest.raises(ValueError):
        SurrogateBatch(batch.policy, batch.obs, batch.actions, batch.logp_old, batch.adv * np.nan,
                       batch.cost_adv, batch.jc_prev, batch.thresholds)


def test_final_loss_gradients_small_suite():
    rep = gradients_suite(probes=20)
    assert rep.passed, rep.summary
