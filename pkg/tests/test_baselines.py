import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecop.baselines import LagrangianRule, PenaltyRule, p3o_loss, p3o_penalty_train, ppo_lagrangian_train
from ecop.config import RunConfig
from ecop.envs import make_env
from ecop.losses import cost_surrogate, final_loss
from ecop.penalty import PenaltyState
from ecop.training import Trainer, clipped_surrogate_train

from conftest import make_batch

BASE = dict(env="hazard_gridworld", env_overrides={"horizon": 8, "threshold": 0.3}, seeds=(0,),
            episodes=10, batch_episodes=16, lr=0.1)


def _trace(records):
    return [(r.J, r.JC, r.loss) for r in records]


def test_p3o_zero_kappa_equals_unconstrained_run():
    cfg = RunConfig(**BASE, kappa=0.0)
    env = make_env(cfg.env, **cfg.env_overrides)
    assert _trace(p3o_penalty_train(env, cfg, 3)) == _trace(clipped_surrogate_train(env, cfg, 3))


def test_lagrangian_infinite_threshold_equals_unconstrained_run():
    overrides = {"horizon": 8, "threshold": float("inf")}
    cfg = RunConfig(**{**BASE, "env_overrides": overrides})
    env = make_env(cfg.env, **overrides)
    lag = list(ppo_lagrangian_train(env, cfg, 2))
    plain = list(clipped_surrogate_train(env, cfg, 2))
    for a, b in zip(lag, plain):
        assert a.J == pytest.approx(b.J, abs=1e-9)
        assert a.loss == pytest.approx(b.loss, abs=1e-9)
    assert all(r.lambda_max == (0.0,) for r in lag)


def test_lagrange_multiplier_stays_non_negative():
    cfg = RunConfig(**{**BASE, "algorithm": "ppo_lagrangian", "lagrange_lr": 0.5, "episodes": 20})
    tr = Trainer(make_env(cfg.env, **cfg.env_overrides), cfg, 0)
    nus = []
    for k in range(1, cfg.episodes + 1):
        tr.episode(k)
        nus.append(tr.rule.nu.copy())
    nus = np.array(nus)
    assert np.all(nus >= 0) and nus.max() > 0


def test_dual_ascent_step():
    cfg = RunConfig(lagrange_lr=0.5, lambda_init=1.0)
    rule = LagrangianRule(cfg, 3, [0, 1])
    batch, _, _ = make_batch(0, m=2)
    rule.before(batch)
    np.testing.assert_allclose(rule.nu, np.maximum(0.0, 1.0 + 0.5 * batch.offsets))


def test_algorithms_share_the_first_batch():
    # identical initial parameters and noise, so episode-1 statistics agree across algorithms
    env = make_env(BASE["env"], **BASE["env_overrides"])
    firsts = []
    for algo in ("ecop", "ppo_lagrangian", "p3o_penalty"):
        cfg = RunConfig(**{**BASE, "algorithm": algo, "episodes": 1})
        rec = Trainer(env, cfg, 5).episode(1)
        firsts.append((rec.J, rec.JC))
    assert firsts[0] == firsts[1] == firsts[2]


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0), st.integers(1, 3))
def test_p3o_loss_formula(seed, kappa, t):
    batch, _, theta = make_batch(seed, m=2)
    y = np.array([cost_surrogate(batch, theta, 0.2, i, t).item() + batch.offsets[i] for i in range(2)])
    want = final_loss(batch, theta, PenaltyState(np.zeros((3, 2)), beta=1.0), t).item()  # lambda = 0, no ReLU part
    want -= 0.5 * np.sum(np.maximum(y, 0) ** 2)  # remove the beta = 1 quadratic
    want += kappa * np.sum(np.maximum(y, 0))
    assert p3o_loss(batch, theta, kappa, 0.2, t).item() == pytest.approx(want, abs=1e-10)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5.0), st.integers(1, 3), st.sampled_from([1e-3, 1e-5]))
def test_small_beta_limit_of_final_loss(seed, kappa, t, beta):
    # with lambda = kappa the damped term is exactly kappa * y + beta * y^2 / 2 once
    # y > -kappa / beta, so final_loss tends to p3o_loss + kappa * y, not to p3o_loss
    batch, _, theta = make_batch(seed, m=1)
    y = cost_surrogate(batch, theta, 0.2, 0, t).item() + batch.offsets[0]
    penalty = PenaltyState(np.full((3, 1), kappa), beta=beta, beta_max=1.0)
    got = final_loss(batch, theta, penalty, t).item()
    p3o = p3o_loss(batch, theta, kappa, 0.2, t).item()
    assert got == pytest.approx(p3o + kappa * y + 0.5 * beta * y * y, abs=1e-8)
    assert abs(got - p3o - kappa * y) <= beta * y * y


def test_penalty_rule_reports_kappa():
    rule = PenaltyRule(RunConfig(kappa=2.5), 4, [0])
    np.testing.assert_array_equal(rule.multipliers(), [2.5])


def test_huge_kappa_reaches_feasibility():
    # uniform start is feasible for d = 6; a 1e6 penalty must keep it that way
    overrides = {"horizon": 30, "threshold": 6.0}
    cfg = RunConfig(env="hazard_gridworld", env_overrides=overrides, seeds=(0,), episodes=60,
                    batch_episodes=32, lr=0.05, algorithm="p3o_penalty", kappa=1e6)
    env = make_env(cfg.env, **overrides)
    recs = list(p3o_penalty_train(env, cfg, 0))
    final = np.mean([r.JC[0] for r in recs[-20:]])
    assert final <= 6.0 * 1.05
