"""The shared on-policy training pipeline and the e-COP update rule.

Every algorithm runs the same episode loop:

1. roll out ``batch_episodes`` trajectories under the current policy,
2. refit the critics and form Monte-Carlo advantages,
3. let the update rule adjust its multipliers,
4. sweep t = H..1, taking ``n_inner`` gradient steps on the step-t loss,
   chaining a single parameter vector through the sweep,
5. let the update rule react to the new policy, then emit a record.

Algorithms differ only in the update rule.
"""

from __future__ import annotations

import time

import numpy as np

from .approx import autodiff as ad
from .approx.advantages import monte_carlo_advantages, returns_to_go
from .approx.critics import CriticSet, MLPCritic, TabularCritic
from .approx.optim import make_optimizer
from .approx.params import ParamVector
from .approx.policies import MLPPolicy, TabularSoftmaxPolicy
from .config import RunConfig
from .envs import Env
from .losses import SurrogateBatch, cost_increments, final_loss
from .penalty import PenaltyState, adaptive_beta, lambda_update, secondary_cost_and_threshold
from .records import TrainingRecord

INIT_STREAM = 2 ** 32 - 1  # spawn key reserved for parameter initialisation


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, record: TrainingRecord):
        super().__init__(message)
        self.record = record


def make_policy(env: Env, cfg: RunConfig):
    spec = env.spec
    kind = cfg.policy
    if kind == "auto":
        kind = "tabular_softmax" if spec.tabular else "time_conditioned_net"
    if kind == "tabular_softmax":
        if not spec.tabular:
            raise ValueError(f"{spec.name} has no finite state set for a tabular policy")
        return TabularSoftmaxPolicy(spec.horizon, spec.num_states, spec.num_actions)
    return MLPPolicy(spec.obs_dim, spec.horizon, spec.num_actions, spec.action_dim,
                     cfg.hidden_sizes, cfg.activation, cfg.log_std_init)


class Rollouts:
    """Arrays for N trajectories of length H."""

    def __init__(self, states, obs, actions, rewards, costs, logp):
        self.states = states  # (N, H + 1, ...)
        self.obs = obs  # (N, H, ...) policy / critic inputs
        self.actions = actions
        self.rewards = rewards  # (N, H)
        self.costs = costs  # (N, H, m_env)
        self.logp = logp  # (N, H)

    @property
    def episode_reward(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    @property
    def episode_costs(self) -> np.ndarray:
        return self.costs.sum(axis=1)


def noise_tapes(env: Env, policy, n: int, seed: int, episode: int):
    """Per-trajectory noise drawn from its own stream ``(seed, episode, j)``."""
    H = env.horizon
    resets, pols, steps = [], [], []
    for j in range(n):
        rng = np.random.default_rng([seed, episode, j])
        resets.append(rng.random(env.reset_noise_dim))
        pols.append(rng.random((H, 1)) if policy.discrete else rng.standard_normal((H, policy.action_dim)))
        steps.append(rng.random((H, env.step_noise_dim)))
    return np.stack(resets), np.stack(pols), np.stack(steps)


def policy_inputs(env: Env, policy, states: np.ndarray) -> np.ndarray:
    return env.features(states) if policy.uses_features else states


def collect(env: Env, policy, theta: np.ndarray, n: int, seed: int, episode: int) -> Rollouts:
    H = env.horizon
    u_reset, u_pol, u_env = noise_tapes(env, policy, n, seed, episode)
    s = env.initial_states(u_reset)
    states, obs, actions, rewards, costs = [s], [], [], [], []
    for h in range(1, H + 1):
        o = policy_inputs(env, policy, s)
        a = policy.sample(theta, np.full(n, h), o, u_pol[:, h - 1])
        s, r, c = env.transition(s, a, u_env[:, h - 1])
        obs.append(o)
        actions.append(a)
        rewards.append(r)
        costs.append(c)
        states.append(s)
    obs = np.stack(obs, axis=1)
    actions = np.stack(actions, axis=1)
    flat_obs = obs.reshape((n * H,) + obs.shape[2:])
    flat_act = actions.reshape((n * H,) + actions.shape[2:])
    logp = policy.log_prob(theta, np.tile(np.arange(1, H + 1), n), flat_obs, flat_act).value.reshape(n, H)
    return Rollouts(np.stack(states, axis=1), obs, actions, np.stack(rewards, axis=1),
                    np.stack(costs, axis=1).reshape(n, H, -1), logp)


class UpdateRule:
    """Algorithm-specific pieces of the pipeline."""

    name = "clipped_surrogate"

    def __init__(self, cfg: RunConfig, horizon: int, active: list[int]):
        self.cfg = cfg
        self.horizon = horizon
        self.active = active

    def before(self, batch: SurrogateBatch) -> None:
        pass

    def loss(self, batch: SurrogateBatch, theta, t: int) -> ad.Var:
        from .losses import clipped_surrogate
        return clipped_surrogate(batch, theta, self.cfg.epsilon_clip, "reward", t)

    def after(self, batch: SurrogateBatch, theta: np.ndarray) -> None:
        pass

    def multipliers(self) -> np.ndarray:
        """Per active constraint, the largest multiplier in use."""
        return np.zeros(len(self.active))

    @property
    def beta(self) -> float:
        return float("nan")


def psi_at_old_policy(batch: SurrogateBatch) -> np.ndarray:
    """Constraint slacks with unit ratios, shape (H, m): suffix sums of per-step means."""
    per_step = batch.cost_adv.mean(axis=0)  # (H, m)
    suffix = np.flip(np.cumsum(np.flip(per_step, axis=0), axis=0), axis=0)
    return suffix + batch.offsets[None, :]


class EcopRule(UpdateRule):
    name = "ecop"

    def __init__(self, cfg: RunConfig, horizon: int, active: list[int]):
        super().__init__(cfg, horizon, active)
        self.penalty = PenaltyState.initial(horizon, len(active), cfg.lambda_init, beta=cfg.beta,
                                            beta_max=cfg.beta_max, update_factor=cfg.update_factor,
                                            epsilon_clip=cfg.epsilon_clip)
        self.last_secondary = (0.0, 0.0)

    def before(self, batch):
        if self.active:
            self.penalty = lambda_update(self.penalty, psi_at_old_policy(batch))

    def loss(self, batch, theta, t):
        return final_loss(batch, theta, self.penalty, t, self.cfg.cost_surrogate)

    def after(self, batch, theta):
        if not self.active:
            return
        # J_C of the updated policy, estimated by importance weighting the old batch
        jc_new = cost_increments(batch, theta, 1).value + batch.jc_prev
        c_value, c_k = secondary_cost_and_threshold(jc_new, batch.thresholds, self.penalty)
        self.last_secondary = (c_value, c_k)
        if self.cfg.adaptive_beta:
            self.penalty = adaptive_beta(self.penalty, c_value, c_k)

    def multipliers(self):
        lam = self.penalty.lambdas
        return lam.max(axis=0) if lam.shape[0] else np.zeros(len(self.active))

    @property
    def beta(self):
        return self.penalty.beta


def make_rule(cfg: RunConfig, horizon: int, active: list[int]) -> UpdateRule:
    from . import baselines

    rules = {"ecop": EcopRule, "ppo_lagrangian": baselines.LagrangianRule,
             "p3o_penalty": baselines.PenaltyRule, "clipped_surrogate": UpdateRule}
    try:
        return rules[cfg.algorithm](cfg, horizon, active)
    except KeyError:
        raise ValueError(f"algorithm {cfg.algorithm!r} has no gradient update rule") from None


def active_constraints(cfg: RunConfig, num_constraints: int) -> list[int]:
    if cfg.constraints is None:
        return list(range(num_constraints))
    idx = sorted(set(i - 1 for i in cfg.constraints))
    if idx and idx[-1] >= num_constraints:
        raise ValueError(f"constraint index {idx[-1] + 1} exceeds m={num_constraints}")
    return idx


class Trainer:
    """Runs one seed of a gradient-based algorithm; ``theta`` holds the current parameters."""

    def __init__(self, env: Env, cfg: RunConfig, seed: int, rule: UpdateRule | None = None):
        self.env = env
        self.cfg = cfg
        self.seed = seed
        self.policy = make_policy(env, cfg)
        init_rng = np.random.default_rng([seed, INIT_STREAM])
        self.theta = np.array(self.policy.init_params(init_rng).values)
        self.active = active_constraints(cfg, env.num_constraints)
        self.rule = rule if rule is not None else make_rule(cfg, env.horizon, self.active)
        self.optimizer = make_optimizer(cfg.optimizer, cfg.lr, self.theta.size)
        self.critics = self._make_critics(init_rng)
        self.thresholds = np.asarray(env.spec.thresholds, dtype=np.float64)

    def _make_critics(self, rng):
        spec = self.env.spec
        n = 1 + len(self.active)
        if isinstance(self.policy, TabularSoftmaxPolicy):
            made = [TabularCritic(spec.horizon, spec.num_states) for _ in range(n)]
        else:
            made = [MLPCritic(spec.obs_dim, spec.horizon, rng, self.cfg.hidden_sizes, self.cfg.activation,
                              self.cfg.critic_lr, self.cfg.critic_epochs) for _ in range(n)]
        return CriticSet(made[0], made[1:])

    @property
    def params(self) -> ParamVector:
        return ParamVector(self.theta, self.policy.layout)

    def surrogate_batch(self, ro: Rollouts) -> SurrogateBatch:
        costs = ro.costs[:, :, self.active]
        self.critics.reward.fit(ro.obs, returns_to_go(ro.rewards))
        for i, critic in enumerate(self.critics.costs):
            critic.fit(ro.obs, returns_to_go(costs[:, :, i]))
        adv = monte_carlo_advantages(ro.obs, ro.rewards, costs, self.critics, self.cfg.normalize_advantages)
        jc = ro.episode_costs.mean(axis=0)
        return SurrogateBatch(self.policy, ro.obs, ro.actions, ro.logp, adv.reward, adv.costs,
                              jc[self.active], self.thresholds[self.active])

    def episode(self, k: int) -> TrainingRecord:
        start = time.perf_counter()
        ro = collect(self.env, self.policy, self.theta, self.cfg.batch_episodes, self.seed, k)
        batch = self.surrogate_batch(ro)
        self.rule.before(batch)
        theta = self.theta
        loss_value = float("nan")
        for t in range(self.env.horizon, 0, -1):
            for _ in range(self.cfg.n_inner):
                loss_value, grad = ad.value_and_grad(lambda th: self.rule.loss(batch, th, t), theta)
                if not (np.isfinite(loss_value) and np.all(np.isfinite(grad))):
                    rec = self._record(k, ro, float("nan"), start)
                    raise NonFiniteLossError(f"non-finite loss or gradient at episode {k}, step {t}", rec)
                theta = self.optimizer.step(theta, grad)
        self.theta = theta
        self.rule.after(batch, theta)
        return self._record(k, ro, loss_value, start)

    def _record(self, k, ro: Rollouts, loss_value, start) -> TrainingRecord:
        jc = ro.episode_costs.mean(axis=0)
        lam = np.zeros(self.env.num_constraints)
        lam[self.active] = self.rule.multipliers()
        seconds = time.perf_counter() - start if self.cfg.record_wallclock else None
        return TrainingRecord(k, float(ro.episode_reward.mean()), tuple(map(float, jc)), tuple(map(float, lam)),
                              float(self.rule.beta), float(loss_value), bool(np.all(jc <= self.thresholds)),
                              seconds, self.rule.name)

    def run(self):
        for k in range(1, self.cfg.episodes + 1):
            yield self.episode(k)


def ecop_train(env: Env, cfg: RunConfig, seed: int):
    """Generator of per-episode records for e-COP."""
    if cfg.algorithm != "ecop":
        cfg = cfg.replace(algorithm="ecop")
    return Trainer(env, cfg, seed).run()


def clipped_surrogate_train(env: Env, cfg: RunConfig, seed: int):
    """Plain clipped-surrogate training on the reward alone."""
    cfg = cfg.replace(constraints=())
    return Trainer(env, cfg, seed, UpdateRule(cfg, env.horizon, [])).run()
