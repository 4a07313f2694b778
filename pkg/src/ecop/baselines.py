"""Comparison algorithms that reuse the e-COP pipeline with a different loss.

* PPO-Lagrangian: clipped reward surrogate plus ``nu * (cost surrogate + J_C - d)``
  with projected dual ascent on ``nu`` once per episode.
* P3O-style penalty: clipped reward surrogate plus a fixed ReLU penalty
  ``kappa * max{0, cost surrogate + J_C - d}`` and no quadratic damping.
"""

from __future__ import annotations

import numpy as np

from .approx import autodiff as ad
from .losses import SurrogateBatch, clipped_surrogate, cost_surrogate, ratios
from .training import Trainer, UpdateRule


class LagrangianRule(UpdateRule):
    name = "ppo_lagrangian"

    def __init__(self, cfg, horizon, active):
        super().__init__(cfg, horizon, active)
        if cfg.lagrange_lr <= 0:
            raise ValueError("lagrange_lr must be positive")
        self.nu = np.full(len(active), cfg.lambda_init)

    def before(self, batch: SurrogateBatch):
        self.nu = np.maximum(0.0, self.nu + self.cfg.lagrange_lr * batch.offsets)

    def loss(self, batch, theta, t):
        eps = self.cfg.epsilon_clip
        rho = ratios(batch, theta, t)
        loss = clipped_surrogate(batch, theta, eps, "reward", t, rho)
        for i, nu in enumerate(self.nu):
            if nu == 0:
                continue
            y = cost_surrogate(batch, theta, eps, i, t, self.cfg.cost_surrogate, rho) + batch.offsets[i]
            loss = loss + nu * y
        return loss

    def multipliers(self):
        return self.nu.copy()


class PenaltyRule(UpdateRule):
    name = "p3o_penalty"

    def __init__(self, cfg, horizon, active):
        super().__init__(cfg, horizon, active)
        if cfg.kappa < 0:
            raise ValueError("kappa must be non-negative")
        self.kappa = cfg.kappa

    def loss(self, batch, theta, t):
        return p3o_loss(batch, theta, self.kappa, self.cfg.epsilon_clip, t, self.cfg.cost_surrogate)

    def multipliers(self):
        return np.full(len(self.active), self.kappa)


def p3o_loss(batch: SurrogateBatch, theta, kappa: float, eps: float, t: int = 1,
             cost_kind: str = "pessimistic") -> ad.Var:
    rho = ratios(batch, theta, t)
    loss = clipped_surrogate(batch, theta, eps, "reward", t, rho)
    if kappa == 0:
        return loss
    for i in range(batch.num_constraints):
        y = cost_surrogate(batch, theta, eps, i, t, cost_kind, rho) + batch.offsets[i]
        loss = loss + kappa * ad.relu(y)
    return loss


def ppo_lagrangian_train(env, cfg, seed: int):
    return Trainer(env, cfg.replace(algorithm="ppo_lagrangian"), seed).run()


def p3o_penalty_train(env, cfg, seed: int):
    return Trainer(env, cfg.replace(algorithm="p3o_penalty"), seed).run()
