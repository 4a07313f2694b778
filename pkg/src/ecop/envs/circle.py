"""Point mass that is rewarded for circling the origin but must keep x <= x_lim.

State ``(x, y, vx, vy)``; action is an acceleration clamped to the box
``[-1, 1]^2``. Semi-implicit Euler with ``dt = 0.1``. Reward and cost are
evaluated at the pre-step state.
"""

from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec


class PointCircle(Env):
    reset_noise_dim = 2
    step_noise_dim = 1  # unused; dynamics are deterministic

    def __init__(self, horizon: int = 50, threshold: float = 5.0, radius: float = 1.0,
                 dt: float = 0.1, x_lim_ratio: float = 0.5, spawn: float = 0.1):
        self.radius = radius
        self.dt = dt
        self.x_lim = x_lim_ratio * radius
        self.spawn = spawn
        self.spec = EnvSpec("point_circle", horizon, 1, (float(threshold),), False, None, 4,
                            None, 2, -1.0, 1.0)

    def initial_states(self, u):
        s = np.zeros((u.shape[0], 4))
        s[:, :2] = (2.0 * u[:, :2] - 1.0) * self.spawn
        return s

    def reward_cost(self, states):
        x, y, vx, vy = states.T
        reward = (-vx * y + vy * x) / (1.0 + np.abs(np.hypot(x, y) - self.radius))
        cost = (x > self.x_lim).astype(np.float64)
        return reward, cost[:, None]

    def transition(self, states, actions, u):
        states = np.asarray(states, dtype=np.float64)
        a = np.clip(np.asarray(actions, dtype=np.float64), self.spec.action_low, self.spec.action_high)
        reward, costs = self.reward_cost(states)
        v = states[:, 2:] + self.dt * a
        p = states[:, :2] + self.dt * v
        return np.concatenate([p, v], axis=1), reward, costs

    def features(self, states):
        return np.asarray(states, dtype=np.float64)

    def validate_action(self, action):
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (2,) or not np.all(np.isfinite(a)):
            raise ValueError("action must be a finite 2-vector")
        return a
