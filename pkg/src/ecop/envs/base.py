"""Environment interface shared by the tabular and continuous tasks.

Environments are vectorised over a batch of N independent copies and draw
all randomness from caller-supplied uniform noise, so a rollout is fully
determined by its noise tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    horizon: int
    num_constraints: int
    thresholds: tuple
    tabular: bool
    num_states: int | None  # tabular only
    obs_dim: int  # length of the feature vector
    num_actions: int | None  # discrete action set
    action_dim: int | None  # real box
    action_low: float | None = None
    action_high: float | None = None


class Env:
    spec: EnvSpec
    reset_noise_dim = 1
    step_noise_dim = 1

    # vectorised core ----------------------------------------------------------
    def initial_states(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def transition(self, states: np.ndarray, actions: np.ndarray, u: np.ndarray):
        """Return ``(next_states, rewards (N,), costs (N, m))``."""
        raise NotImplementedError

    def features(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_cmdp(self):
        raise TypeError(f"{self.spec.name} has no exact tabular model")

    # single-copy convenience --------------------------------------------------
    @property
    def horizon(self) -> int:
        return self.spec.horizon

    @property
    def num_constraints(self) -> int:
        return self.spec.num_constraints

    def reset(self, seed: int):
        u = np.random.default_rng(seed).random((1, self.reset_noise_dim))
        return self.initial_states(u)[0]

    def validate_action(self, action):
        if self.spec.num_actions is not None:
            a = int(action)
            if a != action or not 0 <= a < self.spec.num_actions:
                raise ValueError(f"invalid action {action!r} for {self.spec.num_actions} actions")
            return a
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (self.spec.action_dim,):
            raise ValueError(f"action must have shape ({self.spec.action_dim},)")
        return a

    def step(self, state, action, seed: int | None = None):
        """One transition; returns ``(next_state, reward, costs)``."""
        a = self.validate_action(action)
        u = np.random.default_rng(seed).random((1, self.step_noise_dim))
        s2, r, c = self.transition(np.asarray([state]), np.asarray([a]), u)
        return s2[0], float(r[0]), tuple(float(x) for x in c[0])
