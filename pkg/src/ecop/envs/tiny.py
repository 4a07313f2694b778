"""Two-state task small enough for exhaustive search.

State 0 is safe, state 1 is a hazard. Action 0 heads for safety and
action 1 for the hazard; the hazard pays more reward but costs 1 per visit.
"""

from __future__ import annotations

import numpy as np

from ..cmdp import EpisodicCmdp
from .base import Env, EnvSpec

# P(land in hazard | s, a)
HAZARD_PROB = np.array([[0.1, 0.9], [0.4, 0.9]])
REWARD = np.array([0.2, 1.0])  # by landing state
COST = np.array([0.0, 1.0])


class TwoStateHazard(Env):
    def __init__(self, horizon: int = 2, threshold: float = 1.0):
        self.spec = EnvSpec("two_state_hazard", horizon, 1, (float(threshold),), True, 2, 1, 2, None)

    def initial_states(self, u):
        return np.zeros(u.shape[0], dtype=np.int64)

    def transition(self, states, actions, u):
        p = HAZARD_PROB[np.asarray(states, dtype=np.int64), np.asarray(actions, dtype=np.int64)]
        s2 = (u[:, 0] < p).astype(np.int64)
        return s2, REWARD[s2], COST[s2][:, None]

    def features(self, states):
        return np.asarray(states, dtype=np.float64)[:, None]

    def to_cmdp(self) -> EpisodicCmdp:
        P = np.stack([1.0 - HAZARD_PROB, HAZARD_PROB], axis=-1)
        R = np.broadcast_to(REWARD, (2, 2, 2)).copy()
        C = np.broadcast_to(COST, (2, 2, 2)).copy()
        return EpisodicCmdp(P, R, (C,), self.spec.thresholds, np.array([1.0, 0.0]), self.spec.horizon)
