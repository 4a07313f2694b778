"""Monte-Carlo advantage estimates from fixed-length trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-8


def returns_to_go(signal: np.ndarray) -> np.ndarray:
    """Reverse cumulative sum along the time axis (axis 1)."""
    return np.flip(np.cumsum(np.flip(signal, axis=1), axis=1), axis=1)


@dataclass(frozen=True)
class AdvantageEstimates:
    reward: np.ndarray  # (N, H), batch-normalised
    costs: np.ndarray  # (N, H, m), raw
    reward_mean: float
    reward_std: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.reward)) and np.all(np.isfinite(self.costs))):
            raise ValueError("advantage estimates must be finite")

    def reward_unnormalized(self) -> np.ndarray:
        return self.reward * self.reward_std + self.reward_mean


def monte_carlo_advantages(obs: np.ndarray, rewards: np.ndarray, costs: np.ndarray, critics,
                           normalize: bool = True) -> AdvantageEstimates:
    """``A_h = sum_{h' >= h} g_h' - V_h(s_h)`` for the reward and every cost.

    ``obs`` holds the critic inputs for steps 1..H, ``rewards`` is (N, H)
    and ``costs`` is (N, H, m) with one critic per column of ``costs``.
    """
    raw = returns_to_go(rewards) - critics.reward.predict(obs)
    cost_adv = np.zeros(costs.shape)
    for i, critic in enumerate(critics.costs):
        cost_adv[:, :, i] = returns_to_go(costs[:, :, i]) - critic.predict(obs)
    mean, std = 0.0, 1.0
    if normalize:
        mean = float(raw.mean())
        std = float(raw.std())
        if std < STD_FLOOR:
            std = 1.0
    return AdvantageEstimates((raw - mean) / std, cost_adv, mean, std)
