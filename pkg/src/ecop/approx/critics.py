"""Step-indexed value critics V_h(s) for the reward and each cost signal."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .optim import Adam
from .params import Layout, ParamVector
from .policies import ACTIVATIONS, _mlp_forward, _mlp_init, _mlp_layout, time_features


class TabularCritic:
    kind = "tabular"

    def __init__(self, horizon: int, num_states: int):
        self.horizon = horizon
        self.num_states = num_states
        self.table = np.zeros((horizon, num_states))

    def predict(self, obs: np.ndarray) -> np.ndarray:
        """``obs`` is an (N, H) array of state indices; returns (N, H)."""
        return self.table[np.arange(obs.shape[1]), obs]

    def fit(self, obs: np.ndarray, targets: np.ndarray) -> None:
        """Closed-form least squares: the per-(h, s) mean of the targets.

        Cells with no data keep their previous value.
        """
        H = obs.shape[1]
        flat = (np.arange(H)[None, :] * self.num_states + obs).ravel()
        size = self.horizon * self.num_states
        counts = np.bincount(flat, minlength=size)
        sums = np.bincount(flat, weights=targets.ravel(), minlength=size)
        table = self.table.ravel().copy()
        seen = counts > 0
        table[seen] = sums[seen] / counts[seen]
        self.table = table.reshape(self.horizon, self.num_states)


class MLPCritic:
    kind = "net"

    def __init__(self, obs_dim: int, horizon: int, rng: np.random.Generator, hidden=(32, 32),
                 activation: str = "tanh", lr: float = 1e-3, epochs: int = 20):
        self.horizon = horizon
        self.sizes = [obs_dim + 1, *hidden, 1]
        self.layout = Layout(_mlp_layout("v_", self.sizes))
        values = np.zeros(self.layout.size)
        _mlp_init(self.layout, "v_", len(self.sizes) - 1, values, rng)
        self.params = ParamVector(values, self.layout)
        self._act = ACTIVATIONS[activation]
        self.lr = lr
        self.epochs = epochs

    def _inputs(self, obs: np.ndarray) -> np.ndarray:
        N, H = obs.shape[:2]
        h = np.tile(np.arange(1, H + 1), N)
        return time_features(obs.reshape(N * H, -1), h, self.horizon)

    def _forward(self, theta, x: np.ndarray) -> ad.Var:
        out = _mlp_forward(self.layout, "v_", len(self.sizes) - 1, ad.as_var(theta), ad.Var(x), self._act)
        return out.reshape(-1)

    def predict(self, obs: np.ndarray) -> np.ndarray:
        N, H = obs.shape[:2]
        return self._forward(self.params.values, self._inputs(obs)).value.reshape(N, H)

    def fit(self, obs: np.ndarray, targets: np.ndarray) -> None:
        x = self._inputs(obs)
        y = targets.ravel()
        opt = Adam(self.lr, self.layout.size)
        theta = np.array(self.params.values)
        for _ in range(self.epochs):
            _, g = ad.value_and_grad(lambda th: ad.square(self._forward(th, x) - y).mean(), theta)
            theta = opt.step(theta, g)
        self.params = self.params.replace(theta)


class CriticSet:
    """One reward critic followed by one critic per cost signal."""

    def __init__(self, reward, costs: list):
        self.reward = reward
        self.costs = list(costs)

    def __iter__(self):
        yield self.reward
        yield from self.costs
