"""Parameterised non-stationary policies.

Two representations:

* ``TabularSoftmaxPolicy`` keeps separate logits for every (h, s).
* ``MLPPolicy`` is a two-hidden-layer network fed with the state features
  and ``h / H``; it emits softmax logits for discrete actions or a Gaussian
  mean (with a learned, state-independent log std) for box actions.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .params import Layout, ParamVector

LOG_2PI = math.log(2.0 * math.pi)


def _theta_var(theta) -> ad.Var:
    if isinstance(theta, ParamVector):
        theta = theta.values
    return ad.as_var(theta)


def _check_steps(h, horizon: int) -> np.ndarray:
    h = np.asarray(h, dtype=np.int64)
    if np.any(h < 1) or np.any(h > horizon):
        raise ValueError(f"time step out of range [1, {horizon}]")
    return h


class TabularSoftmaxPolicy:
    kind = "tabular_softmax"
    discrete = True
    uses_features = False

    def __init__(self, horizon: int, num_states: int, num_actions: int):
        self.horizon = horizon
        self.num_states = num_states
        self.num_actions = num_actions
        self.layout = Layout([("logits", (horizon, num_states, num_actions))])

    def init_params(self, rng: np.random.Generator | None = None) -> ParamVector:
        return ParamVector(np.zeros(self.layout.size), self.layout)

    def logits(self, theta, h, obs) -> ad.Var:
        h = _check_steps(h, self.horizon)
        table = self.layout.view(_theta_var(theta), "logits")
        return table[(h - 1, np.asarray(obs, dtype=np.int64))]

    def log_prob(self, theta, h, obs, actions) -> ad.Var:
        logp = ad.log_softmax(self.logits(theta, h, obs))
        return ad.take_along_last(logp, actions)

    def probs(self, theta, h, obs) -> np.ndarray:
        z = self.logits(theta, h, obs).value
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def action_distribution(self, theta, h: int, s) -> np.ndarray:
        return self.probs(theta, np.array([h]), np.array([s]))[0]

    def sample(self, theta, h, obs, noise: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(self.probs(theta, h, obs), axis=1)
        idx = (cdf < noise[:, :1]).sum(axis=1)
        return np.minimum(idx, self.num_actions - 1)

    def to_table(self, theta, features=None) -> np.ndarray:
        v = theta.values if isinstance(theta, ParamVector) else np.asarray(theta)
        z = v.reshape(self.horizon, self.num_states, self.num_actions)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def meta(self) -> dict:
        return {"kind": self.kind, "horizon": self.horizon,
                "num_states": self.num_states, "num_actions": self.num_actions}


def _mlp_layout(prefix: str, sizes: list[int]) -> list:
    blocks = []
    for k in range(len(sizes) - 1):
        blocks.append((f"{prefix}W{k}", (sizes[k], sizes[k + 1])))
        blocks.append((f"{prefix}b{k}", (sizes[k + 1],)))
    return blocks


def _mlp_init(layout: Layout, prefix: str, n_layers: int, values: np.ndarray,
              rng: np.random.Generator, out_scale: float = 1.0) -> None:
    for k in range(n_layers):
        b = layout[f"{prefix}W{k}"]
        fan_in = b.shape[0]
        w = rng.standard_normal(b.shape) / math.sqrt(fan_in)
        if k == n_layers - 1:
            w *= out_scale
        values[b.start:b.stop] = w.ravel()


ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


def _mlp_forward(layout: Layout, prefix: str, n_layers: int, theta: ad.Var, x: ad.Var, act) -> ad.Var:
    for k in range(n_layers):
        x = x @ layout.view(theta, f"{prefix}W{k}") + layout.view(theta, f"{prefix}b{k}")
        if k < n_layers - 1:
            x = act(x)
    return x


def time_features(obs: np.ndarray, h, horizon: int) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[:, None]
    t = np.asarray(h, dtype=np.float64).reshape(-1, 1) / horizon
    return np.concatenate([obs, t], axis=1)


class MLPPolicy:
    kind = "time_conditioned_net"
    uses_features = True

    def __init__(self, obs_dim: int, horizon: int, num_actions: int | None = None,
                 action_dim: int | None = None, hidden=(32, 32), activation: str = "tanh",
                 log_std_init: float = 0.5):
        if (num_actions is None) == (action_dim is None):
            raise ValueError("give exactly one of num_actions (discrete) or action_dim (box)")
        self.obs_dim = obs_dim
        self.horizon = horizon
        self.discrete = num_actions is not None
        self.num_actions = num_actions
        self.action_dim = action_dim
        self.hidden = tuple(int(n) for n in hidden)
        self.activation = activation
        self.log_std_init = float(log_std_init)
        out = num_actions if self.discrete else action_dim
        self.sizes = [obs_dim + 1, *self.hidden, out]
        blocks = _mlp_layout("pi_", self.sizes)
        if not self.discrete:
            blocks.append(("log_std", (action_dim,)))
        self.layout = Layout(blocks)
        self._act = ACTIVATIONS[activation]

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        values = np.zeros(self.layout.size)
        _mlp_init(self.layout, "pi_", self.n_layers, values, rng)
        if not self.discrete:
            b = self.layout["log_std"]
            values[b.start:b.stop] = self.log_std_init
        return ParamVector(values, self.layout)

    def head(self, theta, h, obs) -> ad.Var:
        h = _check_steps(h, self.horizon)
        x = ad.Var(time_features(obs, h, self.horizon))
        return _mlp_forward(self.layout, "pi_", self.n_layers, _theta_var(theta), x, self._act)

    def log_prob(self, theta, h, obs, actions) -> ad.Var:
        theta = _theta_var(theta)
        out = self.head(theta, h, obs)
        if self.discrete:
            return ad.take_along_last(ad.log_softmax(out), actions)
        log_std = self.layout.view(theta, "log_std")
        z = (ad.Var(np.asarray(actions, dtype=np.float64)) - out) / ad.exp(log_std)
        per_dim = -0.5 * ad.square(z) - log_std - 0.5 * LOG_2PI
        return per_dim.sum(axis=1)

    def probs(self, theta, h, obs) -> np.ndarray:
        if not self.discrete:
            raise TypeError("probs() is only defined for discrete actions")
        z = self.head(theta, h, obs).value
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def gaussian(self, theta, h, obs):
        mean = self.head(theta, h, obs).value
        v = theta.values if isinstance(theta, ParamVector) else np.asarray(theta)
        std = np.exp(self.layout.view(v, "log_std"))
        return mean, np.broadcast_to(std, mean.shape)

    def action_distribution(self, theta, h: int, s):
        obs = np.asarray(s, dtype=np.float64)[None]
        if self.discrete:
            return self.probs(theta, np.array([h]), obs)[0]
        mean, std = self.gaussian(theta, np.array([h]), obs)
        return mean[0], std[0]

    def sample(self, theta, h, obs, noise: np.ndarray) -> np.ndarray:
        if self.discrete:
            cdf = np.cumsum(self.probs(theta, h, obs), axis=1)
            idx = (cdf < noise[:, :1]).sum(axis=1)
            return np.minimum(idx, self.num_actions - 1)
        mean, std = self.gaussian(theta, h, obs)
        return mean + std * noise[:, : self.action_dim]

    def to_table(self, theta, features: np.ndarray) -> np.ndarray:
        """Exact table over a finite state set described by ``features`` (S, d)."""
        S = features.shape[0]
        rows = []
        for h in range(1, self.horizon + 1):
            rows.append(self.probs(theta, np.full(S, h), features))
        return np.stack(rows)

    def meta(self) -> dict:
        return {"kind": self.kind, "obs_dim": self.obs_dim, "horizon": self.horizon,
                "num_actions": self.num_actions, "action_dim": self.action_dim,
                "hidden": list(self.hidden), "activation": self.activation,
                "log_std_init": self.log_std_init}


def policy_from_meta(meta: dict):
    if meta["kind"] == TabularSoftmaxPolicy.kind:
        return TabularSoftmaxPolicy(meta["horizon"], meta["num_states"], meta["num_actions"])
    if meta["kind"] == MLPPolicy.kind:
        return MLPPolicy(meta["obs_dim"], meta["horizon"], meta["num_actions"], meta["action_dim"],
                         tuple(meta["hidden"]), meta["activation"], meta["log_std_init"])
    raise ValueError(f"unknown policy kind {meta['kind']!r}")


def action_distribution(policy, theta, h: int, s):
    return policy.action_distribution(theta, h, s)


def log_prob_gradient(policy, theta, h: int, s, a):
    """``(log pi(a|s, h), d log pi / d theta)`` by reverse mode."""
    values = theta.values if isinstance(theta, ParamVector) else np.asarray(theta, dtype=np.float64)
    obs = np.asarray([s]) if policy.uses_features is False else np.asarray(s, dtype=np.float64)[None]
    act = np.asarray([a]) if policy.discrete else np.asarray(a, dtype=np.float64)[None]
    return ad.value_and_grad(lambda th: policy.log_prob(th, np.array([h]), obs, act).sum(), values)
