"""Finite-horizon tabular CMDPs and exact evaluation machinery.

Time steps are 1-based in the docs and 0-based in arrays: row ``h - 1`` of
every per-step array holds step ``h``. Value arrays carry one extra row,
the terminal slice ``V_{H+1}``, which is identically zero.

Signals are addressed as ``"reward"`` or by a 0-based cost index ``i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

Signal = Union[str, int]

PROB_TOL = 1e-12
POLICY_TOL = 1e-10


class ConstraintIndexError(IndexError):
    """Raised when a cost signal index is not < m."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EpisodicCmdp:
    transition: np.ndarray
    reward: np.ndarray
    costs: tuple
    thresholds: tuple
    initial_dist: np.ndarray
    horizon: int

    def __post_init__(self) -> None:
        P = _readonly(self.transition)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > PROB_TOL):
            raise ValueError("transition rows must be non-negative and sum to 1")
        mu = _readonly(self.initial_dist)
        if mu.shape != (S,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > PROB_TOL:
            raise ValueError("initial_dist must be a probability vector over states")
        r = _broadcast_signal(self.reward, S, A)
        costs = tuple(_broadcast_signal(c, S, A) for c in self.costs)
        thresholds = tuple(float(d) for d in self.thresholds)
        if len(costs) != len(thresholds):
            raise ValueError("need exactly one threshold per cost function")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be >= 1")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_constraints(self) -> int:
        return len(self.costs)

    def signal_tensor(self, signal: Signal) -> np.ndarray:
        if isinstance(signal, str):
            if signal == "reward":
                return self.reward
            if signal.startswith("cost"):
                signal = int(signal[4:].lstrip("_:"))
            else:
                raise ValueError(f"unknown signal {signal!r}")
        i = int(signal)
        if not 0 <= i < self.num_constraints:
            raise ConstraintIndexError(
                f"cost index {i} out of range for m={self.num_constraints}"
            )
        return self.costs[i]

    def expected_signal(self, signal: Signal) -> np.ndarray:
        """E[g(s, a, s')] over s' for every (s, a)."""
        return (self.transition * self.signal_tensor(signal)).sum(axis=2)

    def with_thresholds(self, thresholds: Sequence[float]) -> "EpisodicCmdp":
        return EpisodicCmdp(
            self.transition, self.reward, self.costs, tuple(thresholds),
            self.initial_dist, self.horizon,
        )


def _broadcast_signal(g, S: int, A: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape == (S, A):
        g = np.repeat(g[:, :, None], S, axis=2)
    if g.shape != (S, A, S):
        raise ValueError(f"signal must have shape (S, A, S) or (S, A), got {g.shape}")
    return _readonly(g)


@dataclass(frozen=True)
class PolicyTable:
    """Exact non-stationary policy, ``probs[h-1, s, a] = pi_h(a|s)``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = _readonly(self.probs)
        if p.ndim != 3:
            raise ValueError(f"policy table must have shape (H, S, A), got {p.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1.0) > POLICY_TOL):
            raise ValueError("every policy row must be a probability vector")
        object.__setattr__(self, "probs", p)

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, horizon: int, num_states: int, num_actions: int) -> "PolicyTable":
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions: np.ndarray, num_actions: int) -> "PolicyTable":
        actions = np.asarray(actions, dtype=int)
        return cls(np.eye(num_actions)[actions])

    def replace_step(self, h: int, rows: np.ndarray) -> "PolicyTable":
        p = np.array(self.probs)
        p[h - 1] = rows
        return PolicyTable(p)


PolicyLike = Union[PolicyTable, np.ndarray]


def as_table(policy: PolicyLike, cmdp: EpisodicCmdp | None = None) -> np.ndarray:
    probs = policy.probs if isinstance(policy, PolicyTable) else PolicyTable(policy).probs
    if cmdp is not None:
        expected = (cmdp.horizon, cmdp.num_states, cmdp.num_actions)
        if probs.shape != expected:
            raise ValueError(f"policy shape {probs.shape} does not match cmdp {expected}")
    return probs


@dataclass(frozen=True)
class ValueTables:
    v: np.ndarray  # (H+1, S), last row is the zero sentinel
    q: np.ndarray  # (H, S, A)
    signal: Signal
    policy: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class OccupancyTable:
    probs: np.ndarray  # (H, S, A)

    def state_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=2)


class Step(NamedTuple):
    state: int
    action: int
    next_state: int
    reward: float
    costs: tuple


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (H+1,)
    actions: np.ndarray  # (H,)
    rewards: np.ndarray  # (H,)
    costs: np.ndarray  # (H, m)
    seed: int | None

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def steps(self) -> list[Step]:
        return [
            Step(int(self.states[h]), int(self.actions[h]), int(self.states[h + 1]),
                 float(self.rewards[h]), tuple(float(c) for c in self.costs[h]))
            for h in range(len(self.actions))
        ]

    def reward_to_go(self) -> np.ndarray:
        return np.cumsum(self.rewards[::-1])[::-1]


def backward_values(P: np.ndarray, gbar: np.ndarray, pi: np.ndarray):
    """Policy evaluation by backward recursion.

    ``pi`` may carry leading batch dimensions ``(..., H, S, A)``; the
    reduction uses elementwise products so each batch row is computed
    identically regardless of batch composition.
    """
    H = pi.shape[-3]
    S = P.shape[0]
    batch = pi.shape[:-3]
    v = np.zeros(batch + (H + 1, S))
    q = np.zeros(pi.shape)
    for h in range(H - 1, -1, -1):
        cont = (P * v[..., h + 1, None, None, :]).sum(axis=-1)
        q[..., h, :, :] = gbar + cont
        v[..., h, :] = (pi[..., h, :, :] * q[..., h, :, :]).sum(axis=-1)
    return v, q


def exact_value_functions(cmdp: EpisodicCmdp, policy: PolicyLike, signal: Signal = "reward") -> ValueTables:
    pi = as_table(policy, cmdp)
    gbar = cmdp.expected_signal(signal)
    v, q = backward_values(cmdp.transition, gbar, pi)
    return ValueTables(v=v, q=q, signal=signal, policy=pi)


def exact_objective(cmdp: EpisodicCmdp, policy: PolicyLike, signal: Signal = "reward") -> float:
    vt = exact_value_functions(cmdp, policy, signal)
    return float(cmdp.initial_dist @ vt.v[0])


def objective_batch(cmdp: EpisodicCmdp, tables: np.ndarray, signal: Signal = "reward") -> np.ndarray:
    """J for a stack of policy tables ``(B, H, S, A)``."""
    v, _ = backward_values(cmdp.transition, cmdp.expected_signal(signal), tables)
    return (v[..., 0, :] * cmdp.initial_dist).sum(axis=-1)


def forward_occupancy(P: np.ndarray, mu: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Reach probabilities, batched over leading dims of ``pi``."""
    H = pi.shape[-3]
    occ = np.zeros(pi.shape)
    d = np.broadcast_to(mu, pi.shape[:-3] + mu.shape)
    for h in range(H):
        occ[..., h, :, :] = d[..., :, None] * pi[..., h, :, :]
        d = (occ[..., h, :, :, None] * P).sum(axis=(-3, -2))
    return occ


def reach_probabilities(cmdp: EpisodicCmdp, policy: PolicyLike) -> OccupancyTable:
    pi = as_table(policy, cmdp)
    return OccupancyTable(forward_occupancy(cmdp.transition, cmdp.initial_dist, pi))


def advantage_tables(vt: ValueTables) -> np.ndarray:
    return vt.q - vt.v[:-1, :, None]


def occupancy_objective(cmdp: EpisodicCmdp, occ: OccupancyTable, signal: Signal = "reward") -> float:
    return float((occ.probs * cmdp.expected_signal(signal)).sum())


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cdf: (N, K) rows, u: (N,)
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def _rollout(cmdp: EpisodicCmdp, pi: np.ndarray, u: np.ndarray):
    # u: (N, H + 1, 2) uniforms; column 0 at step 0 draws s_1.
    N = u.shape[0]
    H, m = cmdp.horizon, cmdp.num_constraints
    states = np.zeros((N, H + 1), dtype=np.int64)
    actions = np.zeros((N, H), dtype=np.int64)
    rewards = np.zeros((N, H))
    costs = np.zeros((N, H, m))
    mu_cdf = np.cumsum(cmdp.initial_dist)
    states[:, 0] = _inverse_cdf(np.broadcast_to(mu_cdf, (N, len(mu_cdf))), u[:, 0, 1])
    P_cdf = np.cumsum(cmdp.transition, axis=2)
    pi_cdf = np.cumsum(pi, axis=2)
    for h in range(H):
        s = states[:, h]
        a = _inverse_cdf(pi_cdf[h, s], u[:, h + 1, 0])
        s2 = _inverse_cdf(P_cdf[s, a], u[:, h + 1, 1])
        actions[:, h] = a
        states[:, h + 1] = s2
        rewards[:, h] = cmdp.reward[s, a, s2]
        for i, c in enumerate(cmdp.costs):
            costs[:, h, i] = c[s, a, s2]
    return states, actions, rewards, costs


def sample_trajectory(cmdp: EpisodicCmdp, policy: PolicyLike, rng_seed: int) -> Trajectory:
    pi = as_table(policy, cmdp)
    u = np.random.default_rng(rng_seed).random((1, cmdp.horizon + 1, 2))
    states, actions, rewards, costs = _rollout(cmdp, pi, u)
    return Trajectory(states[0], actions[0], rewards[0], costs[0], rng_seed)


def sample_batch(cmdp: EpisodicCmdp, policy: PolicyLike, n: int, seed: int):
    """Vectorised rollouts sharing one generator; returns raw arrays."""
    pi = as_table(policy, cmdp)
    u = np.random.default_rng(seed).random((n, cmdp.horizon + 1, 2))
    return _rollout(cmdp, pi, u)


def random_cmdp(rng: np.random.Generator, num_states: int, num_actions: int, horizon: int,
                num_constraints: int = 1, sparsity: float = 0.0) -> EpisodicCmdp:
    """Random dense instance; rewards and costs in [0, 1)."""
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    if sparsity > 0:
        mask = rng.random(P.shape) < sparsity
        mask[..., 0] = False
        P = np.where(mask, 0.0, P)
        P /= P.sum(axis=2, keepdims=True)
    shape = (num_states, num_actions, num_states)
    r = rng.random(shape)
    costs = [rng.random(shape) for _ in range(num_constraints)]
    mu = rng.dirichlet(np.ones(num_states))
    return EpisodicCmdp(P, r, tuple(costs), tuple([1.0] * num_constraints), mu, horizon)


def random_policy(rng: np.random.Generator, horizon: int, num_states: int, num_actions: int) -> PolicyTable:
    return PolicyTable(rng.dirichlet(np.ones(num_actions), size=(horizon, num_states)))


# --- serialization -------------------------------------------------------------

FORMAT_VERSION = 1


def cmdp_to_dict(cmdp: EpisodicCmdp) -> dict:
    return {
        "format": "episodic-cmdp",
        "version": FORMAT_VERSION,
        "num_states": cmdp.num_states,
        "num_actions": cmdp.num_actions,
        "horizon": cmdp.horizon,
        "num_constraints": cmdp.num_constraints,
        "thresholds": list(cmdp.thresholds),
        "initial_dist": cmdp.initial_dist.tolist(),
        "transition": cmdp.transition.tolist(),
        "reward": cmdp.reward.tolist(),
        "costs": [c.tolist() for c in cmdp.costs],
    }


def cmdp_from_dict(data: dict) -> EpisodicCmdp:
    if data.get("format") != "episodic-cmdp":
        raise ValueError("not an episodic-cmdp document")
    cmdp = EpisodicCmdp(
        transition=np.array(data["transition"], dtype=np.float64),
        reward=np.array(data["reward"], dtype=np.float64),
        costs=tuple(np.array(c, dtype=np.float64) for c in data["costs"]),
        thresholds=tuple(float(d) for d in data["thresholds"]),
        initial_dist=np.array(data["initial_dist"], dtype=np.float64),
        horizon=int(data["horizon"]),
    )
    dims = (cmdp.num_states, cmdp.num_actions, cmdp.num_constraints)
    if dims != (data["num_states"], data["num_actions"], data["num_constraints"]):
        raise ValueError("declared dimensions do not match the tensors")
    return cmdp


def dumps_cmdp(cmdp: EpisodicCmdp) -> str:
    # json writes floats with repr(), which round-trips exactly.
    return json.dumps(cmdp_to_dict(cmdp), indent=1)


def loads_cmdp(text: str) -> EpisodicCmdp:
    return cmdp_from_dict(json.loads(text))


def save_cmdp(cmdp: EpisodicCmdp, path) -> None:
    Path(path).write_text(dumps_cmdp(cmdp) + "\n")


def load_cmdp(path) -> EpisodicCmdp:
    return loads_cmdp(Path(path).read_text())
