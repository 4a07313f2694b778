"""Clipped surrogates, constraint terms and the per-step e-COP loss.

Every function takes a ``SurrogateBatch`` (data gathered under the previous
policy), a parameter vector ``theta`` (array or autodiff ``Var``) and a step
``t`` in 1..H. Per-step expectations are batch means over the N records at
step h, summed over h = t..H.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import autodiff as ad
from .penalty import PenaltyState, damped_penalty

COST_SURROGATES = ("pessimistic", "literal")


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SurrogateBatch:
    policy: object
    obs: np.ndarray  # (N, H, ...) policy inputs
    actions: np.ndarray  # (N, H) discrete or (N, H, d) box
    logp_old: np.ndarray  # (N, H)
    adv: np.ndarray  # (N, H) reward advantages
    cost_adv: np.ndarray  # (N, H, m)
    jc_prev: np.ndarray  # (m,)
    thresholds: np.ndarray  # (m,)

    def __post_init__(self):
        if not np.all(np.isfinite(self.logp_old)):
            raise ValueError("old log-probabilities must be finite")
        if not (np.all(np.isfinite(self.adv)) and np.all(np.isfinite(self.cost_adv))):
            raise ValueError("advantages must be finite")

    @property
    def size(self) -> int:
        return self.logp_old.shape[0]

    @property
    def horizon(self) -> int:
        return self.logp_old.shape[1]

    @property
    def num_constraints(self) -> int:
        return self.cost_adv.shape[2]

    @property
    def offsets(self) -> np.ndarray:
        """``J_C(pi_old) - d`` per constraint."""
        return np.asarray(self.jc_prev, dtype=np.float64) - np.asarray(self.thresholds, dtype=np.float64)


def _check_step(batch: SurrogateBatch, t: int) -> None:
    if not 1 <= t <= batch.horizon:
        raise ValueError(f"step {t} outside 1..{batch.horizon}")
    if batch.size == 0:
        raise InsufficientDataError("no batch records for steps t..H")


def ratios(batch: SurrogateBatch, theta, t: int) -> ad.Var:
    """Importance ratios for steps t..H, shape (N, H - t + 1)."""
    _check_step(batch, t)
    N, H = batch.size, batch.horizon
    n_steps = H - t + 1
    obs = batch.obs[:, t - 1:]
    obs = obs.reshape((N * n_steps,) + obs.shape[2:])
    act = batch.actions[:, t - 1:]
    act = act.reshape((N * n_steps,) + act.shape[2:])
    h = np.tile(np.arange(t, H + 1), N)
    logp = batch.policy.log_prob(theta, h, obs, act).reshape(N, n_steps)
    return ad.exp(logp - batch.logp_old[:, t - 1:])


def _step_sum(per_record: ad.Var) -> ad.Var:
    """Sum over steps of the per-step batch mean."""
    return per_record.mean(axis=0).sum()


def _clipped_terms(rho: ad.Var, adv: np.ndarray, eps: float) -> ad.Var:
    return ad.minimum(rho * adv, ad.clip(rho, 1.0 - eps, 1.0 + eps) * adv)


def _signal_adv(batch: SurrogateBatch, signal, t: int) -> np.ndarray:
    if signal == "reward":
        return batch.adv[:, t - 1:]
    if isinstance(signal, str):
        signal = int(signal[4:].lstrip("_:"))
    if not 0 <= signal < batch.num_constraints:
        raise IndexError(f"cost index {signal} out of range")
    return batch.cost_adv[:, t - 1:, signal]


def clipped_surrogate(batch: SurrogateBatch, theta, eps: float, signal="reward", t: int = 1, rho=None) -> ad.Var:
    """``sum_h mean[-min{rho A, clip(rho, 1-eps, 1+eps) A}]`` for the chosen signal."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    rho = ratios(batch, theta, t) if rho is None else rho
    return -_step_sum(_clipped_terms(rho, _signal_adv(batch, signal, t), eps))


def cost_surrogate(batch: SurrogateBatch, theta, eps: float, i: int, t: int = 1,
                   kind: str = "pessimistic", rho=None) -> ad.Var:
    """Clipped estimate of the cost change from step t onward.

    ``pessimistic`` keeps the larger of the clipped and unclipped terms,
    an upper bound on the cost increase. ``literal`` reuses the reward form
    ``-min{...}`` verbatim.
    """
    if kind == "pessimistic":
        rho = ratios(batch, theta, t) if rho is None else rho
        return -_step_sum(_clipped_terms(rho, -_signal_adv(batch, i, t), eps))
    if kind == "literal":
        return clipped_surrogate(batch, theta, eps, i, t, rho)
    raise ValueError(f"unknown cost surrogate {kind!r}")


def cost_increments(batch: SurrogateBatch, theta, t: int = 1, rho=None) -> ad.Var:
    """Importance-weighted predicted change in each episode cost from step t on, shape (m,)."""
    rho = ratios(batch, theta, t) if rho is None else rho
    m = batch.num_constraints
    parts = [_step_sum(rho * batch.cost_adv[:, t - 1:, i]).reshape(1) for i in range(m)]
    if not parts:
        return ad.Var(np.zeros(0))
    return ad.concat(parts)


def psi_terms(batch: SurrogateBatch, theta, t: int = 1, rho=None) -> ad.Var:
    """Constraint slacks for all constraints, shape (m,)."""
    return cost_increments(batch, theta, t, rho) + batch.offsets


def psi_term(batch: SurrogateBatch, theta, t: int, i: int) -> float:
    if not 0 <= i < batch.num_constraints:
        raise IndexError(f"cost index {i} out of range")
    return float(psi_terms(batch, theta, t).value[i])


def reward_surrogate(batch: SurrogateBatch, theta, t: int = 1, rho=None) -> ad.Var:
    """Unclipped ``sum_h mean[-rho A]``."""
    rho = ratios(batch, theta, t) if rho is None else rho
    return -_step_sum(rho * batch.adv[:, t - 1:])


def damped_lagrangian(batch: SurrogateBatch, theta, penalty: PenaltyState, t: int = 1) -> ad.Var:
    rho = ratios(batch, theta, t)
    loss = reward_surrogate(batch, theta, t, rho)
    if batch.num_constraints:
        loss = loss + damped_penalty(psi_terms(batch, theta, t, rho), penalty.lambdas[t - 1], penalty.beta)
    return loss


def final_loss(batch: SurrogateBatch, theta, penalty: PenaltyState, t: int = 1,
               cost_kind: str = "pessimistic") -> ad.Var:
    """Clipped reward surrogate plus the ReLU and damped penalties on each cost."""
    eps = penalty.epsilon_clip
    rho = ratios(batch, theta, t)
    loss = clipped_surrogate(batch, theta, eps, "reward", t, rho)
    offsets = batch.offsets
    lam = penalty.lambdas[t - 1]
    beta = penalty.beta
    for i in range(batch.num_constraints):
        y = cost_surrogate(batch, theta, eps, i, t, cost_kind, rho) + offsets[i]
        loss = loss + lam[i] * ad.relu(y)
        inner = ad.relu(y + lam[i] / beta)
        loss = loss + (0.5 * beta) * (ad.square(inner) - lam[i] ** 2 / beta ** 2)
    return loss


def final_loss_signature(batch: SurrogateBatch, theta, penalty: PenaltyState, t: int = 1,
                         cost_kind: str = "pessimistic") -> np.ndarray:
    """Branch pattern of every clip, min and max inside ``final_loss``."""
    eps = penalty.epsilon_clip
    rho = ratios(batch, np.asarray(theta), t).value
    lo, hi = 1.0 - eps, 1.0 + eps
    parts = [(rho > lo).ravel(), (rho < hi).ravel()]
    clipped = np.clip(rho, lo, hi)
    adv = batch.adv[:, t - 1:]
    parts.append((rho * adv <= clipped * adv).ravel())
    lam = penalty.lambdas[t - 1]
    for i in range(batch.num_constraints):
        a = batch.cost_adv[:, t - 1:, i]
        sgn = -a if cost_kind == "pessimistic" else a
        parts.append((rho * sgn <= clipped * sgn).ravel())
        y = float(cost_surrogate(batch, np.asarray(theta), eps, i, t, cost_kind, ad.Var(rho)).value) + batch.offsets[i]
        parts.append(np.array([y > 0, y + lam[i] / penalty.beta > 0]))
    return np.concatenate(parts)
