"""Penalty state and the closed-form rules that act on it.

``lambdas`` is an (H, m) array; row ``t - 1`` holds the multipliers used
by the step-t loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .approx import autodiff as ad


@dataclass(frozen=True)
class PenaltyState:
    lambdas: np.ndarray
    beta: float = 5.0
    beta_max: float = 20.0
    update_factor: float = 1.5
    epsilon_clip: float = 0.2

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=np.float64)
        if lam.ndim != 2:
            raise ValueError(f"lambdas must be (H, m), got shape {lam.shape}")
        if np.any(lam < 0):
            raise ValueError("multipliers must be non-negative")
        if not 0 < self.beta <= self.beta_max:
            raise ValueError(f"need 0 < beta <= beta_max, got {self.beta}, {self.beta_max}")
        if self.update_factor <= 1:
            raise ValueError("update factor must exceed 1")
        if not 0 < self.epsilon_clip < 1:
            raise ValueError("epsilon_clip must lie in (0, 1)")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def initial(cls, horizon: int, num_constraints: int, lambda_init: float = 0.0, **kw) -> "PenaltyState":
        return cls(np.full((horizon, num_constraints), float(lambda_init)), **kw)

    @property
    def num_constraints(self) -> int:
        return self.lambdas.shape[1]


def slack_optimum(psi, lam, beta):
    return np.maximum(0.0, -np.asarray(psi) - np.asarray(lam) / beta)


def damped_penalty(psi, lam, beta):
    """``(beta/2) (max{0, psi + lam/beta}^2 - lam^2/beta^2)``, summed over constraints.

    ``psi`` may be an autodiff ``Var``; ``lam`` is a plain array. Works
    elementwise over any leading shape when given arrays and the last axis
    indexes constraints.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if isinstance(psi, ad.Var):
        inner = ad.relu(psi + lam / beta)
        return ((0.5 * beta) * (ad.square(inner) - lam ** 2 / beta ** 2)).sum()
    psi = np.asarray(psi, dtype=np.float64)
    inner = np.maximum(0.0, psi + lam / beta)
    return (0.5 * beta * (inner ** 2 - lam ** 2 / beta ** 2)).sum(axis=-1)


def slack_objective(surrogate, psi, lam, beta, x):
    """Augmented objective with explicit slack: surrogate + sum lam*w + (beta/2) sum w^2, w = psi + x."""
    w = np.asarray(psi, dtype=np.float64) + np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    return surrogate + (lam * w).sum(axis=-1) + 0.5 * beta * (w ** 2).sum(axis=-1)


def lambda_update(penalty: PenaltyState, psi_prev: np.ndarray) -> PenaltyState:
    """``lambda <- max(0, lambda + beta * psi_prev)`` for every (t, i)."""
    psi_prev = np.asarray(psi_prev, dtype=np.float64)
    if psi_prev.shape != penalty.lambdas.shape:
        raise ValueError(f"psi shape {psi_prev.shape} != lambdas shape {penalty.lambdas.shape}")
    return replace(penalty, lambdas=np.maximum(0.0, penalty.lambdas + penalty.beta * psi_prev))


def secondary_cost_and_threshold(jc_estimates, thresholds, penalty: PenaltyState) -> tuple[float, float]:
    jc = np.asarray(jc_estimates, dtype=np.float64)
    d = np.asarray(thresholds, dtype=np.float64)
    lam = penalty.lambdas
    m = lam.shape[1]
    if m == 0:
        return 0.0, 0.0
    c_value = float(np.maximum((jc - d)[None, :], -lam / penalty.beta).sum())
    c_k = math.sqrt(m) / penalty.beta * float(np.abs(lam).max(axis=1).max())
    return c_value, c_k


def adaptive_beta(penalty: PenaltyState, c_value: float, c_k: float) -> PenaltyState:
    if c_value >= c_k:
        return replace(penalty, beta=min(penalty.beta_max, penalty.update_factor * penalty.beta))
    return penalty
