"""Finite-difference gradient oracle with kink detection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NonFiniteValueError(ValueError):
    pass


def finite_diff_gradient(fn: Callable[[np.ndarray], float], theta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = eps
        hi, lo = fn(theta + e), fn(theta - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteValueError(f"non-finite value while perturbing coordinate {j}")
        grad[j] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


@dataclass(frozen=True)
class ProbeResult:
    rel_error: float
    kink: bool  # a branch switched inside the finite-difference stencil


def probe_gradient(value_and_grad: Callable, signature: Callable, theta: np.ndarray,
                   eps: float = 1e-5) -> ProbeResult:
    """Compare an analytic gradient against central differences.

    ``signature(theta)`` returns the discrete branch pattern of every
    non-smooth operation (clip, min, max); if any coordinate perturbation
    changes it, the probe straddles a kink and is flagged.
    """
    theta = np.array(theta, dtype=np.float64)
    _, ga = value_and_grad(theta)
    base = signature(theta)
    kink = False
    gfd = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = eps
        vh, _ = value_and_grad(theta + e)
        vl, _ = value_and_grad(theta - e)
        if not (np.isfinite(vh) and np.isfinite(vl)):
            raise NonFiniteValueError(f"non-finite value while perturbing coordinate {j}")
        gfd[j] = (vh - vl) / (2 * eps)
        if not kink and (not np.array_equal(signature(theta + e), base)
                         or not np.array_equal(signature(theta - e), base)):
            kink = True
    return ProbeResult(relative_error(ga, gfd), kink)
