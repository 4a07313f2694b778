"""Exact reference solvers for small tabular CMDPs.

* exhaustive search over a discretised policy simplex,
* unconstrained backward induction,
* the exact constrained optimum of a single-constraint CMDP through its
  Lagrangian dual (strong duality holds for CMDPs),
* the policy-difference identity, the exact backward-in-time constrained
  iteration, and the damped-versus-constrained argmin comparison.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cmdp import (EpisodicCmdp, PolicyTable, advantage_tables, as_table,
                   exact_objective, exact_value_functions, forward_occupancy, objective_batch,
                   reach_probabilities)
from .penalty import damped_penalty

DEFAULT_BUDGET = 10 ** 7
FEAS_TOL = 1e-12
TIE_TOL = 1e-9
CHUNK = 4096


class BudgetExceededError(RuntimeError):
    pass


class PolicyGrid:
    """All distributions over ``num_actions`` with entries in multiples of 1/G."""

    def __init__(self, num_actions: int, resolution: int = 4):
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        self.num_actions = num_actions
        self.resolution = resolution
        pts = [c for c in itertools.product(range(resolution + 1), repeat=num_actions)
               if sum(c) == resolution]
        # lexicographically descending so the first point is the vertex e_0
        pts.sort(reverse=True)
        self.points = np.array(pts, dtype=np.float64) / resolution

    def __len__(self) -> int:
        return len(self.points)

    def count(self, slots: int) -> int:
        return len(self) ** slots


def _check_budget(n: int, budget: int) -> None:
    if n > budget:
        raise BudgetExceededError(f"{n} grid evaluations exceed the budget of {budget}")


def _decode(ids: np.ndarray, n_points: int, slots: int) -> np.ndarray:
    """Mixed-radix digits, most significant first."""
    digits = np.zeros((len(ids), slots), dtype=np.int64)
    rest = ids.copy()
    for j in range(slots - 1, -1, -1):
        digits[:, j] = rest % n_points
        rest //= n_points
    return digits


def grid_policies(grid: PolicyGrid, horizon: int, num_states: int, ids: np.ndarray) -> np.ndarray:
    """Tables ``(len(ids), H, S, A)`` for the given policy ids (slot order (h, s))."""
    digits = _decode(np.asarray(ids, dtype=np.int64), len(grid), horizon * num_states)
    return grid.points[digits].reshape(len(ids), horizon, num_states, grid.num_actions)


@dataclass
class BruteForceResult:
    best_policy: PolicyTable | None
    best_id: int
    best_J: float
    feasible: bool
    ids: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)
    JC: np.ndarray = field(repr=False)  # (n, m)

    @property
    def all_evaluations(self) -> list:
        return [(int(i), float(j), tuple(map(float, c))) for i, j, c in zip(self.ids, self.J, self.JC)]


def _select(ids, J, JC, thresholds) -> tuple[int, float, bool]:
    feasible = np.all(JC <= np.asarray(thresholds) + FEAS_TOL, axis=1)
    if not feasible.any():
        return -1, float("nan"), False
    best = J[feasible].max()
    cand = ids[feasible & (J == best)]
    return int(cand.min()), float(best), True


def brute_force_constrained_optimum(cmdp: EpisodicCmdp, grid: PolicyGrid, budget: int = DEFAULT_BUDGET,
                                    shuffle_seed: int | None = None) -> BruteForceResult:
    """Exhaustive search for the best feasible grid policy.

    Ties in J go to the smallest policy id, so the result does not depend on
    the enumeration order (``shuffle_seed`` permutes it for testing).
    """
    slots = cmdp.horizon * cmdp.num_states
    n = grid.count(slots)
    _check_budget(n, budget)
    order = np.arange(n, dtype=np.int64)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(order)
    J = np.zeros(n)
    JC = np.zeros((n, cmdp.num_constraints))
    for start in range(0, n, CHUNK):
        ids = order[start:start + CHUNK]
        tables = grid_policies(grid, cmdp.horizon, cmdp.num_states, ids)
        J[start:start + len(ids)] = objective_batch(cmdp, tables, "reward")
        for i in range(cmdp.num_constraints):
            JC[start:start + len(ids), i] = objective_batch(cmdp, tables, i)
    best_id, best_J, feasible = _select(order, J, JC, cmdp.thresholds)
    best = None
    if feasible:
        best = PolicyTable(grid_policies(grid, cmdp.horizon, cmdp.num_states, np.array([best_id]))[0])
    return BruteForceResult(best, best_id, best_J, feasible, order, J, JC)


def backward_induction(cmdp: EpisodicCmdp, weights=None) -> tuple[np.ndarray, PolicyTable]:
    """Optimal values and a deterministic greedy policy for ``r - sum_i w_i C_i``.

    Ties are broken toward the smallest action index.
    """
    gbar = cmdp.expected_signal("reward")
    if weights is not None:
        for i, w in enumerate(weights):
            gbar = gbar - w * cmdp.expected_signal(i)
    H, S, A = cmdp.horizon, cmdp.num_states, cmdp.num_actions
    v = np.zeros((H + 1, S))
    actions = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q = gbar + cmdp.transition @ v[h + 1]
        actions[h] = q.argmax(axis=1)
        v[h] = q.max(axis=1)
    return v, PolicyTable.deterministic(actions, A)


@dataclass(frozen=True)
class DualOptimum:
    value: float  # optimal constrained J
    multiplier: float
    feasible: bool
    low_policy: PolicyTable | None  # greedy policy just below the multiplier
    high_policy: PolicyTable | None  # greedy policy at/above the multiplier (feasible)


def constrained_optimum_dual(cmdp: EpisodicCmdp, tol: float = 1e-12, nu_cap: float = 1e8) -> DualOptimum:
    """Exact optimum of a single-constraint CMDP via ``min_nu max_pi J - nu (J_C - d)``.

    The dual function is convex and piecewise linear in ``nu``; its minimiser
    is located by bisection on the sign of the subgradient ``d - J_C(pi_nu)``.
    """
    if cmdp.num_constraints != 1:
        raise ValueError("the dual oracle handles exactly one constraint")
    d = cmdp.thresholds[0]
    mu = cmdp.initial_dist

    def greedy(nu):
        v, pi = backward_induction(cmdp, [nu])
        return float(mu @ v[0]) + nu * d, pi

    _, pi0 = greedy(0.0)
    if exact_objective(cmdp, pi0, 0) <= d + FEAS_TOL:
        return DualOptimum(exact_objective(cmdp, pi0), 0.0, True, pi0, pi0)
    lo, hi = 0.0, 1.0
    while True:
        _, pi = greedy(hi)
        if exact_objective(cmdp, pi, 0) <= d + FEAS_TOL:
            break
        lo, hi = hi, 2 * hi
        if hi > nu_cap:
            return DualOptimum(float("nan"), float("inf"), False, None, None)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        _, pi = greedy(mid)
        if exact_objective(cmdp, pi, 0) <= d + FEAS_TOL:
            hi = mid
        else:
            lo = mid
    g_hi, pi_hi = greedy(hi)
    _, pi_lo = greedy(lo)
    return DualOptimum(g_hi, hi, True, pi_lo, pi_hi)


def mixture_optimum(cmdp: EpisodicCmdp, dual: DualOptimum) -> tuple[float, float]:
    """(J, J_C) of the optimal mixture of the two greedy policies around the multiplier.

    Mixing at the trajectory level attains any convex combination of their
    (J, J_C) pairs; the weight is chosen to meet the threshold exactly.
    """
    d = cmdp.thresholds[0]
    j_lo, c_lo = exact_objective(cmdp, dual.low_policy), exact_objective(cmdp, dual.low_policy, 0)
    j_hi, c_hi = exact_objective(cmdp, dual.high_policy), exact_objective(cmdp, dual.high_policy, 0)
    if c_lo <= d or c_lo == c_hi:
        return j_lo if c_lo <= d else j_hi, c_lo if c_lo <= d else c_hi
    w = (c_lo - d) / (c_lo - c_hi)
    return (1 - w) * j_lo + w * j_hi, (1 - w) * c_lo + w * c_hi


def lemma1_check(cmdp: EpisodicCmdp, policy_a, policy_b, signal="reward") -> tuple[float, float]:
    """Both sides of ``J(a) - J(b) = sum_h E_{P^a_h}[A^b_h]``."""
    lhs = exact_objective(cmdp, policy_a, signal) - exact_objective(cmdp, policy_b, signal)
    occ = reach_probabilities(cmdp, policy_a).probs
    adv = advantage_tables(exact_value_functions(cmdp, policy_b, signal))
    return lhs, float((occ * adv).sum())


# -- per-step exact problem -------------------------------------------------------

@dataclass(frozen=True)
class StepCandidates:
    """Exact surrogate and constraint terms for every grid choice of the step-t rows."""

    t: int
    rows: np.ndarray  # (n, S, A)
    surrogate: np.ndarray  # (n,) sum_{h>=t} E[-A_h]
    psi: np.ndarray  # (n, m)


def step_candidates(cmdp: EpisodicCmdp, prev, t: int, grid: PolicyGrid, current=None,
                    budget: int = DEFAULT_BUDGET) -> StepCandidates:
    """Enumerate step-t rows; steps before t follow ``prev``, after t follow ``current``."""
    H, S = cmdp.horizon, cmdp.num_states
    if not 1 <= t <= H:
        raise ValueError(f"step {t} outside 1..{H}")
    n = grid.count(S)
    _check_budget(n, budget)
    prev_t = as_table(prev, cmdp)
    cur = prev_t if current is None else as_table(current, cmdp)
    base = np.concatenate([prev_t[:t - 1], cur[t - 1:]])
    ids = np.arange(n, dtype=np.int64)
    rows = grid.points[_decode(ids, len(grid), S)]  # (n, S, A)
    tables = np.repeat(base[None], n, axis=0)
    tables[:, t - 1] = rows
    occ = forward_occupancy(cmdp.transition, cmdp.initial_dist, tables)[:, t - 1:]
    adv = advantage_tables(exact_value_functions(cmdp, prev_t, "reward"))[t - 1:]
    surrogate = -(occ * adv).sum(axis=(1, 2, 3))
    psi = np.zeros((n, cmdp.num_constraints))
    for i in range(cmdp.num_constraints):
        vt = exact_value_functions(cmdp, prev_t, i)
        jc = float(cmdp.initial_dist @ vt.v[0])
        psi[:, i] = (occ * advantage_tables(vt)[t - 1:]).sum(axis=(1, 2, 3)) + jc - cmdp.thresholds[i]
    return StepCandidates(t, rows, surrogate, psi)


def _argmin_set(values: np.ndarray, mask: np.ndarray | None = None) -> frozenset:
    if mask is not None:
        if not mask.any():
            return frozenset()
        values = np.where(mask, values, np.inf)
    best = values.min()
    return frozenset(np.flatnonzero(values <= best + TIE_TOL).tolist())


def constrained_argmin(cands: StepCandidates) -> frozenset:
    return _argmin_set(cands.surrogate, np.all(cands.psi <= FEAS_TOL, axis=1))


def damped_values(cands: StepCandidates, lam: np.ndarray, beta: float) -> np.ndarray:
    return cands.surrogate + damped_penalty(cands.psi, lam, beta)


@dataclass(frozen=True)
class IpoceStep:
    policy: PolicyTable
    feasible: bool
    objective: float


def ipoce_exact_step(cmdp: EpisodicCmdp, prev, t: int, grid: PolicyGrid, current=None,
                     budget: int = DEFAULT_BUDGET) -> IpoceStep:
    """Solve the step-t constrained problem exactly over the grid.

    When no grid row set is feasible the step-t rows of ``current`` are kept
    and the result is flagged infeasible.
    """
    cur = as_table(prev if current is None else current, cmdp)
    cands = step_candidates(cmdp, prev, t, grid, cur, budget)
    best = constrained_argmin(cands)
    if not best:
        return IpoceStep(PolicyTable(cur), False, float("nan"))
    k = min(best)
    table = np.array(cur)
    table[t - 1] = cands.rows[k]
    return IpoceStep(PolicyTable(table), True, float(cands.surrogate[k]))


@dataclass(frozen=True)
class IpoceIterate:
    policy: PolicyTable
    J: float
    JC: tuple
    all_feasible: bool


def ipoce_exact(cmdp: EpisodicCmdp, grid: PolicyGrid, iterations: int, initial=None,
                budget: int = DEFAULT_BUDGET) -> list[IpoceIterate]:
    """Backward-in-time constrained iteration; later steps use their updated rows."""
    policy = PolicyTable.uniform(cmdp.horizon, cmdp.num_states, cmdp.num_actions) if initial is None \
        else PolicyTable(as_table(initial, cmdp))
    out = []
    for _ in range(iterations):
        prev = policy
        ok = True
        for t in range(cmdp.horizon, 0, -1):
            step = ipoce_exact_step(cmdp, prev, t, grid, policy, budget)
            policy = step.policy
            ok = ok and step.feasible
        jc = tuple(exact_objective(cmdp, policy, i) for i in range(cmdp.num_constraints))
        out.append(IpoceIterate(policy, exact_objective(cmdp, policy), jc, ok))
    return out


# -- damped versus constrained argmin ----------------------------------------------

@dataclass(frozen=True)
class BetaEntry:
    beta: float
    lambdas: tuple
    lambda_converged: bool
    damped_argmin: frozenset
    constrained_argmin: frozenset
    coincide: bool
    minimizer_feasible: bool
    minimizer_psi: tuple


@dataclass(frozen=True)
class Theorem1Report:
    entries: tuple
    smallest_coincident_beta: float | None
    unconstrained_feasible: bool

    @property
    def monotone(self) -> bool:
        flags = [e.coincide for e in sorted(self.entries, key=lambda e: e.beta)]
        first = next((k for k, f in enumerate(flags) if f), len(flags))
        return all(flags[first:])


def converge_lambda(cands: StepCandidates, beta: float, tol: float = 1e-8, max_iter: int = 1000):
    """Fixed point of ``lambda <- max(0, lambda + beta * psi(argmin damped(lambda)))``."""
    lam = np.zeros(cands.psi.shape[1])
    for _ in range(max_iter):
        k = min(_argmin_set(damped_values(cands, lam, beta)))
        new = np.maximum(0.0, lam + beta * cands.psi[k])
        if np.max(np.abs(new - lam), initial=0.0) <= tol:
            return new, True
        lam = new
    return lam, False


def theorem1_equivalence_check(cmdp: EpisodicCmdp, grid: PolicyGrid, beta_list, t: int = 1,
                               prev=None, budget: int = DEFAULT_BUDGET) -> Theorem1Report:
    prev = PolicyTable.uniform(cmdp.horizon, cmdp.num_states, cmdp.num_actions) if prev is None else prev
    cands = step_candidates(cmdp, prev, t, grid, None, budget)
    target = constrained_argmin(cands)
    unconstrained = _argmin_set(cands.surrogate)
    unc_feasible = all(np.all(cands.psi[k] <= FEAS_TOL) for k in unconstrained)
    entries = []
    for beta in sorted(beta_list):
        lam, ok = converge_lambda(cands, beta)
        damped = _argmin_set(damped_values(cands, lam, beta))
        k = min(damped)
        entries.append(BetaEntry(float(beta), tuple(lam), ok, damped, target, damped == target,
                                 bool(np.all(cands.psi[k] <= FEAS_TOL)), tuple(cands.psi[k])))
    smallest = next((e.beta for e in entries if e.coincide), None)
    return Theorem1Report(tuple(entries), smallest, unc_feasible)


__all__ = [
    "BudgetExceededError", "PolicyGrid", "BruteForceResult", "brute_force_constrained_optimum",
    "grid_policies", "backward_induction", "DualOptimum", "constrained_optimum_dual",
    "mixture_optimum", "lemma1_check", "StepCandidates", "step_candidates", "constrained_argmin",
    "damped_values", "IpoceStep", "ipoce_exact_step", "IpoceIterate", "ipoce_exact",
    "BetaEntry", "Theorem1Report", "converge_lambda", "theorem1_equivalence_check",
]
