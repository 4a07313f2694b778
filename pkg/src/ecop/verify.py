"""Oracle verification suites behind ``ecop verify``.

Every suite runs on built-in randomized instances drawn from a fixed master
seed and returns one row per (instance, check) so a report lists every
instance together with its error.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .approx import TabularSoftmaxPolicy, probe_gradient
from .approx.autodiff import value_and_grad
from .cmdp import (EpisodicCmdp, PolicyTable, exact_objective, occupancy_objective, random_cmdp,
                   random_policy, reach_probabilities, sample_batch)
from .envs.tiny import TwoStateHazard
from .losses import SurrogateBatch, final_loss, final_loss_signature
from .oracle import PolicyGrid, _argmin_set, lemma1_check, step_candidates, theorem1_equivalence_check
from .penalty import PenaltyState

MASTER_SEED = 20240
SUITES = ("lemma1", "theorem1", "gradients", "occupancy")

LEMMA1_TOL = 1e-9
GRAD_TOL = 1e-4
GRAD_PASS_FRACTION = 0.95
THEOREM1_BETAS = (0.1, 1.0, 5.0, 20.0)
TINY_BETA = 1e-4
OCC_SAMPLES = 100_000
OCC_SIGMAS = 3.0


@dataclass(frozen=True)
class CheckRow:
    suite: str
    instance: str
    check: str
    value: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    rows: tuple
    passed: bool
    summary: str


def _rng(suite_id: int, k: int) -> np.random.Generator:
    return np.random.default_rng([MASTER_SEED, suite_id, k])


# -- lemma 1 -------------------------------------------------------------------------

def lemma1_suite(instances: int = 100) -> SuiteReport:
    rows = []
    for k in range(instances):
        rng = _rng(1, k)
        S, A, H = (int(rng.integers(1, n + 1)) for n in (5, 3, 5))
        cmdp = random_cmdp(rng, S, A, H)
        pa, pb = random_policy(rng, H, S, A), random_policy(rng, H, S, A)
        lhs, rhs = lemma1_check(cmdp, pa, pb)
        err = abs(lhs - rhs)
        rows.append(CheckRow("lemma1", f"S{S}A{A}H{H}#{k}", "abs_error", err, LEMMA1_TOL, err <= LEMMA1_TOL))
    ok = sum(r.passed for r in rows)
    worst = max(r.value for r in rows)
    return SuiteReport("lemma1", tuple(rows), ok == len(rows),
                       f"{ok}/{len(rows)} instances within {LEMMA1_TOL:g} (max error {worst:.3g})")


# -- damped versus constrained argmin --------------------------------------------------

def hull_threshold(cmdp: EpisodicCmdp, grid: PolicyGrid, t: int = 1) -> float | None:
    """Threshold that makes the unconstrained step-t optimum infeasible.

    The step problem is linear in the step-t rows, so its (cost, surrogate)
    image is the convex hull of the deterministic choices. The threshold is
    the cost of the next lower-hull vertex below the unconstrained optimum,
    which places the continuous optimum on a grid point. ``None`` when no
    choice is cheaper than the unconstrained optimum.
    """
    prev = PolicyTable.uniform(cmdp.horizon, cmdp.num_states, cmdp.num_actions)
    cands = step_candidates(cmdp, prev, t, grid)
    cost = cands.psi[:, 0] + cmdp.thresholds[0]
    s = cands.surrogate
    k0 = min(_argmin_set(s))
    cheaper = cost < cost[k0] - 1e-9
    if not cheaper.any():
        return None
    gap = np.where(cheaper, cost[k0] - cost, 1.0)
    slope = np.where(cheaper, (s - s[k0]) / gap, np.inf)
    on_edge = np.flatnonzero(slope <= slope.min() + 1e-9)
    return float(cost[on_edge].min())


def theorem1_instances(candidates: int = 10) -> list[tuple[str, EpisodicCmdp]]:
    """Two-state, two-action, H = 2 instances with a binding threshold."""
    grid = PolicyGrid(2)
    out = []
    base = [("two_state_hazard", TwoStateHazard().to_cmdp())]
    base += [(f"random#{k}", random_cmdp(_rng(2, k), 2, 2, 2)) for k in range(candidates)]
    for name, cmdp in base:
        d = hull_threshold(cmdp, grid)
        if d is not None:
            out.append((name, cmdp.with_thresholds((d,))))
    return out


def theorem1_suite() -> SuiteReport:
    grid = PolicyGrid(2)
    rows = []
    instances = theorem1_instances()
    for name, cmdp in instances:
        rep = theorem1_equivalence_check(cmdp, grid, THEOREM1_BETAS + (TINY_BETA,))
        by_beta = {e.beta: e for e in rep.entries}
        top = by_beta[max(THEOREM1_BETAS)]
        tiny = by_beta[TINY_BETA]
        rows += [
            CheckRow("theorem1", name, "unconstrained_infeasible", float(not rep.unconstrained_feasible),
                     1.0, not rep.unconstrained_feasible),
            CheckRow("theorem1", name, f"coincide_at_beta_{top.beta:g}", float(top.coincide), 1.0, top.coincide),
            CheckRow("theorem1", name, f"tiny_beta_{TINY_BETA:g}_infeasible", float(not tiny.minimizer_feasible),
                     1.0, not tiny.minimizer_feasible),
            CheckRow("theorem1", name, "monotone_in_beta", float(rep.monotone), 1.0, rep.monotone),
        ]
        smallest = rep.smallest_coincident_beta
        rows.append(CheckRow("theorem1", name, "smallest_coincident_beta",
                             float("nan") if smallest is None else smallest, float("nan"), True))
    ok = len(instances) >= 3 and all(r.passed for r in rows)
    return SuiteReport("theorem1", tuple(rows), ok,
                       f"{len(instances)} instances; all checks passed: {ok}")


# -- gradients -----------------------------------------------------------------------

def _random_probe(rng: np.random.Generator):
    H, S, A = (int(rng.integers(2, 4)) for _ in range(3))
    N, m = int(rng.integers(2, 5)), int(rng.integers(0, 3))
    policy = TabularSoftmaxPolicy(H, S, A)
    theta = rng.normal(0.0, 0.7, policy.layout.size)
    old = theta + rng.normal(0.0, 0.15, theta.size)
    obs = rng.integers(0, S, (N, H))
    actions = rng.integers(0, A, (N, H))
    steps = np.broadcast_to(np.arange(1, H + 1), (N, H))
    logp_old = policy.log_prob(old, steps.ravel(), obs.ravel(), actions.ravel()).value.reshape(N, H)
    batch = SurrogateBatch(policy, obs, actions, logp_old, rng.normal(size=(N, H)),
                           rng.normal(size=(N, H, m)), rng.uniform(0, 3, m), rng.uniform(0, 3, m))
    penalty = PenaltyState(rng.uniform(0, 2, (H, m)), beta=float(rng.uniform(0.5, 20)))
    t = int(rng.integers(1, H + 1))
    return batch, theta, penalty, t


def gradients_suite(probes: int = 100, max_draws: int = 1000) -> SuiteReport:
    """Draw until ``probes`` kink-free probes are evaluated; kinks are logged and skipped."""
    rows = []
    evaluated = kinks = k = 0
    while evaluated < probes and k < max_draws:
        batch, theta, penalty, t = _random_probe(_rng(3, k))
        k += 1

        def vg(th, batch=batch, penalty=penalty, t=t):
            return value_and_grad(lambda x: final_loss(batch, x, penalty, t), th)

        res = probe_gradient(vg, lambda th, b=batch, p=penalty, t=t: final_loss_signature(b, th, p, t), theta)
        if res.kink:
            kinks += 1
            rows.append(CheckRow("gradients", f"probe#{k - 1}", "kink_skipped", res.rel_error, GRAD_TOL, True))
            continue
        evaluated += 1
        rows.append(CheckRow("gradients", f"probe#{k - 1}", "rel_error", res.rel_error, GRAD_TOL,
                             res.rel_error <= GRAD_TOL))
    good = sum(r.passed for r in rows if r.check == "rel_error")
    ok = evaluated == probes and good >= GRAD_PASS_FRACTION * probes
    return SuiteReport("gradients", tuple(rows), ok,
                       f"{good}/{evaluated} probes within {GRAD_TOL:g}; {kinks} kink-proximate probes skipped")


# -- occupancy -----------------------------------------------------------------------

def occupancy_suite(instances: int = 3, samples: int = OCC_SAMPLES) -> SuiteReport:
    rows = []
    for k in range(instances):
        rng = _rng(4, k)
        S, A, H = (int(rng.integers(2, n + 1)) for n in (5, 3, 5))
        cmdp = random_cmdp(rng, S, A, H, sparsity=0.3)
        policy = random_policy(rng, H, S, A)
        name = f"S{S}A{A}H{H}#{k}"
        occ = reach_probabilities(cmdp, policy)
        p = occ.state_marginal()  # (H, S)
        states = sample_batch(cmdp, policy, samples, int(rng.integers(2**31)))[0][:, :H]
        freq = np.stack([np.bincount(states[:, h], minlength=S) for h in range(H)]) / samples
        se = np.sqrt(p * (1 - p) / samples)
        degenerate = se == 0
        z = np.where(degenerate, 0.0, np.abs(freq - p) / np.where(degenerate, 1.0, se))
        exact_ok = bool(np.all(freq[degenerate] == p[degenerate]))
        worst = float(z.max())
        rows.append(CheckRow("occupancy", name, "max_standard_errors", worst, OCC_SIGMAS,
                             worst <= OCC_SIGMAS and exact_ok))
        gap = abs(occupancy_objective(cmdp, occ) - exact_objective(cmdp, policy))
        rows.append(CheckRow("occupancy", name, "objective_identity", gap, LEMMA1_TOL, gap <= LEMMA1_TOL))
    ok = all(r.passed for r in rows)
    return SuiteReport("occupancy", tuple(rows), ok,
                       f"{sum(r.passed for r in rows)}/{len(rows)} checks passed")


_RUNNERS = {"lemma1": lemma1_suite, "theorem1": theorem1_suite,
            "gradients": gradients_suite, "occupancy": occupancy_suite}


def run_suites(name: str) -> list[SuiteReport]:
    if name == "all":
        return [_RUNNERS[s]() for s in SUITES]
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)} or all")
    return [_RUNNERS[name]()]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "instance", "check", "value", "tolerance", "passed"])
    for rep in reports:
        for r in rep.rows:
            w.writerow([r.suite, r.instance, r.check, repr(float(r.value)), repr(float(r.tolerance)),
                        int(r.passed)])
    return buf.getvalue()


__all__ = ["CheckRow", "SuiteReport", "SUITES", "lemma1_suite", "theorem1_suite", "gradients_suite",
           "occupancy_suite", "hull_threshold", "theorem1_instances", "run_suites", "reports_to_csv"]
