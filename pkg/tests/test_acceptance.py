"""Acceptance criteria 1-10, each checked at its stated tolerance.

Every test records one PASS/FAIL line through the ``criterion`` fixture; the
lines are printed together at the end of the session. Training runs are
loaded from ``configs/`` and cached per session, so criteria that share a
run (5, 6, 7 and 9) train it once.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from ecop import penalty as pen
from ecop.approx import autodiff as ad
from ecop.baselines import p3o_loss
from ecop.config import load_config
from ecop.envs import make_env
from ecop.losses import cost_surrogate, final_loss
from ecop.oracle import constrained_optimum_dual
from ecop.runner import run_experiment
from ecop.training import Trainer, UpdateRule
from ecop.verify import gradients_suite, lemma1_suite, theorem1_suite

from conftest import make_batch

CONFIGS = Path(__file__).parent.parent / "configs"
FINAL = 100  # "final" means the mean over the last 100 episodes


@pytest.fixture(scope="session")
def experiments(tmp_path_factory):
    """Run a config on first request and keep its per-seed results for the session."""
    cache = {}

    def get(name):
        if name not in cache:
            cfg = load_config(CONFIGS / f"{name}.yaml")
            out = tmp_path_factory.mktemp(name)
            start = time.perf_counter()
            result = run_experiment(cfg, out)
            cache[name] = (cfg, result, (time.perf_counter() - start) / len(result.seeds))
        return cache[name]

    return get


def _final(result, field, i=0):
    out = []
    for res in result.results:
        recs = res.records[-FINAL:]
        vals = [r.J for r in recs] if field == "J" else [r.JC[i] for r in recs]
        out.append(np.array(vals))
    return out


def test_criterion_01_lemma1(criterion):
    start = time.perf_counter()
    rep = lemma1_suite(100)
    elapsed = time.perf_counter() - start
    worst = max(r.value for r in rep.rows)
    ok = len(rep.rows) == 100 and worst <= 1e-9 and elapsed < 10
    criterion("1", ok, f"100 instances, max |error| {worst:.2e} (tol 1e-9), {elapsed:.1f}s (< 10s)")


def test_criterion_02_slack_algebra(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    branch_ok = True
    for _ in range(100):
        psi, lam, beta = rng.uniform(-10, 10), rng.uniform(0, 10), rng.uniform(0.1, 20)
        x = pen.slack_optimum(psi, lam, beta)
        lhs = float(pen.damped_penalty(np.array([psi]), np.array([lam]), beta))
        rhs = float(pen.slack_objective(0.0, np.array([psi]), np.array([lam]), beta, np.atleast_1d(x)))
        worst = max(worst, abs(lhs - rhs))
        boundary = -lam / beta

        def slope(p, lam=lam, beta=beta):
            return ad.value_and_grad(lambda v: pen.damped_penalty(v, np.array([lam]), beta), np.array([p]))[1][0]

        branch_ok &= slope(boundary - 1e-6) == 0.0 and slope(boundary + 1e-6) > 0.0
    ok = worst <= 1e-12 and branch_ok
    criterion("2", ok, f"100 triples, max |damped - slack objective at x*| {worst:.2e} (tol 1e-12); "
                       f"quadratic branch active exactly above -lambda/beta: {branch_ok}")


def test_criterion_03_theorem1(criterion):
    start = time.perf_counter()
    rep = theorem1_suite()
    elapsed = time.perf_counter() - start
    instances = {r.instance for r in rep.rows}
    by_check = {}
    for r in rep.rows:
        by_check.setdefault(r.check, []).append(r.passed)
    coincide = all(v for k, vs in by_check.items() if k.startswith("coincide") for v in vs)
    tiny = all(v for k, vs in by_check.items() if k.startswith("tiny_beta") for v in vs)
    ok = rep.passed and len(instances) >= 3 and elapsed < 120
    criterion("3", ok, f"{len(instances)} instances; coincide at beta=20: {coincide}; "
                       f"tiny beta infeasible: {tiny}; {elapsed:.1f}s (< 120s)")


def test_criterion_04_gradients(criterion):
    rep = gradients_suite(probes=100)
    scored = [r for r in rep.rows if r.check == "rel_error"]
    good = sum(r.passed for r in scored)
    kinks = sum(r.check == "kink_skipped" for r in rep.rows)
    ok = len(scored) == 100 and good >= 95
    criterion("4", ok, f"{good}/{len(scored)} probes with rel. error <= 1e-4 (need >= 95); {kinks} kink probes skipped")


@pytest.mark.slow
def test_criterion_05_update_invariants(criterion, experiments, tmp_path):
    cfg, result, _ = experiments("hazard_ecop")
    lam_ok = all(min(min(r.lambda_max) for r in res.records) >= 0 for res in result.results)
    beta_ok = True
    for res in result.results:
        beta = np.array([r.beta for r in res.records])
        beta_ok &= bool(np.all(np.diff(beta) >= 0) and np.all(beta <= cfg.beta_max))
    # byte-identical rerun of one seed
    rerun = run_experiment(cfg.replace(seeds=(cfg.seeds[0],)), tmp_path)
    name = f"seed_{cfg.seeds[0]}.csv"
    ckpt = f"checkpoint_seed_{cfg.seeds[0]}.json"
    same = ((result.out_dir / name).read_bytes() == (rerun.out_dir / name).read_bytes()
            and (result.out_dir / ckpt).read_bytes() == (rerun.out_dir / ckpt).read_bytes())
    ok = lam_ok and beta_ok and same and not result.failed
    criterion("5", ok, f"lambda >= 0: {lam_ok}; beta monotone and <= {cfg.beta_max:g}: {beta_ok}; "
                       f"seed {cfg.seeds[0]} rerun byte-identical: {same}")


@pytest.mark.slow
def test_criterion_06_constrained_learning(criterion, experiments):
    cfg, result, per_seed = experiments("hazard_ecop")
    cmdp = make_env(cfg.env, **cfg.env_overrides).to_cmdp()
    d = cmdp.thresholds[0]
    optimum = constrained_optimum_dual(cmdp).value
    J = [v.mean() for v in _final(result, "J")]
    JC = [v.mean() for v in _final(result, "JC")]
    feasible = all(c <= 1.05 * d for c in JC)
    good = sum(j >= 0.9 * optimum for j in J)
    ok = feasible and good >= 4 and per_seed < 300 and not result.failed
    criterion("6", ok, f"final J {np.round(J, 2).tolist()} vs 0.9 x {optimum:.3f} = {0.9 * optimum:.3f} "
                       f"({good}/5, need 4); final J_C {np.round(JC, 3).tolist()} <= {1.05 * d:.2f}: {feasible}; "
                       f"{per_seed:.0f}s per seed (< 300s)")


@pytest.mark.slow
def test_criterion_07_oscillation(criterion, experiments):
    _, ecop_res, _ = experiments("hazard_ecop")
    _, lag_res, _ = experiments("hazard_ppo_lagrangian")
    ecop_std = [v.std() for v in _final(ecop_res, "JC")]
    lag_std = [v.std() for v in _final(lag_res, "JC")]
    wins = sum(e < l for e, l in zip(ecop_std, lag_std))
    criterion("7", wins >= 4, f"std of final J_C, e-COP {np.round(ecop_std, 3).tolist()} vs PPO-L "
                              f"{np.round(lag_std, 3).tolist()}: e-COP smaller on {wins}/5 seeds (need 4)")


@pytest.mark.slow
def test_criterion_08_multi_constraint(criterion, experiments):
    cfg, both, _ = experiments("navigation_ecop")
    d1, d2 = make_env(cfg.env, **cfg.env_overrides).spec.thresholds
    c1 = [v.mean() for v in _final(both, "JC", 0)]
    c2 = [v.mean() for v in _final(both, "JC", 1)]
    both_ok = all(a <= 1.10 * d1 and b <= 1.10 * d2 for a, b in zip(c1, c2))
    _, only1, _ = experiments("navigation_c1_only")
    _, only2, _ = experiments("navigation_c2_only")
    ignored2 = [v.mean() for v in _final(only1, "JC", 1)]
    ignored1 = [v.mean() for v in _final(only2, "JC", 0)]
    v2 = sum(c > d2 for c in ignored2)
    v1 = sum(c > d1 for c in ignored1)
    ok = both_ok and v1 >= 3 and v2 >= 3
    criterion("8", ok, f"both active, every seed: final J_C1 {np.round(c1, 2).tolist()} <= {1.1 * d1:.2f}, "
                       f"J_C2 {np.round(c2, 2).tolist()} <= {1.1 * d2:.2f}; C1-only violates C2 on {v2}/5, C2-only violates C1 on {v1}/5 (need 3)")


@pytest.mark.slow
def test_criterion_09_adaptive_beta(criterion, experiments):
    cfg, adaptive, _ = experiments("hazard_ecop")
    d = make_env(cfg.env, **cfg.env_overrides).spec.thresholds[0]
    j_ad = np.mean([v.mean() for v in _final(adaptive, "J")])
    c_ad = np.mean([v.mean() for v in _final(adaptive, "JC")])
    parts, ok = [], c_ad <= 1.05 * d
    for beta in (5, 10):
        _, fixed, _ = experiments(f"hazard_fixed_beta{beta}")
        j_fx = np.mean([v.mean() for v in _final(fixed, "J")])
        c_fx = np.mean([v.mean() for v in _final(fixed, "JC")])
        # a fixed-beta arm that breaks the budget cannot beat a feasible adaptive arm
        ok &= j_ad >= j_fx or c_fx > 1.05 * d
        parts.append(f"fixed {beta}: J {j_fx:.2f}, J_C {c_fx:.2f}")
    criterion("9", bool(ok), f"adaptive: J {j_ad:.2f}, J_C {c_ad:.2f}; " + "; ".join(parts))


def test_criterion_10a_zero_constraints(criterion):
    cfg = load_config(CONFIGS / "hazard_ecop.yaml").replace(constraints=(), episodes=20, batch_episodes=32)
    env = make_env(cfg.env, **cfg.env_overrides)
    a = Trainer(env, cfg, 0)
    b = Trainer(env, cfg, 0, UpdateRule(cfg, env.horizon, []))
    same = True
    for k in range(1, cfg.episodes + 1):
        ra, rb = a.episode(k), b.episode(k)
        same &= (ra.J, ra.JC, ra.loss) == (rb.J, rb.JC, rb.loss) and np.array_equal(a.theta, b.theta)
    criterion("10a", same, f"m = 0 e-COP and clipped-surrogate training bit-identical over {cfg.episodes} episodes: {same}")


def test_criterion_10b_p3o_limit(criterion):
    # the literal claim: with lambda = kappa and beta -> 0 the e-COP loss equals the P3O loss to 1e-9
    beta, worst, gap_pred = 1e-9, 0.0, 0.0
    for seed in range(20):
        batch, _, theta = make_batch(seed, m=1)
        kappa = 1.0 + seed / 10
        state = pen.PenaltyState(np.full((3, 1), kappa), beta=beta, beta_max=1.0)
        gap = abs(final_loss(batch, theta, state, 1).item() - p3o_loss(batch, theta, kappa, 0.2, 1).item())
        if gap > worst:
            y = cost_surrogate(batch, theta, 0.2, 0, 1).item() + batch.offsets[0]
            worst, gap_pred = gap, abs(kappa * y)
    criterion("10b", worst <= 1e-9,
              f"max |final_loss - p3o_loss| at beta = 1e-9 over 20 points: {worst:.3g} (tol 1e-9); "
              f"predicted gap |kappa * y| at that point: {gap_pred:.3g}")
