"""Multi-seed experiment execution and on-disk artifacts."""

from __future__ import annotations

import json
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .approx import Layout, ParamVector, load_checkpoint, save_checkpoint
from .approx.policies import policy_from_meta
from .cmdp import PolicyTable, exact_objective
from .config import RunConfig
from .envs import Env, make_env
from .oracle import PolicyGrid, ipoce_exact
from .records import TrainingRecord, aggregate, records_to_csv
from .training import NonFiniteLossError, Trainer, collect

OUTPUT_ROOT_ENV = "ECOP_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
TABLE_KIND = "policy_table"


@dataclass
class SeedResult:
    seed: int
    records: list
    params: ParamVector
    meta: dict
    error: str | None = None


def build_env(cfg: RunConfig) -> Env:
    return make_env(cfg.env, **dict(cfg.env_overrides))


def _ipoce_seed(env: Env, cfg: RunConfig, seed: int) -> SeedResult:
    # exact iteration is deterministic, so the seed only labels the output
    cmdp = env.to_cmdp()
    grid = PolicyGrid(cmdp.num_actions, cfg.grid_resolution)
    records, policy = [], PolicyTable.uniform(cmdp.horizon, cmdp.num_states, cmdp.num_actions)
    for k, it in enumerate(ipoce_exact(cmdp, grid, cfg.episodes), start=1):
        jc = np.asarray(it.JC, dtype=np.float64)
        records.append(TrainingRecord(k, it.J, tuple(map(float, jc)), tuple([0.0] * len(jc)), 0.0, -it.J,
                                      bool(np.all(jc <= np.asarray(cmdp.thresholds))), None, "ipoce_exact"))
        policy = it.policy
    table = np.asarray(policy.probs)
    layout = Layout([("table", table.shape)])
    meta = {"kind": TABLE_KIND, "horizon": cmdp.horizon, "num_states": cmdp.num_states,
            "num_actions": cmdp.num_actions}
    return SeedResult(seed, records, ParamVector(table.ravel(), layout), meta)


def run_seed(cfg: RunConfig, seed: int) -> SeedResult:
    env = build_env(cfg)
    if cfg.algorithm == "ipoce_exact":
        return _ipoce_seed(env, cfg, seed)
    trainer = Trainer(env, cfg, seed)
    records = []
    try:
        for rec in trainer.run():
            records.append(rec)
    except NonFiniteLossError as exc:
        records.append(exc.record)
        return SeedResult(seed, records, trainer.params, trainer.policy.meta(), str(exc))
    return SeedResult(seed, records, trainer.params, trainer.policy.meta())


def _run_seed_args(args):
    return run_seed(*args)


def default_out_dir(cfg: RunConfig, name: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))
    return root / f"{name}-{cfg.digest()[:10]}"


@dataclass
class ExperimentResult:
    out_dir: Path
    seeds: list
    results: list
    files: list

    @property
    def failed(self) -> list:
        return [r for r in self.results if r.error is not None]


def run_experiment(cfg: RunConfig, out_dir, seed_offset: int = 0, jobs: int = 1) -> ExperimentResult:
    """Run every seed, then write per-seed CSVs, checkpoints, the aggregate and a manifest."""
    seeds = [int(s) + seed_offset for s in cfg.seeds]
    work = [(cfg, s) for s in seeds]
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            results = list(pool.map(_run_seed_args, work))
    else:
        results = [run_seed(*w) for w in work]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = build_env(cfg).num_constraints
    files = []
    for res in results:  # seed order, so parallel and serial runs agree
        csv_path = out / f"seed_{res.seed}.csv"
        csv_path.write_text(records_to_csv(res.records, m))
        ckpt = out / f"checkpoint_seed_{res.seed}.json"
        save_checkpoint(ckpt, res.params, {**res.meta, "env": cfg.env,
                                           "env_overrides": dict(cfg.env_overrides), "seed": res.seed})
        files += [csv_path.name, ckpt.name]
    complete = [r.records for r in results if r.error is None]
    if complete:
        (out / "aggregate.csv").write_text(aggregate(complete, m))
        files.append("aggregate.csv")
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seeds": seeds,
        "files": files,
        "errors": {str(r.seed): r.error for r in results if r.error is not None},
        "versions": {"ecop": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(out, seeds, results, files)


def evaluate_checkpoint(path, env_name: str, episodes: int = 1000, seed: int = 0,
                        env_overrides: dict | None = None) -> dict:
    """Exact objectives on tabular environments, Monte Carlo estimates otherwise."""
    params, meta = load_checkpoint(path)
    env = make_env(env_name, **(env_overrides or {}))
    spec = env.spec
    if meta["kind"] == TABLE_KIND or spec.tabular:
        cmdp = env.to_cmdp()
        if meta["kind"] == TABLE_KIND:
            table = params.values.reshape(meta["horizon"], meta["num_states"], meta["num_actions"])
        else:
            policy = policy_from_meta(meta)
            feats = env.features(np.arange(spec.num_states)) if policy.uses_features else None
            table = policy.to_table(params.values, feats)
        if table.shape != (cmdp.horizon, cmdp.num_states, cmdp.num_actions):
            raise ValueError(f"checkpoint policy shape {table.shape} does not fit {env_name}")
        jc = [exact_objective(cmdp, table, i) for i in range(cmdp.num_constraints)]
        return {"method": "exact", "J": exact_objective(cmdp, table), "J_C": jc,
                "thresholds": list(cmdp.thresholds)}
    policy = policy_from_meta(meta)
    ro = collect(env, policy, params.values, episodes, seed, 0)
    return {"method": "monte_carlo", "episodes": episodes, "J": float(ro.episode_reward.mean()),
            "J_C": ro.episode_costs.mean(axis=0).tolist(), "thresholds": list(spec.thresholds)}


__all__ = ["SeedResult", "ExperimentResult", "run_seed", "run_experiment", "evaluate_checkpoint",
           "default_out_dir", "build_env", "OUTPUT_ROOT_ENV"]
