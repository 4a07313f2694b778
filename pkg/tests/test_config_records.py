import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecop.config import ConfigError, RunConfig, load_config, parse_config
from ecop.records import TrainingRecord, aggregate, header, read_csv, records_to_csv, write_records


def test_defaults_round_trip():
    cfg = RunConfig()
    assert RunConfig(**cfg.to_dict()) == cfg
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.cost_surrogate == "pessimistic"


def test_parse_minimal():
    cfg = parse_config("env: two_state_hazard\nseeds: [3, 4]\nlr: 1\n")
    assert cfg.env == "two_state_hazard"
    assert cfg.seeds == (3, 4)
    assert cfg.lr == 1.0 and isinstance(cfg.lr, float)


def test_empty_document_is_defaults():
    assert parse_config("") == RunConfig()


@pytest.mark.parametrize("text, line, fragment", [
    ("env: hazard_gridworld\nlerning_rate: 0.1\n", 2, "unknown key 'lerning_rate'"),
    ("env: hazard_gridworld\nseeds: [0]\nepisodes: ten\n", 3, "'episodes' expects int"),
    ("episodes: 5\nadaptive_beta: 1\n", 2, "'adaptive_beta' expects bool"),
    ("seeds: [0, 0]\n", 1, "distinct"),
    ("algorithm: trpo\n", 1, "algorithm must be one of"),
    ("lr: 0.1\nbeta: 30\n", 2, "beta"),
    ("env: x\n  bad: [\n", None, "invalid YAML"),
    ("- 1\n- 2\n", 1, "top level must be a mapping"),
])
def test_parse_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "exp.yaml")
    msg = str(info.value)
    assert fragment in msg
    assert msg.startswith("exp.yaml")
    if line is not None:
        assert info.value.line == line
        assert msg.startswith(f"exp.yaml:{line}:")


def test_load_config_names_file(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seeds: [0]\nkappa: -1\n")
    with pytest.raises(ConfigError, match=r"bad\.yaml:2: kappa"):
        load_config(path)


def test_digest_ignores_out_dir_only():
    a = RunConfig(seeds=(0,))
    assert a.digest() == a.replace(out_dir="/tmp/x").digest()
    assert a.digest() != a.replace(lr=0.1).digest()
    assert len(a.digest()) == 64


def test_shipped_configs_parse():
    from pathlib import Path
    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert configs
    for path in configs:
        load_config(path)


def _records(rng, n, m, algorithm="ecop", seconds=False):
    return [TrainingRecord(k + 1, float(rng.normal()), tuple(rng.uniform(0, 3, m)),
                           tuple(rng.uniform(0, 1, m)), 5.0, float(rng.normal()), bool(rng.integers(2)),
                           0.25 if seconds else None, algorithm) for k in range(n)]


@pytest.mark.parametrize("m", [0, 1, 2])
def test_csv_header_and_exact_values(tmp_path, m):
    recs = _records(np.random.default_rng(m), 7, m)
    path = tmp_path / "seed.csv"
    write_records(path, recs, m)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == header(m)
    assert len(rows) == 8
    cols = read_csv(path)
    np.testing.assert_array_equal(cols["J"], [r.J for r in recs])  # repr round-trips exactly
    for i in range(m):
        np.testing.assert_array_equal(cols[f"J_C{i + 1}"], [r.JC[i] for r in recs])
    assert all(math.isnan(x) for x in cols["seconds"])
    assert {r[-1] for r in rows[1:]} == {"ecop"}


def test_seconds_column_when_recorded():
    text = records_to_csv(_records(np.random.default_rng(0), 2, 1, seconds=True), 1)
    assert "0.250000" in text


@given(st.integers(1, 6), st.integers(1, 30), st.integers(0, 2), st.integers(0, 2**16))
def test_aggregate_matches_column_statistics(n_seeds, n_eps, m, seed):
    rng = np.random.default_rng(seed)
    per_seed = [_records(rng, n_eps, m) for _ in range(n_seeds)]
    text = aggregate(per_seed, m)
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == n_eps
    J = np.array([[r.J for r in recs] for recs in per_seed])
    np.testing.assert_allclose([float(r["J_mean"]) for r in rows], J.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose([float(r["J_std"]) for r in rows], J.std(axis=0), rtol=0, atol=1e-12)
    for i in range(m):
        C = np.array([[r.JC[i] for r in recs] for recs in per_seed])
        np.testing.assert_allclose([float(r[f"J_C{i + 1}_mean"]) for r in rows], C.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose([float(r[f"J_C{i + 1}_std"]) for r in rows], C.std(axis=0), atol=1e-12)


def test_aggregate_truncates_to_shortest_seed():
    rng = np.random.default_rng(1)
    text = aggregate([_records(rng, 5, 1), _records(rng, 3, 1)], 1)
    assert len(text.strip().splitlines()) == 1 + 3
