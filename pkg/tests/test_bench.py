import csv
import json

import numpy as np
import pytest

from randla import bench, leverage
from randla.bench import ConfigError, ExperimentConfig, MatrixSpec


def test_step_spectrum_values():
    spec = MatrixSpec(50, 10, {"kind": "step", "r": 3, "gap": 100.0}, seed=1)
    A = bench.gen_matrix(spec)
    sv = np.linalg.svd(A, compute_uv=False)
    assert np.abs(sv - np.array([100.0] * 3 + [1.0] * 7)).max() <= 1e-10 * 100


def test_spectra_realized_exactly():
    for spectrum in ({"kind": "flat"}, {"kind": "power", "decay": 1.5},
                     {"kind": "exp", "decay": 0.4}):
        spec = MatrixSpec(40, 12, spectrum, seed=2)
        A = bench.gen_matrix(spec)
        sv = np.linalg.svd(A, compute_uv=False)
        expected = np.sort(spec.singular_values())[::-1]
        assert np.abs(sv - expected).max() <= 1e-10 * expected[0]


def test_incoherent_matrix_has_flat_leverage():
    hits = 0
    for seed in range(20):
        spec = MatrixSpec(1000, 10, seed=seed)
        A = bench.gen_matrix(spec)
        hits += leverage.exact_leverage(A).scores.max() <= 5 * 10 / 1000
    assert hits >= 19


def test_spiked_matrix_is_coherent():
    spec = MatrixSpec(500, 8, {"kind": "step", "r": 1, "gap": 10.0},
                      {"kind": "spiked", "rows": 1, "weight": 100.0}, seed=3)
    A = bench.gen_matrix(spec)
    scores = leverage.exact_leverage(A).scores
    assert scores[0] >= 0.9
    sv = np.linalg.svd(A, compute_uv=False)
    assert np.isclose(sv[0], 10.0)


def test_gen_matrix_deterministic():
    spec = MatrixSpec(30, 6, {"kind": "flat"}, seed=4)
    assert np.array_equal(bench.gen_matrix(spec), bench.gen_matrix(spec))


def test_infeasible_spec_rejected():
    with pytest.raises(ConfigError):
        MatrixSpec.from_dict({"m": 10, "n": 5,
                              "spectrum": {"kind": "step", "r": 7}})
    with pytest.raises(ConfigError):
        MatrixSpec.from_dict({"m": 0, "n": 5})
    with pytest.raises(ConfigError):
        MatrixSpec.from_dict({"m": 10, "n": 5, "spectrum": {"kind": "zipf"}})


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"driver": "nope",
                                    "matrix": {"m": 10, "n": 2}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"driver": "spo1"})
    cfg = ExperimentConfig.from_dict(
        {"driver": "spo1", "matrix": {"m": 40, "n": 4}, "seed": "0x10"})
    assert cfg.seed == 16


def test_zero_trials_empty_csv(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "driver": "spo1", "matrix": {"m": 40, "n": 4}, "trials": 0,
        "out": str(tmp_path / "empty")})
    rows, summary = bench.run_experiment(cfg)
    assert rows == []
    with open(tmp_path / "empty.csv") as f:
        lines = f.read().strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("trial,seed_key,seed_offset,status,wall_ms")
    assert summary["completed"] == 0 and summary["failed"] == 0


def test_spo1_experiment_schema(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "driver": "spo1",
        "matrix": {"m": 300, "n": 10,
                   "spectrum": {"kind": "step", "r": 2, "gap": 50}},
        "trials": 3, "out": str(tmp_path / "spo1")})
    rows, summary = bench.run_experiment(cfg)
    with open(tmp_path / "spo1.csv") as f:
        reader = csv.DictReader(f)
        got = list(reader)
    assert {"trial", "iters", "rel_nres", "wall_ms"} <= set(got[0])
    assert len(got) == 3
    assert all(r["status"] == "ok" for r in got)
    with open(tmp_path / "spo1.json") as f:
        js = json.load(f)
    assert js["config"]["params"] == {}
    assert "rel_nres" in js["metrics"]


def test_rerun_reproducible(tmp_path):
    base = {
        "driver": "svd1",
        "matrix": {"m": 120, "n": 40,
                   "spectrum": {"kind": "exp", "decay": 0.3}, "seed": 7},
        "params": {"k": 5}, "trials": 4, "seed": 9}
    out1 = dict(base, out=str(tmp_path / "a"))
    out2 = dict(base, out=str(tmp_path / "b"))
    bench.run_experiment(ExperimentConfig.from_dict(out1))
    bench.run_experiment(ExperimentConfig.from_dict(out2), parallel=4)
    rows1 = list(csv.DictReader(open(tmp_path / "a.csv")))
    rows2 = list(csv.DictReader(open(tmp_path / "b.csv")))
    for r1, r2 in zip(rows1, rows2):
        for key in r1:
            if key != "wall_ms":
                assert r1[key] == r2[key]


def test_all_drivers_run_one_trial():
    matrix = {"m": 80, "n": 24, "spectrum": {"kind": "exp", "decay": 0.3},
              "seed": 3}
    square = {"m": 48, "n": 48, "spectrum": {"kind": "exp", "decay": 0.3},
              "seed": 3}
    needs_square = {"nystrom_pcg", "evd2", "girard_hutchinson", "hutch_pp",
                    "slq"}
    for driver in bench.DRIVERS:
        cfg = ExperimentConfig.from_dict({
            "driver": driver,
            "matrix": square if driver in needs_square else matrix,
            "params": {"k": 4, "rank": 4, "budget": 12, "probes": 6,
                       "steps": 4, "B": 10},
            "trials": 1, "seed": 1})
        rows, summary = bench.run_experiment(cfg)
        assert summary["completed"] == 1, (driver, rows[0]["status"])


def test_driver_failure_recorded():
    cfg = ExperimentConfig.from_dict({
        "driver": "nystrom_pcg",
        "matrix": {"m": 40, "n": 20},  # not square: the driver raises
        "trials": 2, "seed": 1})
    rows, summary = bench.run_experiment(cfg)
    assert summary["completed"] == 0 and summary["failed"] == 2
    assert all(r["status"].startswith("error") for r in rows)
