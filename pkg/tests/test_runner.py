"""
Run specs, provenance-stamped artifacts, experiment runners and the CLI.
Run: python -m pytest tests/test_runner.py -v
"""
import json
import os
import sys

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

# Project root on path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config.settings import settings
from core.errors import ConfigurationError
from core.matrix_io import read_gramian, read_matrix
from main import main
from plants.flapping_wing import WingParams
from runner.artifacts import Provenance, read_csv, write_csv, write_grid_csv, write_json
from runner.experiments import (_typed_overrides, candidate_bounds, run_gramian, run_heatmap, run_place,
                                run_simulate, run_sweep)
from runner.schemas import RunSpec

SMALL_WING = {"n_bending_modes": 2, "n_torsion_modes": 1, "grid_rows": 5, "grid_cols": 9}
SHORT_WING = {"plant": "wing", "wing": SMALL_WING, "wing_duration": 0.1, "wing_perturb_time": 0.05}
SMALL_SWEEP = {"experiment": "sweep", "runs": 3, "t1": 2.0, "noise_levels": [0.01, 0.1], "w_nu_values": [0.0, 0.5]}


# ── Run spec ─────────────────────────────────────────────────

def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        RunSpec(experiment="sweep", swarm=12)
    with pytest.raises(ValidationError):
        RunSpec(experiment="heatmap", plant="wing", wing={"wingspan": 3.0})


def test_heatmap_alias_and_plant_checks():
    assert RunSpec(experiment="metrics-heatmap", plant="wing").experiment == "heatmap"
    with pytest.raises(ValidationError):
        RunSpec(experiment="heatmap")
    with pytest.raises(ValidationError):
        RunSpec(experiment="sweep", plant="wing")
    with pytest.raises(ValidationError):
        RunSpec(experiment="gramian", perturbed_indices=[0, 7])
    with pytest.raises(ValidationError):
        RunSpec(experiment="place", plant="wing", r_values=[3], candidates=[[-1.0, 0.0], [-2.0, 0.0]])


def test_spec_hash_ignores_threads_and_output_dir():
    base = RunSpec(**SMALL_SWEEP)
    assert base.spec_hash() == RunSpec(**SMALL_SWEEP, threads=4, output_dir="/tmp/x").spec_hash()
    assert base.spec_hash() != RunSpec(**SMALL_SWEEP, seed=1).spec_hash()
    assert len(base.spec_hash()) == 16


def test_wing_overrides_keep_integer_counts():
    typed = _typed_overrides(WingParams, {"grid_rows": 5.0, "alpha": 400.0})
    assert typed == {"grid_rows": 5, "alpha": 400.0}
    assert isinstance(typed["grid_rows"], int)
    for bad in (2.5, "5", True, float("nan")):
        with pytest.raises(ConfigurationError):
            _typed_overrides(WingParams, {"grid_rows": bad})


def test_candidate_bounds_pad_degenerate_axes():
    bounds = candidate_bounds(np.array([[-3.0, 0.0], [-1.0, 0.0]]))
    assert bounds == ((-3.0, -1.0), (-0.5, 0.5))


# ── Artifacts ────────────────────────────────────────────────

def test_csv_and_json_carry_provenance(tmp_path):
    prov = Provenance("abc123", 7, "9.9.9")
    frame = pd.DataFrame({"a": [1.0, 1.0 / 3.0], "b": [2, 3]})
    path = write_csv(tmp_path / "x.csv", frame, prov)
    assert path.read_text().splitlines()[0] == "# spec_hash=abc123; seed=7; version=9.9.9"
    back = read_csv(path)
    assert list(back.columns) == ["a", "b"]
    assert back["a"][1] == pytest.approx(1.0 / 3.0, rel=1e-11)

    doc = json.loads(write_json(tmp_path / "x.json", {"values": np.arange(3)}, prov).read_text())
    assert doc["values"] == [0, 1, 2]
    assert doc["_meta"] == {"spec_hash": "abc123", "seed": 7, "version": "9.9.9"}


def test_grid_csv_layout(tmp_path):
    prov = Provenance("h", 0)
    path = write_grid_csv(tmp_path / "g.csv", np.arange(6.0).reshape(2, 3), [-1.0, 1.0], [-2.0, -1.0, 0.0], prov)
    grid = read_csv(path, index_col=0)
    assert grid.shape == (2, 3)
    assert grid.index.name == "y_cm"
    assert list(grid.columns) == ["-2", "-1", "0"]


# ── Runners ──────────────────────────────────────────────────

def test_sweep_is_byte_identical_across_reruns_and_threads(tmp_path):
    first = run_sweep(RunSpec(**SMALL_SWEEP), tmp_path / "a")
    run_sweep(RunSpec(**SMALL_SWEEP), tmp_path / "b")
    run_sweep(RunSpec(**SMALL_SWEEP, threads=3), tmp_path / "c")
    for name in ("sweep_samples.csv", "sweep_summary.json"):
        reference = (tmp_path / "a" / name).read_bytes()
        assert (tmp_path / "b" / name).read_bytes() == reference
        assert (tmp_path / "c" / name).read_bytes() == reference

    samples = read_csv(tmp_path / "a" / "sweep_samples.csv")
    assert len(samples) == 6
    assert list(samples.columns) == ["q", "run", "nu", "kappa", "inv_det_root", "combined_wnu0", "combined_wnu0.5"]
    assert first["perturbed_indices"] == [2, 3, 4]
    assert [level["q"] for level in first["levels"]] == [0.01, 0.1]


def test_deterministic_uav_gramian(tmp_path):
    spec = RunSpec(experiment="gramian", noisy=False, t1=5.0)
    summary = run_gramian(spec, tmp_path)
    assert summary["runs"] == 1
    assert summary["min_rank"] < 5
    sample = read_gramian(tmp_path / "gramians" / "run_0000.txt")
    assert sample.integrator == "rk4"
    assert sample.matrix.shape == (5, 5)
    metrics = read_csv(tmp_path / "gramian_metrics.csv")
    assert np.isinf(metrics["nu"][0])
    _, meta = read_matrix(tmp_path / "gramians" / "run_0000.txt")
    assert meta["spec_hash"] == spec.spec_hash()
    assert meta["seed"] == spec.seed
    assert meta["version"] == settings.VERSION


def test_wing_simulate_writes_encoded_strain(tmp_path):
    spec = RunSpec(experiment="simulate", noisy=False, loci=[[-0.5, 0.5], [-3.0, -0.5]], **SHORT_WING)
    summary = run_simulate(spec, tmp_path)
    assert summary["method"] == "rk4"
    encoded = read_csv(tmp_path / "encoded.csv")
    assert list(encoded.columns) == ["t", "strain_0", "p_fire_0", "strain_1", "p_fire_1"]
    assert encoded["p_fire_0"][:80].isna().all()
    assert encoded["p_fire_0"][80:].between(0.0, 1.0).all()
    assert len(read_csv(tmp_path / "sta_kernel.csv")) == 81


def test_wing_gramian_stamps_mode_table(tmp_path):
    spec = RunSpec(experiment="gramian", runs=2, seed=9, loci=[[-0.5, 0.5], [-3.0, -0.5]], **SHORT_WING)
    summary = run_gramian(spec, tmp_path)
    assert summary["runs"] == 2
    _, meta = read_matrix(tmp_path / "mode_curvature.txt")
    assert meta["spec_hash"] == spec.spec_hash()
    assert meta["seed"] == 9
    assert meta["version"] == settings.VERSION


def test_wing_heatmap_grid(tmp_path):
    spec = RunSpec(experiment="heatmap", runs=2, **SHORT_WING)
    summary = run_heatmap(spec, tmp_path)
    nu = read_csv(tmp_path / "heatmap_nu.csv", index_col=0)
    kappa = read_csv(tmp_path / "heatmap_kappa.csv", index_col=0)
    assert nu.shape == (5, 9)
    assert kappa.shape == (5, 9)
    assert summary["grid"] == [5, 9]
    assert len(summary["nu_span_log10"]) == 9
    assert summary["infinite_nodes"] + np.isfinite(nu.to_numpy()).sum() == 45


def test_wing_placement_cost_table(tmp_path):
    candidates = [[x, y] for y in (-0.6, 0.6) for x in (-4.0, -3.0, -2.0, -1.0)]
    spec = RunSpec(experiment="place", runs=2, r_values=[1, 2], w_nu_values=[0.0, 0.1],
                   candidates=candidates, pso_swarm_size=8, pso_iterations=4, **SHORT_WING)
    summary = run_place(spec, tmp_path)
    costs = read_csv(tmp_path / "cost_vs_r.csv")
    assert list(costs.columns) == ["r", "cost_wnu0", "exhaustive_wnu0", "cost_wnu0.1", "exhaustive_wnu0.1"]
    assert list(costs["r"]) == [1, 2]
    assert len(summary["placements"]) == 4
    for placement in summary["placements"]:
        assert all(locus in candidates for locus in placement["loci"])
        assert placement["exhaustive_cost"] <= placement["cost"] * (1 + 1e-12)
        assert len(placement["exhaustive_loci"]) == placement["r"]
    traces = read_csv(tmp_path / "pso_traces.csv")
    assert len(traces) == 4 * 5


# ── CLI ──────────────────────────────────────────────────────

def test_cli_exit_codes(tmp_path):
    good = tmp_path / "sweep.json"
    good.write_text(json.dumps({k: v for k, v in SMALL_SWEEP.items() if k != "experiment"}))
    assert main(["sweep", "--spec", str(good), "--out", str(tmp_path / "out"), "--seed", "3"]) == 0
    header = (tmp_path / "out" / "sweep_samples.csv").read_text().splitlines()[0]
    assert "seed=3" in header
    assert f"version={settings.VERSION}" in header

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"runs": 0}))
    assert main(["sweep", "--spec", str(bad), "--out", str(tmp_path / "bad")]) == 2
    assert main(["sweep", "--spec", str(tmp_path / "missing.json")]) == 2

    not_an_object = tmp_path / "list.json"
    not_an_object.write_text(json.dumps([1, 2]))
    assert main(["sweep", "--spec", str(not_an_object), "--out", str(tmp_path / "list")]) == 2

    misaligned = tmp_path / "misaligned.json"
    misaligned.write_text(json.dumps({"t1": 0.015, "noisy": False}))
    assert main(["gramian", "--spec", str(misaligned), "--out", str(tmp_path / "m")]) == 2


def test_oversized_candidate_set_exits_with_budget_code(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "EXHAUSTIVE_BUDGET", 3)
    candidates = [[x, 0.0] for x in (-4.0, -3.0, -2.0, -1.0)]
    path = tmp_path / "place.json"
    path.write_text(json.dumps({"runs": 2, "r_values": [2], "candidates": candidates,
                                "pso_swarm_size": 4, "pso_iterations": 2, **SHORT_WING}))
    assert main(["place", "--spec", str(path), "--out", str(tmp_path / "out")]) == 4


def test_fractional_wing_count_exits_with_validation_code(tmp_path):
    path = tmp_path / "heatmap.json"
    path.write_text(json.dumps({**SHORT_WING, "runs": 1, "wing": {**SMALL_WING, "grid_rows": 2.5}}))
    assert main(["heatmap", "--spec", str(path), "--out", str(tmp_path / "out")]) == 2
