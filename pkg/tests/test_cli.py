import csv
import json
import subprocess
import sys

import pytest

from lesionrisk import GeneratorConfig, load_bundle


def run_cli(*args, check=True):
    proc = subprocess.run([sys.executable, "-m", "lesionrisk.cli", *args],
                          capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"cli failed: {proc.returncode}\n{proc.stderr}\n{proc.stdout}")
    return proc


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = GeneratorConfig(n=2000, seed=71)
    (root / "gen.json").write_text(cfg.to_json())
    return root


@pytest.fixture(scope="module")
def pipeline_artifacts(workdir):
    data = workdir / "data.csv"
    bundle = workdir / "bundle.json"
    out_dir = workdir / "reports"
    run_cli("synth", "--config", str(workdir / "gen.json"), "--out", str(data))
    run_cli("train", "--data", str(data), "--split", "by_cohort", "--seed", "3",
            "--out", str(bundle))
    run_cli("calibrate", "--bundle", str(bundle), "--data", str(data),
            "--alpha", "0.1", "--fraction", "0.5", "--seed", "3")
    run_cli("evaluate", "--bundle", str(bundle), "--data", str(data),
            "--out-dir", str(out_dir),
            "--optimize-threshold", "--ppv-floor", "0.3", "--birads", "4a,4b")
    return data, bundle, out_dir


def test_end_to_end_emits_all_reports(pipeline_artifacts):
    data, bundle_path, out_dir = pipeline_artifacts
    expected = ["metrics.json", "threshold_curve.csv", "calibration_curve.csv",
                "coverage_report.csv", "leaf_profiles.csv", "threshold_decision.json"]
    for name in expected:
        path = out_dir / name
        assert path.exists(), name
        if name.endswith(".json"):
            json.loads(path.read_text())
        else:
            rows = list(csv.reader(path.read_text().splitlines()))
            assert len(rows) >= 2
    meta = json.loads((data.parent / "data.csv.meta.json").read_text())
    assert meta["n"] == 2000
    bundle = load_bundle(bundle_path)
    assert bundle.is_calibrated
    assert bundle.metadata["split"]["strategy"] == "by_cohort"


def test_train_singleton_grid_reports_one_cell(workdir, pipeline_artifacts):
    data, _, _ = pipeline_artifacts
    out = workdir / "bundle_c1.json"
    proc = run_cli("train", "--data", str(data), "--split", "random", "--seed", "1",
                   "--c-grid", "1", "--out", str(out))
    assert proc.stdout.count("C=1") == 1
    bundle = load_bundle(out)
    rows = bundle.metadata["grid_report"]["rows"]
    assert len(rows) == 1 and rows[0]["C"] == 1.0


def test_predict_cli_round_trip(workdir, pipeline_artifacts):
    _, bundle_path, _ = pipeline_artifacts
    record = {"id": "q1", "age": 61, "size_mm": 22.0, "ri": 0.9, "palpable": 1,
              "shape": "irregular", "margins": "spiculated", "orientation": "not_parallel",
              "birads": "4c", "cohort": "prospective"}
    inp = workdir / "record.json"
    inp.write_text(json.dumps(record))
    proc = run_cli("predict", "--bundle", str(bundle_path), "--input", str(inp))
    body = json.loads(proc.stdout)
    assert set(body["prediction_set"]) <= {0, 1}
    assert 0.0 < body["risk"] < 1.0


def test_predict_invalid_record_nonzero_exit(workdir, pipeline_artifacts):
    _, bundle_path, _ = pipeline_artifacts
    record = {"id": "q2", "age": 17, "size_mm": 22.0, "ri": 0.9, "palpable": 1,
              "shape": "irregular", "margins": "spiculated", "orientation": "not_parallel",
              "birads": "4c", "cohort": "prospective"}
    inp = workdir / "bad_record.json"
    inp.write_text(json.dumps(record))
    proc = run_cli("predict", "--bundle", str(bundle_path), "--input", str(inp), check=False)
    assert proc.returncode != 0
    assert "age" in proc.stderr


def test_evaluate_reports_are_reproducible(workdir, pipeline_artifacts):
    data, bundle_path, out_dir = pipeline_artifacts
    second = workdir / "reports2"
    run_cli("evaluate", "--bundle", str(bundle_path), "--data", str(data),
            "--out-dir", str(second),
            "--optimize-threshold", "--ppv-floor", "0.3", "--birads", "4a,4b")
    for name in ("metrics.json", "threshold_curve.csv", "calibration_curve.csv",
                 "coverage_report.csv", "leaf_profiles.csv", "threshold_decision.json"):
        assert (out_dir / name).read_bytes() == (second / name).read_bytes()


def test_mismatched_data_hash_rejected(workdir, pipeline_artifacts):
    _, bundle_path, _ = pipeline_artifacts
    other = workdir / "other.csv"
    cfg = GeneratorConfig(n=2000, seed=99)
    (workdir / "gen2.json").write_text(cfg.to_json())
    run_cli("synth", "--config", str(workdir / "gen2.json"), "--out", str(other))
    proc = run_cli("calibrate", "--bundle", str(bundle_path), "--data", str(other),
                   check=False)
    assert proc.returncode != 0
    assert "hash mismatch" in proc.stderr
