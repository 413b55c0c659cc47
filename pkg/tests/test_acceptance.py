"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Statistical criteria use frozen seeds, so results are reproducible
bit for bit on a given platform.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

import lesionrisk as lr
from lesionrisk.conformal import LeafCalibration, conformal_cutoff
from lesionrisk.logistic import RiskModel, penalized_grad, penalized_loss
from lesionrisk.metrics import candidate_thresholds, confusion_counts
from lesionrisk.tree import LeafNode, SplitNode, fit_tree_matrix
from lesionrisk.encoding import make_ordinal_encoder
from lesionrisk.service import create_app


def _pipeline_coverage(gen_seed: int, pipe_seed: int, sizes, subgroups=(),
                       depths=(3, 4, 5, 6), min_leaves=(70, 80, 90, 100)):
    """Full pipeline on one synthetic cohort; returns the pieces A1/A2 inspect."""
    n_train, n_cal, n_test = sizes
    cfg = lr.GeneratorConfig(n=n_train + n_cal + n_test, seed=gen_seed,
                             subgroups=tuple(subgroups))
    ds, oracle = lr.synthesize(cfg)
    train, cal, test = lr.split_dataset(
        ds, lr.SplitSpec(n_train, n_cal, n_test, "random", pipe_seed))
    model, _ = lr.train_risk_model(train, seed=pipe_seed)
    calres = lr.calibrate_model(model, cal, alpha=0.1, seed=pipe_seed,
                                depths=depths, min_leaves=min_leaves)
    bundle = lr.build_bundle(model, calres, alpha=0.1)
    sets = lr.prediction_sets(bundle, test)
    y = test.labels()
    report = lr.coverage_report(sets, list(y), alpha=0.1)
    return cfg, model, cal, test, sets, y, report


def test_a1_marginal_coverage():
    t0 = time.perf_counter()
    coverages = []
    for i in range(20):
        *_, report = _pipeline_coverage(1000 + i, i, (1000, 4000, 4000))
        coverages.append(report.marginal().coverage_pct / 100.0)
    elapsed = time.perf_counter() - t0
    mean_cov = float(np.mean(coverages))
    assert 0.885 <= mean_cov <= 0.915, coverages
    assert min(coverages) >= 0.87, coverages
    assert elapsed <= 300.0
    print(f"\nA1 PASS marginal coverage mean={mean_cov:.4f} "
          f"min={min(coverages):.4f} over 20 seeds in {elapsed:.1f}s")


def test_a2_local_coverage_beats_global_baseline():
    subgroups = (
        lr.SubgroupRule("easy_small", (("age", "<", 52.0), ("size", "<", 16.7)), 0.02),
        lr.SubgroupRule("easy_large", (("age", "<", 52.0), ("size", ">=", 16.7)), 0.08),
        lr.SubgroupRule("mid", (("age", ">=", 52.0), ("size", "<", 16.7)), 0.15),
        lr.SubgroupRule("hard", (("age", ">=", 52.0), ("size", ">=", 16.7)), 0.35),
    )
    per_seed_min, per_seed_mean, base_hard, local_hard = [], [], [], []
    for i in range(20):
        cfg, model, cal, test, sets, y, report = _pipeline_coverage(
            2000 + i, i, (1000, 8000, 6000), subgroups=subgroups,
            depths=(2, 3), min_leaves=(500, 800))
        qualifying = [r.coverage_pct / 100.0 for r in report.rows
                      if r.leaf != "all" and r.n >= 500]
        assert qualifying, "no leaf reached 500 test points"
        per_seed_min.append(min(qualifying))
        per_seed_mean.append(float(np.mean(qualifying)))

        # standard global split-conformal baseline, pooled over the same quantile half
        rd = lr.compute_residuals(model, cal)
        _, d1 = lr.split_residuals(rd, 0.5, seed=i)
        q_glob, _, _ = conformal_cutoff(d1.residuals, 0.1)
        probs = lr.predict_proba_dataset(model, test)
        hard = np.array([lr.subgroup_of(cfg, r) == "hard" for r in test])
        covered_base = np.where(y == 1, probs, 1.0 - probs) >= 1.0 - q_glob
        covered_local = np.array([yy in s.labels for s, yy in zip(sets, y)])
        base_hard.append(float(covered_base[hard].mean()))
        local_hard.append(float(covered_local[hard].mean()))

    avg_min = float(np.mean(per_seed_min))
    avg_mean = float(np.mean(per_seed_mean))
    avg_base_hard = float(np.mean(base_hard))
    avg_local_hard = float(np.mean(local_hard))
    assert avg_min >= 0.87, per_seed_min
    assert avg_mean >= 0.885, per_seed_mean
    assert avg_base_hard <= 0.9 - 0.02, base_hard          # baseline under-covers hard region
    assert avg_local_hard >= avg_base_hard + 0.02          # localization closes the gap
    print(f"\nA2 PASS leaf coverage avg-min={avg_min:.4f} avg-mean={avg_mean:.4f}; "
          f"hard region: baseline={avg_base_hard:.4f} local={avg_local_hard:.4f}")


def test_a3_quantile_oracle():
    # hand case first: k=9, alpha=0.1 -> alpha_tilde=1/9, m=8
    alpha_tilde, m = lr.quantile_index(9, 0.1)
    assert m == 8 and alpha_tilde == pytest.approx(1.0 / 9.0)

    rng = np.random.default_rng(303)
    for _ in range(1000):
        k = int(rng.integers(1, 201))
        alpha = float(rng.uniform(0.01, 0.5))
        residuals = rng.random(k)
        q, _, _ = conformal_cutoff(residuals, alpha)
        # brute-force sort-and-index oracle
        srt = np.sort(residuals)
        c = math.ceil((k + 1) * alpha - 1e-9)
        m = min(max(k - c, 1), k)
        assert q == srt[m - 1]
    print("\nA3 PASS quantile cutoff equals sort-and-index oracle on 1000 cases "
          "(incl. k=9, alpha=0.1 -> m=8)")


def test_a4_gradient_check():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(3):
        n, d = int(rng.integers(40, 120)), int(rng.integers(2, 8))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.5).astype(float)
        y[0], y[1] = 0.0, 1.0
        C = float(rng.uniform(0.05, 20.0))
        h = 1e-5
        for _ in range(20):
            w = rng.normal(scale=0.7, size=d)
            b = float(rng.normal())
            gw, gb = penalized_grad(w, b, X, y, C)
            analytic = np.concatenate([gw, [gb]])
            fd = np.empty(d + 1)
            params = np.concatenate([w, [b]])
            for j in range(d + 1):
                hi = params.copy(); hi[j] += h
                lo = params.copy(); lo[j] -= h
                fd[j] = (penalized_loss(hi[:d], hi[d], X, y, C)
                         - penalized_loss(lo[:d], lo[d], X, y, C)) / (2 * h)
            rel = float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12))
            worst = max(worst, rel)
            assert rel <= 1e-5
    print(f"\nA4 PASS analytic gradient vs central differences: worst rel err {worst:.2e}")


def test_a5_auroc_oracle_and_ln2():
    rng = np.random.default_rng(505)
    for _ in range(50):
        n = int(rng.integers(10, 201))
        probs = np.round(rng.random(n), 2)
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        fast = lr.auroc_score(probs, labels)
        pos = probs[labels == 1]
        neg = probs[labels == 0]
        wins = sum(1 for a in pos for b in neg if a > b)
        ties = sum(1 for a in pos for b in neg if a == b)
        assert fast == (wins + 0.5 * ties) / (len(pos) * len(neg))

    ll = lr.log_loss([0.5] * 200, [0, 1] * 100)
    assert abs(ll - math.log(2.0)) <= 1e-12
    print("\nA5 PASS AUROC equals exhaustive pair counting on 50 instances; "
          f"all-0.5 log-loss = ln2 within {abs(ll - math.log(2.0)):.1e}")


def test_a6_tree_split_oracle_and_caps():
    rng = np.random.default_rng(606)
    enc1 = make_ordinal_encoder(("age",))
    for _ in range(100):
        n = int(rng.integers(4, 31))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        t = fit_tree_matrix(x.reshape(-1, 1), y, 1, 1, enc1)
        # exhaustive midpoint search
        best = None
        xs = np.unique(x)
        for lo, hi in zip(xs[:-1], xs[1:]):
            thr = (lo + hi) / 2.0
            left = x < thr
            sse = float(((y[left] - y[left].mean()) ** 2).sum()
                        + ((y[~left] - y[~left].mean()) ** 2).sum())
            if best is None or sse < best[0]:
                best = (sse, thr)
        root = t.nodes[0]
        assert isinstance(root, SplitNode)
        assert root.threshold == best[1]

    enc2 = make_ordinal_encoder(("age", "size"))
    for _ in range(200):
        max_depth = int(rng.integers(0, 7))
        min_leaf = int(rng.integers(1, 40))
        n = int(rng.integers(2, 150))
        X = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        t = fit_tree_matrix(X, y, max_depth, min_leaf, enc2)
        for nid, node in t.nodes.items():
            if isinstance(node, LeafNode):
                depth = 0
                while nid != 0:
                    nid = (nid - 1) // 2
                    depth += 1
                assert depth <= max_depth
                if t.n_leaves > 1:
                    assert node.count >= min_leaf
    print("\nA6 PASS root split equals exhaustive midpoint search on 100 instances; "
          "depth/leaf caps hold over 200 random hyperparameter draws")


def test_a7_set_algebra():
    ds, _ = lr.synthesize(lr.GeneratorConfig(n=60, seed=707))
    enc = lr.fit_encoder(ds)
    tree = lr.fit_tree(ds.records[:40], np.full(40, 0.2), max_depth=0, min_samples_leaf=1)
    leaf = tree.leaf_ids()[0]
    record = ds[0]
    rng = np.random.default_rng(707)

    for _ in range(10000):
        p = float(rng.uniform(0.001, 0.999))
        q = float(rng.random())
        model = RiskModel(encoder=enc, weights=np.zeros(len(enc.columns)),
                          intercept=math.log(p / (1.0 - p)), C=1.0)
        calib = {leaf: LeafCalibration(leaf_id=leaf, k=10, alpha=0.1,
                                       alpha_tilde=0.1, q=q)}
        ps = lr.predict_set(model, tree, calib, record)
        p1 = lr.predict_proba(model, record)
        expected = tuple(l for l, pl in ((0, 1.0 - p1), (1, p1)) if pl >= 1.0 - q)
        assert ps.labels == expected                      # membership rule, exact floats
        if q >= 0.5:
            assert ps.size >= 1                           # nonempty guarantee

    # alpha-monotonicity on random calibrations: q is non-increasing in alpha,
    # so the prediction set can only shrink as alpha grows.
    for _ in range(1000):
        k = int(rng.integers(1, 150))
        residuals = rng.random(k)
        a_lo = float(rng.uniform(0.01, 0.4))
        a_hi = float(rng.uniform(a_lo + 1e-6, 0.5))
        q_lo, _, _ = conformal_cutoff(residuals, a_lo)    # tighter level, larger q
        q_hi, _, _ = conformal_cutoff(residuals, a_hi)
        assert q_lo >= q_hi
        p1 = float(rng.uniform(0.001, 0.999))
        set_lo = {l for l, pl in ((0, 1.0 - p1), (1, p1)) if pl >= 1.0 - q_lo}
        set_hi = {l for l, pl in ((0, 1.0 - p1), (1, p1)) if pl >= 1.0 - q_hi}
        assert set_hi <= set_lo
    print("\nA7 PASS membership rule exact on 10000 (p, q) pairs; nonempty when "
          "q >= 0.5; alpha-monotone supersets on 1000 calibrations")


def test_a8_threshold_optimizer():
    rng = np.random.default_rng(808)
    for _ in range(100):
        n = int(rng.integers(8, 80))
        probs = np.round(rng.random(n), 3)
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        floor = float(rng.uniform(0.0, 0.9))
        decision = lr.optimize_threshold(probs, labels, floor)
        best = None
        for t in candidate_thresholds(probs):
            tp, fp, tn, fn = confusion_counts(probs, labels, t)
            ppv = tp / (tp + fp) if tp + fp else None
            npv = tn / (tn + fn) if tn + fn else None
            if ppv is None or ppv < floor:
                continue
            key = (-math.inf if npv is None else npv, t)
            if best is None or key > best:
                best = key
        if best is None:
            assert not decision.feasible
        else:
            assert decision.feasible and decision.threshold == best[1]
            assert decision.ppv >= floor                  # never a silent violation

    # BI-RADS-4a/4b-like subsets at 20% prevalence
    floor = 0.8
    for trial in range(40):
        n = 200
        n_pos = 40
        separable = trial % 2 == 0
        if separable:
            pos = rng.uniform(0.55, 0.95, n_pos)
            neg = rng.uniform(0.05, 0.45, n - n_pos)
        else:
            pos = rng.uniform(0.0, 0.5, n_pos)            # benign cases outrank cancers
            neg = rng.uniform(0.5, 1.0, n - n_pos)
        probs = np.concatenate([pos, neg])
        labels = np.array([1] * n_pos + [0] * (n - n_pos))
        decision = lr.optimize_threshold(probs, labels, floor)
        if separable:
            assert decision.feasible
            assert decision.missed_cancers == 0
            assert decision.ppv >= floor
        else:
            assert not decision.feasible
    print("\nA8 PASS optimizer equals exhaustive sweep on 100 instances; zero missed "
          "cancers when separable at the floor, explicit infeasibility otherwise")


def test_a9_report_formats(tmp_path, calibrated_bundle):
    bundle, test = calibrated_bundle
    out = tmp_path / "reports"
    lr.evaluate_bundle(bundle, test, out)

    coverage_lines = (out / "coverage_report.csv").read_text().splitlines()
    assert coverage_lines[0] == "leaf,avg_set_size,empirical_coverage_pct,truth_only_pct,n"
    for line in coverage_lines[1:]:
        leaf, size, cov, truth_only, n = line.split(",")
        assert float(truth_only) <= float(cov) + 1e-9
        assert 0.0 <= float(size) <= 2.0
        assert int(n) > 0

    profile_lines = (out / "leaf_profiles.csv").read_text().splitlines()
    assert profile_lines[0] == ("leaf,n,birads_3,birads_4a,birads_4b,birads_4c,birads_5,"
                                "malignancy_rate,accuracy,mean_residual")
    assert len(profile_lines) >= 2
    print("\nA9 PASS coverage CSV carries exactly the tabled columns; leaf-profile "
          "file carries the subgroup fields; truth-only <= coverage row-wise")


def _run_cli(*args):
    proc = subprocess.run([sys.executable, "-m", "lesionrisk.cli", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


def _cli_pipeline(root: Path, tag: str) -> Path:
    cfg = lr.GeneratorConfig(n=2000, seed=515)
    cfg_path = root / f"gen_{tag}.json"
    cfg_path.write_text(cfg.to_json())
    data = root / f"data_{tag}.csv"
    bundle = root / f"bundle_{tag}.json"
    out_dir = root / f"reports_{tag}"
    _run_cli("synth", "--config", str(cfg_path), "--out", str(data))
    _run_cli("train", "--data", str(data), "--split", "by_cohort", "--seed", "5",
             "--out", str(bundle))
    _run_cli("calibrate", "--bundle", str(bundle), "--data", str(data),
             "--alpha", "0.1", "--fraction", "0.5", "--seed", "5")
    _run_cli("evaluate", "--bundle", str(bundle), "--data", str(data),
             "--out-dir", str(out_dir))
    return out_dir


def test_a10_end_to_end_reproducibility(tmp_path):
    t0 = time.perf_counter()
    first = _cli_pipeline(tmp_path, "a")
    elapsed = time.perf_counter() - t0
    second = _cli_pipeline(tmp_path, "b")
    report_names = ["metrics.json", "threshold_curve.csv", "calibration_curve.csv",
                    "coverage_report.csv", "leaf_profiles.csv"]
    for name in report_names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name

    bundle = lr.load_bundle(tmp_path / "bundle_a.json")
    resaved = tmp_path / "bundle_resaved.json"
    lr.save_bundle(bundle, resaved)
    again = lr.load_bundle(resaved)
    ds, _ = lr.synthesize(lr.GeneratorConfig(n=100, seed=99))
    for r in ds:
        assert lr.predict_response(again, r) == lr.predict_response(bundle, r)
    assert elapsed <= 60.0
    print(f"\nA10 PASS byte-identical reports across reruns; bundle round-trip "
          f"bit-identical on 100 records; pipeline took {elapsed:.1f}s at n=2000")


def test_a11_service_contract(calibrated_bundle):
    bundle, test = calibrated_bundle
    client = TestClient(create_app(bundle))

    payload = test[0].to_dict()
    payload.pop("label")
    resp = client.post("/v1/predict", json=payload)
    assert resp.status_code == 200
    assert resp.json() == lr.predict_response(bundle, test[0])

    bad = dict(payload)
    bad["age"] = 17
    resp = client.post("/v1/predict", json=bad)
    assert resp.status_code == 422
    assert any("age ≥ 18" in item["message"] for item in resp.json()["detail"])

    records = test.records[:15]
    payloads = []
    for r in records:
        d = r.to_dict()
        d.pop("label")
        payloads.append(d)
    batch = client.post("/v1/predict/batch", json=payloads).json()
    singles = [client.post("/v1/predict", json=p).json() for p in payloads]
    assert batch == singles
    print("\nA11 PASS service golden tests: valid predict, 422 citing the age rule, "
          "batch equals singles in order")
