import math

import numpy as np
import pytest

from lesionrisk import (ConvergenceError, Dataset, GeneratorConfig, SplitSpec,
                        ValidationError, fit_encoder, grid_search, predict_proba,
                        sigmoid, split_dataset, synthesize)
from lesionrisk.logistic import (RiskModel, cv_folds, fit_logistic_matrix, penalized_grad,
                                 penalized_loss)
from lesionrisk.metrics import log_loss

from conftest import make_record


def finite_difference_grad(w, b, X, y, C, h=1e-5):
    """Central differences on every coordinate of (w, b)."""
    params = np.concatenate([w, [b]])
    out = np.empty_like(params)
    for i in range(len(params)):
        hi = params.copy(); hi[i] += h
        lo = params.copy(); lo[i] -= h
        out[i] = (penalized_loss(hi[:-1], hi[-1], X, y, C)
                  - penalized_loss(lo[:-1], lo[-1], X, y, C)) / (2 * h)
    return out


def random_problem(rng, n=80, d=5):
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < sigmoid(X @ rng.normal(size=d))).astype(float)
    if y.min() == y.max():        # force both classes
        y[0], y[1] = 0.0, 1.0
    return X, y


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(3):
        X, y = random_problem(rng)
        C = float(rng.uniform(0.05, 50.0))
        for _ in range(20):
            w = rng.normal(scale=0.8, size=X.shape[1])
            b = float(rng.normal())
            gw, gb = penalized_grad(w, b, X, y, C)
            analytic = np.concatenate([gw, [gb]])
            fd = finite_difference_grad(w, b, X, y, C)
            rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
            assert rel <= 1e-5


def test_all_zero_features_balanced_gives_half():
    X = np.zeros((40, 3))
    y = np.array([0.0, 1.0] * 20)
    w, b, info = fit_logistic_matrix(X, y, C=1.0)
    assert np.allclose(w, 0.0) and abs(b) < 1e-9
    assert info["grad_norm"] <= 1e-6


def test_separable_data_high_accuracy():
    rng = np.random.default_rng(3)
    n = 200
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(float)    # separating rule from the generator
    w, b, _ = fit_logistic_matrix(X, y, C=1.0)
    acc = np.mean(((sigmoid(X @ w + b) >= 0.5).astype(float)) == y)
    assert acc >= 0.95


def test_loss_monotone_over_accepted_iterations():
    rng = np.random.default_rng(5)
    X, y = random_problem(rng, n=150, d=6)
    _, _, info = fit_logistic_matrix(X, y, C=0.5)
    hist = info["loss_history"]
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_single_class_rejected():
    X = np.random.default_rng(1).normal(size=(20, 2))
    with pytest.raises(ValidationError, match="both classes"):
        fit_logistic_matrix(X, np.ones(20), C=1.0)


def test_nonconvergence_carries_grad_norm():
    rng = np.random.default_rng(2)
    X, y = random_problem(rng, n=100, d=4)
    with pytest.raises(ConvergenceError) as exc:
        fit_logistic_matrix(X, y, C=1.0, max_iter=1)
    assert exc.value.grad_norm > 0.0
    assert exc.value.iterations == 1


def test_predict_matches_independent_dot_sigmoid(fitted_model):
    model, _, _, _, test = fitted_model
    for r in test.records[:25]:
        x = model.encoder.encode(r)
        expected = 1.0 / (1.0 + math.exp(-(float(x @ model.weights) + model.intercept)))
        assert abs(predict_proba(model, r) - expected) < 1e-12


def test_sigmoid_saturation_stays_inside_unit_interval():
    ds = Dataset((make_record(id="a", age=40.0, label=0), make_record(id="b", age=60.0, label=1)))
    enc = fit_encoder(ds, features=("age",))
    model = RiskModel(encoder=enc, weights=np.zeros(1), intercept=30.0, C=1.0)
    p = predict_proba(model, make_record())
    assert p >= 1.0 - 1e-9
    assert p < 1.0
    low = RiskModel(encoder=enc, weights=np.zeros(1), intercept=-800.0, C=1.0)
    assert 0.0 < predict_proba(low, make_record()) < 1e-300


def test_probabilities_sum_to_one(fitted_model):
    model, _, _, _, test = fitted_model
    for r in test.records[:10]:
        p = predict_proba(model, r)
        assert p + (1.0 - p) == 1.0


def test_monotone_response_in_positive_weight_feature(fitted_model):
    model, _, _, _, _ = fitted_model
    table = model.coefficient_table()
    assert table["size"] != 0.0
    direction = 1.0 if table["size"] > 0 else -1.0
    base = make_record(size=10.0)
    bumped = make_record(size=10.0 + direction * 5.0)
    assert predict_proba(model, bumped) > predict_proba(model, base)


def test_field_order_invariance(fitted_model):
    from lesionrisk import parse_csv
    model, _, _, _, _ = fitted_model
    row_a = ("id,age,size_mm,ri,palpable,shape,margins,orientation,birads,cohort,label\n"
             "z,51,16,0.4,1,irregular,spiculated,not_parallel,5,prospective,1\n")
    row_b = ("label,cohort,birads,orientation,margins,shape,palpable,ri,size_mm,age,id\n"
             "1,prospective,5,not_parallel,spiculated,irregular,1,0.4,16,51,z\n")
    pa = predict_proba(model, parse_csv(row_a.encode())[0])
    pb = predict_proba(model, parse_csv(row_b.encode())[0])
    assert pa == pb


# --- grid search ------------------------------------------------------------

def test_singleton_grid_chooses_it(fitted_model):
    _, _, train, _, _ = fitted_model
    enc = fit_encoder(train)
    model, report = grid_search(train, enc, Cs=(1.0,), k=3, seed=0)
    assert report.chosen_C == 1.0
    assert len(report.rows) == 1
    assert model.C == 1.0


def test_grid_search_deterministic(fitted_model):
    _, _, train, _, _ = fitted_model
    enc = fit_encoder(train)
    _, r1 = grid_search(train, enc, Cs=(0.1, 1.0), k=4, seed=9)
    _, r2 = grid_search(train, enc, Cs=(0.1, 1.0), k=4, seed=9)
    assert r1 == r2


def test_grid_search_matches_recomputed_cv_losses():
    ds, _ = synthesize(GeneratorConfig(n=400, seed=19))
    train, _, _ = split_dataset(ds, SplitSpec(300, 50, 50, "random", 1))
    enc = fit_encoder(train)
    Cs = (0.01, 0.1, 1.0, 10.0)
    k, seed = 5, 4
    _, report = grid_search(train, enc, Cs=Cs, k=k, seed=seed)

    # independent re-run of the CV loop using the public pieces
    X = enc.encode_dataset(train)
    y = train.labels().astype(float)
    folds = cv_folds(len(train), k, seed)
    means = []
    for C in Cs:
        losses = []
        for held in folds:
            tr = np.setdiff1d(np.arange(len(train)), held)
            w, b, _ = fit_logistic_matrix(X[tr], y[tr], C)
            p = sigmoid(X[held] @ w + b)
            losses.append(log_loss(np.clip(p, 1e-300, 1 - 1e-16), y[held].astype(int)))
        means.append(float(np.mean(losses)))
    assert report.chosen_C == Cs[int(np.argmin(means))]
    for row, m in zip(report.rows, means):
        assert abs(row.mean_log_loss - m) < 1e-12
