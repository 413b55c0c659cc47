import pytest
from fastapi.testclient import TestClient

from lesionrisk import predict_response
from lesionrisk.service import create_app


@pytest.fixture(scope="module")
def client(calibrated_bundle):
    bundle, test = calibrated_bundle
    return TestClient(create_app(bundle)), bundle, test


def record_payload(record, include_label=False):
    d = record.to_dict()
    if not include_label:
        d.pop("label")
    return d


def test_healthz(client):
    c, bundle, _ = client
    resp = c.get("/healthz")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"
    assert resp.json()["model_version"] == bundle.version()


def test_predict_happy_path(client):
    c, bundle, test = client
    resp = c.post("/v1/predict", json=record_payload(test[0]))
    assert resp.status_code == 200
    body = resp.json()
    assert set(body) == {"risk", "prediction_set", "leaf_id", "leaf_rule_path",
                         "cutoff", "alpha", "model_version"}
    assert 0.0 < body["risk"] < 1.0
    assert set(body["prediction_set"]) <= {0, 1}
    assert body["alpha"] == 0.1
    assert all(isinstance(cond, str) for cond in body["leaf_rule_path"])


def test_predict_matches_library(client):
    c, bundle, test = client
    for r in test.records[:100]:
        via_api = c.post("/v1/predict", json=record_payload(r)).json()
        assert via_api == predict_response(bundle, r)


def test_predict_under_age_422(client):
    c, _, test = client
    payload = record_payload(test[0])
    payload["age"] = 17
    resp = c.post("/v1/predict", json=payload)
    assert resp.status_code == 422
    detail = resp.json()["detail"]
    assert any(item["field"] == "age" and "age ≥ 18" in item["message"] for item in detail)


def test_predict_multiple_field_errors_all_reported(client):
    c, _, test = client
    payload = record_payload(test[0])
    payload.update(age=17, size_mm=44.0)
    detail = c.post("/v1/predict", json=payload).json()["detail"]
    assert {item["field"] for item in detail} == {"age", "size"}


def test_malformed_json_400(client):
    c, _, _ = client
    resp = c.post("/v1/predict", content=b"{not json", headers={"content-type": "application/json"})
    assert resp.status_code == 400


def test_batch_equals_singles_in_order(client):
    c, _, test = client
    records = test.records[:20]
    batch = c.post("/v1/predict/batch", json=[record_payload(r) for r in records])
    assert batch.status_code == 200
    singles = [c.post("/v1/predict", json=record_payload(r)).json() for r in records]
    assert batch.json() == singles


def test_batch_invalid_element_names_index(client):
    c, _, test = client
    bad = record_payload(test[0])
    bad["age"] = 17
    resp = c.post("/v1/predict/batch", json=[record_payload(test[1]), bad])
    assert resp.status_code == 422
    assert any(item["index"] == 1 for item in resp.json()["detail"])


def test_model_endpoint_exposes_coefficients(client):
    c, bundle, _ = client
    body = c.get("/v1/model").json()
    assert body["coefficients"] == bundle.model.coefficient_table()
    assert body["leaf_count"] == bundle.tree.n_leaves
    assert body["alpha"] == 0.1
    assert body["intercept"] == bundle.model.intercept
    for f, (mu, sd) in bundle.model.encoder.numeric_stats.items():
        assert body["numeric_stats"][f] == [mu, sd]


def test_leaves_endpoint_matches_calibrations(client):
    c, bundle, _ = client
    body = c.get("/v1/leaves").json()
    rows = {row["leaf_id"]: row for row in body["leaves"]}
    assert set(rows) == set(bundle.tree.leaf_ids())
    for leaf_id, lc in bundle.calibrations.items():
        assert rows[leaf_id]["k"] == lc.k
        assert rows[leaf_id]["q"] == lc.q
        assert rows[leaf_id]["alpha_tilde"] == lc.alpha_tilde
        assert isinstance(rows[leaf_id]["rule_path"], list)


def test_predict_is_deterministic_and_side_effect_free(client):
    c, _, test = client
    payload = record_payload(test[3])
    first = c.post("/v1/predict", json=payload).json()
    second = c.post("/v1/predict", json=payload).json()
    assert first == second
