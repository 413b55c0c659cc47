"""Read-only HTTP inference service over a calibrated model bundle.

The bundle is loaded once at startup and shared immutably across request
handlers; no endpoint persists submitted patient data. Domain validation
mirrors the CSV schema exactly, so a record rejected here would also be
rejected by the library, and vice versa.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .bundle import ModelBundle
from .pipeline import predict_response
from .records import LesionRecord, ValidationError, validate_record_dict
from .tree import rule_path


def _record_or_422(payload: object, index: int | None = None) -> LesionRecord:
    if not isinstance(payload, dict):
        raise HTTPException(status_code=422, detail=[
            {"index": index, "field": "body", "message": "record must be a JSON object"}])
    errors = validate_record_dict(payload)
    if errors:
        raise HTTPException(status_code=422, detail=[
            {"index": index, "field": f, "message": m} for f, m in errors])
    return LesionRecord.from_dict(payload)


async def _json_body(request: Request) -> object:
    try:
        return await request.json()
    except Exception:
        raise HTTPException(status_code=400, detail="malformed JSON body") from None


def create_app(bundle: ModelBundle) -> FastAPI:
    if not bundle.is_calibrated:
        raise ValidationError.single("bundle", "service needs a calibrated bundle")
    assert bundle.tree is not None and bundle.calibrations is not None
    app = FastAPI(title="lesionrisk inference service", docs_url=None, redoc_url=None)
    version = bundle.version()

    @app.get("/healthz")
    async def healthz() -> dict:
        return {"status": "ok", "model_version": version}

    @app.post("/v1/predict")
    async def predict(request: Request) -> JSONResponse:
        payload = await _json_body(request)
        record = _record_or_422(payload)
        return JSONResponse(predict_response(bundle, record))

    @app.post("/v1/predict/batch")
    async def predict_batch(request: Request) -> JSONResponse:
        payload = await _json_body(request)
        if not isinstance(payload, list):
            raise HTTPException(status_code=422, detail=[
                {"index": None, "field": "body", "message": "batch body must be a JSON array"}])
        records = [_record_or_422(item, index=i) for i, item in enumerate(payload)]
        return JSONResponse([predict_response(bundle, r) for r in records])

    @app.get("/v1/model")
    async def model_info() -> dict:
        m = bundle.model
        return {
            "model_version": version,
            "alpha": bundle.alpha,
            "leaf_count": bundle.tree.n_leaves,
            "features": list(m.encoder.features),
            "intercept": m.intercept,
            "C": m.C,
            "coefficients": m.coefficient_table(),
            "numeric_stats": {f: [mu, sd] for f, (mu, sd) in m.encoder.numeric_stats.items()},
            "metadata": bundle.metadata,
        }

    @app.get("/v1/leaves")
    async def leaves() -> dict:
        profiles = {p.leaf_id: p for p in (bundle.leaf_profiles or [])}
        rows = []
        for leaf_id in bundle.tree.leaf_ids():
            lc = bundle.calibrations[leaf_id]
            prof = profiles.get(leaf_id)
            rows.append({
                "leaf_id": leaf_id,
                "k": lc.k,
                "alpha_tilde": lc.alpha_tilde,
                "q": lc.q,
                "fallback_used": lc.fallback_used,
                "rule_path": rule_path(bundle.tree, leaf_id),
                "profile": None if prof is None else {
                    "count": prof.count,
                    "birads_counts": prof.birads_counts,
                    "malignancy_rate": prof.malignancy_rate,
                    "accuracy": prof.accuracy,
                    "mean_residual": prof.mean_residual,
                },
            })
        return {"alpha": bundle.alpha, "leaves": rows}

    return app
