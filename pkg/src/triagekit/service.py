"""HTTP interface: triage inference, what-if rescoring, explanations, and the
population projection map.

The service never mutates model state: checkpoints, tokenizer, corpus, and
the fitted projection are loaded once at startup and shared read-only across
request handlers.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from .corpus.io import instance_from_record, instance_to_record
from .corpus.types import Corpus, TeamLabel
from .encoder import TriageEncoder, checkpoint_hash, load_checkpoint
from .errors import UnsupportedHeadError
from .explain import ProjectionMap, embed_training_set, explain_instance, fit_projection, project_query
from .strategies import (
    DEFAULT_SEGMENT_SIZE,
    STRATEGIES,
    STRATEGY_SEGMENT_BATCH,
    infer,
)
from .textpipe import Tokenizer

API_VERSION = "v1"


def _canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class ServiceState:
    corpus: Corpus
    tokenizer: Tokenizer
    models: dict[str, TriageEncoder]
    model_hashes: dict[str, str]
    projection: ProjectionMap | None = None
    segment_size: int = DEFAULT_SEGMENT_SIZE
    started_at: float = field(default_factory=time.time)
    _map_body: bytes | None = None
    _map_etag: str | None = None

    def map_body(self) -> tuple[bytes, str]:
        if self._map_body is None:
            if self.projection is None:
                raise RuntimeError("projection not fitted")
            self._map_body = _canonical_json(self.projection.as_dict())
            self._map_etag = hashlib.sha256(self._map_body).hexdigest()[:16]
        return self._map_body, self._map_etag


def load_service_state(
    corpus_path,
    tokenizer_path,
    checkpoints: dict[str, str],
    projection_method: str | None = "pca",
    projection_sample: int = 500,
    segment_size: int = DEFAULT_SEGMENT_SIZE,
    seed: int = 0,
) -> ServiceState:
    """Load artifacts and (optionally) fit the projection map at startup."""
    from .corpus.io import load_corpus

    corpus = load_corpus(corpus_path)
    tokenizer = Tokenizer.load(tokenizer_path)
    models, hashes = {}, {}
    for strategy, path in checkpoints.items():
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r} in checkpoint mapping")
        model, _ = load_checkpoint(path)
        model.eval()
        models[strategy] = model
        hashes[strategy] = checkpoint_hash(path)

    projection = None
    if projection_method and STRATEGY_SEGMENT_BATCH in models:
        accepted = corpus.accepted()
        if len(accepted) >= 3:
            rng = np.random.default_rng(seed)
            if len(accepted) > projection_sample:
                idx = sorted(rng.choice(len(accepted), projection_sample, replace=False))
                accepted = [accepted[i] for i in idx]
            embeddings = embed_training_set(
                accepted, models[STRATEGY_SEGMENT_BATCH], tokenizer, segment_size
            )
            projection = fit_projection(
                embeddings,
                [int(i.label) if i.label is not None else None for i in accepted],
                [i.instance_id for i in accepted],
                method=projection_method,
                seed=seed,
            )
    return ServiceState(
        corpus=corpus,
        tokenizer=tokenizer,
        models=models,
        model_hashes=hashes,
        projection=projection,
        segment_size=segment_size,
    )


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="triagekit service", version=API_VERSION)
    app.state.service = state

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", f"malformed payload: {exc.errors()[:1]}")

    @app.get("/v1/health")
    def health():
        if not state.models:
            return _error(503, "model_not_loaded", "no model checkpoints loaded")
        return {
            "status": "ok",
            "model_hash": dict(state.model_hashes),
            "uptime_seconds": time.time() - state.started_at,
        }

    @app.get("/v1/map")
    def population_map(request: Request, label: str | None = None):
        if state.projection is None:
            return _error(503, "map_unavailable", "projection was not fitted at startup")
        body, etag = state.map_body()
        if label is not None:
            try:
                team = TeamLabel[label]
            except KeyError:
                return _error(400, "bad_request", f"unknown team label {label!r}")
            payload = state.projection.as_dict()
            payload["points"] = [p for p in payload["points"] if p["label"] == team.name]
            body = _canonical_json(payload)
            etag = hashlib.sha256(body).hexdigest()[:16]
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers={"ETag": etag})
        return Response(content=body, media_type="application/json",
                        headers={"ETag": etag})

    @app.get("/v1/instances")
    def list_instances(offset: int = 0, limit: int = 50):
        offset = max(0, offset)
        limit = max(1, min(limit, 500))
        page = state.corpus.instances[offset : offset + limit]
        return {
            "total": len(state.corpus),
            "offset": offset,
            "limit": limit,
            "instances": [
                {
                    "instance_id": i.instance_id,
                    "patient_id": i.patient_id,
                    "referral_date": i.referral_date.isoformat(),
                    "acceptance": i.acceptance.value if i.acceptance else None,
                    "label": i.label.name if i.label is not None else None,
                    "document_count": len(i.documents),
                }
                for i in page
            ],
        }

    @app.get("/v1/instances/{instance_id}")
    def get_instance(instance_id: str):
        inst = state.corpus.get(instance_id)
        if inst is None:
            return _error(404, "not_found", f"unknown instance_id {instance_id!r}")
        return instance_to_record(inst)

    @app.post("/v1/triage")
    def triage(payload: dict):
        return _handle_triage(state, payload)

    return app


def _handle_triage(state: ServiceState, payload: dict):
    if not isinstance(payload, dict):
        return _error(400, "bad_request", "payload must be a JSON object")
    strategy = payload.get("strategy", STRATEGY_SEGMENT_BATCH)
    if strategy not in STRATEGIES:
        return _error(400, "bad_request", f"unknown strategy {strategy!r}")
    if strategy not in state.models:
        return _error(503, "model_not_loaded", f"no checkpoint loaded for {strategy}")
    model = state.models[strategy]

    instance = None
    if payload.get("instance_id") is not None:
        instance = state.corpus.get(str(payload["instance_id"]))
        if instance is None:
            return _error(404, "not_found", f"unknown instance_id {payload['instance_id']!r}")
    elif payload.get("instance") is not None:
        try:
            instance = instance_from_record(payload["instance"])
        except (KeyError, TypeError, ValueError) as exc:
            return _error(400, "bad_request", f"invalid instance payload: {exc}")
    else:
        return _error(400, "bad_request", "provide instance or instance_id")

    excluded = payload.get("excluded_doc_ids") or []
    if not isinstance(excluded, list):
        return _error(400, "bad_request", "excluded_doc_ids must be a list")
    excluded_set = {str(d) for d in excluded}
    doc_ids = {d.doc_id for d in instance.documents}
    unknown = excluded_set - doc_ids
    if unknown:
        return _error(422, "invalid_exclusion",
                      f"unknown excluded doc ids: {sorted(unknown)[:3]}")

    scored = instance
    if excluded_set:
        remaining = [d for d in instance.documents if d.doc_id not in excluded_set]
        if not remaining:
            return _error(422, "invalid_exclusion", "no documents remain")
        scored = replace(instance, documents=remaining)

    try:
        recommendation, votes = infer(
            strategy, scored, model, state.tokenizer, state.segment_size
        )
    except (ValueError, UnsupportedHeadError) as exc:
        return _error(422, "inference_failed", str(exc))

    body: dict = {
        "strategy": strategy,
        "recommendation": recommendation.as_dict(),
        "model_hash": state.model_hashes[strategy],
    }
    if votes is not None:
        body["votes"] = votes.as_dict()

    if strategy == STRATEGY_SEGMENT_BATCH:
        label = payload.get("label")
        try:
            label_team = TeamLabel[label] if label else None
        except KeyError:
            return _error(400, "bad_request", f"unknown team label {label!r}")
        bundle = explain_instance(
            scored, model, state.tokenizer, state.segment_size, label=label_team
        )
        body["explanation"] = bundle.as_dict()
        if state.projection is not None:
            embedding = embed_training_set([scored], model, state.tokenizer,
                                           state.segment_size)[0]
            x, y = project_query(state.projection, embedding)
            body["map_position"] = {"x": x, "y": y}

    if excluded_set:
        baseline, _ = infer(strategy, instance, model, state.tokenizer, state.segment_size)
        delta = {
            t.name: float(recommendation.probabilities[t] - baseline.probabilities[t])
            for t in TeamLabel
        }
        body["whatif"] = {
            "excluded_doc_ids": sorted(excluded_set),
            "baseline_probabilities": baseline.as_dict()["probabilities"],
            "baseline_predicted": baseline.predicted.name,
            "delta": delta,
        }
    return body
