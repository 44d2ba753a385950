"""HTTP reward service: contract, idempotency, batching, errors."""

from __future__ import annotations

import base64
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from evojudge.backends import canonical_json
from evojudge.library import LibraryStore
from evojudge.service import ImageDecodeError, JudgmentCache, create_app, decode_image
from evojudge.synthetic import SyntheticOracleBackend

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "evojudge" / "fixtures"


def _b64(attrs, ident="img"):
    return base64.b64encode(
        canonical_json({"attrs": attrs, "id": ident}).encode()).decode("ascii")


@pytest.fixture()
def client():
    store = LibraryStore(FIXTURES / "library_store")
    meta = json.loads((FIXTURES / "synthetic_val" / "meta.json").read_text())
    backend = SyntheticOracleBackend(seed=meta["oracle_seed"])
    app = create_app(store, backend, backend, library_version=meta["final_version"])
    return TestClient(app)


def _request_body(text_level=4, ident="c1"):
    return {
        "source_image": _b64({}, "src"),
        "instruction": "Apply the requested edit. Requirements: text:4.",
        "candidate": _b64({"text": text_level}, ident),
    }


# ---------------------------------------------------------------------------
# Scoring contract


def test_reward_returns_integer_score_in_range(client):
    response = client.post("/v1/reward", json=_request_body())
    assert response.status_code == 200
    body = response.json()
    assert isinstance(body["score"], int)
    assert 1 <= body["score"] <= 5
    assert len(body["judgment_id"]) == 32
    assert body["library_version"]


def test_identical_requests_are_idempotent(client):
    first = client.post("/v1/reward", json=_request_body()).json()
    second = client.post("/v1/reward", json=_request_body()).json()
    assert first == second


def test_batch_of_sixteen_preserves_order(client):
    items = [_request_body(text_level=i % 6, ident=f"c{i}") for i in range(16)]
    response = client.post("/v1/reward/batch", json={"items": items})
    assert response.status_code == 200
    results = response.json()["results"]
    assert len(results) == 16
    singles = [client.post("/v1/reward", json=item).json() for item in items]
    assert results == singles


def test_batch_surfaces_per_item_errors_without_failing(client):
    items = [_request_body(ident="ok1"), _request_body(ident="ok2")]
    items.insert(1, dict(_request_body(), candidate="!!! not base64 !!!"))
    response = client.post("/v1/reward/batch", json={"items": items})
    assert response.status_code == 200
    results = response.json()["results"]
    assert "score" in results[0] and "score" in results[2]
    assert results[1]["error"]["status"] == 400
    assert "candidate" in results[1]["error"]["detail"]


# ---------------------------------------------------------------------------
# Judgment retrieval


def test_judgment_chain_is_retrievable(client):
    scored = client.post("/v1/reward", json=_request_body()).json()
    response = client.get(f"/v1/judgment/{scored['judgment_id']}")
    assert response.status_code == 200
    chain = response.json()
    assert chain["judgment_id"] == scored["judgment_id"]
    assert chain["scores"] == [scored["score"]]
    assert "rubric_assessments" in chain["chain"]


def test_unknown_judgment_id_is_404(client):
    assert client.get("/v1/judgment/ffffffffffffffff").status_code == 404


# ---------------------------------------------------------------------------
# Errors


def test_bad_image_names_the_offending_field(client):
    bad = dict(_request_body(), source_image="%%%")
    response = client.post("/v1/reward", json=bad)
    assert response.status_code == 400
    assert "source_image" in response.json()["detail"]

    bad = dict(_request_body(), candidate="%%%")
    response = client.post("/v1/reward", json=bad)
    assert response.status_code == 400
    assert "candidate" in response.json()["detail"]


def test_unknown_library_version_is_400(client):
    body = dict(_request_body(), library_version="0" * 64)
    assert client.post("/v1/reward", json=body).status_code == 400


def test_missing_fields_are_rejected(client):
    assert client.post("/v1/reward", json={"instruction": "x"}).status_code == 422


def test_backend_failure_maps_to_502_with_retry_after():
    from evojudge.backends import Backend, BackendError

    class DownBackend(Backend):
        multimodal = True

        def _complete(self, request):
            raise BackendError("model unavailable")

    store = LibraryStore(FIXTURES / "library_store")
    app = create_app(store, DownBackend(), DownBackend())
    client = TestClient(app)
    response = client.post("/v1/reward", json=_request_body())
    assert response.status_code == 502
    assert response.headers.get("retry-after") == "1"


# ---------------------------------------------------------------------------
# Introspection endpoints


def test_health_and_library_endpoints(client):
    meta = json.loads((FIXTURES / "synthetic_val" / "meta.json").read_text())
    health = client.get("/v1/health").json()
    assert health["status"] == "ok"
    assert health["library_version"] == meta["final_version"]

    library = client.get("/v1/library").json()
    assert library["counts"] == {"skills": 3, "tools": 4}
    assert len(library["entries"]) == 7


# ---------------------------------------------------------------------------
# Unit behaviour


def test_decode_image_rules():
    data = b"payload"
    assert decode_image("f", base64.b64encode(data).decode()) == data
    with pytest.raises(ImageDecodeError) as err:
        decode_image("candidate", "not base64 at all!")
    assert err.value.field == "candidate"
    with pytest.raises(ImageDecodeError):
        decode_image("f", "")


def test_judgment_cache_is_lru_bounded():
    cache = JudgmentCache(capacity=2)
    cache.put("a", {"v": 1})
    cache.put("b", {"v": 2})
    assert cache.get("a") == {"v": 1}  # refresh "a"
    cache.put("c", {"v": 3})           # evicts "b"
    assert cache.get("b") is None
    assert cache.get("a") and cache.get("c")
    with pytest.raises(ValueError):
        JudgmentCache(capacity=0)
