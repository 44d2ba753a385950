"""HTTP reward service consumed by RL trainers.

Serves an immutable snapshot of a library version. Each reward request
carries one candidate, is routed and judged under that snapshot, and
returns the raw integer score; reward normalization is the trainer's
job. Judgment chains are retrievable by id from a bounded cache.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import httpx
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .backends import Backend, BackendError
from .judging import JudgmentFailure, judge
from .library import LibraryError, LibraryState, LibraryStore, entry_summaries
from .orchestration import route
from .preference import Demonstration, ImageRef, ValidationError

MAX_IMAGE_BYTES = 8 * 1024 * 1024
URL_FETCH_TIMEOUT = 10.0
DEFAULT_CACHE_CAPACITY = 1024


class RewardRequest(BaseModel):
    source_image: str = Field(min_length=1)
    instruction: str = Field(min_length=1)
    candidate: str = Field(min_length=1)
    library_version: Optional[str] = None


class BatchRewardRequest(BaseModel):
    items: list[RewardRequest]


class ImageDecodeError(ValueError):
    def __init__(self, field: str, detail: str):
        super().__init__(detail)
        self.field = field
        self.detail = detail


def decode_image(field: str, value: str,
                 fetch_timeout: float = URL_FETCH_TIMEOUT) -> bytes:
    """Accepts inline base64 or an http(s) URL with a size cap."""
    if value.startswith(("http://", "https://")):
        try:
            with httpx.stream("GET", value, timeout=fetch_timeout,
                              follow_redirects=True) as response:
                response.raise_for_status()
                data = b""
                for chunk in response.iter_bytes():
                    data += chunk
                    if len(data) > MAX_IMAGE_BYTES:
                        raise ImageDecodeError(field, f"{field}: image exceeds size cap")
        except httpx.HTTPError as exc:
            raise ImageDecodeError(field, f"{field}: fetch failed ({exc})") from exc
        if not data:
            raise ImageDecodeError(field, f"{field}: fetched empty body")
        return data
    try:
        data = base64.b64decode(value, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ImageDecodeError(field, f"{field}: not valid base64 ({exc})") from exc
    if not data:
        raise ImageDecodeError(field, f"{field}: decoded to empty bytes")
    if len(data) > MAX_IMAGE_BYTES:
        raise ImageDecodeError(field, f"{field}: image exceeds size cap")
    return data


class JudgmentCache:
    """Bounded LRU of judgment chains keyed by judgment id."""

    def __init__(self, capacity: int = DEFAULT_CACHE_CAPACITY):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self._items: OrderedDict[str, dict] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: str) -> Optional[dict]:
        with self._lock:
            item = self._items.get(key)
            if item is not None:
                self._items.move_to_end(key)
            return item

    def put(self, key: str, value: dict) -> None:
        with self._lock:
            self._items[key] = value
            self._items.move_to_end(key)
            while len(self._items) > self.capacity:
                self._items.popitem(last=False)


def _judgment_id(library_version: str, instruction: str,
                 source: bytes, candidate: bytes) -> str:
    h = hashlib.sha256()
    for piece in (library_version.encode(), instruction.encode(), source, candidate):
        h.update(hashlib.sha256(piece).digest())
    return h.hexdigest()[:32]


@dataclass
class RewardService:
    """Request handling shared by the single and batch endpoints."""

    store: LibraryStore
    served_version: str
    orchestrator: Backend
    subagent: Backend
    cache: JudgmentCache

    def resolve_state(self, requested: Optional[str]) -> LibraryState:
        return self.store.checkout(requested or self.served_version)

    def score(self, req: RewardRequest) -> dict:
        state = self.resolve_state(req.library_version)
        source = decode_image("source_image", req.source_image)
        candidate = decode_image("candidate", req.candidate)
        judgment_id = _judgment_id(state.version, req.instruction, source, candidate)

        cached = self.cache.get(judgment_id)
        if cached is not None:
            return cached["response"]

        demo = Demonstration(
            id=judgment_id,
            source_image=ImageRef(data=source),
            instruction=req.instruction,
            candidates=(ImageRef(data=candidate),),
        )
        _, context = route(demo, state, self.orchestrator, caption_backend=self.subagent)
        judgment = judge(demo, context, self.subagent)
        response = {
            "score": judgment.scores[0],
            "judgment_id": judgment_id,
            "library_version": state.version,
        }
        self.cache.put(judgment_id, {
            "response": response,
            "chain": {
                "judgment_id": judgment_id,
                "library_version": state.version,
                "instruction": req.instruction,
                "scores": list(judgment.scores),
                "chain": judgment.chain.to_json(),
            },
        })
        return response


def _error(status: int, detail: str, headers: Optional[dict] = None) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail},
                        headers=headers or {})


def _score_or_error(service: RewardService, item: RewardRequest):
    """Returns (payload, None) on success or (None, (status, detail, headers))."""
    try:
        return service.score(item), None
    except ImageDecodeError as exc:
        return None, (400, exc.detail, None)
    except (LibraryError, ValidationError) as exc:
        return None, (400, str(exc), None)
    except (BackendError, JudgmentFailure) as exc:
        return None, (502, f"judgment backend failure: {exc}", {"Retry-After": "1"})


def create_app(store: LibraryStore, orchestrator: Backend, subagent: Backend,
               library_version: Optional[str] = None,
               cache_capacity: int = DEFAULT_CACHE_CAPACITY) -> FastAPI:
    served = library_version or store.head().version
    store.checkout(served)  # fail fast on an unknown version
    service = RewardService(
        store=store, served_version=served, orchestrator=orchestrator,
        subagent=subagent, cache=JudgmentCache(cache_capacity),
    )
    app = FastAPI(title="evojudge reward service")
    app.state.service = service

    @app.post("/v1/reward")
    def reward(req: RewardRequest):
        payload, error = _score_or_error(service, req)
        if error is not None:
            status, detail, headers = error
            return _error(status, detail, headers)
        return payload

    @app.post("/v1/reward/batch")
    def reward_batch(req: BatchRewardRequest):
        results = []
        for item in req.items:
            payload, error = _score_or_error(service, item)
            if error is not None:
                status, detail, _ = error
                results.append({"error": {"status": status, "detail": detail}})
            else:
                results.append(payload)
        return {"results": results}

    @app.get("/v1/judgment/{judgment_id}")
    def judgment(judgment_id: str):
        cached = service.cache.get(judgment_id)
        if cached is None:
            return _error(404, f"unknown judgment id {judgment_id!r}")
        return cached["chain"]

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "library_version": served}

    @app.get("/v1/library")
    def library():
        state = service.store.checkout(served)
        return {
            "library_version": served,
            "entries": entry_summaries(state),
            "counts": state.counts(),
        }

    return app
