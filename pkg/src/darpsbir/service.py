"""Live retrieval HTTP service: the backend of the interactive drawing UI.

A session accumulates strokes; every stroke submission re-renders the
sketch raster and runs exactly one greedy agent step (head 1 mean, no
sampling), so replaying an item's stages stroke-by-stroke reproduces the
offline evaluation of that item. Model parameters and the embedding table
are immutable and shared; each session's mutable state is guarded by its
own lock and requests for one session are serialized.
"""
from __future__ import annotations

import threading
import time
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from . import agent as ag
from . import sketchgen
from .dataset import Dataset, png_bytes
from .embedder import EmbeddingTable
from .metrics import percentile_from_rank
from .trainer import TrainState, train_config_from_dict

DEFAULT_TTL_SECONDS = 15 * 60


class SessionStore:
    def __init__(self, ttl: float = DEFAULT_TTL_SECONDS):
        self.ttl = ttl
        self._sessions: dict[str, "Session"] = {}
        self._lock = threading.Lock()

    def create(self, h0: np.ndarray) -> "Session":
        session = Session(uuid.uuid4().hex, h0)
        with self._lock:
            self._expire_locked()
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> "Session":
        with self._lock:
            self._expire_locked()
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    def _expire_locked(self) -> None:
        now = time.monotonic()
        dead = [sid for sid, s in self._sessions.items() if now - s.last_access > self.ttl]
        for sid in dead:
            del self._sessions[sid]


class Session:
    def __init__(self, session_id: str, h0: np.ndarray):
        self.id = session_id
        self.strokes: list[np.ndarray] = []
        self.hidden = h0
        self.loc = np.zeros(2, dtype=np.float64)
        self.step = 0
        self.target_id: str | None = None
        self.last_ranking = None
        self.glimpse_trail: list[tuple[int, int]] = []
        self.lock = threading.Lock()
        self.last_access = time.monotonic()

    def touch(self) -> None:
        self.last_access = time.monotonic()


def build_app(ds: Dataset, state: TrainState, table: EmbeddingTable,
              top_q: int = 10, ttl: float = DEFAULT_TTL_SECONDS,
              ui_dir=None, train_config: dict | None = None) -> FastAPI:
    cfg = train_config_from_dict(train_config or {})
    gcfg = cfg.glimpse_config()
    dilate_radius = cfg.dilate_radius
    app = FastAPI()
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    store = SessionStore(ttl)
    app.state.store = store

    @app.get("/health")
    def health():
        return Response(content="ok", media_type="text/plain")

    @app.post("/session")
    async def create_session(request: Request):
        target_id = None
        body = await _optional_json(request)
        if body:
            target_id = body.get("target_id")
            if target_id is not None and target_id not in table:
                raise HTTPException(status_code=404, detail="unknown target_id")
        session = store.create(state.h0)
        session.target_id = target_id
        return {"session_id": session.id}

    @app.post("/session/{session_id}/stroke")
    async def submit_stroke(session_id: str, request: Request):
        session = store.get(session_id)
        body = await request.json()
        points = body.get("points")
        if (not isinstance(points, list) or len(points) < 2
                or not all(isinstance(p, list) and len(p) == 2 for p in points)):
            raise HTTPException(status_code=400, detail="polyline needs >= 2 [x, y] points")
        poly = np.asarray(points, dtype=np.float64)
        if poly.min() < 0.0 or poly.max() > 1.0:
            raise HTTPException(status_code=400, detail="points must lie in [0, 1]^2")
        with session.lock:
            session.touch()
            session.strokes.append(poly)
            raster = sketchgen.rasterize(session.strokes, ds.width, ds.height,
                                         dtype=state.params.dtype)
            if dilate_radius > 0:
                raster = sketchgen.dilate(raster, dilate_radius)
            session.glimpse_trail.append(ag.agent_to_pixel(session.loc, ds.width, ds.height))
            hidden, a, _ = ag.step_forward(state.params, gcfg, raster,
                                           session.hidden, session.loc,
                                           cfg.normalize_action)
            mu, _ = ag.locator_mean(state.params, 1, hidden)
            session.hidden = hidden
            session.loc = mu.astype(np.float64)
            session.step += 1
            ranking = _rank_response(a, table, top_q, session.target_id)
            session.last_ranking = ranking
            ranking = dict(ranking)
            ranking["glimpse_trace"] = [list(p) for p in session.glimpse_trail]
        return ranking

    @app.get("/session/{session_id}/ranking")
    def get_ranking(session_id: str):
        session = store.get(session_id)
        with session.lock:
            session.touch()
            if session.last_ranking is None:
                raise HTTPException(status_code=409, detail="no strokes submitted yet")
            ranking = dict(session.last_ranking)
            ranking["glimpse_trace"] = [list(p) for p in session.glimpse_trail]
        return ranking

    @app.get("/images/{item_id}.png")
    def get_image(item_id: str):
        if item_id not in {it.id for it in ds.items}:
            return JSONResponse(status_code=404, content={"error": "unknown item id"})
        raster = ds.load_image(ds.item(item_id))
        return Response(content=png_bytes(raster), media_type="image/png")

    @app.get("/gallery")
    def gallery_ids():
        return {"ids": table.ids, "size": len(table)}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def _rank_response(a: np.ndarray, table: EmbeddingTable, top_q: int,
                   target_id: str | None) -> dict:
    d = table.sq_distances(np.asarray(a, dtype=table.matrix.dtype))
    order = np.argsort(d, kind="stable")[:top_q]
    rank_list = [{"item_id": table.ids[i], "distance": float(d[i])} for i in order]
    percentile = None
    if target_id is not None:
        rank = int(np.count_nonzero(d <= d[table.index[target_id]]))
        percentile = percentile_from_rank(rank, len(table))
    return {"rank_list": rank_list, "percentile": percentile}


async def _optional_json(request: Request):
    body = await request.body()
    if not body:
        return None
    import json

    try:
        return json.loads(body)
    except json.JSONDecodeError:
        raise HTTPException(status_code=400, detail="invalid JSON body")
