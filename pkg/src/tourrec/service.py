"""HTTP service over the engine, backed by the append-only event log.

Every mutation is validated against the engine, appended to the log (fsync
by default), and only then acknowledged; restarting the service replays the
log and reaches the same state.  Reads never touch the log.
"""

from __future__ import annotations

import threading
import time
from typing import Any

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .binning import BinningConfig, bin_and_link, load_bundled_table
from .context import ContextState
from .demographic import age_to_bin
from .engine import Engine, EngineConfig, EngineError
from .eventlog import EventLog, replay
from .metrics import EvalSet, evaluate_all
from .ontology import OntologyError
from .orchestrator import ACTIVE_RECOMMENDERS, update_weights
from .preferences import PreferenceError


class UserBody(BaseModel):
    user_id: int | None = None
    age: int | None = Field(None, description="age bin code 1-5")
    age_years: int | None = Field(None, description="raw age, binned on ingest")
    ac_deg: int
    budget: int
    accom: int
    gender: str
    job: str
    region: str
    group_comp: str


class PreferencesBody(BaseModel):
    selection: list[float]


class FeedbackBody(BaseModel):
    item_id: int
    kind: str
    rating: float | None = None


class RatingBody(BaseModel):
    item_id: int
    rating: float


class ItemBody(BaseModel):
    item_id: int
    name: str
    description: str = ""
    keywords: list[str] = Field(default_factory=list)
    categories: list[str] = Field(default_factory=list)
    location: tuple[float, float] | None = None
    partner_id: str | None = None


class BinBody(BaseModel):
    item_id: int | None = None
    threshold: float | None = None


def _http_error(exc: Exception) -> HTTPException:
    msg = str(exc)
    if "unknown user" in msg or "unknown item" in msg:
        return HTTPException(status_code=404, detail=msg)
    if "duplicate" in msg:
        return HTTPException(status_code=409, detail=msg)
    return HTTPException(status_code=422, detail=msg)


def create_app(
    engine: Engine | None = None,
    log_path=None,
    api_key: str | None = None,
    fsync: bool = True,
    config: EngineConfig | None = None,
) -> FastAPI:
    app = FastAPI(title="tourrec", version="0.1.0")
    log = EventLog(log_path, fsync=fsync) if log_path else None
    if engine is None:
        engine = Engine(config=config)
        if log is not None:
            replay(log, engine=engine)
    lock = threading.Lock()
    state: dict[str, Any] = {"next_user_id": max(engine.users, default=-1) + 1}

    def check_key(x_api_key: str | None = Header(default=None)):
        if api_key is not None and x_api_key != api_key:
            raise HTTPException(status_code=401, detail="invalid API key")

    auth = [Depends(check_key)]

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def commit(kind: str, payload: dict) -> float:
        """Apply to the engine, then make it durable, then acknowledge."""
        ts = time.time()
        engine.apply_event(kind, payload, ts)
        if log is not None:
            log.append(kind, payload, ts)
        return ts

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/users", status_code=201, dependencies=auth)
    def create_user(body: UserBody):
        with lock:
            if body.age is None and body.age_years is None:
                raise HTTPException(status_code=422,
                                    detail="age or age_years required")
            age = body.age if body.age is not None else age_to_bin(body.age_years)
            uid = body.user_id
            if uid is None:
                uid = state["next_user_id"]
            payload = {
                "user_id": uid, "age": age, "ac_deg": body.ac_deg,
                "budget": body.budget, "accom": body.accom,
                "gender": body.gender, "job": body.job, "region": body.region,
                "group_comp": body.group_comp,
            }
            try:
                commit("user_created", payload)
            except (EngineError, ValueError) as exc:
                raise _http_error(exc)
            state["next_user_id"] = max(state["next_user_id"], uid + 1)
            return {"user_id": uid}

    @app.put("/users/{user_id}/preferences", dependencies=auth)
    def set_preferences(user_id: int, body: PreferencesBody):
        with lock:
            try:
                commit("preferences_set",
                       {"user_id": user_id, "selection": body.selection})
            except (EngineError, PreferenceError, ValueError) as exc:
                raise _http_error(exc)
            return {
                "user_id": user_id,
                "hl_labels": engine.matrices.hl_labels,
                "selection": body.selection,
            }

    @app.get("/users/{user_id}/recommendations", dependencies=auth)
    def recommendations(
        user_id: int,
        n: int = Query(5, ge=1),
        weather: str | None = None,
        lat: float | None = None,
        lon: float | None = None,
        now: float | None = None,
        offset: int = Query(0, ge=0),
        limit: int | None = Query(None, ge=1),
    ):
        with lock:
            try:
                ctx = None
                if weather is not None or lat is not None:
                    ctx = ContextState(
                        hotel=(lat, lon)
                        if lat is not None and lon is not None else None,
                        weather=weather,
                        now=now if now is not None else time.time(),
                    )
                rec = engine.ensemble_recommend(user_id, n, ctx)
            except (EngineError, ValueError) as exc:
                raise _http_error(exc)
            entries = rec.entries[offset : offset + limit if limit else None]
            return {
                "user_id": user_id,
                "phase": engine.maturity.phase,
                "n": n,
                "offset": offset,
                "items": [
                    {
                        "item_id": e.item_id,
                        "name": engine.graph.items[e.item_id].name,
                        "score": e.score,
                        "sources": e.sources,
                        "backfilled": e.backfilled,
                    }
                    for e in entries
                ],
                "flags": rec.flags,
            }

    @app.post("/users/{user_id}/feedback", status_code=201, dependencies=auth)
    def feedback(user_id: int, body: FeedbackBody):
        with lock:
            payload = {"user_id": user_id, "item_id": body.item_id,
                       "kind": body.kind}
            if body.rating is not None:
                payload["rating"] = body.rating
            try:
                commit("feedback", payload)
            except (EngineError, PreferenceError, ValueError) as exc:
                raise _http_error(exc)
            return {"status": "recorded"}

    @app.post("/users/{user_id}/ratings", status_code=201, dependencies=auth)
    def rate(user_id: int, body: RatingBody):
        with lock:
            if not 0.0 <= body.rating <= 5.0:
                raise HTTPException(status_code=422,
                                    detail=f"rating {body.rating} outside [0, 5]")
            booked = engine.consumed.get(user_id, {})
            if body.item_id not in booked:
                raise HTTPException(
                    status_code=422,
                    detail="item must be booked before it can be rated",
                )
            try:
                commit("rating", {"user_id": user_id, "item_id": body.item_id,
                                  "rating": body.rating})
            except (EngineError, PreferenceError, ValueError) as exc:
                raise _http_error(exc)
            return {"status": "recorded"}

    @app.get("/users/{user_id}/profile", dependencies=auth)
    def profile(user_id: int):
        with lock:
            if user_id not in engine.users:
                raise HTTPException(status_code=404, detail=f"unknown user {user_id}")
            user = engine.users[user_id]
            prefs = engine.prefs.get(user_id)
            booked, bookmarked, dismissed, rated = set(), set(), set(), set()
            for ev in engine.feedback_events:
                if ev.user_id != user_id:
                    continue
                {"book": booked, "bookmark": bookmarked,
                 "dismiss": dismissed, "rate": rated}[ev.kind].add(ev.item_id)
            return {
                "user_id": user_id,
                "demographics": {
                    "age": user.age, "ac_deg": user.ac_deg,
                    "budget": user.budget, "accom": user.accom,
                    "gender": user.gender, "job": user.job,
                    "region": user.region, "group_comp": user.group_comp,
                },
                "has_preferences": prefs is not None,
                "hl_labels": engine.matrices.hl_labels,
                "p_hl": prefs.p_hl.tolist() if prefs else None,
                "ll_labels": engine.matrices.ll_labels,
                "p_ll": prefs.p_ll.tolist() if prefs else None,
                "has_feedback": bool(prefs.has_feedback) if prefs else False,
                "booked": sorted(booked),
                "bookmarked": sorted(bookmarked),
                "dismissed": sorted(dismissed),
                "rated": sorted(rated),
            }

    @app.post("/admin/items", status_code=201, dependencies=auth)
    def add_item(body: ItemBody):
        with lock:
            try:
                commit("item_added", body.model_dump(exclude_none=True))
            except (EngineError, OntologyError, ValueError) as exc:
                raise _http_error(exc)
            return {"item_id": body.item_id}

    @app.post("/admin/items/bin", dependencies=auth)
    def bin_items(body: BinBody):
        with lock:
            table = load_bundled_table()
            cfg = BinningConfig(body.threshold) if body.threshold else BinningConfig()
            targets = (
                [body.item_id] if body.item_id is not None
                else [iid for iid in sorted(engine.graph.items)
                      if not engine.graph.item_ll_classes(iid)]
            )
            linked: dict[int, list] = {}
            diagnostics: list[str] = []
            for iid in targets:
                if iid not in engine.graph.items:
                    raise HTTPException(status_code=404,
                                        detail=f"unknown item {iid}")
                links, diags = bin_and_link(
                    engine.graph.items[iid], engine.graph, table, cfg
                )
                linked[iid] = sorted([[c, s] for c, s in links])
                diagnostics.extend(diags)
            from .ontology import content_matrices
            from .preferences import refresh_item_cache

            engine.matrices = content_matrices(engine.graph)
            for st in engine.prefs.values():
                refresh_item_cache(st, engine.matrices)
            return {"linked": linked, "diagnostics": diagnostics}

    @app.get("/admin/phase", dependencies=auth)
    def phase():
        with lock:
            m = engine.maturity
            return {
                "phase": m.phase,
                "user_count": m.user_count,
                "rating_count": m.rating_count,
                "item_count": m.item_count,
                "density": m.density,
                "active": list(ACTIVE_RECOMMENDERS[m.phase]),
                "weights": update_weights(m.phase, m, engine.config.phase),
                "triggers": {
                    "phase2_min_ratings": engine.config.phase.phase2_min_ratings,
                    "phase3_min_users": engine.config.phase.phase3_min_users,
                    "phase3_min_ratings": engine.config.phase.phase3_min_ratings,
                    "phase4_min_users": engine.config.phase.phase4_min_users,
                    "phase4_min_density": engine.config.phase.phase4_min_density,
                },
            }

    @app.get("/admin/metrics", dependencies=auth)
    def metrics(k: int = Query(5, ge=1)):
        with lock:
            users = [u for u in sorted(engine.users) if u in engine.prefs]
            if len(users) < 2:
                raise HTTPException(status_code=422,
                                    detail="need at least 2 users with preferences")
            rec_lists = {}
            for uid in users:
                rec = engine.ensemble_recommend(uid, k)
                if rec.entries:
                    rec_lists[uid] = rec.item_ids()
            relevant: dict[int, set[int]] = {u: set() for u in rec_lists}
            for ev in engine.feedback_events:
                if ev.kind == "rate" and ev.user_id in relevant:
                    if ev.rating >= engine.config.relevance_threshold:
                        relevant[ev.user_id].add(ev.item_id)
            m = engine.matrices
            hl_feats, ll_feats = {}, {}
            for iid in m.item_ids:
                col = m.ll_item[:, m.item_index(iid)]
                ll_feats[iid] = col.copy()
                hl_feats[iid] = (m.hl_ll @ col > 0).astype(float)
            counts = {
                iid: sum(1 for items in engine.consumed.values() if iid in items)
                for iid in engine.graph.items
            }
            evalset = EvalSet(
                rec_lists=rec_lists,
                relevant=relevant,
                n_train_items=len(engine.graph.items),
                item_universe=list(m.item_ids),
                item_features_hl=hl_feats,
                item_features_ll=ll_feats,
                consumption_counts=counts,
            )
            report = evaluate_all(evalset, k)
            return {
                "k": k,
                "n_users": report.n_users,
                "map_at_k": report.map_at_k,
                "mar_at_k": report.mar_at_k,
                "coverage": report.coverage,
                "personalization": report.personalization,
                "diversity_hl": report.diversity_hl,
                "diversity_ll": report.diversity_ll,
                "novelty": report.novelty,
                "flags": report.flags,
            }

    app.state.engine = engine
    app.state.log = log
    return app
