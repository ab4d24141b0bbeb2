"""The live recommender engine: event ingestion, model caches, ensembles.

State is only ever mutated through :meth:`Engine.apply_event`, so replaying
an event log reconstructs the engine exactly.  Model (re)fitting is
synchronous and watermark-driven: the demographic clustering refits after
enough new users, the FFM after enough new ratings.  Everything is seeded,
so identical logs produce identical recommendations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import demographic as demo
from . import ffm as ffm_mod
from .context import ClassContextParams, ContextState, apply_context, load_default_params
from .demographic import ClusterModel, UserRecord, opinions_from_events
from .ffm import FeatureVocab, FfmModel, TrainConfig, encode_example, ffm_train
from .ontology import ContentMatrices, ItemRecord, OntologyGraph, content_matrices
from .orchestrator import (
    ACTIVE_RECOMMENDERS,
    MaturityState,
    PhaseConfig,
    aggregate_scores,
    determine_phase,
    update_weights,
)
from .popularity import PopularityStats, hybrid_scores, recommend_hybrid
from .preferences import (
    FeedbackEvent,
    PreferenceState,
    apply_feedback,
    content_scores,
    init_preferences,
    recommend_content,
    refresh_item_cache,
)
from .recs import RecList
from .synth import fixture_graph


class EngineError(ValueError):
    pass


@dataclass
class EngineConfig:
    seed: int = 7
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    eta_ll: float = 0.2
    eta_hl: float = 0.05
    popularity_k: float = 5.0
    popularity_threshold: float = 2.5
    demo_refit_users: int = 50
    demo_k_min: int = 2
    demo_k_max: int = 8
    knn_k: int = 10
    ffm_refit_ratings: int = 25
    # longer, hotter schedule than the module default: at a few hundred
    # ratings the interaction terms need it to differentiate users
    ffm_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(eta=0.5, epochs=150, patience=0)
    )
    relevance_threshold: float = 3.0


def engine_config_from_json(source) -> EngineConfig:
    """Build an EngineConfig from a JSON file.

    Top-level keys map to EngineConfig fields; "phase" and "ffm_train" are
    nested objects with PhaseConfig / TrainConfig fields.
    """
    import json

    if hasattr(source, "read"):
        payload = json.load(source)
    else:
        with open(source, encoding="utf-8") as fh:
            payload = json.load(fh)
    kwargs = dict(payload)
    if "phase" in kwargs:
        kwargs["phase"] = PhaseConfig(**kwargs["phase"])
    if "ffm_train" in kwargs:
        kwargs["ffm_train"] = TrainConfig(**kwargs["ffm_train"])
    return EngineConfig(**kwargs)


class Engine:
    def __init__(
        self,
        graph: OntologyGraph | None = None,
        config: EngineConfig | None = None,
        context_params: ClassContextParams | None = None,
    ):
        self.config = config or EngineConfig()
        self.graph = graph if graph is not None else fixture_graph()
        self.matrices: ContentMatrices = content_matrices(self.graph)
        self.ctx_params = context_params or load_default_params()

        self.users: dict[int, UserRecord] = {}
        self.prefs: dict[int, PreferenceState] = {}
        self.feedback_events: list[FeedbackEvent] = []
        self.popularity = PopularityStats(k=self.config.popularity_k)
        self.maturity = MaturityState(item_count=len(self.graph.items))
        # user -> item -> last consumption (book or rate) timestamp
        self.consumed: dict[int, dict[int, float]] = {}

        self.demo_model: ClusterModel | None = None
        self.demo_fitted_at = -1
        self.ffm_model: FfmModel | None = None
        self.ffm_vocab = FeatureVocab()
        self.ffm_fitted_at = -1

    # ------------------------------------------------------------------
    # event ingestion

    def apply_event(self, kind: str, payload: dict, timestamp: float = 0.0) -> None:
        handler = {
            "user_created": self._on_user_created,
            "preferences_set": self._on_preferences_set,
            "feedback": self._on_feedback,
            "rating": self._on_rating,
            "item_added": self._on_item_added,
        }.get(kind)
        if handler is None:
            raise EngineError(f"unknown event kind {kind!r}")
        handler(payload, timestamp)
        self.maturity.phase = determine_phase(
            self.maturity, self.config.phase, self.maturity.phase
        )

    def _on_user_created(self, payload: dict, ts: float) -> None:
        user = UserRecord(
            user_id=int(payload["user_id"]),
            age=int(payload["age"]),
            ac_deg=int(payload["ac_deg"]),
            budget=int(payload["budget"]),
            accom=int(payload["accom"]),
            gender=payload["gender"],
            job=payload["job"],
            region=payload["region"],
            group_comp=payload["group_comp"],
        )
        if user.user_id in self.users:
            raise EngineError(f"duplicate user {user.user_id}")
        self.users[user.user_id] = user
        self.maturity.user_count = len(self.users)

    def _on_preferences_set(self, payload: dict, ts: float) -> None:
        uid = int(payload["user_id"])
        if uid not in self.users:
            raise EngineError(f"unknown user {uid}")
        self.prefs[uid] = init_preferences(uid, payload["selection"], self.matrices)
        self.prefs[uid].last_updated = ts

    def _require_state(self, uid: int) -> PreferenceState:
        if uid not in self.users:
            raise EngineError(f"unknown user {uid}")
        if uid not in self.prefs:
            raise EngineError(f"user {uid} has no preference state yet")
        return self.prefs[uid]

    def _on_feedback(self, payload: dict, ts: float) -> None:
        uid = int(payload["user_id"])
        event = FeedbackEvent(
            user_id=uid,
            item_id=int(payload["item_id"]),
            kind=payload["kind"],
            rating=payload.get("rating"),
            timestamp=ts,
        )
        state = self._require_state(uid)
        if event.item_id not in self.graph.items:
            raise EngineError(f"unknown item {event.item_id}")
        self.prefs[uid] = apply_feedback(
            state, event, self.matrices, self.config.eta_ll, self.config.eta_hl
        )
        self.feedback_events.append(event)
        if event.kind in ("book", "rate"):
            self.consumed.setdefault(uid, {})[event.item_id] = ts
        if event.kind == "rate":
            self.popularity.add_rating(event.item_id, event.rating)
            self.maturity.rating_count += 1

    def _on_rating(self, payload: dict, ts: float) -> None:
        self._on_feedback(
            {
                "user_id": payload["user_id"],
                "item_id": payload["item_id"],
                "kind": "rate",
                "rating": float(payload["rating"]),
            },
            ts,
        )

    def _on_item_added(self, payload: dict, ts: float) -> None:
        item = ItemRecord.from_dict(payload)
        self.graph.add_item(item)
        self.matrices = content_matrices(self.graph)
        self.maturity.item_count = len(self.graph.items)
        for state in self.prefs.values():
            refresh_item_cache(state, self.matrices)

    # ------------------------------------------------------------------
    # model caches

    def _demo_model_fresh(self) -> ClusterModel | None:
        n = len(self.users)
        if n < max(self.config.demo_k_min, 2):
            return None
        stale = (
            self.demo_model is None
            or n - self.demo_fitted_at >= self.config.demo_refit_users
        )
        if stale:
            users = list(self.users.values())
            k_max = min(self.config.demo_k_max, n - 1)
            k_min = min(self.config.demo_k_min, k_max)
            k = demo.choose_k(users, k_min, k_max, seed=self.config.seed)
            self.demo_model = demo.kprototypes_fit(users, k, seed=self.config.seed)
            self.demo_fitted_at = n
        return self.demo_model

    def _training_examples(self) -> list:
        """Label rated pairs by the relevance threshold; add sampled negatives
        for book-only users so implicit-only feedback is still trainable."""
        examples = []
        rated_users: set[int] = set()
        for ev in self.feedback_events:
            if ev.kind != "rate":
                continue
            rated_users.add(ev.user_id)
            label = 1 if ev.rating >= self.config.relevance_threshold else 0
            examples.append(self._encode(ev.user_id, ev.item_id, label))

        rng = np.random.default_rng([self.config.seed, 5])
        for uid in sorted(self.consumed):
            if uid in rated_users:
                continue
            booked = sorted(self.consumed[uid])
            pool = sorted(set(self.graph.items) - set(booked))
            for iid in booked:
                examples.append(self._encode(uid, iid, 1))
                if pool:
                    neg = pool[int(rng.integers(len(pool)))]
                    examples.append(self._encode(uid, neg, 0))
        return examples

    def _encode(self, uid: int, iid: int, label: int):
        return encode_example(
            self.users[uid],
            self.graph.items[iid],
            self.ffm_vocab,
            item_classes=self.matrices.item_ll_labels(iid),
            label=label,
        )

    def _ffm_model_fresh(self) -> FfmModel | None:
        if self.maturity.rating_count == 0 and not self.consumed:
            return None
        stale = (
            self.ffm_model is None
            or self.maturity.rating_count - self.ffm_fitted_at
            >= self.config.ffm_refit_ratings
        )
        if stale:
            self.ffm_vocab = FeatureVocab()
            examples = self._training_examples()
            if not examples:
                return None
            self.ffm_model, _ = ffm_train(
                examples,
                replace(self.config.ffm_train, seed=self.config.seed),
                n_features=self.ffm_vocab.n_features,
                n_fields=self.ffm_vocab.n_fields,
            )
            self.ffm_fitted_at = self.maturity.rating_count
        return self.ffm_model

    # ------------------------------------------------------------------
    # per-recommender score maps (item id -> score)

    def content_score_map(self, uid: int) -> dict[int, float]:
        return content_scores(self._require_state(uid), self.matrices)

    def hybrid_score_map(self, uid: int) -> dict[int, float]:
        scores, _ = hybrid_scores(
            self._require_state(uid),
            self.matrices,
            self.popularity,
            self.config.popularity_threshold,
        )
        return scores

    def demographic_score_map(self, uid: int) -> dict[int, float] | None:
        model = self._demo_model_fresh()
        if model is None or uid not in self.users:
            return None
        opinions = opinions_from_events(self.feedback_events)
        target = self.users[uid]
        cluster = model.assignments.get(uid)
        if cluster is None:
            cluster = model.predict(target)
        members = [
            (self.users[m], opinions.get(m, {}))
            for m in model.members(cluster)
            if m in self.users
        ]
        scores, flagged = demo.knn_predict(
            target, members, k_nn=self.config.knn_k, schema=model.schema
        )
        if flagged:
            return None
        exclude = self._rated_or_booked(uid)
        scores = {iid: s for iid, s in scores.items() if iid not in exclude}
        # map [-1, 1] onto [0, 1]; affine, so ordering and min-max survive
        return {iid: (s + 1.0) / 2.0 for iid, s in scores.items()} or None

    def collaborative_score_map(self, uid: int) -> dict[int, float] | None:
        model = self._ffm_model_fresh()
        if model is None:
            return None
        consumed = set(self.consumed.get(uid, {}))
        user = self.users[uid]
        was_frozen = self.ffm_vocab.frozen
        self.ffm_vocab.frozen = True
        try:
            scores = {}
            for iid in sorted(self.graph.items):
                if iid in consumed:
                    continue
                ex = self._encode(uid, iid, 0)
                _, prob = ffm_mod.ffm_predict(model, ex)
                scores[iid] = prob
        finally:
            self.ffm_vocab.frozen = was_frozen
        return scores or None

    def _rated_or_booked(self, uid: int) -> set[int]:
        out = set()
        for ev in self.feedback_events:
            if ev.user_id == uid and ev.kind in ("rate", "book"):
                out.add(ev.item_id)
        return out

    # ------------------------------------------------------------------
    # recommendation entry points

    def recommend_model(self, name: str, uid: int, n: int) -> RecList:
        """A single member recommender's ranked list (no context)."""
        if name == "content":
            return recommend_content(self._require_state(uid), self.matrices, n)
        if name == "hybrid":
            return recommend_hybrid(
                self._require_state(uid),
                self.matrices,
                self.popularity,
                n,
                self.config.popularity_threshold,
            )
        if name == "demographic":
            model = self._demo_model_fresh()
            if model is None:
                rec = RecList(user_id=uid)
                rec.flags.append("no_demographic_model")
                return rec
            opinions = opinions_from_events(self.feedback_events)
            return demo.recommend_demographic(
                self.users[uid], model, self.users, opinions, n,
                exclude=self._rated_or_booked(uid), k_nn=self.config.knn_k,
            )
        if name == "collaborative":
            model = self._ffm_model_fresh()
            if model is None:
                rec = RecList(user_id=uid)
                rec.flags.append("no_collaborative_model")
                return rec
            return ffm_mod.recommend_collaborative(
                self.users[uid], self.graph.items, model, self.ffm_vocab, n,
                item_classes={
                    iid: self.matrices.item_ll_labels(iid)
                    for iid in self.graph.items
                },
                consumed=set(self.consumed.get(uid, {})),
            )
        raise EngineError(f"unknown recommender {name!r}")

    def dismissed_items(self, uid: int) -> set[int]:
        return {
            ev.item_id
            for ev in self.feedback_events
            if ev.user_id == uid and ev.kind == "dismiss"
        }

    def ensemble_recommend(
        self, uid: int, n: int, ctx: ContextState | None = None
    ) -> RecList:
        """Context-filtered, weight-aggregated output of the active pool.

        Items the user explicitly dismissed are suppressed entirely; the
        trickle-up penalty alone cannot displace an item that only shares
        classes with the rest of the list.
        """
        self._require_state(uid)
        dismissed = self.dismissed_items(uid)
        phase = self.maturity.phase
        weights = update_weights(phase, self.maturity, self.config.phase)
        members: dict[str, dict[int, float] | None] = {}
        for name in ACTIVE_RECOMMENDERS[phase]:
            scores = {
                "content": self.content_score_map,
                "hybrid": self.hybrid_score_map,
                "demographic": self.demographic_score_map,
                "collaborative": self.collaborative_score_map,
            }[name](uid)
            if scores and dismissed:
                scores = {i: s for i, s in scores.items() if i not in dismissed}
            if scores and ctx is not None:
                user_ctx = ContextState(
                    hotel=ctx.hotel,
                    weather=ctx.weather,
                    now=ctx.now,
                    consumed_at=dict(self.consumed.get(uid, {})),
                )
                scores = apply_context(
                    scores, user_ctx, self.ctx_params, self.matrices,
                    self.graph.items,
                )
            members[name] = scores or None
        rec = aggregate_scores(members, weights, uid, n)
        state = self.prefs.get(uid)
        if state is not None and state.uniform_fallback:
            rec.flags.append("uniform_fallback")
        return rec

    # ------------------------------------------------------------------
    # serialization (used by snapshots)

    def state_dict(self) -> dict:
        def _pref(state: PreferenceState) -> dict:
            return {
                "user_id": state.user_id,
                "p_hl": state.p_hl.tolist(),
                "p_ll": state.p_ll.tolist(),
                "p_item": state.p_item.tolist(),
                "last_updated": state.last_updated,
                "has_feedback": state.has_feedback,
                "uniform_fallback": state.uniform_fallback,
            }

        demo_model = None
        if self.demo_model is not None:
            demo_model = {
                "k": self.demo_model.k,
                "gamma": self.demo_model.gamma,
                "numeric_prototypes": self.demo_model.numeric_prototypes.tolist(),
                "nominal_prototypes": self.demo_model.nominal_prototypes.tolist(),
                "assignments": {
                    str(u): c for u, c in sorted(self.demo_model.assignments.items())
                },
                "cost": self.demo_model.cost,
                "cost_history": self.demo_model.cost_history,
                "column_means": self.demo_model.column_means.tolist(),
                "column_stds": self.demo_model.column_stds.tolist(),
            }
        ffm_model = None
        if self.ffm_model is not None:
            ffm_model = {
                "d": self.ffm_model.d,
                "n_features": self.ffm_model.n_features,
                "n_fields": self.ffm_model.n_fields,
                "w0": self.ffm_model.w0,
                "w": self.ffm_model.w.tolist(),
                "v": self.ffm_model.v.tolist(),
            }

        return {
            "classes": {
                "hl": sorted(self.graph.hl_classes),
                "edges": sorted(self.graph.hl_ll_edges),
            },
            "items": [
                self.graph.items[iid].to_dict() for iid in sorted(self.graph.items)
            ],
            "links": [
                [iid, ll, score]
                for (iid, ll), score in sorted(self.graph.item_links.items())
            ],
            "users": [
                {
                    "user_id": u.user_id, "age": u.age, "ac_deg": u.ac_deg,
                    "budget": u.budget, "accom": u.accom, "gender": u.gender,
                    "job": u.job, "region": u.region, "group_comp": u.group_comp,
                }
                for u in (self.users[k] for k in sorted(self.users))
            ],
            "prefs": [_pref(self.prefs[k]) for k in sorted(self.prefs)],
            "feedback_events": [
                {
                    "user_id": e.user_id, "item_id": e.item_id, "kind": e.kind,
                    "rating": e.rating, "timestamp": e.timestamp,
                }
                for e in self.feedback_events
            ],
            "popularity": {
                "k": self.popularity.k,
                "counts": {str(i): c for i, c in sorted(self.popularity.counts.items())},
                "sums": {str(i): s for i, s in sorted(self.popularity.sums.items())},
            },
            "maturity": {
                "user_count": self.maturity.user_count,
                "rating_count": self.maturity.rating_count,
                "item_count": self.maturity.item_count,
                "phase": self.maturity.phase,
            },
            "consumed": {
                str(u): {str(i): t for i, t in sorted(m.items())}
                for u, m in sorted(self.consumed.items())
            },
            "demo_model": demo_model,
            "demo_fitted_at": self.demo_fitted_at,
            "ffm_model": ffm_model,
            "ffm_vocab": self.ffm_vocab.to_dict() if ffm_model else None,
            "ffm_fitted_at": self.ffm_fitted_at,
        }

    @classmethod
    def from_state_dict(
        cls, state: dict, config: EngineConfig | None = None
    ) -> "Engine":
        graph = OntologyGraph()
        for h, l in state["classes"]["edges"]:
            graph.add_class_edge(h, l)
        for h in state["classes"]["hl"]:
            graph.hl_classes.add(h)
        for item in state["items"]:
            rec = ItemRecord.from_dict(item)
            graph.items[rec.item_id] = rec
        for iid, ll, score in state["links"]:
            graph.item_links[(int(iid), ll)] = float(score)

        engine = cls(graph=graph, config=config)
        for u in state["users"]:
            engine.users[int(u["user_id"])] = UserRecord(**u)
        for p in state["prefs"]:
            ps = PreferenceState(
                user_id=int(p["user_id"]),
                p_hl=np.array(p["p_hl"], dtype=float),
                p_ll=np.array(p["p_ll"], dtype=float),
                p_item=np.array(p["p_item"], dtype=float),
                last_updated=p["last_updated"],
                has_feedback=p["has_feedback"],
                uniform_fallback=p["uniform_fallback"],
            )
            engine.prefs[ps.user_id] = ps
        engine.feedback_events = [
            FeedbackEvent(
                user_id=e["user_id"], item_id=e["item_id"], kind=e["kind"],
                rating=e["rating"], timestamp=e["timestamp"],
            )
            for e in state["feedback_events"]
        ]
        pop = state["popularity"]
        engine.popularity = PopularityStats(
            k=pop["k"],
            counts={int(i): c for i, c in pop["counts"].items()},
            sums={int(i): s for i, s in pop["sums"].items()},
        )
        m = state["maturity"]
        engine.maturity = MaturityState(
            user_count=m["user_count"], rating_count=m["rating_count"],
            item_count=m["item_count"], phase=m["phase"],
        )
        engine.consumed = {
            int(u): {int(i): t for i, t in items.items()}
            for u, items in state["consumed"].items()
        }
        if state["demo_model"] is not None:
            dm = state["demo_model"]
            engine.demo_model = ClusterModel(
                k=dm["k"],
                gamma=dm["gamma"],
                numeric_prototypes=np.array(dm["numeric_prototypes"], dtype=float),
                nominal_prototypes=np.array(dm["nominal_prototypes"], dtype=int),
                assignments={int(u): c for u, c in dm["assignments"].items()},
                cost=dm["cost"],
                cost_history=list(dm["cost_history"]),
                column_means=np.array(dm["column_means"], dtype=float),
                column_stds=np.array(dm["column_stds"], dtype=float),
            )
        engine.demo_fitted_at = state["demo_fitted_at"]
        if state["ffm_model"] is not None:
            fm = state["ffm_model"]
            engine.ffm_model = FfmModel(
                d=fm["d"], n_features=fm["n_features"], n_fields=fm["n_fields"],
                w0=fm["w0"], w=np.array(fm["w"], dtype=float),
                v=np.array(fm["v"], dtype=float),
            )
            engine.ffm_vocab = FeatureVocab.from_dict(state["ffm_vocab"])
        engine.ffm_fitted_at = state["ffm_fitted_at"]
        return engine
