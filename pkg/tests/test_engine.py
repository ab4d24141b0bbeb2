import numpy as np
import pytest

from tourrec.context import ContextState
from tourrec.engine import Engine, EngineConfig, EngineError
from tourrec.preferences import ETA_HL, ETA_LL


def demo_payload(uid, **overrides):
    payload = {
        "user_id": uid, "age": 2, "ac_deg": 2, "budget": 2, "accom": 2,
        "gender": "Female", "job": "white collar", "region": "North Europe",
        "group_comp": "2Adlt",
    }
    payload.update(overrides)
    return payload


def engine_with_user(uid=1, selection_label="Leisure"):
    eng = Engine(config=EngineConfig(seed=1))
    eng.apply_event("user_created", demo_payload(uid))
    sel = [1.0 if h == selection_label else 0.0 for h in eng.matrices.hl_labels]
    eng.apply_event("preferences_set", {"user_id": uid, "selection": sel})
    return eng


class TestEvents:
    def test_duplicate_user_rejected(self):
        eng = engine_with_user(1)
        with pytest.raises(EngineError, match="duplicate"):
            eng.apply_event("user_created", demo_payload(1))

    def test_unknown_user_feedback_rejected(self):
        eng = engine_with_user(1)
        with pytest.raises(EngineError, match="unknown user"):
            eng.apply_event("feedback",
                            {"user_id": 9, "item_id": 6, "kind": "book"})

    def test_unknown_item_rejected(self):
        eng = engine_with_user(1)
        with pytest.raises(EngineError, match="unknown item"):
            eng.apply_event("feedback",
                            {"user_id": 1, "item_id": 999, "kind": "book"})

    def test_feedback_requires_preferences(self):
        eng = Engine(config=EngineConfig(seed=1))
        eng.apply_event("user_created", demo_payload(2))
        with pytest.raises(EngineError, match="no preference state"):
            eng.apply_event("feedback",
                            {"user_id": 2, "item_id": 6, "kind": "book"})

    def test_unknown_kind_rejected(self):
        eng = Engine()
        with pytest.raises(EngineError, match="unknown event kind"):
            eng.apply_event("nonsense", {})

    def test_rating_event_updates_popularity_and_counts(self):
        eng = engine_with_user(1)
        eng.apply_event("rating", {"user_id": 1, "item_id": 6, "rating": 4.0})
        assert eng.maturity.rating_count == 1
        assert eng.popularity.n(6) == 1
        assert eng.maturity.phase == 2

    def test_item_added_extends_catalog_and_caches(self):
        eng = engine_with_user(1)
        before = eng.prefs[1].p_item.shape[0]
        eng.apply_event("item_added", {
            "item_id": 100, "name": "kayak tour",
            "categories": ["Sports", "Nature"],
        })
        assert 100 in eng.graph.items
        assert eng.maturity.item_count == 30
        assert eng.prefs[1].p_item.shape[0] == before + 1

    def test_trickle_up_matches_module_deltas(self):
        eng = engine_with_user(1, "Sports")
        idx_s = eng.matrices.hl_index("Sports")
        before_hl = eng.prefs[1].p_hl.copy()
        before_ll = eng.prefs[1].p_ll.copy()
        eng.apply_event("feedback",
                        {"user_id": 1, "item_id": 26, "kind": "dismiss"})
        after = eng.prefs[1]
        ll_sports = eng.matrices.ll_index("Sports")
        assert after.p_ll[ll_sports] == pytest.approx(
            before_ll[ll_sports] - ETA_LL)
        assert after.p_hl[idx_s] == pytest.approx(before_hl[idx_s] - ETA_HL)


class TestEnsemble:
    def test_phase1_equals_content(self):
        eng = engine_with_user(1, "Leisure")
        ensemble = eng.ensemble_recommend(1, 5)
        content = eng.recommend_model("content", 1, 5)
        assert ensemble.item_ids() == content.item_ids()

    def test_dismissed_item_leaves_future_lists(self):
        eng = engine_with_user(1, "Leisure")
        first = eng.ensemble_recommend(1, 5)
        top = first.item_ids()[0]
        eng.apply_event("feedback",
                        {"user_id": 1, "item_id": top, "kind": "dismiss"})
        second = eng.ensemble_recommend(1, 5)
        assert top not in second.item_ids()
        assert len(second) == 5

    def test_context_passes_through(self):
        eng = engine_with_user(1, "Sports")
        sunny = eng.ensemble_recommend(
            1, 5, ContextState(weather="sunny", now=0.0))
        rainy = eng.ensemble_recommend(
            1, 5, ContextState(weather="rainy", now=0.0))
        assert len(sunny) == 5 and len(rainy) == 5
        # sports items are outdoor-penalized in the rain; leisure-side items rise
        assert sunny.item_ids() != rainy.item_ids()

    def test_provenance_recorded(self):
        eng = engine_with_user(1, "Leisure")
        rec = eng.ensemble_recommend(1, 3)
        assert all(set(e.sources) == {"content"} for e in rec.entries)


class TestStateDict:
    def test_round_trip_preserves_recommendations(self):
        eng = engine_with_user(1, "Leisure")
        eng.apply_event("feedback", {"user_id": 1, "item_id": 6, "kind": "book"})
        eng.apply_event("rating", {"user_id": 1, "item_id": 6, "rating": 5.0})
        state = eng.state_dict()
        back = Engine.from_state_dict(state, config=eng.config)
        assert back.maturity.phase == eng.maturity.phase
        assert back.ensemble_recommend(1, 5).item_ids() == \
            eng.ensemble_recommend(1, 5).item_ids()
        np.testing.assert_array_equal(back.prefs[1].p_hl, eng.prefs[1].p_hl)
        assert back.state_dict() == state

    def test_round_trip_with_models(self):
        eng = Engine(config=EngineConfig(seed=3, demo_refit_users=1))
        for uid in range(12):
            eng.apply_event("user_created", demo_payload(
                uid, age=1 + uid % 5, gender="Male" if uid % 2 else "Female"))
            sel = [1.0 if h == "Sports" else 0.0 for h in eng.matrices.hl_labels]
            eng.apply_event("preferences_set", {"user_id": uid, "selection": sel})
        for uid in range(6):
            eng.apply_event("rating", {"user_id": uid, "item_id": 3 + uid,
                                       "rating": 4.0})
        eng._demo_model_fresh()
        eng._ffm_model_fresh()
        assert eng.demo_model is not None and eng.ffm_model is not None
        back = Engine.from_state_dict(eng.state_dict(), config=eng.config)
        assert back.state_dict() == eng.state_dict()
        assert back.demo_model.assignments == eng.demo_model.assignments
        np.testing.assert_array_equal(back.ffm_model.v, eng.ffm_model.v)
