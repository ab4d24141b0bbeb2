import numpy as np
import pytest

from tourrec.demographic import (
    DemographicError,
    MixedDistanceSchema,
    UserRecord,
    age_to_bin,
    choose_k,
    knee_point,
    knn_predict,
    kprototypes_fit,
    mixed_distance,
    opinions_from_events,
    recommend_demographic,
)
from tourrec.preferences import FeedbackEvent


def user(uid, age=1, ac_deg=1, budget=1, accom=1, gender="Male",
         job="blue collar", region="South Europe", group_comp="1Adlt"):
    return UserRecord(uid, age, ac_deg, budget, accom, gender, job, region,
                      group_comp)


def blob_users(seed=3, per_blob=100):
    """Three well-separated demographic blobs with tiny within-blob jitter."""
    rng = np.random.default_rng(seed)
    blobs = [
        dict(age=1, ac_deg=1, budget=1, accom=1, gender="Male",
             job="blue collar", region="South Europe", group_comp="1Adlt"),
        dict(age=5, ac_deg=4, budget=3, accom=4, gender="Female",
             job="white collar", region="Asia", group_comp="GrpFriends"),
        dict(age=3, ac_deg=2, budget=2, accom=2, gender="Male",
             job="white collar", region="North America",
             group_comp="2Adlt+Child"),
    ]
    users, labels = [], []
    uid = 0
    for b, base in enumerate(blobs):
        for _ in range(per_blob):
            fields = dict(base)
            if rng.random() < 0.2:   # jitter one ordinal by one level
                fields["ac_deg"] = int(np.clip(fields["ac_deg"] +
                                               rng.choice([-1, 1]), 1, 4))
            users.append(user(uid, **fields))
            labels.append(b)
            uid += 1
    return users, labels


def adjusted_rand(labels_a, labels_b):
    """Independent ARI oracle from the contingency-table formula."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    n = len(a)
    classes_a, classes_b = np.unique(a), np.unique(b)
    table = np.array([[np.sum((a == ca) & (b == cb)) for cb in classes_b]
                      for ca in classes_a])

    def comb2(x):
        return x * (x - 1) / 2

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(n)
    max_index = (sum_a + sum_b) / 2
    return (sum_ij - expected) / (max_index - expected)


class TestMixedDistance:
    def test_identical_users(self):
        assert mixed_distance(user(1), user(2)) == 0.0

    def test_maximum_case(self):
        u = user(1, age=1, ac_deg=1, budget=1, accom=1, gender="Male",
                 job="blue collar", region="Asia", group_comp="1Adlt")
        v = user(2, age=5, ac_deg=4, budget=3, accom=4, gender="Female",
                 job="white collar", region="Africa", group_comp="2Adlt")
        assert mixed_distance(u, v) == pytest.approx(1.0)

    def test_hand_computed_mixed_profile_distance(self):
        # ordinals 4/2/1/2 vs 5/4/2/3, nominals Female/blue collar/
        # North Europe/2Adlt vs Male/white collar/North Europe/GrpFriends
        u0 = user(0, age=4, ac_deg=2, budget=1, accom=2, gender="Female",
                  job="blue collar", region="North Europe", group_comp="2Adlt")
        u1 = user(1, age=5, ac_deg=4, budget=2, accom=3, gender="Male",
                  job="white collar", region="North Europe",
                  group_comp="GrpFriends")
        manhattan = (1 / 4 + 2 / 3 + 1 / 2 + 1 / 3) / 4
        jaccard = 1 - 1 / (2 * 4 - 1)
        expected = 0.5 * manhattan + 0.5 * jaccard
        assert mixed_distance(u0, u1) == pytest.approx(expected, abs=1e-12)
        assert mixed_distance(u0, u1) == pytest.approx(0.647321, abs=1e-6)

    def test_symmetry(self):
        u, v = user(1, age=2, region="Asia"), user(2, age=4, gender="Female")
        assert mixed_distance(u, v) == mixed_distance(v, u)

    def test_out_of_range_code_rejected(self):
        with pytest.raises(DemographicError):
            user(1, age=9)
        with pytest.raises(DemographicError):
            user(1, budget=0)
        with pytest.raises(DemographicError):
            user(1, region="Atlantis")

    def test_age_binning(self):
        assert age_to_bin(25) == 1
        assert age_to_bin(30) == 1
        assert age_to_bin(31) == 2
        assert age_to_bin(59) == 4
        assert age_to_bin(75) == 5
        with pytest.raises(DemographicError):
            age_to_bin(12)


class TestKPrototypes:
    def test_k1_prototype_is_mean_and_mode(self):
        users = [user(1, age=1, gender="Male"), user(2, age=3, gender="Male"),
                 user(3, age=2, gender="Female")]
        model = kprototypes_fit(users, k=1, seed=0)
        assert set(model.assignments.values()) == {0}
        # standardized mean is zero by construction
        np.testing.assert_allclose(model.numeric_prototypes[0],
                                   np.zeros(4), atol=1e-12)
        gender_idx = [n for n, _ in model.schema.nominals].index("gender")
        assert model.nominal_prototypes[0][gender_idx] == 0  # Male is mode

    def test_identical_users_cost_zero(self):
        users = [user(i, age=2, gender="Female") for i in range(6)]
        for k in (1, 2, 3):
            model = kprototypes_fit(users, k=k, seed=1)
            assert model.cost == pytest.approx(0.0, abs=1e-12)

    def test_three_blobs_recovered(self):
        users, truth = blob_users(per_blob=100)
        model = kprototypes_fit(users, k=3, seed=0)
        predicted = [model.assignments[u.user_id] for u in users]
        assert adjusted_rand(truth, predicted) >= 0.9

    def test_objective_non_increasing_multiple_seeds(self):
        users, _ = blob_users(per_blob=40)
        for seed in range(8):
            model = kprototypes_fit(users, k=4, seed=seed)
            history = model.cost_history
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_k_exceeding_users_rejected(self):
        with pytest.raises(DemographicError):
            kprototypes_fit([user(1), user(2)], k=3)

    def test_input_order_irrelevant(self):
        users, _ = blob_users(per_blob=20)
        a = kprototypes_fit(users, k=3, seed=5)
        b = kprototypes_fit(list(reversed(users)), k=3, seed=5)
        assert a.assignments == b.assignments
        assert a.cost == pytest.approx(b.cost, abs=1e-12)

    def test_seeded_reproducibility(self):
        users, _ = blob_users(per_blob=25)
        a = kprototypes_fit(users, k=3, seed=11)
        b = kprototypes_fit(users, k=3, seed=11)
        assert a.assignments == b.assignments
        assert a.cost_history == b.cost_history


class TestChooseK:
    def test_linear_curve_returns_k_min(self):
        assert knee_point([1, 2, 3, 4], [100.0, 75.0, 50.0, 25.0]) == 1

    def test_hand_chord_distances(self):
        assert knee_point([1, 2, 3, 4], [100.0, 30.0, 28.0, 27.0]) == 2

    def test_equal_bounds_short_circuit(self):
        users = [user(i) for i in range(5)]
        assert choose_k(users, 3, 3) == 3

    def test_three_blobs_knee_at_three(self):
        users, _ = blob_users(per_blob=60)
        assert choose_k(users, 1, 6, seed=0) == 3

    def test_bad_range_rejected(self):
        users = [user(i) for i in range(4)]
        with pytest.raises(DemographicError):
            choose_k(users, 2, 9)


class TestKnn:
    def test_single_neighbor_at_zero_distance(self):
        target = user(0)
        neighbor = (user(1), {5: 1.0})  # identical demographics, booked item 5
        scores, flagged = knn_predict(target, [neighbor])
        assert not flagged
        assert scores[5] == pytest.approx(1.0)

    def test_two_equidistant_opposite_opinions_cancel(self):
        target = user(0, age=2)
        n1 = (user(1, age=1), {5: 1.0})   # rating 5 -> +1
        n2 = (user(2, age=3), {5: -1.0})  # rating 1 -> -1
        scores, _ = knn_predict(target, [n1, n2])
        assert scores[5] == pytest.approx(0.0, abs=1e-12)

    def test_three_neighbor_weighted_mean_hand_value(self):
        schema = MixedDistanceSchema()
        target = user(0)
        neighbors = [
            (user(1, age=2), {7: 1.0}),                  # d = alpha*(1/4)/4
            (user(2, age=3), {7: 0.5, 8: -1.0}),         # d = alpha*(2/4)/4
            (user(3, age=5), {7: -1.0, 8: 0.5}),         # d = alpha*(4/4)/4
        ]
        dists = [mixed_distance(target, u, schema) for u, _ in neighbors]
        eps = 1e-6
        w = [1 / (d + eps) for d in dists]
        expected7 = (w[0] * 1.0 + w[1] * 0.5 + w[2] * -1.0) / sum(w)
        expected8 = (w[1] * -1.0 + w[2] * 0.5) / (w[1] + w[2])
        scores, _ = knn_predict(target, neighbors, schema=schema)
        assert scores[7] == pytest.approx(expected7, abs=1e-12)
        assert scores[8] == pytest.approx(expected8, abs=1e-12)

    def test_no_feedback_members_flagged(self):
        scores, flagged = knn_predict(user(0), [(user(1), {})])
        assert flagged and scores == {}

    def test_scores_bounded(self):
        rng = np.random.default_rng(0)
        target = user(0)
        members = []
        for i in range(1, 15):
            ops = {int(j): float(rng.uniform(-1, 1)) for j in rng.integers(0, 9, 3)}
            members.append((user(i, age=int(rng.integers(1, 6))), ops))
        scores, _ = knn_predict(target, members, k_nn=6)
        assert all(-1.0 - 1e-12 <= s <= 1.0 + 1e-12 for s in scores.values())

    def test_k_nn_limits_neighborhood(self):
        target = user(0)
        near = (user(1), {5: 1.0})
        far = (user(2, age=5, gender="Female", region="Africa",
                    group_comp="2Adlt"), {6: 1.0})
        scores, _ = knn_predict(target, [near, far], k_nn=1)
        assert 5 in scores and 6 not in scores


class TestOpinions:
    def test_rating_overrides_implicit(self):
        events = [
            FeedbackEvent(1, 5, "book", timestamp=1.0),
            FeedbackEvent(1, 5, "rate", rating=1.0, timestamp=2.0),
        ]
        ops = opinions_from_events(events)
        assert ops[1][5] == pytest.approx(-1.0)

    def test_latest_implicit_wins(self):
        events = [
            FeedbackEvent(1, 5, "bookmark", timestamp=1.0),
            FeedbackEvent(1, 5, "dismiss", timestamp=2.0),
        ]
        assert opinions_from_events(events)[1][5] == -1.0

    def test_rating_signal_mapping(self):
        events = [FeedbackEvent(1, 5, "rate", rating=4.0, timestamp=1.0)]
        assert opinions_from_events(events)[1][5] == pytest.approx(0.5)


class TestRecommendDemographic:
    def _setup(self):
        users = [user(i, age=1 + (i % 2)) for i in range(6)]
        model = kprototypes_fit(users, k=1, seed=0)
        users_by_id = {u.user_id: u for u in users}
        opinions = {
            1: {10: 1.0, 11: 0.5},
            2: {10: 1.0, 12: -1.0},
            3: {11: 1.0},
        }
        return users[0], model, users_by_id, opinions

    def test_ranking_and_exclusion(self):
        target, model, users_by_id, opinions = self._setup()
        rec = recommend_demographic(target, model, users_by_id, opinions, 3)
        assert rec.item_ids()[0] == 10
        rec2 = recommend_demographic(target, model, users_by_id, opinions, 3,
                                     exclude={10})
        assert 10 not in rec2.item_ids()

    def test_empty_prediction_flagged(self):
        target, model, users_by_id, _ = self._setup()
        rec = recommend_demographic(target, model, users_by_id, {}, 3)
        assert len(rec) == 0
        assert "no_neighbor_feedback" in rec.flags
