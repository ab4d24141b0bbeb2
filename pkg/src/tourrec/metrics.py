"""Six-metric evaluation suite over per-user top-K recommendation lists.

Rank-aware precision/recall, catalog coverage, cross-user personalization,
intra-list diversity on one-hot item features, and self-information novelty.

Two recall conventions coexist on purpose.  The textbook average recall
sums recall-at-hit-positions (worked example: 0.75 where average precision
is 0.8333).  Popular metric packages instead reuse the precision summand
and only swap the 1/min(m, K) prefactor for 1/m, which makes MAP@K and
MAR@K numerically identical whenever every user has m <= K — the pattern
reproduced by ``mar_at_k(..., summand="precision")``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class EvalSet:
    """Recommendation lists plus the ground truth needed by each metric.

    item_features_* map item id -> one-hot vector (any common length) and
    consumption_counts map item id -> number of users that consumed it.
    """

    rec_lists: dict[int, list[int]]
    relevant: dict[int, set[int]]
    n_train_items: int
    item_universe: list[int] = field(default_factory=list)
    item_features_hl: dict[int, np.ndarray] = field(default_factory=dict)
    item_features_ll: dict[int, np.ndarray] = field(default_factory=dict)
    consumption_counts: dict[int, int] = field(default_factory=dict)

    @property
    def users(self) -> list[int]:
        return sorted(self.rec_lists)


@dataclass
class EvalReport:
    map_at_k: float
    mar_at_k: float
    coverage: float
    personalization: float
    diversity_hl: float
    diversity_ll: float
    novelty: float
    k: int
    n_users: int
    flags: dict[str, int] = field(default_factory=dict)

    # Table-style column order used by the CSV emitters.
    COLUMNS = (
        "MAP@K",
        "MAR@K",
        "Coverage",
        "Personalization",
        "Diversity HL",
        "Diversity LL",
        "Novelty",
    )

    def row(self) -> list[float]:
        return [
            self.map_at_k,
            self.mar_at_k,
            self.coverage,
            self.personalization,
            self.diversity_hl,
            self.diversity_ll,
            self.novelty,
        ]

    def csv_row(self) -> str:
        return ",".join(f"{x:.6f}" for x in self.row())

    def to_dict(self, per_user: dict | None = None) -> dict:
        payload = {
            "k": self.k,
            "n_users": self.n_users,
            "map_at_k": self.map_at_k,
            "mar_at_k": self.mar_at_k,
            "coverage": self.coverage,
            "personalization": self.personalization,
            "diversity_hl": self.diversity_hl,
            "diversity_ll": self.diversity_ll,
            "novelty": self.novelty,
            "flags": dict(self.flags),
        }
        if per_user is not None:
            payload["per_user"] = per_user
        return payload


def precision_recall_at_k(
    rec_list: list[int], relevant: set[int], k: int
) -> tuple[float, float]:
    """Precision and recall of the top-k prefix; (0, 0) when m = 0."""
    if k < 1:
        raise MetricsError(f"k must be >= 1, got {k}")
    hits = sum(1 for iid in rec_list[:k] if iid in relevant)
    precision = hits / k
    recall = hits / len(relevant) if relevant else 0.0
    return precision, recall


def _user_ap(rec_list: list[int], relevant: set[int], k: int) -> float:
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for pos, iid in enumerate(rec_list[:k], start=1):
        if iid in relevant:
            hits += 1
            total += hits / pos
    return total / min(len(relevant), k)


def _user_ar(
    rec_list: list[int], relevant: set[int], k: int, summand: str
) -> float:
    if not relevant:
        return 0.0
    m = len(relevant)
    hits = 0
    total = 0.0
    for pos, iid in enumerate(rec_list[:k], start=1):
        if iid in relevant:
            hits += 1
            total += hits / pos if summand == "precision" else hits / m
    return total / m


def map_at_k(evalset: EvalSet, k: int) -> float:
    """Mean over users of average precision at cut-off k."""
    users = evalset.users
    if not users:
        raise MetricsError("empty user set")
    return float(
        np.mean([_user_ap(evalset.rec_lists[u], evalset.relevant.get(u, set()), k)
                 for u in users])
    )


def mar_at_k(evalset: EvalSet, k: int, summand: str = "recall") -> float:
    """Mean over users of average recall at cut-off k.

    summand="recall" accumulates recall-at-hit-positions (the textbook
    formula); summand="precision" accumulates precision-at-hit-positions
    divided by m, which equals average precision whenever m <= k.
    """
    if summand not in ("recall", "precision"):
        raise MetricsError(f"unknown summand {summand!r}")
    users = evalset.users
    if not users:
        raise MetricsError("empty user set")
    return float(
        np.mean([_user_ar(evalset.rec_lists[u], evalset.relevant.get(u, set()), k,
                          summand)
                 for u in users])
    )


def coverage(evalset: EvalSet) -> float:
    """Fraction of the training catalog the recommender ever surfaces."""
    if evalset.n_train_items <= 0:
        raise MetricsError("n_train_items must be positive")
    recommended = {iid for lst in evalset.rec_lists.values() for iid in lst}
    return len(recommended) / evalset.n_train_items


def _binary_list_matrix(evalset: EvalSet) -> np.ndarray:
    universe = evalset.item_universe or sorted(
        {iid for lst in evalset.rec_lists.values() for iid in lst}
    )
    pos = {iid: i for i, iid in enumerate(universe)}
    mat = np.zeros((len(evalset.users), len(universe)))
    for row, u in enumerate(evalset.users):
        for iid in evalset.rec_lists[u]:
            if iid in pos:
                mat[row, pos[iid]] = 1.0
    return mat


def _pairwise_cosine_mean(mat: np.ndarray) -> float:
    """Mean of the strict upper triangle of the cosine similarity matrix."""
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = mat / safe[:, None]
    sim = unit @ unit.T
    iu = np.triu_indices(len(mat), k=1)
    return float(sim[iu].mean())


def personalization(evalset: EvalSet) -> float:
    """1 - mean pairwise cosine similarity between users' binary lists."""
    if len(evalset.users) < 2:
        raise MetricsError("personalization needs at least 2 users")
    return 1.0 - _pairwise_cosine_mean(_binary_list_matrix(evalset))


def diversity(evalset: EvalSet, features: dict[int, np.ndarray]) -> float:
    """1 - mean intra-list similarity on the given one-hot item features.

    Single-item lists contribute similarity 0 (nothing to compare).
    """
    per_user = []
    for u in evalset.users:
        lst = evalset.rec_lists[u]
        if len(lst) < 2:
            per_user.append(0.0)
            continue
        rows = []
        for iid in lst:
            if iid not in features:
                raise MetricsError(f"item {iid} has no feature row")
            rows.append(features[iid])
        per_user.append(_pairwise_cosine_mean(np.asarray(rows, dtype=float)))
    if not per_user:
        raise MetricsError("empty user set")
    return 1.0 - float(np.mean(per_user))


def novelty(evalset: EvalSet) -> float:
    """Mean per-list self-information, -log2(count(i) / |U|), count floored at 1."""
    users = evalset.users
    if not users:
        raise MetricsError("empty user set")
    n_users = len(users)
    per_user = []
    for u in users:
        lst = evalset.rec_lists[u]
        if not lst:
            per_user.append(0.0)
            continue
        infos = [
            -np.log2(max(evalset.consumption_counts.get(iid, 1), 1) / n_users)
            for iid in lst
        ]
        per_user.append(float(np.mean(infos)))
    return float(np.mean(per_user))


def per_user_breakdown(evalset: EvalSet, k: int) -> dict[int, dict]:
    """Per-user rank metrics backing the aggregate report."""
    out: dict[int, dict] = {}
    for u in evalset.users:
        lst = evalset.rec_lists[u]
        rel = evalset.relevant.get(u, set())
        precision, recall = precision_recall_at_k(lst, rel, k) if lst else (0.0, 0.0)
        out[u] = {
            "list_length": len(lst),
            "relevant_count": len(rel),
            "hits_at_k": sum(1 for iid in lst[:k] if iid in rel),
            "precision_at_k": precision,
            "recall_at_k": recall,
            "average_precision": _user_ap(lst, rel, k),
            "average_recall": _user_ar(lst, rel, k, "recall"),
            "flagged_no_relevant": not rel,
        }
    return out


def evaluate_all(
    evalset: EvalSet, k: int, mar_summand: str = "recall"
) -> EvalReport:
    """Run the whole suite; flags count degenerate users instead of hiding them."""
    flags = {
        "users_without_relevant": sum(
            1 for u in evalset.users if not evalset.relevant.get(u)
        ),
        "users_with_short_list": sum(
            1 for u in evalset.users if len(evalset.rec_lists[u]) < k
        ),
    }
    n_users = len(evalset.users)
    return EvalReport(
        map_at_k=map_at_k(evalset, k),
        mar_at_k=mar_at_k(evalset, k, mar_summand),
        coverage=coverage(evalset),
        personalization=personalization(evalset) if n_users >= 2 else 0.0,
        diversity_hl=diversity(evalset, evalset.item_features_hl),
        diversity_ll=diversity(evalset, evalset.item_features_ll),
        novelty=novelty(evalset),
        k=k,
        n_users=n_users,
        flags=flags,
    )
