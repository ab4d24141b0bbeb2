"""Damped-mean item popularity cascaded in front of the content recommender.

An item with one 5-star rating should not beat an item with forty 4.5-star
ratings, so per-item means are shrunk toward the global mean by a damping
count k.  The hybrid recommender filters on the damped mean first and lets
the content recommender rank the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ontology import ContentMatrices
from .preferences import PreferenceState, content_scores
from .recs import RecEntry, RecList

DEFAULT_K = 5.0
DEFAULT_THRESHOLD = 2.5
FALLBACK_GLOBAL_MEAN = 3.0


class PopularityError(ValueError):
    pass


@dataclass
class PopularityStats:
    k: float = DEFAULT_K
    counts: dict[int, int] = field(default_factory=dict)
    sums: dict[int, float] = field(default_factory=dict)

    def add_rating(self, item_id: int, rating: float) -> None:
        if not 0.0 <= rating <= 5.0:
            raise PopularityError(f"rating {rating} outside [0, 5]")
        self.counts[item_id] = self.counts.get(item_id, 0) + 1
        self.sums[item_id] = self.sums.get(item_id, 0.0) + rating

    @property
    def global_mean(self) -> float:
        total = sum(self.counts.values())
        if total == 0:
            return FALLBACK_GLOBAL_MEAN
        return sum(self.sums.values()) / total

    def n(self, item_id: int) -> int:
        return self.counts.get(item_id, 0)

    def raw_mean(self, item_id: int) -> float | None:
        n = self.n(item_id)
        return self.sums[item_id] / n if n else None


def damped_mean(stats: PopularityStats, item_id: int) -> float:
    """(sum of ratings + k * global mean) / (count + k)."""
    n = stats.n(item_id)
    if n + stats.k == 0:
        raise PopularityError(
            f"damped mean undefined for unrated item {item_id} with k=0"
        )
    return (stats.sums.get(item_id, 0.0) + stats.k * stats.global_mean) / (n + stats.k)


def popularity_prefilter(
    item_ids,
    stats: PopularityStats,
    threshold: float = DEFAULT_THRESHOLD,
    use_raw_mean: bool = False,
) -> set[int]:
    """Items whose (damped) mean rating reaches the threshold.

    Unrated items pass unconditionally when they cannot be scored (k=0, or
    raw-mean mode); with damping they score the global mean like everything
    else.
    """
    if not 0.0 <= threshold <= 5.0:
        raise PopularityError(f"threshold {threshold} outside [0, 5]")
    keep: set[int] = set()
    for iid in item_ids:
        if stats.n(iid) == 0 and (stats.k == 0 or use_raw_mean):
            keep.add(iid)
            continue
        score = stats.raw_mean(iid) if use_raw_mean else damped_mean(stats, iid)
        if score >= threshold:
            keep.add(iid)
    return keep


def hybrid_scores(
    state: PreferenceState,
    matrices: ContentMatrices,
    stats: PopularityStats,
    threshold: float = DEFAULT_THRESHOLD,
    weights: tuple[float, float] | None = None,
    use_raw_mean: bool = False,
) -> tuple[dict[int, float], set[int]]:
    """Content scores restricted to prefilter survivors (plus the survivor set)."""
    survivors = popularity_prefilter(
        matrices.item_ids, stats, threshold, use_raw_mean
    )
    scores = content_scores(state, matrices, weights)
    return {iid: s for iid, s in scores.items() if iid in survivors}, survivors


def recommend_hybrid(
    state: PreferenceState,
    matrices: ContentMatrices,
    stats: PopularityStats,
    n: int,
    threshold: float = DEFAULT_THRESHOLD,
    weights: tuple[float, float] | None = None,
    use_raw_mean: bool = False,
) -> RecList:
    """Cascade: popularity filters, content ranks survivors.

    When fewer than n items survive, the filtered-out items are appended in
    content-score order and flagged as backfilled so list length stays
    stable for the UI.
    """
    scores = content_scores(state, matrices, weights)
    survivors = popularity_prefilter(matrices.item_ids, stats, threshold, use_raw_mean)
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))

    rec = RecList(user_id=state.user_id)
    for iid, s in ordered:
        if len(rec.entries) >= n:
            break
        if iid in survivors:
            rec.entries.append(RecEntry(iid, s))
    if len(rec.entries) < n:
        have = {e.item_id for e in rec.entries}
        for iid, s in ordered:
            if len(rec.entries) >= n:
                break
            if iid not in have:
                rec.entries.append(RecEntry(iid, s, backfilled=True))
        rec.flags.append("backfilled")
    if state.uniform_fallback:
        rec.flags.append("uniform_fallback")
    return rec
