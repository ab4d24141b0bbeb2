"""Phase tracking and score aggregation across the recommender pool.

Phases ratchet upward with user cardinality and rating density:
  1 content only; 2 hybrid (content + popularity cascade); 3 adds the
  demographic recommender; 4 adds the collaborative FFM, whose weight ramps
  up linearly as density grows past the phase-4 trigger.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .recs import RecEntry, RecList


class OrchestratorError(ValueError):
    pass


@dataclass
class MaturityState:
    user_count: int = 0
    rating_count: int = 0
    item_count: int = 0
    phase: int = 1

    @property
    def density(self) -> float:
        cells = self.user_count * self.item_count
        return self.rating_count / cells if cells else 0.0


@dataclass
class PhaseConfig:
    phase2_min_ratings: int = 1
    phase3_min_users: int = 150
    phase3_min_ratings: int = 150
    phase4_min_users: int = 225
    phase4_min_density: float = 0.025
    phase3_weights: dict[str, float] = field(
        default_factory=lambda: {"hybrid": 0.5, "demographic": 0.5}
    )
    phase4_entry_weights: dict[str, float] = field(
        default_factory=lambda: {"hybrid": 0.35, "demographic": 0.35,
                                 "collaborative": 0.30}
    )
    phase4_cap_weights: dict[str, float] = field(
        default_factory=lambda: {"hybrid": 0.25, "demographic": 0.25,
                                 "collaborative": 0.50}
    )

    def __post_init__(self):
        if self.phase4_min_users < self.phase3_min_users:
            raise OrchestratorError("phase-4 user trigger below phase-3's")
        for w in (self.phase3_weights, self.phase4_entry_weights,
                  self.phase4_cap_weights):
            if abs(sum(w.values()) - 1.0) > 1e-9:
                raise OrchestratorError(f"weights {w} do not sum to 1")


ACTIVE_RECOMMENDERS = {
    1: ("content",),
    2: ("hybrid",),
    3: ("hybrid", "demographic"),
    4: ("hybrid", "demographic", "collaborative"),
}


def determine_phase(
    stats: MaturityState, cfg: PhaseConfig, previous_phase: int = 1
) -> int:
    """Highest phase whose trigger is met, never below the previous phase."""
    phase = 1
    if stats.rating_count >= cfg.phase2_min_ratings:
        phase = 2
    if (stats.user_count >= cfg.phase3_min_users
            and stats.rating_count >= cfg.phase3_min_ratings):
        phase = 3
        if (stats.user_count >= cfg.phase4_min_users
                and stats.density >= cfg.phase4_min_density):
            phase = 4
    return max(phase, previous_phase)


def update_weights(
    phase: int, stats: MaturityState, cfg: PhaseConfig
) -> dict[str, float]:
    """Per-recommender weights for the current phase.

    In phase 4 the collaborative weight ramps linearly from its entry value
    to its cap as density grows from the trigger density to twice that.
    """
    if phase == 1:
        return {"content": 1.0}
    if phase == 2:
        return {"hybrid": 1.0}
    if phase == 3:
        return dict(cfg.phase3_weights)
    d0 = cfg.phase4_min_density
    ramp = 0.0 if d0 <= 0 else float(np.clip((stats.density - d0) / d0, 0.0, 1.0))
    entry, cap = cfg.phase4_entry_weights, cfg.phase4_cap_weights
    return {
        name: (1.0 - ramp) * entry[name] + ramp * cap[name]
        for name in entry
    }


def _minmax(scores: dict[int, float]) -> dict[int, float]:
    if not scores:
        return {}
    values = list(scores.values())
    lo, hi = min(values), max(values)
    if hi > lo:
        return {iid: (s - lo) / (hi - lo) for iid, s in scores.items()}
    return {iid: 0.5 for iid in scores}


def aggregate_scores(
    member_scores: dict[str, dict[int, float] | None],
    weights: dict[str, float],
    user_id: int,
    n: int,
) -> RecList:
    """Weighted sum of min-max-normalized member scores.

    Members contributing None (flagged empty) are dropped and the remaining
    weights renormalized; provenance of every contribution is recorded on
    the entries.
    """
    live = {name: s for name, s in member_scores.items() if s}
    rec = RecList(user_id=user_id)
    if not live:
        rec.flags.append("no_active_recommender_output")
        return rec
    dropped = set(member_scores) - set(live)
    total_w = sum(weights.get(name, 0.0) for name in live)
    if total_w <= 0:
        rec.flags.append("no_active_recommender_output")
        return rec

    normalized = {name: _minmax(s) for name, s in live.items()}
    combined: dict[int, float] = {}
    provenance: dict[int, dict[str, float]] = {}
    for name, scores in normalized.items():
        w = weights.get(name, 0.0) / total_w
        for iid, s in scores.items():
            combined[iid] = combined.get(iid, 0.0) + w * s
            provenance.setdefault(iid, {})[name] = w * s

    ordered = sorted(combined.items(), key=lambda kv: (-kv[1], kv[0]))
    rec.entries = [
        RecEntry(iid, float(s), sources=provenance[iid]) for iid, s in ordered[:n]
    ]
    for name in sorted(dropped):
        rec.flags.append(f"dropped:{name}")
    return rec
