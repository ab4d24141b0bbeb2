"""Ranked recommendation lists shared by every recommender."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RecEntry:
    item_id: int
    score: float
    backfilled: bool = False
    # recommender name -> normalized contribution, filled by the ensemble
    sources: dict[str, float] = field(default_factory=dict)


@dataclass
class RecList:
    user_id: int
    entries: list[RecEntry] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def item_ids(self) -> list[int]:
        return [e.item_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def rank_scores(scores: dict[int, float], n: int) -> list[tuple[int, float]]:
    """Top-n (item, score) pairs, ties broken by ascending item id."""
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered[: max(n, 0)]
