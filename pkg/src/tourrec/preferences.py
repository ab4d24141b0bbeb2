"""Per-user preference vectors over the two class levels plus an item cache.

A user starts from a binary high-level selection.  Preferences flow down by
matrix multiplication (HL -> LL -> item) and feedback flows back up with a
larger step at the low level than at the high level, so a dismissed golf
lesson hurts "Golf" a lot and "Sports" only a little.

Item scores average the preference mass over an item's linked classes rather
than summing it; otherwise items with many categories would outrank a
perfectly matching single-category item.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ontology import ContentMatrices
from .recs import RecEntry, RecList

# Feedback signal per event kind; a rating r maps to (r - 3) / 2.
SIGNALS = {"book": 1.0, "bookmark": 0.5, "dismiss": -1.0}

ETA_LL = 0.2   # low-level step per unit of signal
ETA_HL = 0.05  # high-level step, deliberately smaller

# Ensemble weights (w_hl, w_ll) once feedback exists; before any feedback
# only the high-level vector carries information, so w_hl is forced to 1.
DEFAULT_WEIGHTS = (0.3, 0.7)


class PreferenceError(ValueError):
    pass


@dataclass
class FeedbackEvent:
    user_id: int
    item_id: int
    kind: str
    rating: float | None = None
    timestamp: float = 0.0

    def __post_init__(self):
        if self.kind not in ("book", "bookmark", "dismiss", "rate"):
            raise PreferenceError(f"unknown feedback kind {self.kind!r}")
        if (self.rating is not None) != (self.kind == "rate"):
            raise PreferenceError("rating present exactly when kind is 'rate'")
        if self.rating is not None and not 0.0 <= self.rating <= 5.0:
            raise PreferenceError(f"rating {self.rating} outside [0, 5]")

    def signal(self) -> float:
        if self.kind == "rate":
            return (self.rating - 3.0) / 2.0
        return SIGNALS[self.kind]


@dataclass
class PreferenceState:
    user_id: int
    p_hl: np.ndarray
    p_ll: np.ndarray
    p_item: np.ndarray
    last_updated: float = 0.0
    has_feedback: bool = False
    uniform_fallback: bool = False

    def copy(self) -> "PreferenceState":
        return replace(
            self,
            p_hl=self.p_hl.copy(),
            p_ll=self.p_ll.copy(),
            p_item=self.p_item.copy(),
        )


def _maxnorm(vec: np.ndarray) -> np.ndarray:
    top = vec.max() if vec.size else 0.0
    return vec / top if top > 0 else vec


def _item_scores(p_ll: np.ndarray, matrices: ContentMatrices) -> np.ndarray:
    """Mean LL preference over each item's linked classes, max-normalized."""
    degrees = matrices.ll_item.sum(axis=0)
    raw = p_ll @ matrices.ll_item
    with np.errstate(invalid="ignore"):
        mean = np.where(degrees > 0, raw / np.maximum(degrees, 1.0), 0.0)
    return _maxnorm(mean)


def propagate_down(
    state: PreferenceState, matrices: ContentMatrices
) -> tuple[np.ndarray, np.ndarray]:
    """Push the HL vector to LL and item level.

    Vectors are normalized by their max component so a single dominant
    interest is not diluted; an all-zero selection falls back to a uniform
    0.5 LL vector (flagged on the state by the caller).
    """
    if state.p_hl.shape[0] != matrices.hl_ll.shape[0]:
        raise PreferenceError(
            f"stale p_hl: length {state.p_hl.shape[0]}, "
            f"ontology has {matrices.hl_ll.shape[0]} HL classes"
        )
    p_ll = _maxnorm(state.p_hl @ matrices.hl_ll)
    if p_ll.size and p_ll.max() == 0.0:
        p_ll = np.full(matrices.hl_ll.shape[1], 0.5)
    p_item = _item_scores(p_ll, matrices)
    return p_ll, p_item


def init_preferences(
    user_id: int, hl_selection, matrices: ContentMatrices
) -> PreferenceState:
    """Create a state from the first-login binary HL selection."""
    p_hl = np.asarray(hl_selection, dtype=float)
    if p_hl.shape[0] != matrices.hl_ll.shape[0]:
        raise PreferenceError(
            f"selection length {p_hl.shape[0]} != {matrices.hl_ll.shape[0]} HL classes"
        )
    if np.any((p_hl < 0) | (p_hl > 1)):
        raise PreferenceError("selection components must lie in [0, 1]")
    state = PreferenceState(
        user_id=user_id,
        p_hl=p_hl,
        p_ll=np.zeros(matrices.hl_ll.shape[1]),
        p_item=np.zeros(matrices.ll_item.shape[1]),
    )
    state.uniform_fallback = bool(p_hl.size and p_hl.max() == 0.0)
    state.p_ll, state.p_item = propagate_down(state, matrices)
    return state


def refresh_item_cache(state: PreferenceState, matrices: ContentMatrices) -> None:
    """Recompute p_item after the catalog changed, keeping p_hl/p_ll."""
    if state.p_ll.shape[0] != matrices.ll_item.shape[0]:
        raise PreferenceError(
            f"stale p_ll: length {state.p_ll.shape[0]}, "
            f"ontology has {matrices.ll_item.shape[0]} LL classes"
        )
    state.p_item = _item_scores(state.p_ll, matrices)


def content_scores(
    state: PreferenceState,
    matrices: ContentMatrices,
    weights: tuple[float, float] | None = None,
) -> dict[int, float]:
    """Blended per-item score from both preference levels."""
    if weights is None:
        weights = DEFAULT_WEIGHTS if state.has_feedback else (1.0, 0.0)
    w_hl, w_ll = weights
    if w_hl < 0 or w_ll < 0 or abs(w_hl + w_ll - 1.0) > 1e-9:
        raise PreferenceError(f"weights {weights} must be nonnegative and sum to 1")

    hl_derived, _ = propagate_down(
        PreferenceState(state.user_id, state.p_hl, state.p_ll, state.p_item), matrices
    )
    s_hl = _item_scores(hl_derived, matrices)
    s_ll = _item_scores(state.p_ll, matrices)
    blended = w_hl * s_hl + w_ll * s_ll
    return {iid: float(blended[i]) for i, iid in enumerate(matrices.item_ids)}


def recommend_content(
    state: PreferenceState,
    matrices: ContentMatrices,
    n: int,
    weights: tuple[float, float] | None = None,
) -> RecList:
    """Top-n items by blended content score, ties by ascending item id."""
    scores = content_scores(state, matrices, weights)
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    rec = RecList(user_id=state.user_id)
    rec.entries = [RecEntry(iid, s) for iid, s in ordered[:n]]
    if state.uniform_fallback:
        rec.flags.append("uniform_fallback")
    return rec


def apply_feedback(
    state: PreferenceState,
    event: FeedbackEvent,
    matrices: ContentMatrices,
    eta_ll: float = ETA_LL,
    eta_hl: float = ETA_HL,
) -> PreferenceState:
    """Trickle the feedback signal up into the LL and HL vectors.

    Each LL class linked to the item moves by eta_ll * signal, each distinct
    HL parent of those classes by eta_hl * signal; everything is clamped to
    [0, 1] and the item cache recomputed.
    """
    if event.user_id != state.user_id:
        raise PreferenceError(
            f"event user {event.user_id} does not match state user {state.user_id}"
        )
    if event.item_id not in matrices.item_ids:
        raise PreferenceError(f"unknown item {event.item_id}")

    f = event.signal()
    new = state.copy()
    item_col = matrices.ll_item[:, matrices.item_index(event.item_id)]
    ll_idx = np.flatnonzero(item_col)
    new.p_ll[ll_idx] = np.clip(new.p_ll[ll_idx] + eta_ll * f, 0.0, 1.0)
    if ll_idx.size:
        hl_mask = matrices.hl_ll[:, ll_idx].max(axis=1) > 0
        hl_idx = np.flatnonzero(hl_mask)
        new.p_hl[hl_idx] = np.clip(new.p_hl[hl_idx] + eta_hl * f, 0.0, 1.0)
    new.p_item = _item_scores(new.p_ll, matrices)
    new.has_feedback = True
    new.uniform_fallback = False
    new.last_updated = event.timestamp
    return new
