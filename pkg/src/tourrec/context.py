"""Context-aware pre-filtering: location cutoff, weather and repetition penalties.

Location is a hard filter (partners too far from the hotel are dropped, a
distance-decay variant exists behind a flag), while weather and repetition
act as soft multipliers in [0, 1] on the already-scored candidates.
Repetition willingness follows 1 - exp(-dt / tau) with a per-class time
constant: you will repeat a restaurant long before you repeat a museum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

from .ontology import ContentMatrices, ItemRecord

WEATHER_CONDITIONS = ("sunny", "cloudy", "rainy")
EARTH_RADIUS_KM = 6371.0088
DEFAULT_RADIUS_KM = 50.0
DECAY_LAMBDA_KM = 25.0
DEFAULT_TAU_DAYS = 30.0
DAY_SECONDS = 86400.0


class ContextError(ValueError):
    pass


@dataclass
class ContextState:
    hotel: tuple[float, float] | None = None
    weather: str | None = None
    now: float = 0.0
    # user consumption history: item_id -> last consumption timestamp
    consumed_at: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.weather is not None and self.weather not in WEATHER_CONDITIONS:
            raise ContextError(f"unknown weather condition {self.weather!r}")


@dataclass
class ClassContextParams:
    # class label -> condition -> factor in [0,1]; missing entries mean 1.0
    weather: dict[str, dict[str, float]] = field(default_factory=dict)
    # class label -> repetition time constant in days
    tau_days: dict[str, float] = field(default_factory=dict)
    default_tau_days: float = DEFAULT_TAU_DAYS

    def __post_init__(self):
        for cls, table in self.weather.items():
            for cond, factor in table.items():
                if cond not in WEATHER_CONDITIONS:
                    raise ContextError(f"{cls}: unknown condition {cond!r}")
                if not 0.0 <= factor <= 1.0:
                    raise ContextError(f"{cls}/{cond}: factor {factor} outside [0,1]")
        for cls, tau in self.tau_days.items():
            if tau <= 0:
                raise ContextError(f"{cls}: tau must be positive, got {tau}")

    def tau_for(self, ll_class: str) -> float:
        return self.tau_days.get(ll_class, self.default_tau_days)

    @classmethod
    def from_json(cls, source) -> "ClassContextParams":
        if hasattr(source, "read"):
            payload = json.load(source)
        else:
            with open(source, encoding="utf-8") as fh:
                payload = json.load(fh)
        weather = {}
        tau = {}
        for label, entry in payload.items():
            if "weather" in entry:
                weather[label] = {k: float(v) for k, v in entry["weather"].items()}
            if "tau_days" in entry:
                tau[label] = float(entry["tau_days"])
        return cls(weather=weather, tau_days=tau)


def load_default_params() -> ClassContextParams:
    path = resources.files("tourrec.fixtures").joinpath("context_params.json")
    with path.open(encoding="utf-8") as fh:
        return ClassContextParams.from_json(fh)


def _check_coords(point: tuple[float, float]) -> None:
    lat, lon = point
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise ContextError(f"invalid coordinates ({lat}, {lon})")


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in kilometers."""
    _check_coords(a)
    _check_coords(b)
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def location_filter(
    items: dict[int, ItemRecord],
    hotel: tuple[float, float],
    radius_km: float = DEFAULT_RADIUS_KM,
) -> set[int]:
    """Items within radius of the hotel; location-free offers always pass."""
    if radius_km <= 0:
        raise ContextError(f"radius must be positive, got {radius_km}")
    _check_coords(hotel)
    keep = set()
    for iid, item in items.items():
        if item.location is None or haversine_km(hotel, item.location) <= radius_km:
            keep.add(iid)
    return keep


def location_decay(
    item: ItemRecord,
    hotel: tuple[float, float],
    lam_km: float = DECAY_LAMBDA_KM,
) -> float:
    """exp(-distance / lambda) soft alternative to the hard cutoff."""
    if item.location is None:
        return 1.0
    return math.exp(-haversine_km(hotel, item.location) / lam_km)


def weather_penalty(
    ll_class: str, condition: str | None, params: ClassContextParams
) -> float:
    """Table lookup; anything missing means no penalty."""
    if condition is None:
        return 1.0
    if condition not in WEATHER_CONDITIONS:
        raise ContextError(f"unknown weather condition {condition!r}")
    return params.weather.get(ll_class, {}).get(condition, 1.0)


def repetition_willingness(
    ll_class: str, elapsed: float | None, params: ClassContextParams
) -> float:
    """1 - exp(-elapsed / tau_class); never-consumed items are fully willing."""
    if elapsed is None:
        return 1.0
    if elapsed < 0:
        raise ContextError(f"elapsed time must be >= 0, got {elapsed}")
    tau = params.tau_for(ll_class) * DAY_SECONDS
    return 1.0 - math.exp(-elapsed / tau)


def apply_context(
    scored: dict[int, float],
    ctx: ContextState,
    params: ClassContextParams,
    matrices: ContentMatrices,
    items: dict[int, ItemRecord],
    radius_km: float = DEFAULT_RADIUS_KM,
    location_mode: str = "hard",
) -> dict[int, float]:
    """Filter and penalize scored candidates for the request context.

    Items failing the location cutoff are dropped; every survivor's score is
    multiplied by the most permissive weather factor and the most restrictive
    repetition willingness across its linked classes.
    """
    if location_mode not in ("hard", "decay"):
        raise ContextError(f"unknown location mode {location_mode!r}")
    if any(s < 0 for s in scored.values()):
        raise ContextError("context adjustment expects nonnegative scores")

    if ctx.hotel is not None and location_mode == "hard":
        in_range = location_filter(
            {iid: items[iid] for iid in scored if iid in items},
            ctx.hotel,
            radius_km,
        )
        scored = {iid: s for iid, s in scored.items() if iid in in_range}

    adjusted: dict[int, float] = {}
    for iid, score in scored.items():
        classes = matrices.item_ll_labels(iid) if iid in items else []
        factor = 1.0
        if ctx.hotel is not None and location_mode == "decay":
            factor *= location_decay(items[iid], ctx.hotel)
        if classes:
            factor *= max(weather_penalty(c, ctx.weather, params) for c in classes)
        elapsed = None
        if iid in ctx.consumed_at:
            elapsed = max(ctx.now - ctx.consumed_at[iid], 0.0)
        if elapsed is not None:
            willing = [repetition_willingness(c, elapsed, params)
                       for c in (classes or [""])]
            factor *= min(willing)
        adjusted[iid] = score * factor
    return adjusted
