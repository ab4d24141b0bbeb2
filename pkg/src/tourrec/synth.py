"""Schema-faithful synthetic users, latent preferences, and sparse ratings.

Demographics are sampled independently per attribute from configurable
marginals; latent preferences come from a multinomial-logit table over the
demographic levels (softmax of summed coefficients, no sampling noise); and
ratings are a noisy monotone map of per-user affinity ranks, revealed for a
seeded Bernoulli subset of user/item pairs.

Everything is keyed on (seed, user id[, item id]) so a 98-user run is a
strict prefix of a 1000-user run with the same seed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .demographic import UserRecord
from .ontology import ItemRecord, OntologyGraph, load_ontology

# Latent preference categories (the user-preference table vocabulary) plus
# the four catalog-only categories items are tagged with.
TABLE3_CATEGORIES = [
    "Beach", "Relax", "Shop", "Nightlife", "Theme park",
    "Gastro", "Sports", "Culture", "Nature", "Events",
]
EXTRA_CATEGORIES = ["Leisure", "Routes", "Towns", "ViewPoints"]
ALL_CATEGORIES = TABLE3_CATEGORIES + EXTRA_CATEGORIES


class SynthError(ValueError):
    pass


@dataclass
class LatentPrefRow:
    user_id: int
    probs: dict[str, float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise SynthError(f"user {self.user_id}: preferences sum to {total}")
        if any(p < 0 for p in self.probs.values()):
            raise SynthError(f"user {self.user_id}: negative preference mass")


def default_marginals() -> dict[str, dict]:
    """Per-attribute level probabilities for the demographic sampler."""
    return {
        "age": {1: 0.25, 2: 0.25, 3: 0.20, 4: 0.17, 5: 0.13},
        "ac_deg": {1: 0.15, 2: 0.30, 3: 0.25, 4: 0.30},
        "budget": {1: 0.30, 2: 0.45, 3: 0.25},
        "accom": {1: 0.20, 2: 0.45, 3: 0.22, 4: 0.13},
        "gender": {"Male": 0.5, "Female": 0.5},
        "job": {"blue collar": 0.45, "white collar": 0.55},
        "region": {
            "South Europe": 0.18, "North Europe": 0.22, "East Europe": 0.10,
            "North America": 0.15, "South America": 0.08, "Asia": 0.15,
            "Africa": 0.05, "Middle East": 0.07,
        },
        "group_comp": {
            "1Adlt": 0.15, "2Adlt": 0.40, "2Adlt+Child": 0.25, "GrpFriends": 0.20,
        },
    }


def default_coefficients() -> dict[tuple[str, str], dict[str, float]]:
    """Multinomial-logit weights: (attribute, level) -> category bumps.

    Unlisted categories have weight 0 for that level.
    """
    table: dict[tuple[str, str], dict[str, float]] = {}

    def put(attr: str, level, **bumps: float) -> None:
        table[(attr, str(level))] = {
            k.replace("_", " ") if k == "Theme_park" else k: v
            for k, v in bumps.items()
        }

    put("age", 1, Nightlife=1.0, Beach=0.7, Sports=0.7, Theme_park=0.4, Events=0.5)
    put("age", 2, Sports=0.5, Gastro=0.4, Nightlife=0.4, Beach=0.4, Events=0.3)
    put("age", 3, Culture=0.4, Gastro=0.5, Nature=0.3, Towns=0.3, Shop=0.2)
    put("age", 4, Culture=0.7, Nature=0.5, Relax=0.4, ViewPoints=0.4, Routes=0.3)
    put("age", 5, Culture=0.9, Relax=0.8, Nature=0.6, ViewPoints=0.5, Towns=0.4)

    put("ac_deg", 1, Events=0.3, Beach=0.3, Theme_park=0.2)
    put("ac_deg", 2, Sports=0.2, Events=0.2)
    put("ac_deg", 3, Gastro=0.2, Culture=0.2, Nightlife=0.1)
    put("ac_deg", 4, Culture=0.5, Towns=0.2, ViewPoints=0.2, Gastro=0.3)

    put("budget", 1, Beach=0.3, Nature=0.3, Routes=0.2, Towns=0.2)
    put("budget", 2, Gastro=0.2, Events=0.2, Shop=0.1)
    put("budget", 3, Gastro=0.6, Shop=0.5, Relax=0.4, Leisure=0.3)

    put("accom", 1, Nightlife=0.3, Sports=0.2, Routes=0.2)
    put("accom", 2, Gastro=0.2, Culture=0.2, Beach=0.2)
    put("accom", 3, Relax=0.4, Shop=0.3, Leisure=0.2)
    put("accom", 4, Relax=0.5, Leisure=0.4, Gastro=0.3)

    put("gender", "Male", Sports=0.4, Routes=0.1)
    put("gender", "Female", Shop=0.3, Relax=0.2, Culture=0.1)

    put("job", "blue collar", Sports=0.3, Events=0.2, Beach=0.2)
    put("job", "white collar", Culture=0.3, Gastro=0.3, Towns=0.1)

    put("region", "South Europe", Beach=0.3, Gastro=0.3)
    put("region", "North Europe", Beach=0.5, Culture=0.2, ViewPoints=0.2)
    put("region", "East Europe", Towns=0.3, Shop=0.2, Nature=0.2)
    put("region", "North America", Theme_park=0.3, Shop=0.3, Events=0.2)
    put("region", "South America", Sports=0.3, Nightlife=0.3, Beach=0.2)
    put("region", "Asia", Shop=0.4, ViewPoints=0.3, Towns=0.2)
    put("region", "Africa", Nature=0.4, Routes=0.3, ViewPoints=0.2)
    put("region", "Middle East", Shop=0.4, Leisure=0.3, Relax=0.2)

    put("group_comp", "1Adlt", Nightlife=0.4, Sports=0.2, Culture=0.2)
    put("group_comp", "2Adlt", Gastro=0.3, Relax=0.3, Culture=0.2)
    put("group_comp", "2Adlt+Child", Theme_park=0.8, Leisure=0.4, Nature=0.3,
        Beach=0.3)
    put("group_comp", "GrpFriends", Nightlife=0.7, Sports=0.4, Events=0.4,
        Beach=0.3)
    return table


@dataclass
class GenConfig:
    n_users: int = 98
    seed: int = 7
    marginals: dict = field(default_factory=default_marginals)
    coefficients: dict = field(default_factory=default_coefficients)
    sparsity: float = 0.007
    sigma: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise SynthError(f"sparsity {self.sparsity} outside (0, 1]")
        if self.sigma < 0:
            raise SynthError("noise scale must be >= 0")
        for attr, dist in self.marginals.items():
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise SynthError(f"{attr} marginals sum to {total}, expected 1")


@dataclass
class RatingEvent:
    user_id: int
    item_id: int
    rating: float


_ATTR_ORDER = ("age", "ac_deg", "budget", "accom", "gender", "job", "region",
               "group_comp")


def _sample_level(rng: np.random.Generator, dist: dict):
    levels = list(dist)
    probs = np.array([dist[l] for l in levels], dtype=float)
    return levels[int(rng.choice(len(levels), p=probs))]


def gen_user(seed: int, user_id: int, marginals: dict | None = None) -> UserRecord:
    """One user, fully determined by (seed, user_id)."""
    marginals = marginals or default_marginals()
    rng = np.random.default_rng([seed, 1, user_id])
    values = {attr: _sample_level(rng, marginals[attr]) for attr in _ATTR_ORDER}
    return UserRecord(user_id=user_id, **values)


def gen_users(cfg: GenConfig) -> list[UserRecord]:
    return [gen_user(cfg.seed, uid, cfg.marginals) for uid in range(cfg.n_users)]


def latent_prefs_for(user: UserRecord, coefficients: dict) -> LatentPrefRow:
    """Softmax over summed per-level coefficients; deterministic."""
    utilities = np.zeros(len(ALL_CATEGORIES))
    for attr in _ATTR_ORDER:
        key = (attr, str(getattr(user, attr)))
        if key not in coefficients:
            raise SynthError(f"missing coefficients for {key}")
        for cat, weight in coefficients[key].items():
            utilities[ALL_CATEGORIES.index(cat)] += weight
    utilities -= utilities.max()
    expd = np.exp(utilities)
    probs = expd / expd.sum()
    return LatentPrefRow(user.user_id, dict(zip(ALL_CATEGORIES, probs)))


def gen_latent_prefs(users: list[UserRecord], cfg: GenConfig) -> list[LatentPrefRow]:
    return [latent_prefs_for(u, cfg.coefficients) for u in users]


def category_affinity(prefs: LatentPrefRow, hl_class: str,
                      graph: OntologyGraph) -> float:
    """Preference mass an HL category collects from its LL children."""
    children = {l for (h, l) in graph.hl_ll_edges if h == hl_class}
    return sum(prefs.probs.get(l, 0.0) for l in children)


def item_affinity(prefs: LatentPrefRow, item: ItemRecord,
                  graph: OntologyGraph) -> float:
    """Mean category affinity over the item's category list."""
    if not item.categories:
        return 0.0
    return sum(
        category_affinity(prefs, c, graph) for c in item.categories
    ) / len(item.categories)


def hl_selection_from_prefs(
    prefs: LatentPrefRow,
    graph: OntologyGraph,
    hl_labels: list[str],
    frac: float = 0.75,
) -> np.ndarray:
    """Binary first-login selection: HL classes near the user's top interest.

    An HL class is judged by its strongest child rather than the summed
    mass, so branches with many children do not crowd out narrow ones.
    """
    masses = []
    for h in hl_labels:
        children = {l for (hh, l) in graph.hl_ll_edges if hh == h}
        masses.append(max((prefs.probs.get(l, 0.0) for l in children), default=0.0))
    masses = np.array(masses)
    if masses.max() <= 0:
        return np.zeros(len(hl_labels))
    return (masses >= frac * masses.max()).astype(float)


def _rank_scaled(affinities: dict[int, float]) -> dict[int, float]:
    """Map per-user affinities to their rank in [0, 1]; ties by item id."""
    ordered = sorted(affinities, key=lambda iid: (affinities[iid], iid))
    n = len(ordered)
    if n == 1:
        return {ordered[0]: 1.0}
    return {iid: pos / (n - 1) for pos, iid in enumerate(ordered)}


def rating_value(
    seed: int,
    user_id: int,
    item_id: int,
    rank_scaled: float,
    sigma: float,
) -> float:
    """Noisy monotone map from affinity rank to a rating in [1, 5]."""
    noise = float(np.random.default_rng([seed, 4, user_id, item_id]).normal(0, sigma))
    return round(float(np.clip(1.0 + 4.0 * rank_scaled + noise, 1.0, 5.0)), 2)


def user_rating_row(
    seed: int,
    user: UserRecord,
    prefs: LatentPrefRow,
    catalog: list[ItemRecord],
    graph: OntologyGraph,
    sigma: float,
) -> dict[int, float]:
    """Ground-truth rating for every catalog item (the dense matrix row)."""
    aff = {it.item_id: item_affinity(prefs, it, graph) for it in catalog}
    scaled = _rank_scaled(aff)
    return {
        iid: rating_value(seed, user.user_id, iid, scaled[iid], sigma)
        for iid in aff
    }


def gen_ratings(
    users: list[UserRecord],
    prefs: list[LatentPrefRow],
    catalog: list[ItemRecord],
    cfg: GenConfig,
    graph: OntologyGraph | None = None,
) -> list[RatingEvent]:
    """Seeded-Bernoulli sparse subset of the dense ground-truth ratings."""
    graph = graph or fixture_graph()
    prefs_by_id = {p.user_id: p for p in prefs}
    events: list[RatingEvent] = []
    for user in users:
        row = user_rating_row(cfg.seed, user, prefs_by_id[user.user_id],
                              catalog, graph, cfg.sigma)
        for item in catalog:
            pick = np.random.default_rng(
                [cfg.seed, 2, user.user_id, item.item_id]
            ).random()
            if pick < cfg.sparsity:
                events.append(RatingEvent(user.user_id, item.item_id,
                                          row[item.item_id]))
    return events


def fixture_graph() -> OntologyGraph:
    """The bundled two-level ontology with the 29-item catalog."""
    path = resources.files("tourrec.fixtures").joinpath("ontology.tsv")
    with path.open(encoding="utf-8") as fh:
        return load_ontology(fh)


def load_item_fixture() -> list[ItemRecord]:
    """The 29 catalog items, ordered by item id."""
    graph = fixture_graph()
    return [graph.items[iid] for iid in sorted(graph.items)]


# ---------------------------------------------------------------------------
# file exports

def users_csv(users: list[UserRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["UserID", "Age", "AcDeg", "Budget", "Accom", "Gender",
                     "Job", "Region", "GroupComp"])
    for u in users:
        writer.writerow([u.user_id, u.age, u.ac_deg, u.budget, u.accom,
                         u.gender, u.job, u.region, u.group_comp])
    return buf.getvalue()


def users_from_csv(source) -> list[UserRecord]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    users = []
    for row in reader:
        users.append(UserRecord(
            user_id=int(row["UserID"]), age=int(row["Age"]),
            ac_deg=int(row["AcDeg"]), budget=int(row["Budget"]),
            accom=int(row["Accom"]), gender=row["Gender"], job=row["Job"],
            region=row["Region"], group_comp=row["GroupComp"],
        ))
    return users


def prefs_csv(prefs: list[LatentPrefRow]) -> str:
    """Ten-category preference table; rows renormalized over those columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["UserID"] + TABLE3_CATEGORIES)
    for p in prefs:
        mass = [p.probs.get(c, 0.0) for c in TABLE3_CATEGORIES]
        total = sum(mass) or 1.0
        writer.writerow([p.user_id] + [f"{m / total:.6f}" for m in mass])
    return buf.getvalue()


def items_jsonl(catalog: list[ItemRecord]) -> str:
    return "".join(json.dumps(it.to_dict(), sort_keys=True) + "\n"
                   for it in catalog)


def ratings_csv(events: list[RatingEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["userid", "itemid", "rating"])
    for ev in events:
        writer.writerow([ev.user_id, ev.item_id, f"{ev.rating:.2f}"])
    return buf.getvalue()


def dense_matrix_csv(
    users: list[UserRecord],
    events: list[RatingEvent],
    catalog: list[ItemRecord],
) -> str:
    """User-by-item matrix with 0.00 marking unrated pairs."""
    by_pair = {(ev.user_id, ev.item_id): ev.rating for ev in events}
    item_ids = [it.item_id for it in catalog]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["userid"] + [str(i) for i in item_ids])
    for u in users:
        writer.writerow(
            [u.user_id]
            + [f"{by_pair.get((u.user_id, iid), 0.0):.2f}" for iid in item_ids]
        )
    return buf.getvalue()
