"""Mixed-type user clustering and cluster-local kNN affinity prediction.

K-Prototypes alternates Lloyd assignment/update steps over a cost that adds
squared Euclidean distance on standardized ordinal columns to a gamma-
weighted mismatch count on nominal columns.  The cluster count is picked by
the knee of the cost curve.  Inside a user's cluster, a kNN with a
Manhattan+Jaccard distance predicts item affinity from neighbors' feedback,
weighting each neighbor inversely to their distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AGE_BINS = ["18-30", "31-40", "41-50", "51-60", "60+"]
ACADEMIC_DEGREES = ["None", "High School", "Some College", "College Degree"]
BUDGETS = ["Low", "Mid", "High"]
ACCOMMODATIONS = ["Single", "Double", "Suite", "Villa"]
GENDERS = ["Male", "Female"]
JOBS = ["blue collar", "white collar"]
REGIONS = [
    "South Europe",
    "North Europe",
    "East Europe",
    "North America",
    "South America",
    "Asia",
    "Africa",
    "Middle East",
]
GROUP_COMPS = ["1Adlt", "2Adlt", "2Adlt+Child", "GrpFriends"]


class DemographicError(ValueError):
    pass


def age_to_bin(years: int) -> int:
    """Raw age in years -> 1-based bin code per the age-bin level list."""
    if years < 18:
        raise DemographicError(f"age {years} below the 18-30 bin")
    for code, upper in enumerate((30, 40, 50, 60), start=1):
        if years <= upper:
            return code
    return 5


@dataclass
class UserRecord:
    user_id: int
    age: int          # 1-based bin code
    ac_deg: int       # 1-based code into ACADEMIC_DEGREES
    budget: int       # 1-based code into BUDGETS
    accom: int        # 1-based code into ACCOMMODATIONS
    gender: str
    job: str
    region: str
    group_comp: str

    def __post_init__(self):
        checks = [
            ("age", self.age, len(AGE_BINS)),
            ("ac_deg", self.ac_deg, len(ACADEMIC_DEGREES)),
            ("budget", self.budget, len(BUDGETS)),
            ("accom", self.accom, len(ACCOMMODATIONS)),
        ]
        for name, code, size in checks:
            if not 1 <= code <= size:
                raise DemographicError(f"{name} code {code} outside 1..{size}")
        vocab_checks = [
            ("gender", self.gender, GENDERS),
            ("job", self.job, JOBS),
            ("region", self.region, REGIONS),
            ("group_comp", self.group_comp, GROUP_COMPS),
        ]
        for name, value, vocab in vocab_checks:
            if value not in vocab:
                raise DemographicError(f"{name} value {value!r} not in {vocab}")


# (attribute, range) for ordinals; vocabularies for nominals
ORDINAL_ATTRS = [("age", 4.0), ("ac_deg", 3.0), ("budget", 2.0), ("accom", 3.0)]
NOMINAL_ATTRS = [
    ("gender", GENDERS),
    ("job", JOBS),
    ("region", REGIONS),
    ("group_comp", GROUP_COMPS),
]


@dataclass
class MixedDistanceSchema:
    ordinals: list[tuple[str, float]] = field(
        default_factory=lambda: list(ORDINAL_ATTRS)
    )
    nominals: list[tuple[str, list[str]]] = field(
        default_factory=lambda: list(NOMINAL_ATTRS)
    )
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or abs(self.alpha + self.beta - 1) > 1e-9:
            raise DemographicError("alpha and beta must be >= 0 and sum to 1")
        if any(r <= 0 for _, r in self.ordinals):
            raise DemographicError("ordinal ranges must be positive")


def _ordinal_row(user: UserRecord, schema: MixedDistanceSchema) -> np.ndarray:
    return np.array([float(getattr(user, name)) for name, _ in schema.ordinals])


def _nominal_row(user: UserRecord, schema: MixedDistanceSchema) -> np.ndarray:
    codes = []
    for name, vocab in schema.nominals:
        value = getattr(user, name)
        if value not in vocab:
            raise DemographicError(f"{name} value {value!r} not in schema vocabulary")
        codes.append(vocab.index(value))
    return np.array(codes, dtype=int)


def mixed_distance(
    u: UserRecord, v: UserRecord, schema: MixedDistanceSchema | None = None
) -> float:
    """Range-normalized Manhattan on ordinals + Jaccard distance on nominals.

    The Jaccard part compares the sets of (attribute, value) pairs, so two
    users matching on every nominal attribute are at distance 0 and users
    matching on none are at distance 1.
    """
    schema = schema or MixedDistanceSchema()
    uo, vo = _ordinal_row(u, schema), _ordinal_row(v, schema)
    ranges = np.array([r for _, r in schema.ordinals])
    manhattan = float(np.mean(np.abs(uo - vo) / ranges)) if len(ranges) else 0.0

    un, vn = _nominal_row(u, schema), _nominal_row(v, schema)
    n_nom = len(schema.nominals)
    if n_nom:
        matches = int((un == vn).sum())
        union = 2 * n_nom - matches
        jaccard = 1.0 - matches / union
    else:
        jaccard = 0.0
    return schema.alpha * manhattan + schema.beta * jaccard


def _distance_matrix(
    target: UserRecord, others: list[UserRecord], schema: MixedDistanceSchema
) -> np.ndarray:
    if not others:
        return np.zeros(0)
    uo = _ordinal_row(target, schema)
    un = _nominal_row(target, schema)
    oo = np.stack([_ordinal_row(o, schema) for o in others])
    on = np.stack([_nominal_row(o, schema) for o in others])
    ranges = np.array([r for _, r in schema.ordinals])
    manhattan = np.mean(np.abs(oo - uo) / ranges, axis=1)
    matches = (on == un).sum(axis=1)
    union = 2 * len(schema.nominals) - matches
    jaccard = 1.0 - matches / union
    return schema.alpha * manhattan + schema.beta * jaccard


@dataclass
class ClusterModel:
    k: int
    gamma: float
    numeric_prototypes: np.ndarray     # (k, |O|), standardized space
    nominal_prototypes: np.ndarray     # (k, |N|), vocabulary codes
    assignments: dict[int, int]        # user_id -> cluster
    cost: float
    cost_history: list[float]
    column_means: np.ndarray
    column_stds: np.ndarray
    schema: MixedDistanceSchema = field(default_factory=MixedDistanceSchema)

    def predict(self, user: UserRecord) -> int:
        z = (_ordinal_row(user, self.schema) - self.column_means) / self.column_stds
        codes = _nominal_row(user, self.schema)
        numeric = ((self.numeric_prototypes - z) ** 2).sum(axis=1)
        mismatch = (self.nominal_prototypes != codes).sum(axis=1)
        return int(np.argmin(numeric + self.gamma * mismatch))

    def members(self, cluster: int) -> list[int]:
        return sorted(u for u, c in self.assignments.items() if c == cluster)


def _prototype_cost(
    z: np.ndarray, codes: np.ndarray, num_p: np.ndarray, nom_p: np.ndarray,
    gamma: float,
) -> np.ndarray:
    """Cost of every point against every prototype, shape (n, k)."""
    numeric = ((z[:, None, :] - num_p[None, :, :]) ** 2).sum(axis=2)
    mismatch = (codes[:, None, :] != nom_p[None, :, :]).sum(axis=2)
    return numeric + gamma * mismatch


def kprototypes_fit(
    users: list[UserRecord],
    k: int,
    gamma: float | None = None,
    seed: int = 0,
    schema: MixedDistanceSchema | None = None,
    max_iter: int = 100,
) -> ClusterModel:
    """Lloyd-style K-Prototypes with seeded, order-independent behavior.

    Users are canonicalized by id before anything touches the RNG, so
    permuting the input changes nothing.  Empty clusters are re-seeded to
    the point currently farthest from its own prototype.
    """
    if not users:
        raise DemographicError("no users to cluster")
    if k < 1:
        raise DemographicError(f"k must be >= 1, got {k}")
    if k > len(users):
        raise DemographicError(f"k={k} exceeds {len(users)} users")
    schema = schema or MixedDistanceSchema()
    users = sorted(users, key=lambda u: u.user_id)

    x = np.stack([_ordinal_row(u, schema) for u in users])
    codes = np.stack([_nominal_row(u, schema) for u in users])
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    z = (x - means) / stds

    if gamma is None:
        gamma = 0.5 * float(np.mean(z.std(axis=0)))
        if gamma == 0.0:
            gamma = 0.5

    rng = np.random.default_rng(seed)
    init_idx = rng.choice(len(users), size=k, replace=False)
    num_p = z[init_idx].copy()
    nom_p = codes[init_idx].copy()

    assignment = np.full(len(users), -1, dtype=int)
    history: list[float] = []
    for _ in range(max_iter):
        costs = _prototype_cost(z, codes, num_p, nom_p, gamma)
        new_assignment = costs.argmin(axis=1)
        point_costs = costs[np.arange(len(users)), new_assignment]
        history.append(float(point_costs.sum()))
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment

        for c in range(k):
            mask = assignment == c
            if not mask.any():
                far = int(point_costs.argmax())
                num_p[c] = z[far]
                nom_p[c] = codes[far]
                continue
            num_p[c] = z[mask].mean(axis=0)
            for j in range(codes.shape[1]):
                counts = np.bincount(codes[mask, j])
                nom_p[c, j] = int(counts.argmax())

    return ClusterModel(
        k=k,
        gamma=float(gamma),
        numeric_prototypes=num_p,
        nominal_prototypes=nom_p,
        assignments={u.user_id: int(c) for u, c in zip(users, assignment)},
        cost=history[-1],
        cost_history=history,
        column_means=means,
        column_stds=stds,
        schema=schema,
    )


def knee_point(ks: list[int], costs: list[float]) -> int:
    """k with maximal perpendicular distance to the endpoint chord; ties -> smaller k."""
    if len(ks) != len(costs) or not ks:
        raise DemographicError("ks and costs must be nonempty and equal length")
    if len(ks) == 1:
        return ks[0]
    a = np.array([ks[0], costs[0]], dtype=float)
    b = np.array([ks[-1], costs[-1]], dtype=float)
    chord = b - a
    norm = np.linalg.norm(chord)
    best_k, best_d = ks[0], -1.0
    for kk, cost in zip(ks, costs):
        p = np.array([kk, cost], dtype=float) - a
        d = abs(chord[0] * p[1] - chord[1] * p[0]) / norm if norm > 0 else 0.0
        if d > best_d + 1e-12:
            best_k, best_d = kk, d
    return best_k


def choose_k(
    users: list[UserRecord],
    k_min: int,
    k_max: int,
    gamma: float | None = None,
    seed: int = 0,
    schema: MixedDistanceSchema | None = None,
) -> int:
    """Fit every k in range and return the knee of the cost curve."""
    if k_min < 1 or k_max > len(users) or k_min > k_max:
        raise DemographicError(f"bad k range [{k_min}, {k_max}] for {len(users)} users")
    if k_min == k_max:
        return k_min
    ks = list(range(k_min, k_max + 1))
    costs = [
        kprototypes_fit(users, kk, gamma=gamma, seed=seed, schema=schema).cost
        for kk in ks
    ]
    return knee_point(ks, costs)


def opinions_from_events(events) -> dict[int, dict[int, float]]:
    """Fold feedback events into per-user item opinions in [-1, 1].

    An explicit rating overrides implicit signals; otherwise the latest
    implicit event wins.  Events must be iterated in log order.
    """
    rated: dict[int, dict[int, float]] = {}
    implicit: dict[int, dict[int, float]] = {}
    for ev in events:
        if ev.kind == "rate":
            rated.setdefault(ev.user_id, {})[ev.item_id] = (ev.rating - 3.0) / 2.0
        else:
            implicit.setdefault(ev.user_id, {})[ev.item_id] = ev.signal()
    out: dict[int, dict[int, float]] = {}
    for uid in set(rated) | set(implicit):
        merged = dict(implicit.get(uid, {}))
        merged.update(rated.get(uid, {}))
        out[uid] = merged
    return out


def knn_predict(
    target: UserRecord,
    members: list[tuple[UserRecord, dict[int, float]]],
    k_nn: int = 10,
    schema: MixedDistanceSchema | None = None,
    eps: float = 1e-6,
) -> tuple[dict[int, float], bool]:
    """Inverse-distance-weighted item scores from cluster neighbors.

    Returns (scores, flagged_empty).  Neighbors are the k_nn nearest cluster
    members that have at least one opinion; per item the score is the
    weighted mean of neighbor opinions, weights 1 / (distance + eps).
    """
    schema = schema or MixedDistanceSchema()
    candidates = [
        (u, op) for u, op in members if op and u.user_id != target.user_id
    ]
    if not candidates:
        return {}, True
    dists = _distance_matrix(target, [u for u, _ in candidates], schema)
    order = sorted(
        range(len(candidates)), key=lambda i: (dists[i], candidates[i][0].user_id)
    )[:k_nn]

    weight_sum: dict[int, float] = {}
    weighted: dict[int, float] = {}
    for i in order:
        w = 1.0 / (float(dists[i]) + eps)
        for iid, s in candidates[i][1].items():
            weighted[iid] = weighted.get(iid, 0.0) + w * s
            weight_sum[iid] = weight_sum.get(iid, 0.0) + w
    return {iid: weighted[iid] / weight_sum[iid] for iid in weighted}, False


def recommend_demographic(
    target: UserRecord,
    model: ClusterModel,
    users_by_id: dict[int, UserRecord],
    opinions: dict[int, dict[int, float]],
    n: int,
    exclude: set[int] | None = None,
    k_nn: int = 10,
):
    """Top-n items by kNN score inside the target's cluster."""
    from .recs import RecEntry, RecList

    cluster = model.assignments.get(target.user_id)
    if cluster is None:
        cluster = model.predict(target)
    members = [
        (users_by_id[uid], opinions.get(uid, {}))
        for uid in model.members(cluster)
        if uid in users_by_id
    ]
    scores, flagged = knn_predict(target, members, k_nn=k_nn, schema=model.schema)
    exclude = exclude or set()
    scores = {iid: s for iid, s in scores.items() if iid not in exclude}

    rec = RecList(user_id=target.user_id)
    if flagged or not scores:
        rec.flags.append("no_neighbor_feedback")
        return rec
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    rec.entries = [RecEntry(iid, float(s)) for iid, s in ordered[:n]]
    return rec
