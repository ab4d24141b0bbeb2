"""Milestone-driven growth simulation: generate, replay, evaluate, export.

A plan is a list of (user_count, rating_count) checkpoints.  One seeded
event stream covers the largest checkpoint; every earlier checkpoint is a
strict prefix of it, mimicking organic growth.  At each checkpoint a fresh
engine replays the prefix, each active recommender produces top-K lists for
all users, and the six metrics are computed against the synthetic ground
truth (the dense rating model masked to a seeded visible subset).

The exported tables use the recall convention whose columns coincide with
the precision ones whenever users have few relevant items, so comparison
tables show the expected equal columns in that regime.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import Engine, EngineConfig
from .metrics import EvalReport, EvalSet, evaluate_all
from .orchestrator import ACTIVE_RECOMMENDERS
from .synth import (
    fixture_graph,
    gen_user,
    hl_selection_from_prefs,
    latent_prefs_for,
    default_coefficients,
    user_rating_row,
)

DEFAULT_PLAN = [(98, 0), (98, 64), (198, 191), (250, 191), (1000, 883)]
GT_DENSITY = 0.4
RELEVANCE_THRESHOLD = 3.0


class SimulationError(ValueError):
    pass


@dataclass
class SimulationPlan:
    milestones: list[tuple[int, int]] = field(
        default_factory=lambda: list(DEFAULT_PLAN)
    )
    seed: int = 7
    k: int = 5
    sigma: float = 0.5
    gt_density: float = GT_DENSITY
    selection_frac: float = 0.75

    def __post_init__(self):
        if not self.milestones:
            raise SimulationError("empty milestone list")
        prev_u, prev_r = 0, 0
        for u, r in self.milestones:
            if u < prev_u or r < prev_r:
                raise SimulationError(
                    f"milestones must be non-decreasing, got ({u}, {r}) "
                    f"after ({prev_u}, {prev_r})"
                )
            if u < 1:
                raise SimulationError("milestone needs at least one user")
            prev_u, prev_r = u, r


class SimDataset:
    """Seeded synthetic world shared by event generation and evaluation."""

    def __init__(self, plan: SimulationPlan):
        self.plan = plan
        self.graph = fixture_graph()
        self.catalog = [self.graph.items[i] for i in sorted(self.graph.items)]
        self.coefficients = default_coefficients()
        self._users: dict[int, object] = {}
        self._prefs: dict[int, object] = {}
        self._rows: dict[int, dict[int, float]] = {}
        hl_labels = sorted(self.graph.hl_classes)
        self.hl_labels = hl_labels

    def user(self, uid: int):
        if uid not in self._users:
            self._users[uid] = gen_user(self.plan.seed, uid)
        return self._users[uid]

    def prefs(self, uid: int):
        if uid not in self._prefs:
            self._prefs[uid] = latent_prefs_for(self.user(uid), self.coefficients)
        return self._prefs[uid]

    def selection(self, uid: int) -> list[float]:
        vec = hl_selection_from_prefs(
            self.prefs(uid), self.graph, self.hl_labels, self.plan.selection_frac
        )
        return [float(x) for x in vec]

    def rating_row(self, uid: int) -> dict[int, float]:
        if uid not in self._rows:
            self._rows[uid] = user_rating_row(
                self.plan.seed, self.user(uid), self.prefs(uid),
                self.catalog, self.graph, self.plan.sigma,
            )
        return self._rows[uid]

    def visible(self, uid: int, iid: int) -> bool:
        pick = np.random.default_rng([self.plan.seed, 6, uid, iid]).random()
        return pick < self.plan.gt_density

    def priority(self, uid: int, iid: int) -> float:
        return float(np.random.default_rng([self.plan.seed, 3, uid, iid]).random())

    def relevant(self, uid: int) -> set[int]:
        row = self.rating_row(uid)
        return {
            iid for iid, value in row.items()
            if self.visible(uid, iid) and value >= RELEVANCE_THRESHOLD
        }


def build_events(
    plan: SimulationPlan, dataset: SimDataset | None = None
) -> tuple[list[tuple[str, dict, float]], list[int]]:
    """The full seeded event stream plus per-milestone cut indices."""
    dataset = dataset or SimDataset(plan)
    events: list[tuple[str, dict, float]] = []
    cuts: list[int] = []
    joined = 0
    rating_count = 0
    rated: set[tuple[int, int]] = set()
    clock = 0.0

    for users_target, ratings_target in plan.milestones:
        for uid in range(joined, users_target):
            user = dataset.user(uid)
            clock += 1.0
            events.append((
                "user_created",
                {
                    "user_id": uid, "age": user.age, "ac_deg": user.ac_deg,
                    "budget": user.budget, "accom": user.accom,
                    "gender": user.gender, "job": user.job,
                    "region": user.region, "group_comp": user.group_comp,
                },
                clock,
            ))
            clock += 1.0
            events.append((
                "preferences_set",
                {"user_id": uid, "selection": dataset.selection(uid)},
                clock,
            ))
        joined = users_target

        need = ratings_target - rating_count
        if need > 0:
            eligible = [
                (dataset.priority(uid, item.item_id), uid, item.item_id)
                for uid in range(joined)
                for item in dataset.catalog
                if (uid, item.item_id) not in rated
                and dataset.visible(uid, item.item_id)
            ]
            if len(eligible) < need:
                raise SimulationError(
                    f"only {len(eligible)} ratable pairs available, need {need}"
                )
            eligible.sort()
            for _, uid, iid in eligible[:need]:
                clock += 1.0
                events.append((
                    "rating",
                    {"user_id": uid, "item_id": iid,
                     "rating": dataset.rating_row(uid)[iid]},
                    clock,
                ))
                rated.add((uid, iid))
            rating_count = ratings_target
        cuts.append(len(events))
    return events, cuts


def _item_features(engine: Engine) -> tuple[dict, dict]:
    m = engine.matrices
    hl_feats, ll_feats = {}, {}
    for iid in m.item_ids:
        col = m.ll_item[:, m.item_index(iid)]
        ll_feats[iid] = col.copy()
        hl_feats[iid] = (m.hl_ll @ col > 0).astype(float)
    return hl_feats, ll_feats


def evaluate_milestone(
    engine: Engine, dataset: SimDataset, k: int
) -> dict[str, EvalReport]:
    """Six metrics per active model over all users with nonempty lists."""
    phase = engine.maturity.phase
    hl_feats, ll_feats = _item_features(engine)
    counts = {
        iid: sum(1 for items in engine.consumed.values() if iid in items)
        for iid in engine.graph.items
    }
    reports: dict[str, EvalReport] = {}
    for name in ACTIVE_RECOMMENDERS[phase]:
        rec_lists: dict[int, list[int]] = {}
        skipped = 0
        for uid in sorted(engine.users):
            rec = engine.recommend_model(name, uid, k)
            if rec.entries:
                rec_lists[uid] = rec.item_ids()
            else:
                skipped += 1
        if not rec_lists:
            continue
        evalset = EvalSet(
            rec_lists=rec_lists,
            relevant={uid: dataset.relevant(uid) for uid in rec_lists},
            n_train_items=len(engine.graph.items),
            item_universe=list(engine.matrices.item_ids),
            item_features_hl=hl_feats,
            item_features_ll=ll_feats,
            consumption_counts=counts,
        )
        report = evaluate_all(evalset, k, mar_summand="precision")
        report.flags["users_without_list"] = skipped
        reports[name] = report
    return reports


@dataclass
class MilestoneResult:
    users: int
    ratings: int
    phase: int
    reports: dict[str, EvalReport]


def run_simulation(
    plan: SimulationPlan,
    out_dir=None,
    engine_config: EngineConfig | None = None,
) -> list[MilestoneResult]:
    dataset = SimDataset(plan)
    events, cuts = build_events(plan, dataset)
    results: list[MilestoneResult] = []

    for (users_target, ratings_target), cut in zip(plan.milestones, cuts):
        config = engine_config or EngineConfig(seed=plan.seed)
        engine = Engine(graph=fixture_graph(), config=config)
        for kind, payload, ts in events[:cut]:
            engine.apply_event(kind, payload, ts)
        reports = evaluate_milestone(engine, dataset, plan.k)
        results.append(MilestoneResult(
            users=users_target, ratings=ratings_target,
            phase=engine.maturity.phase, reports=reports,
        ))

    if out_dir is not None:
        write_outputs(results, Path(out_dir))
    return results


MODEL_LABELS = {
    "content": "Content",
    "hybrid": "Hybrid",
    "demographic": "Demog",
    "collaborative": "Collab",
}


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def milestone_csv(result: MilestoneResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Model", *EvalReport.COLUMNS])
    for name, report in result.reports.items():
        writer.writerow([MODEL_LABELS[name], *map(_fmt, report.row())])
    return buf.getvalue()


def combined_csv(results: list[MilestoneResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Users", "Ratings", "Phase", "Model", *EvalReport.COLUMNS])
    for res in results:
        for name, report in res.reports.items():
            writer.writerow([res.users, res.ratings, res.phase,
                             MODEL_LABELS[name], *map(_fmt, report.row())])
    return buf.getvalue()


def scaled_csv(results: list[MilestoneResult]) -> str:
    """Min-max over the models within each milestone, per metric column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Users", "Ratings", "Phase", "Model", *EvalReport.COLUMNS])
    for res in results:
        rows = {name: report.row() for name, report in res.reports.items()}
        if not rows:
            continue
        cols = np.array(list(rows.values()))
        lo, hi = cols.min(axis=0), cols.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        for name, row in rows.items():
            scaled = (np.array(row) - lo) / span
            scaled = np.where(hi > lo, scaled, 1.0)
            writer.writerow([res.users, res.ratings, res.phase,
                             MODEL_LABELS[name], *map(_fmt, scaled)])
    return buf.getvalue()


def write_outputs(results: list[MilestoneResult], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, res in enumerate(results, start=1):
        path = out_dir / f"milestone_{i}_u{res.users}_r{res.ratings}.csv"
        path.write_text(milestone_csv(res), encoding="utf-8")
        written.append(path)
    combined = out_dir / "combined.csv"
    combined.write_text(combined_csv(results), encoding="utf-8")
    written.append(combined)
    scaled = out_dir / "scaled.csv"
    scaled.write_text(scaled_csv(results), encoding="utf-8")
    written.append(scaled)
    return written
