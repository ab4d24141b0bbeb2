"""Command-line driver: data generation, binning, evaluation, simulation, serving.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 invariant
violation.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .binning import (
    BinningConfig,
    VectorTableError,
    bin_item,
    load_bundled_table,
    load_stopwords,
    load_vector_table,
)
from .engine import EngineConfig, engine_config_from_json
from .eventlog import EventLog, EventLogError, restore
from .ffm import FfmError
from .metrics import (
    EvalSet,
    MetricsError,
    coverage,
    map_at_k,
    mar_at_k,
    per_user_breakdown,
    personalization,
)
from .ontology import ItemRecord, OntologyError
from .sim import DEFAULT_PLAN, SimulationPlan, run_simulation
from .synth import (
    GenConfig,
    SynthError,
    dense_matrix_csv,
    fixture_graph,
    gen_latent_prefs,
    gen_ratings,
    gen_users,
    items_jsonl,
    load_item_fixture,
    prefs_csv,
    ratings_csv,
    users_csv,
)

DATA_ERRORS = (
    OntologyError, VectorTableError, SynthError, EventLogError, FfmError,
    FileNotFoundError, json.JSONDecodeError, csv.Error,
)


@click.group()
def cli():
    """Phase-evolving tourism recommender toolkit."""


@cli.command("gen-data")
@click.option("--users", "n_users", type=int, default=98, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--sparsity", type=float, default=0.007, show_default=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("data"),
              show_default=True)
def gen_data(n_users, seed, sparsity, sigma, out_dir):
    """Generate users, latent preferences, items, and sparse ratings."""
    cfg = GenConfig(n_users=n_users, seed=seed, sparsity=sparsity, sigma=sigma)
    graph = fixture_graph()
    catalog = load_item_fixture()
    users = gen_users(cfg)
    prefs = gen_latent_prefs(users, cfg)
    ratings = gen_ratings(users, prefs, catalog, cfg, graph)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "users.csv").write_text(users_csv(users), encoding="utf-8")
    (out_dir / "preferences.csv").write_text(prefs_csv(prefs), encoding="utf-8")
    (out_dir / "items.jsonl").write_text(items_jsonl(catalog), encoding="utf-8")
    (out_dir / "ratings.csv").write_text(ratings_csv(ratings), encoding="utf-8")
    (out_dir / "matrix.csv").write_text(
        dense_matrix_csv(users, ratings, catalog), encoding="utf-8"
    )
    click.echo(f"wrote {n_users} users, {len(ratings)} ratings to {out_dir}/")


@cli.command("bin-items")
@click.option("--items", "items_path", type=click.Path(path_type=Path),
              help="JSON-lines file of items; defaults to the bundled catalog")
@click.option("--vectors", type=click.Path(path_type=Path),
              help="word2vec text-format vector table")
@click.option("--stopwords", "stopwords_path", type=click.Path(path_type=Path))
@click.option("--threshold", type=float, default=0.55, show_default=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path),
              help="write the link report as JSON")
def bin_items_cmd(items_path, vectors, stopwords_path, threshold, out_path):
    """Assign items to low-level classes by embedding similarity."""
    graph = fixture_graph()
    if items_path is not None:
        items = []
        for lineno, line in enumerate(
            Path(items_path).read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            try:
                items.append(ItemRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise OntologyError(f"bad item payload: {exc}", lineno) from exc
    else:
        items = load_item_fixture()

    if vectors is not None:
        stops = load_stopwords(stopwords_path) if stopwords_path else set()
        table = load_vector_table(vectors, stops)
    else:
        table = load_bundled_table()

    cfg = BinningConfig(threshold)
    report = {}
    unlinked = 0
    for item in items:
        links, diags = bin_item(item, graph, table, cfg)
        report[item.item_id] = {
            "name": item.name,
            "links": sorted([[c, round(s, 4)] for c, s in links]),
            "diagnostics": diags,
        }
        if not links:
            unlinked += 1
        linked = ", ".join(f"{c}:{s:.2f}" for c, s in sorted(links)) or "(none)"
        click.echo(f"{item.item_id}\t{item.name}\t{linked}")
    if out_path is not None:
        Path(out_path).write_text(json.dumps(report, indent=2), encoding="utf-8")
    click.echo(f"{len(items)} items, {len(items) - unlinked} linked, "
               f"{unlinked} unlinked")


def _read_recs(path: Path) -> dict[int, list[int]]:
    lists: dict[int, list[tuple[int, int]]] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            lists.setdefault(int(row["user_id"]), []).append(
                (int(row["rank"]), int(row["item_id"]))
            )
    return {u: [iid for _, iid in sorted(pairs)] for u, pairs in lists.items()}


def _read_truth(path: Path, threshold: float) -> dict[int, set[int]]:
    relevant: dict[int, set[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            uid, iid = int(row["user_id"]), int(row["item_id"])
            rating = row.get("rating")
            if rating is None or rating == "" or float(rating) >= threshold:
                relevant.setdefault(uid, set()).add(iid)
            else:
                relevant.setdefault(uid, set())
    return relevant


@cli.command("evaluate")
@click.option("--recs", "recs_path", type=click.Path(path_type=Path), required=True,
              help="CSV with header user_id,rank,item_id")
@click.option("--truth", "truth_path", type=click.Path(path_type=Path), required=True,
              help="CSV with header user_id,item_id[,rating]")
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--relevance-threshold", type=float, default=3.0, show_default=True)
@click.option("--n-items", type=int, default=None,
              help="training catalog size, enables coverage")
@click.option("--json", "json_path", type=click.Path(path_type=Path), default=None,
              help="also write the report with per-user breakdowns as JSON")
def evaluate_cmd(recs_path, truth_path, k, relevance_threshold, n_items,
                 json_path):
    """Rank metrics for externally produced recommendation lists."""
    rec_lists = _read_recs(recs_path)
    if not rec_lists:
        raise MetricsError("no recommendation rows found")
    relevant = _read_truth(truth_path, relevance_threshold)
    evalset = EvalSet(
        rec_lists=rec_lists,
        relevant={u: relevant.get(u, set()) for u in rec_lists},
        n_train_items=n_items or len(
            {i for lst in rec_lists.values() for i in lst}
        ),
    )
    click.echo(f"MAP@{k} {map_at_k(evalset, k):.4f}")
    click.echo(f"MAR@{k} {mar_at_k(evalset, k):.4f}")
    if n_items:
        click.echo(f"Coverage {coverage(evalset):.4f}")
    if len(evalset.users) >= 2:
        click.echo(f"Personalization {personalization(evalset):.4f}")
    if json_path is not None:
        report = {
            "k": k,
            "n_users": len(evalset.users),
            "map_at_k": map_at_k(evalset, k),
            "mar_at_k": mar_at_k(evalset, k),
            "per_user": {str(u): row for u, row in
                         per_user_breakdown(evalset, k).items()},
        }
        if n_items:
            report["coverage"] = coverage(evalset)
        if len(evalset.users) >= 2:
            report["personalization"] = personalization(evalset)
        Path(json_path).write_text(json.dumps(report, indent=2),
                                   encoding="utf-8")
        click.echo(f"wrote {json_path}")


def _parse_plan(text: str) -> list[tuple[int, int]]:
    milestones = []
    for part in text.split(","):
        users, _, ratings = part.strip().partition(":")
        milestones.append((int(users), int(ratings)))
    return milestones


@cli.command("simulate")
@click.option("--plan", "plan_text", default=None,
              help="comma-separated users:ratings milestones, e.g. 98:0,98:64")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path),
              default=Path("sim_out"), show_default=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              default=None, help="engine config JSON (triggers, weights, ...)")
@click.option("--deterministic/--no-deterministic", default=True, show_default=True,
              help="single-threaded seeded run (the only implemented mode)")
def simulate(plan_text, seed, k, out_dir, config_path, deterministic):
    """Replay the growth plan and emit one metrics CSV per milestone."""
    milestones = _parse_plan(plan_text) if plan_text else list(DEFAULT_PLAN)
    plan = SimulationPlan(milestones=milestones, seed=seed, k=k)
    if config_path is not None:
        engine_config = engine_config_from_json(config_path)
    else:
        engine_config = EngineConfig(seed=seed)
    results = run_simulation(plan, out_dir=out_dir, engine_config=engine_config)
    for res in results:
        models = ", ".join(
            f"{name}: MAP={rep.map_at_k:.3f} cov={rep.coverage:.3f} "
            f"pers={rep.personalization:.3f}"
            for name, rep in res.reports.items()
        )
        click.echo(f"users={res.users} ratings={res.ratings} "
                   f"phase={res.phase}  {models}")
    click.echo(f"wrote CSVs to {out_dir}/")


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True,
              envvar="TOURREC_HOST")
@click.option("--port", type=int, default=8000, show_default=True,
              envvar="TOURREC_PORT")
@click.option("--log", "log_path", type=click.Path(path_type=Path),
              default=Path("tourrec_events.log"), show_default=True,
              envvar="TOURREC_LOG")
@click.option("--api-key", default=None, envvar="TOURREC_API_KEY")
@click.option("--fsync/--no-fsync", default=True, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              default=None, envvar="TOURREC_CONFIG",
              help="engine config JSON (triggers, weights, ...)")
def serve(host, port, log_path, api_key, fsync, seed, config_path):
    """Start the HTTP service (replays the event log on startup)."""
    import uvicorn

    from .service import create_app

    if config_path is not None:
        config = engine_config_from_json(config_path)
    else:
        config = EngineConfig(seed=seed)
    app = create_app(log_path=log_path, api_key=api_key, fsync=fsync,
                     config=config)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@cli.command("replay")
@click.option("--log", "log_path", type=click.Path(path_type=Path), required=True)
@click.option("--snapshot", "snapshot_path", type=click.Path(path_type=Path),
              default=None)
def replay_cmd(log_path, snapshot_path):
    """Rebuild engine state from a log (and optional snapshot) and summarize."""
    log = EventLog(log_path)
    engine = restore(log, snapshot_path)
    m = engine.maturity
    click.echo(f"users={m.user_count} ratings={m.rating_count} "
               f"items={m.item_count} phase={m.phase} "
               f"density={m.density:.4f}")


def main():
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except DATA_ERRORS as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)
    except (MetricsError, ValueError) as exc:
        click.echo(f"invariant violation: {exc}", err=True)
        sys.exit(3)
    sys.exit(0)


if __name__ == "__main__":
    main()
