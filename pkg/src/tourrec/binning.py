"""Assigns unclassified items to low-level classes by embedding similarity.

Word vectors are a pluggable table (word2vec text format); a small bundled
table covers the shipped item fixture.  Pooling is mean over in-vocabulary
tokens and class text is just the class label, so the whole pipeline stays
deterministic and auditable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .ontology import ItemRecord, OntologyGraph

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class VectorTableError(ValueError):
    pass


@dataclass
class VectorTable:
    dimension: int
    entries: dict[str, np.ndarray]
    stopwords: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.dimension < 1:
            raise VectorTableError("dimension must be >= 1")
        for tok, vec in self.entries.items():
            if tok != tok.lower():
                raise VectorTableError(f"token {tok!r} not lowercase")
            if len(vec) != self.dimension:
                raise VectorTableError(
                    f"token {tok!r} has dimension {len(vec)}, expected {self.dimension}"
                )

    def __contains__(self, token: str) -> bool:
        return token in self.entries


@dataclass
class BinningConfig:
    threshold: float = 0.55

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside (0, 1]")


def load_vector_table(source, stopwords: set[str] | None = None) -> VectorTable:
    """Read a word2vec text-format file: `<count> <dim>` then `token v1 .. vd`."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    if not lines:
        raise VectorTableError("empty vector file")
    head = lines[0].split()
    if len(head) != 2:
        raise VectorTableError("header must be '<count> <dimension>'")
    count, dim = int(head[0]), int(head[1])
    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1 : count + 1], start=2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise VectorTableError(f"line {lineno}: expected {dim} components")
        entries[parts[0].lower()] = np.array([float(x) for x in parts[1:]])
    return VectorTable(dim, entries, stopwords or set())


def load_stopwords(source) -> set[str]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    return {line.strip().lower() for line in text.splitlines() if line.strip()}


def load_bundled_table() -> VectorTable:
    """The toy table shipped with the package (covers the item fixture)."""
    vecs = resources.files("tourrec.fixtures").joinpath("vectors_toy.txt")
    stops = resources.files("tourrec.fixtures").joinpath("stopwords.txt")
    with stops.open(encoding="utf-8") as fh:
        stopwords = load_stopwords(fh)
    with vecs.open(encoding="utf-8") as fh:
        return load_vector_table(fh, stopwords)


def tokenize_normalize(text: str, table: VectorTable) -> list[str]:
    """Lowercase alphanumeric tokens, stopwords removed, order preserved."""
    tokens = _TOKEN_RE.findall(text.lower())
    return [t for t in tokens if t not in table.stopwords]


def embed(tokens: list[str], table: VectorTable) -> tuple[np.ndarray, bool]:
    """Mean-pool vectors of in-vocabulary tokens.

    Returns (vector, oov_only); the vector is all zeros when nothing was in
    vocabulary.
    """
    hits = [table.entries[t] for t in tokens if t in table.entries]
    if not hits:
        return np.zeros(table.dimension), True
    return np.mean(hits, axis=0), False


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def item_tokens(item: ItemRecord, table: VectorTable) -> list[str]:
    """Description tokens followed by keyword tokens, first occurrence kept."""
    toks = tokenize_normalize(item.description, table)
    for kw in item.keywords:
        toks.extend(tokenize_normalize(kw, table))
    seen: set[str] = set()
    out = []
    for t in toks:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def bin_item(
    item: ItemRecord,
    graph: OntologyGraph,
    table: VectorTable,
    cfg: BinningConfig | None = None,
) -> tuple[set[tuple[str, float]], list[str]]:
    """Score the item against every LL class label; keep pairs >= threshold.

    Returns (links, diagnostics).  An item whose tokens are all out of
    vocabulary yields no links and a diagnostic, never an exception.
    """
    cfg = cfg or BinningConfig()
    diagnostics: list[str] = []
    toks = item_tokens(item, table)
    vec, oov = embed(toks, table)
    if oov:
        diagnostics.append(
            f"item {item.item_id}: no in-vocabulary tokens, nothing binned"
        )
        return set(), diagnostics

    links: set[tuple[str, float]] = set()
    for ll in sorted(graph.ll_classes):
        class_vec, class_oov = embed(tokenize_normalize(ll, table), table)
        if class_oov:
            diagnostics.append(f"class {ll!r} has no in-vocabulary tokens")
            continue
        score = _cosine(vec, class_vec)
        if score >= cfg.threshold:
            links.add((ll, score))
    return links, diagnostics


def bin_and_link(
    item: ItemRecord,
    graph: OntologyGraph,
    table: VectorTable,
    cfg: BinningConfig | None = None,
) -> tuple[set[tuple[str, float]], list[str]]:
    """Run bin_item and record the resulting links on the graph."""
    links, diagnostics = bin_item(item, graph, table, cfg)
    for ll, score in links:
        graph.link_item(item.item_id, ll, score)
    return links, diagnostics
