"""Two-level tourism class hierarchy with item nodes and weighted item links.

The class taxonomy is deliberately flat: high-level (HL) classes are the
parentless roots the user picks on first login, low-level (LL) classes are
the leaves items attach to.  Deeper taxonomies are flattened at load time so
every leaf hangs directly off its root ancestors.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field

import numpy as np


class OntologyError(ValueError):
    """Raised for malformed ontology documents or invariant violations."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class ItemRecord:
    item_id: int
    name: str
    description: str = ""
    keywords: list[str] = field(default_factory=list)
    categories: list[str] = field(default_factory=list)
    location: tuple[float, float] | None = None
    partner_id: str | None = None

    def __post_init__(self):
        if not self.name:
            raise OntologyError(f"item {self.item_id} has empty name")
        if self.location is not None:
            self.location = (float(self.location[0]), float(self.location[1]))

    def to_dict(self) -> dict:
        d = {
            "item_id": self.item_id,
            "name": self.name,
            "description": self.description,
            "keywords": list(self.keywords),
            "categories": list(self.categories),
        }
        if self.location is not None:
            d["location"] = list(self.location)
        if self.partner_id is not None:
            d["partner_id"] = self.partner_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ItemRecord":
        loc = d.get("location")
        return cls(
            item_id=int(d["item_id"]),
            name=d["name"],
            description=d.get("description", ""),
            keywords=list(d.get("keywords", [])),
            categories=list(d.get("categories", [])),
            location=tuple(loc) if loc else None,
            partner_id=d.get("partner_id"),
        )


@dataclass
class ContentMatrices:
    """Binary linkage matrices derived from a graph snapshot.

    Rows/columns are ordered by sorted class label (HL and LL independently)
    and ascending item id, so identical graphs always produce bit-identical
    matrices.
    """

    hl_ll: np.ndarray          # |HL| x |LL|
    ll_item: np.ndarray        # |LL| x |items|
    hl_labels: list[str]
    ll_labels: list[str]
    item_ids: list[int]

    def __iter__(self):
        # allows `hl_ll, ll_item = content_matrices(g)`
        return iter((self.hl_ll, self.ll_item))

    def hl_index(self, label: str) -> int:
        return self.hl_labels.index(label)

    def ll_index(self, label: str) -> int:
        return self.ll_labels.index(label)

    def item_index(self, item_id: int) -> int:
        return self.item_ids.index(item_id)

    def item_ll_labels(self, item_id: int) -> list[str]:
        col = self.ll_item[:, self.item_index(item_id)]
        return [self.ll_labels[i] for i in np.flatnonzero(col)]

    def item_hl_labels(self, item_id: int) -> list[str]:
        col = self.ll_item[:, self.item_index(item_id)]
        hl = (self.hl_ll @ col) > 0
        return [self.hl_labels[i] for i in np.flatnonzero(hl)]


class OntologyGraph:
    """Mutable two-level ontology with item nodes.

    Mutations are serialized through a single lock; readers work on the
    snapshot returned by :func:`content_matrices`, which is pure.
    """

    def __init__(self):
        self.hl_classes: set[str] = set()
        self.ll_classes: set[str] = set()
        self.hl_ll_edges: set[tuple[str, str]] = set()
        self.items: dict[int, ItemRecord] = {}
        # (item_id, ll_class) -> similarity score in [0, 1]
        self.item_links: dict[tuple[int, str], float] = {}
        self._lock = threading.Lock()

    def add_class_edge(self, hl: str, ll: str) -> None:
        with self._lock:
            self.hl_classes.add(hl)
            self.ll_classes.add(ll)
            self.hl_ll_edges.add((hl, ll))

    def add_item(self, item: ItemRecord, link_score: float = 1.0) -> None:
        """Insert an item; explicit categories link it at `link_score`."""
        with self._lock:
            if item.item_id in self.items:
                raise OntologyError(f"duplicate item id {item.item_id}")
            for cat in item.categories:
                if cat not in self.ll_classes:
                    raise OntologyError(
                        f"item {item.item_id} references unknown class {cat!r}"
                    )
            self.items[item.item_id] = item
            for cat in item.categories:
                self.item_links[(item.item_id, cat)] = link_score

    def link_item(self, item_id: int, ll_class: str, score: float) -> None:
        with self._lock:
            if item_id not in self.items:
                raise OntologyError(f"unknown item {item_id}")
            if ll_class not in self.ll_classes:
                raise OntologyError(f"unknown low-level class {ll_class!r}")
            if not 0.0 <= score <= 1.0:
                raise OntologyError(f"link score {score} outside [0, 1]")
            self.item_links[(item_id, ll_class)] = score

    def ll_parents(self, ll: str) -> set[str]:
        return {h for (h, l) in self.hl_ll_edges if l == ll}

    def item_ll_classes(self, item_id: int, min_score: float = 0.0) -> set[str]:
        return {
            ll
            for (iid, ll), s in self.item_links.items()
            if iid == item_id and s >= min_score
        }

    def validate(self) -> None:
        for ll in self.ll_classes:
            if not self.ll_parents(ll):
                raise OntologyError(f"orphan low-level class {ll!r} (no HL parent)")
        for (iid, ll), s in self.item_links.items():
            if iid not in self.items:
                raise OntologyError(f"link references unknown item {iid}")
            if ll not in self.ll_classes:
                raise OntologyError(f"link references unknown class {ll!r}")
            if not 0.0 <= s <= 1.0:
                raise OntologyError(f"link score {s} outside [0, 1]")


# Binning threshold shared with the binning module's default; explicit
# category links are stored with score 1.0 so they always survive it.
DEFAULT_LINK_THRESHOLD = 0.55


def load_ontology(source) -> OntologyGraph:
    """Parse a line-oriented ontology document.

    Format (UTF-8, tab-separated):
      ``C<TAB>parent<TAB>child``  class edge; parent "ROOT" marks HL classes
      ``I<TAB>{json}``            one item per line, ItemRecord fields
      ``#`` lines and blank lines are ignored.

    Deeper taxonomies are flattened: leaf classes become LL, parentless
    classes become HL, intermediate classes only contribute connectivity.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()

    parents: dict[str, set[str]] = {}
    children: dict[str, set[str]] = {}
    names: set[str] = set()
    twins: set[str] = set()          # C X X: HL class with a same-named LL leaf
    pending_items: list[tuple[int, ItemRecord]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        tag = parts[0]
        if tag == "C":
            if len(parts) != 3:
                raise OntologyError("class line needs parent and child", lineno)
            parent, child = parts[1], parts[2]
            if not child or not parent:
                raise OntologyError("empty class label", lineno)
            names.add(child)
            children.setdefault(child, set())
            parents.setdefault(child, set())
            if parent == child:
                twins.add(child)
            elif parent != "ROOT":
                names.add(parent)
                parents.setdefault(parent, set())
                children.setdefault(parent, set()).add(child)
                parents[child].add(parent)
        elif tag == "I":
            if len(parts) != 2:
                raise OntologyError("item line needs a JSON payload", lineno)
            try:
                payload = json.loads(parts[1])
                item = ItemRecord.from_dict(payload)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise OntologyError(f"bad item payload: {exc}", lineno) from exc
            pending_items.append((lineno, item))
        else:
            raise OntologyError(f"unknown record tag {tag!r}", lineno)

    graph = OntologyGraph()
    hl = {n for n in names if not parents[n]}
    ll = {n for n in names if not children[n]}

    def hl_ancestors(node: str) -> set[str]:
        found: set[str] = set()
        stack = [node]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            if cur in hl:
                found.add(cur)
            stack.extend(parents[cur])
        return found

    for leaf in sorted(ll):
        if leaf in hl:
            # isolated label: parentless and childless, treat as HL only
            graph.hl_classes.add(leaf)
            continue
        roots = hl_ancestors(leaf)
        if not roots:
            raise OntologyError(f"orphan low-level class {leaf!r} (no HL ancestor)")
        for root in roots:
            graph.add_class_edge(root, leaf)
    for interior in sorted(names - hl - ll):
        if not hl_ancestors(interior):
            raise OntologyError(
                f"orphan class {interior!r} (cycle with no HL ancestor)"
            )
    for root in sorted(hl):
        graph.hl_classes.add(root)
    for twin in sorted(twins):
        if twin not in hl:
            raise OntologyError(
                f"self-edge on {twin!r}, which is not a high-level class"
            )
        graph.add_class_edge(twin, twin)

    for lineno, item in pending_items:
        try:
            graph.add_item(item)
        except OntologyError as exc:
            raise OntologyError(str(exc), lineno) from exc

    graph.validate()
    return graph


def content_matrices(
    graph: OntologyGraph, min_score: float = DEFAULT_LINK_THRESHOLD
) -> ContentMatrices:
    """Derive the binary HL->LL and LL->item matrices from a graph.

    ``ll_item[j, k] == 1`` iff item k carries a link to LL class j with
    similarity at or above `min_score`.
    """
    hl_labels = sorted(graph.hl_classes)
    ll_labels = sorted(graph.ll_classes)
    item_ids = sorted(graph.items)
    hl_pos = {h: i for i, h in enumerate(hl_labels)}
    ll_pos = {l: i for i, l in enumerate(ll_labels)}
    item_pos = {k: i for i, k in enumerate(item_ids)}

    hl_ll = np.zeros((len(hl_labels), len(ll_labels)))
    for h, l in graph.hl_ll_edges:
        hl_ll[hl_pos[h], ll_pos[l]] = 1.0

    ll_item = np.zeros((len(ll_labels), len(item_ids)))
    for (iid, l), score in graph.item_links.items():
        if score >= min_score:
            ll_item[ll_pos[l], item_pos[iid]] = 1.0

    return ContentMatrices(hl_ll, ll_item, hl_labels, ll_labels, item_ids)
