"""Builds the bundled toy word-vector table (word2vec text format).

Each of the 14 leaf classes gets an anchor axis; content tokens are sparse
positive mixes over those axes (plus two spare axes for filler words).  The
script verifies that every fixture item pools to a vector within the binning
threshold of at least one class label before writing the file.

Run from the repository root:  python tools/gen_toy_vectors.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from tourrec.binning import BinningConfig, VectorTable, bin_item, load_stopwords
from tourrec.synth import fixture_graph

DIM = 16
AXES = [
    "beach", "relax", "shop", "nightlife", "themepark", "gastro", "sports",
    "culture", "nature", "events", "leisure", "routes", "towns", "viewpoints",
    "misc1", "misc2",
]
A = {name: i for i, name in enumerate(AXES)}

# class label tokens sit on (or near) their anchor axis
CLASS_TOKENS = {
    "beach": {"beach": 1.0},
    "relax": {"relax": 1.0},
    "shop": {"shop": 1.0},
    "nightlife": {"nightlife": 1.0},
    "theme": {"themepark": 1.0},
    "park": {"themepark": 0.7, "nature": 0.3},
    "gastro": {"gastro": 1.0},
    "sports": {"sports": 1.0},
    "culture": {"culture": 1.0},
    "nature": {"nature": 1.0},
    "events": {"events": 1.0},
    "leisure": {"leisure": 1.0},
    "routes": {"routes": 1.0},
    "towns": {"towns": 1.0},
    "viewpoints": {"viewpoints": 1.0},
}

CONTENT_TOKENS = {
    # fixture item vocabulary
    "service": {"leisure": 0.5, "misc1": 0.5},
    "offers": {"leisure": 0.5, "shop": 0.3, "misc1": 0.3},
    "opportunity": {"misc1": 0.6, "leisure": 0.3},
    "bungee": {"sports": 0.8, "nature": 0.3, "events": 0.2},
    "jumping": {"sports": 0.8, "nature": 0.2},
    "tavern": {"gastro": 0.8, "towns": 0.3, "culture": 0.2},
    "serves": {"gastro": 0.7, "misc1": 0.2},
    "traditional": {"culture": 0.7, "gastro": 0.3},
    "food": {"gastro": 0.9, "leisure": 0.2},
    "ancient": {"culture": 0.8, "towns": 0.2},
    "history": {"culture": 0.9},
    "museum": {"culture": 0.9, "towns": 0.2},
    "discount": {"shop": 0.8, "leisure": 0.3},
    "callaway": {"sports": 0.6, "shop": 0.4},
    "clubs": {"sports": 0.5, "shop": 0.3, "nightlife": 0.3},
    "comic": {"events": 0.7, "culture": 0.3},
    "con": {"events": 0.7, "shop": 0.2},
    "free": {"shop": 0.5, "leisure": 0.4},
    "pint": {"gastro": 0.7, "nightlife": 0.4},
    "pub": {"nightlife": 0.7, "gastro": 0.5},
    "pizza": {"gastro": 0.9, "leisure": 0.2},
    "hut": {"gastro": 0.4, "misc2": 0.5},
    "voucher": {"shop": 0.8, "leisure": 0.3},
    "sephora": {"shop": 0.8, "leisure": 0.2},
    "shopping": {"shop": 0.95},
    "mall": {"shop": 0.9, "towns": 0.2},
    "golf": {"sports": 0.6, "misc2": 0.5},
    "lessons": {"sports": 0.6, "culture": 0.3},
    "great": {"misc1": 0.7, "leisure": 0.2},
    "meals": {"gastro": 0.9},
    "tasty": {"gastro": 0.8},
    "medieval": {"culture": 0.8, "events": 0.3, "towns": 0.3},
    "fair": {"events": 0.8, "towns": 0.3},
    "snorkeling": {"sports": 0.7, "beach": 0.5, "nature": 0.4},
    "fish": {"nature": 0.7, "beach": 0.3},
    "nightclubs": {"nightlife": 0.95},
    "city": {"towns": 0.8, "culture": 0.2},
    "rest": {"relax": 0.8, "leisure": 0.2},
    "relaxation": {"relax": 0.95},
    "spa": {"relax": 0.8, "leisure": 0.4},
    "surfing": {"sports": 0.7, "beach": 0.6},
    "trip": {"routes": 0.6, "nature": 0.3, "leisure": 0.2},
    "hot": {"misc2": 0.6, "nature": 0.2},
    "air": {"nature": 0.4, "sports": 0.3, "viewpoints": 0.3},
    "balloon": {"sports": 0.5, "viewpoints": 0.5, "nature": 0.3},
    "karts": {"sports": 0.85},
    "friends": {"events": 0.3, "leisure": 0.3, "nightlife": 0.3},
    "scuba": {"sports": 0.7, "beach": 0.5, "nature": 0.4},
    "diving": {"sports": 0.7, "beach": 0.5},
    "spearfishing": {"sports": 0.7, "nature": 0.4, "beach": 0.3},
    "pro": {"sports": 0.5, "misc1": 0.3},
    "watch": {"events": 0.5, "sports": 0.3},
    "match": {"sports": 0.8, "events": 0.4},
    "fc": {"sports": 0.7},
    "porto": {"towns": 0.5, "sports": 0.3},
    "sl": {"sports": 0.6},
    "benfica": {"sports": 0.7},
    "sporting": {"sports": 0.85},
    "cp": {"sports": 0.6},
    "live": {"events": 0.6, "nightlife": 0.3},
    "concert": {"events": 0.8, "nightlife": 0.4, "culture": 0.2},
    "mastodon": {"events": 0.5, "misc2": 0.4},
    "football": {"sports": 0.9, "events": 0.3},
    "motogp": {"sports": 0.8, "events": 0.3},
    "race": {"sports": 0.8, "events": 0.3},
    "drive": {"sports": 0.4, "routes": 0.4},
    "f1": {"sports": 0.8},
    "racecar": {"sports": 0.85},
    "visiting": {"routes": 0.4, "towns": 0.4, "viewpoints": 0.3},
    "disneyland": {"themepark": 0.9, "leisure": 0.4},
    # extra vocabulary beyond the fixture
    "sun": {"beach": 0.6, "nature": 0.3},
    "sea": {"beach": 0.7, "nature": 0.4},
    "sand": {"beach": 0.8},
    "coast": {"beach": 0.6, "nature": 0.4, "viewpoints": 0.2},
    "island": {"beach": 0.5, "nature": 0.5},
    "wave": {"beach": 0.6, "sports": 0.3},
    "hotel": {"leisure": 0.5, "towns": 0.3},
    "guide": {"routes": 0.6, "culture": 0.3},
    "tour": {"routes": 0.7, "culture": 0.3},
    "walk": {"routes": 0.6, "towns": 0.3, "nature": 0.3},
    "hiking": {"routes": 0.6, "nature": 0.6, "sports": 0.3},
    "trail": {"routes": 0.7, "nature": 0.4},
    "viewpoint": {"viewpoints": 0.9},
    "scenic": {"viewpoints": 0.7, "nature": 0.4},
    "panorama": {"viewpoints": 0.8, "nature": 0.2},
    "lookout": {"viewpoints": 0.8},
    "wine": {"gastro": 0.8, "culture": 0.3},
    "dinner": {"gastro": 0.8, "nightlife": 0.2},
    "restaurant": {"gastro": 0.9, "leisure": 0.2},
    "chef": {"gastro": 0.8},
    "tasting": {"gastro": 0.8, "culture": 0.2},
    "bar": {"nightlife": 0.8, "gastro": 0.3},
    "cocktail": {"nightlife": 0.8, "gastro": 0.3},
    "dance": {"nightlife": 0.8, "events": 0.3},
    "dancing": {"nightlife": 0.8, "events": 0.3},
    "dj": {"nightlife": 0.8, "events": 0.3},
    "party": {"nightlife": 0.7, "events": 0.5},
    "theatre": {"culture": 0.8, "events": 0.4},
    "gallery": {"culture": 0.8},
    "art": {"culture": 0.8},
    "castle": {"culture": 0.7, "towns": 0.4, "viewpoints": 0.3},
    "cathedral": {"culture": 0.8, "towns": 0.3},
    "monument": {"culture": 0.7, "towns": 0.3, "viewpoints": 0.2},
    "heritage": {"culture": 0.8, "towns": 0.2},
    "festival": {"events": 0.8, "culture": 0.3},
    "show": {"events": 0.7, "nightlife": 0.2},
    "exhibition": {"events": 0.5, "culture": 0.6},
    "market": {"shop": 0.7, "towns": 0.4, "gastro": 0.3},
    "boutique": {"shop": 0.8},
    "souvenir": {"shop": 0.7, "towns": 0.3},
    "boat": {"nature": 0.5, "routes": 0.4, "beach": 0.3},
    "kayak": {"sports": 0.6, "nature": 0.5},
    "sailing": {"sports": 0.6, "beach": 0.4, "nature": 0.3},
    "bike": {"sports": 0.6, "routes": 0.5},
    "cycling": {"sports": 0.6, "routes": 0.5},
    "tennis": {"sports": 0.9},
    "swimming": {"sports": 0.6, "beach": 0.5},
    "gym": {"sports": 0.8},
    "stadium": {"sports": 0.7, "events": 0.4},
    "yoga": {"relax": 0.8, "sports": 0.2},
    "massage": {"relax": 0.9},
    "sauna": {"relax": 0.85},
    "wellness": {"relax": 0.9},
    "quiet": {"relax": 0.7, "nature": 0.2},
    "garden": {"nature": 0.7, "relax": 0.3},
    "forest": {"nature": 0.9},
    "wildlife": {"nature": 0.9},
    "mountain": {"nature": 0.7, "viewpoints": 0.4, "routes": 0.3},
    "river": {"nature": 0.8},
    "lake": {"nature": 0.8},
    "birds": {"nature": 0.8},
    "safari": {"nature": 0.7, "routes": 0.4},
    "rides": {"themepark": 0.8, "leisure": 0.3},
    "rollercoaster": {"themepark": 0.9},
    "attraction": {"themepark": 0.6, "leisure": 0.4, "viewpoints": 0.2},
    "amusement": {"themepark": 0.8, "leisure": 0.3},
    "family": {"leisure": 0.5, "themepark": 0.4},
    "fun": {"leisure": 0.6, "events": 0.3},
    "kids": {"themepark": 0.6, "leisure": 0.4},
    "village": {"towns": 0.8, "culture": 0.2},
    "old": {"towns": 0.4, "culture": 0.5},
    "square": {"towns": 0.7, "culture": 0.2},
    "street": {"towns": 0.7, "routes": 0.2},
    "downtown": {"towns": 0.8, "shop": 0.2},
    "ticket": {"events": 0.6, "shop": 0.3},
    "vip": {"events": 0.4, "nightlife": 0.4, "leisure": 0.3},
}


def build():
    entries: dict[str, np.ndarray] = {}
    for token, mix in {**CLASS_TOKENS, **CONTENT_TOKENS}.items():
        vec = np.zeros(DIM)
        for axis, weight in mix.items():
            vec[A[axis]] = weight
        entries[token] = vec / np.linalg.norm(vec)
    return entries


def verify(entries):
    here = Path(__file__).resolve().parents[1]
    stopwords = load_stopwords(here / "src/tourrec/fixtures/stopwords.txt")
    table = VectorTable(DIM, entries, stopwords)
    graph = fixture_graph()
    cfg = BinningConfig()
    failures = []
    for iid in sorted(graph.items):
        links, diags = bin_item(graph.items[iid], graph, table, cfg)
        if not links:
            failures.append((iid, graph.items[iid].name, diags))
    return failures


def main():
    entries = build()
    failures = verify(entries)
    for iid, name, diags in failures:
        print(f"UNBINNED item {iid}: {name}  {diags}")
    if failures:
        raise SystemExit(f"{len(failures)} fixture items failed to bin")

    out = Path(__file__).resolve().parents[1] / "src/tourrec/fixtures/vectors_toy.txt"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"{len(entries)} {DIM}\n")
        for token in sorted(entries):
            comps = " ".join(f"{x:.6f}" for x in entries[token])
            fh.write(f"{token} {comps}\n")
    print(f"wrote {len(entries)} vectors to {out}")


if __name__ == "__main__":
    main()
