"""Field-aware factorization machine: data format, prediction, SGD training.

Every feature keeps one latent vector per partner field, so the interaction
between two features i and j is dot(v[i, field(j)], v[j, field(i)]) * xi * xj
on top of a bias and linear terms.  Training is per-example SGD on logistic
loss with per-coordinate adaptive steps (accumulated squared gradients) and
optional held-out early stopping.  Deterministic given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .demographic import UserRecord
from .ontology import ItemRecord

MODEL_FORMAT = "tourrec-ffm"
MODEL_VERSION = 1

USER_ATTRS = ("age", "ac_deg", "budget", "accom", "gender", "job", "region",
              "group_comp")


class FfmError(ValueError):
    pass


@dataclass
class FfmFeatureTriple:
    field: int
    feature: int
    value: float


@dataclass
class FfmExample:
    label: int
    triples: list[FfmFeatureTriple] = field(default_factory=list)

    def __post_init__(self):
        if self.label not in (0, 1):
            raise FfmError(f"label must be 0 or 1, got {self.label}")
        seen = set()
        for t in self.triples:
            key = (t.field, t.feature)
            if key in seen:
                raise FfmError(f"duplicate (field, feature) pair {key}")
            seen.add(key)


@dataclass
class TrainConfig:
    d: int = 8
    eta: float = 0.1
    lam: float = 1e-5
    epochs: int = 30
    seed: int = 0
    init_scale: float = 0.1
    patience: int = 3
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.eta <= 0:
            raise FfmError("learning rate must be positive")
        if self.lam < 0:
            raise FfmError("L2 strength must be nonnegative")
        if self.epochs < 1:
            raise FfmError("epochs must be >= 1")
        if self.d < 1:
            raise FfmError("latent dimension must be >= 1")


def parse_ffm_line(text: str) -> FfmExample:
    """Parse `label field:feature:value ...` with arbitrary whitespace."""
    parts = text.split()
    if not parts:
        raise FfmError("empty line")
    if parts[0] not in ("0", "1"):
        raise FfmError(f"label must be 0 or 1, got {parts[0]!r}")
    triples = []
    for col, token in enumerate(parts[1:], start=1):
        pieces = token.split(":")
        if len(pieces) != 3:
            raise FfmError(f"column {col}: expected field:feature:value, got {token!r}")
        try:
            f, j, x = int(pieces[0]), int(pieces[1]), float(pieces[2])
        except ValueError as exc:
            raise FfmError(f"column {col}: {exc}") from exc
        if f < 0 or j < 0:
            raise FfmError(f"column {col}: negative index in {token!r}")
        triples.append(FfmFeatureTriple(f, j, x))
    try:
        return FfmExample(int(parts[0]), triples)
    except FfmError as exc:
        raise FfmError(str(exc)) from exc


def serialize_example(example: FfmExample) -> str:
    toks = [str(example.label)]
    toks += [f"{t.field}:{t.feature}:{t.value:g}" for t in example.triples]
    return " ".join(toks)


def load_ffm_file(source) -> list[FfmExample]:
    """One example per line; blank lines are skipped, errors carry line numbers."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    examples = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            examples.append(parse_ffm_line(line))
        except FfmError as exc:
            raise FfmError(f"line {lineno}: {exc}") from exc
    return examples


def save_ffm_file(examples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(serialize_example(ex) + "\n")


class FeatureVocab:
    """Append-only mapping of attributes to fields and (attribute, level) to features."""

    def __init__(self):
        self.field_ids: dict[str, int] = {}
        self.feature_ids: dict[tuple[str, str], int] = {}
        self.frozen = False
        self.skipped = 0

    def field(self, attr: str) -> int:
        if attr not in self.field_ids:
            if self.frozen:
                raise KeyError(attr)
            self.field_ids[attr] = len(self.field_ids)
        return self.field_ids[attr]

    def feature(self, attr: str, level: str) -> int:
        key = (attr, str(level))
        if key not in self.feature_ids:
            if self.frozen:
                raise KeyError(key)
            self.feature_ids[key] = len(self.feature_ids)
        return self.feature_ids[key]

    @property
    def n_fields(self) -> int:
        return len(self.field_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    def to_dict(self) -> dict:
        return {
            "fields": self.field_ids,
            "features": {f"{a}\x1f{l}": i for (a, l), i in self.feature_ids.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVocab":
        vocab = cls()
        vocab.field_ids = dict(d["fields"])
        vocab.feature_ids = {
            tuple(key.split("\x1f", 1)): i for key, i in d["features"].items()
        }
        return vocab


def encode_example(
    user: UserRecord,
    item: ItemRecord,
    vocab: FeatureVocab,
    item_classes: list[str] | None = None,
    context: dict[str, str] | None = None,
    label: int = 0,
) -> FfmExample:
    """One-hot triples for user demographics, item id, item classes, context.

    With a frozen vocab, unseen levels are skipped and counted on the vocab
    instead of failing the whole encode.
    """
    if item_classes is None:
        item_classes = list(item.categories)
    triples: list[FfmFeatureTriple] = []

    def push(attr: str, level) -> None:
        try:
            f = vocab.field(attr)
            j = vocab.feature(attr, level)
        except KeyError:
            vocab.skipped += 1
            return
        triples.append(FfmFeatureTriple(f, j, 1.0))

    for attr in USER_ATTRS:
        push(attr, getattr(user, attr))
    push("item", item.item_id)
    for cls in sorted(set(item_classes)):
        push("item_class", cls)
    for attr, level in sorted((context or {}).items()):
        push(f"ctx_{attr}", level)
    return FfmExample(label, triples)


@dataclass
class FfmModel:
    d: int
    n_features: int
    n_fields: int
    w0: float
    w: np.ndarray   # (n_features,)
    v: np.ndarray   # (n_features, n_fields, d)

    @classmethod
    def zeros(cls, n_features: int, n_fields: int, d: int) -> "FfmModel":
        return cls(
            d=d, n_features=n_features, n_fields=n_fields, w0=0.0,
            w=np.zeros(n_features), v=np.zeros((n_features, n_fields, d)),
        )

    def save(self, path) -> None:
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "d": self.d,
            "n_features": self.n_features,
            "n_fields": self.n_fields,
            "w0": self.w0,
            "w": self.w.tolist(),
            "v": self.v.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "FfmModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != MODEL_FORMAT:
            raise FfmError(f"not a {MODEL_FORMAT} file")
        if payload.get("version") != MODEL_VERSION:
            raise FfmError(f"unsupported model version {payload.get('version')}")
        model = cls(
            d=payload["d"],
            n_features=payload["n_features"],
            n_fields=payload["n_fields"],
            w0=payload["w0"],
            w=np.array(payload["w"], dtype=float),
            v=np.array(payload["v"], dtype=float),
        )
        if model.v.shape != (model.n_features, model.n_fields, model.d):
            raise FfmError("latent table shape does not match header")
        return model


def _sigmoid(z: float) -> float:
    return float(1.0 / (1.0 + np.exp(-z))) if z >= 0 else float(
        np.exp(z) / (1.0 + np.exp(z))
    )


def _example_arrays(example: FfmExample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fields = np.array([t.field for t in example.triples], dtype=int)
    feats = np.array([t.feature for t in example.triples], dtype=int)
    values = np.array([t.value for t in example.triples], dtype=float)
    return fields, feats, values


def ffm_predict(model: FfmModel, triples) -> tuple[float, float]:
    """Raw score and logistic probability for one example's triples."""
    if isinstance(triples, FfmExample):
        triples = triples.triples
    example = FfmExample(0, list(triples))
    fields, feats, values = _example_arrays(example)
    if len(feats) and (feats.max() >= model.n_features or feats.min() < 0):
        raise FfmError(f"feature index out of bounds for model with "
                       f"{model.n_features} features")
    if len(fields) and (fields.max() >= model.n_fields or fields.min() < 0):
        raise FfmError(f"field index out of bounds for model with "
                       f"{model.n_fields} fields")

    raw = model.w0 + float(model.w[feats] @ values)
    t = len(feats)
    if t > 1:
        a = model.v[feats][:, fields, :]            # a[s, t] = v[j_s, f_t]
        dots = np.einsum("std,tsd->st", a, a)
        xx = np.outer(values, values)
        raw += float(np.triu(dots * xx, k=1).sum())
    return raw, _sigmoid(raw)


def _logloss(raw: float, label: int) -> float:
    sign = 1.0 if label == 1 else -1.0
    return float(np.logaddexp(0.0, -sign * raw))


def _forward_backward(w0, w, v, fields, feats, values, label, lam):
    """Loss and sparse gradients for one example.

    Returns (loss, grad_w0, grad_w over the example's features, unique
    partner fields uf, grad_v of shape (t, len(uf), d) aligned with
    v[feats[s], uf]).  Gradient contributions from partners sharing a field
    are summed, which matters when one field holds several triples.
    """
    t = len(feats)
    raw = w0 + float(w[feats] @ values)
    uf = inv = a = None
    if t > 1:
        a = v[feats][:, fields, :]                  # a[s, t] = v[j_s, f_t]
        dots = np.einsum("std,tsd->st", a, a)
        raw += float(np.triu(dots * np.outer(values, values), k=1).sum())
    loss = _logloss(raw, label)
    g = _sigmoid(raw) - label

    grad_w0 = g
    grad_w = g * values + lam * w[feats]
    grad_v = None
    if t > 1:
        xx = np.outer(values, values)
        np.fill_diagonal(xx, 0.0)
        # partner[s, t] = v[j_t, f_s] * x_s * x_t, the pull of partner t
        partner = np.einsum("tsd,st->std", a, xx)
        uf, inv = np.unique(fields, return_inverse=True)
        agg = np.zeros((t, len(uf), v.shape[2]))
        np.add.at(agg, (slice(None), inv), partner)
        grad_v = g * agg
        for s in range(t):
            grad_v[s] += lam * v[feats[s], uf]
    return loss, raw, grad_w0, grad_w, uf, grad_v


def loss_gradients(
    model: FfmModel, example: FfmExample, lam: float = 0.0
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Dense gradients of the (optionally L2-touched) logistic loss.

    Returns (loss, d/dw0, d/dw, d/dv) with the last two shaped like model.w
    and model.v.  Used by training and by the finite-difference checks.
    """
    fields, feats, values = _example_arrays(example)
    loss, _, g0, gw_sparse, uf, gv_sparse = _forward_backward(
        model.w0, model.w, model.v, fields, feats, values, example.label, lam
    )
    gw = np.zeros_like(model.w)
    np.add.at(gw, feats, gw_sparse)
    gv = np.zeros_like(model.v)
    if gv_sparse is not None:
        for s in range(len(feats)):
            np.add.at(gv, (feats[s], uf), gv_sparse[s])
    return loss, g0, gw, gv


def ffm_train(
    dataset: list[FfmExample],
    cfg: TrainConfig | None = None,
    n_features: int | None = None,
    n_fields: int | None = None,
) -> tuple[FfmModel, list[dict]]:
    """Train on logistic loss; returns (model, per-epoch history).

    Latent vectors start uniform(0, init_scale / sqrt(d)); examples are
    shuffled each epoch with a seeded permutation; per-coordinate step sizes
    shrink with accumulated squared gradients.  With enough data a held-out
    split drives early stopping and the best parameters are restored.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise FfmError("empty training set")
    max_feat = max((t.feature for ex in dataset for t in ex.triples), default=-1)
    max_field = max((t.field for ex in dataset for t in ex.triples), default=-1)
    if n_features is not None and max_feat >= n_features:
        raise FfmError("dataset feature indices exceed declared dimension")
    if n_fields is not None and max_field >= n_fields:
        raise FfmError("dataset field indices exceed declared dimension")
    n_features = max(n_features if n_features is not None else max_feat + 1, 1)
    n_fields = max(n_fields if n_fields is not None else max_field + 1, 1)

    rng = np.random.default_rng(cfg.seed)
    w0 = 0.0
    w = np.zeros(n_features)
    v = rng.uniform(0.0, cfg.init_scale / np.sqrt(cfg.d),
                    size=(n_features, n_fields, cfg.d))
    g0 = 1.0
    gw = np.ones(n_features)
    gv = np.ones((n_features, n_fields, cfg.d))

    examples = list(dataset)
    val: list[FfmExample] = []
    if cfg.patience > 0 and len(examples) >= 20:
        idx = rng.permutation(len(examples))
        n_val = max(1, int(len(examples) * cfg.val_fraction))
        val = [examples[i] for i in idx[:n_val]]
        examples = [examples[i] for i in idx[n_val:]]

    cache = [_example_arrays(ex) for ex in examples]
    labels = [ex.label for ex in examples]

    def eval_loss(batch: list[FfmExample]) -> float:
        total = 0.0
        for ex in batch:
            fields, feats, values = _example_arrays(ex)
            loss, *_ = _forward_backward(w0, w, v, fields, feats, values,
                                         ex.label, 0.0)
            total += loss
        return total / len(batch)

    history: list[dict] = []
    best = None
    best_val = np.inf
    stale = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        for i in order:
            fields, feats, values = cache[i]
            loss, _, grad_w0, grad_w, uf, grad_v = _forward_backward(
                w0, w, v, fields, feats, values, labels[i], cfg.lam
            )
            total += loss

            w0 -= cfg.eta * grad_w0 / np.sqrt(g0)
            g0 += grad_w0 * grad_w0
            # accumulate: one feature may appear under several fields
            np.subtract.at(w, feats, cfg.eta * grad_w / np.sqrt(gw[feats]))
            np.add.at(gw, feats, grad_w**2)
            if grad_v is not None:
                for s in range(len(feats)):
                    coord = (feats[s], uf)
                    v[coord] -= cfg.eta * grad_v[s] / np.sqrt(gv[coord])
                    gv[coord] += grad_v[s] ** 2

        train_loss = total / len(examples)
        if not np.isfinite(train_loss):
            raise FfmError(
                f"non-finite training loss at epoch {epoch}; learning rate too high"
            )
        record = {"epoch": epoch, "train_loss": train_loss}
        if val:
            val_loss = eval_loss(val)
            record["val_loss"] = val_loss
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best = (w0, w.copy(), v.copy())
                stale = 0
            else:
                stale += 1
            history.append(record)
            if stale > cfg.patience:
                break
        else:
            history.append(record)

    if best is not None:
        w0, w, v = best
    model = FfmModel(cfg.d, n_features, n_fields, float(w0), w, v)
    return model, history


def recommend_collaborative(
    user: UserRecord,
    catalog: dict[int, ItemRecord],
    model: FfmModel | None,
    vocab: FeatureVocab,
    n: int,
    item_classes: dict[int, list[str]] | None = None,
    consumed: set[int] | None = None,
    context: dict[str, str] | None = None,
):
    """Top-n unconsumed items by predicted probability, ties by item id."""
    from .recs import RecEntry, RecList

    if model is None:
        raise FfmError("collaborative model is not trained")
    consumed = consumed or set()
    was_frozen = vocab.frozen
    vocab.frozen = True
    try:
        scores: dict[int, float] = {}
        for iid in sorted(catalog):
            if iid in consumed:
                continue
            classes = item_classes.get(iid) if item_classes else None
            ex = encode_example(user, catalog[iid], vocab,
                                item_classes=classes, context=context)
            _, prob = ffm_predict(model, ex)
            scores[iid] = prob
    finally:
        vocab.frozen = was_frozen

    rec = RecList(user_id=user.user_id)
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    rec.entries = [RecEntry(iid, float(p)) for iid, p in ordered[:n]]
    return rec
