"""Linear article filter over hashed title/category features.

Articles are represented by indicator features: each lowercased title token and
each whole category string is hashed (seeded 64-bit FNV-1a) into a power-of-two
feature space. A logistic-regression model trained by full-batch gradient
descent scores articles; self-training re-mines the lowest-margin non-positives
as negatives each round. Filtering keeps the highest-margin articles, so kept
sets nest as the budget grows.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .corpus import PassageRecord, atomic_write_bytes
from .errors import FormatError

DEFAULT_HASH_DIM = 2**20
DEFAULT_ROUNDS = 3
_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes, seed: int = 0) -> int:
    """FNV-1a with the offset basis XORed by `seed`; seed 0 is the standard hash."""
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass
class Article:
    """Filter-granularity unit: one title plus its category list."""

    id: str
    title: str
    categories: list[str]


def articles_from_passages(passages: list[PassageRecord]) -> list[Article]:
    """Group passages into articles (first-seen order, metadata from first chunk)."""
    out: list[Article] = []
    seen: set[str] = set()
    for p in passages:
        if p.article_id not in seen:
            seen.add(p.article_id)
            out.append(Article(p.article_id, p.title, list(p.categories)))
    return out


def featurize(
    title: str, categories: list[str], hash_dim: int = DEFAULT_HASH_DIM, hash_seed: int = 0
) -> np.ndarray:
    """Sorted unique feature indices for one article; empty inputs give none.

    Title tokens (split on non-alphanumeric runs after lowercasing) and whole
    lowercased category strings are hashed independently into [0, hash_dim).
    """
    if hash_dim < 1 or hash_dim & (hash_dim - 1):
        raise ValueError(f"hash_dim must be a power of two, got {hash_dim}")
    mask = hash_dim - 1
    terms = [t for t in _TOKEN_SPLIT.split(title.lower()) if t]
    terms.extend(c.lower() for c in categories)
    idx = {fnv1a_64(t.encode("utf-8"), hash_seed) & mask for t in terms}
    return np.array(sorted(idx), dtype=np.int64)


@dataclass
class TrainConfig:
    lr: float = 0.5
    l2: float = 1e-4
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.l2 < 0 or self.epochs < 1:
            raise ValueError("need lr > 0, l2 >= 0, epochs >= 1")


@dataclass
class FilterModel:
    """Linear scorer over the hashed feature space; margin = w[features].sum() + bias."""

    hash_dim: int
    hash_seed: int
    weights: np.ndarray
    bias: float
    rounds_trained: int = 1
    loss_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.hash_dim < 1 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError(f"hash_dim must be a power of two, got {self.hash_dim}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.hash_dim,):
            raise ValueError("weights must have shape (hash_dim,)")
        if not np.isfinite(self.weights).all() or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    def margin(self, article: Article) -> float:
        feats = featurize(article.title, article.categories, self.hash_dim, self.hash_seed)
        return float(self.weights[feats].sum() + self.bias)

    def margins(self, articles: list[Article]) -> np.ndarray:
        return np.array([self.margin(a) for a in articles], dtype=np.float64)


@dataclass
class FilterDecision:
    article_id: str
    score: float
    keep: bool


def _flatten(feature_sets: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate index arrays, tagging each entry with its sample number."""
    if not feature_sets:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    owners = np.repeat(np.arange(len(feature_sets)), [len(f) for f in feature_sets])
    idx = np.concatenate([np.asarray(f, dtype=np.int64) for f in feature_sets])
    return idx, owners


def train_logreg(
    pos: list[np.ndarray],
    neg: list[np.ndarray],
    hyper: TrainConfig | None = None,
    hash_dim: int = DEFAULT_HASH_DIM,
    hash_seed: int = 0,
) -> FilterModel:
    """L2-regularized logistic regression by full-batch gradient descent.

    Start from zero weights (no randomness is consumed); the step size halves
    whenever a step would increase the loss, so the recorded loss history is
    non-increasing. The bias is not regularized.
    """
    if not pos or not neg:
        raise ValueError("both classes must be non-empty")
    hyper = hyper or TrainConfig()
    n = len(pos) + len(neg)
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    idx, owners = _flatten(list(pos) + list(neg))

    w = np.zeros(hash_dim, dtype=np.float64)
    b = 0.0

    def loss_and_margins(w, b):
        m = np.bincount(owners, weights=w[idx], minlength=n) + b
        data_loss = float(np.mean(np.logaddexp(0.0, -y * m)))
        return data_loss + 0.5 * hyper.l2 * float(w @ w), m

    lr = hyper.lr
    loss, m = loss_and_margins(w, b)
    history = [loss]
    for _ in range(hyper.epochs):
        g = -y * _sigmoid(-y * m) / n
        grad_w = np.bincount(idx, weights=g[owners], minlength=hash_dim) + hyper.l2 * w
        grad_b = float(g.sum())
        while True:
            w_new = w - lr * grad_w
            b_new = b - lr * grad_b
            loss_new, m_new = loss_and_margins(w_new, b_new)
            if loss_new <= loss or lr < 1e-12:
                break
            lr *= 0.5
        if loss_new > loss:
            break
        w, b, loss, m = w_new, b_new, loss_new, m_new
        history.append(loss)

    model = FilterModel(hash_dim, hash_seed, w, b, rounds_trained=1)
    model.loss_history = history
    return model


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def self_train(
    articles: list[Article],
    positive_ids,
    rounds: int = DEFAULT_ROUNDS,
    negatives_per_round: int | None = None,
    seed: int = 0,
    hyper: TrainConfig | None = None,
    hash_dim: int = DEFAULT_HASH_DIM,
    hash_seed: int = 0,
) -> FilterModel:
    """Iteratively retrain, mining the lowest-margin non-positives as negatives.

    Round 1 samples negatives uniformly from the non-positive articles; later
    rounds take the `negatives_per_round` non-positives the previous model
    scores lowest (ties by id). Positives stay fixed. If fewer non-positives
    exist than requested, all are used.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    positive_ids = set(positive_ids)
    known = {a.id for a in articles}
    missing = positive_ids - known
    if missing:
        raise ValueError(f"positive ids not in articles: {sorted(missing)[:5]}")
    if negatives_per_round is None:
        negatives_per_round = len(positive_ids)
    if negatives_per_round < 1:
        raise ValueError("negatives_per_round must be >= 1")

    feats = {
        a.id: featurize(a.title, a.categories, hash_dim, hash_seed) for a in articles
    }
    pos_articles = [a for a in articles if a.id in positive_ids]
    non_pos = [a for a in articles if a.id not in positive_ids]
    if not pos_articles or not non_pos:
        raise ValueError("need at least one positive and one non-positive article")
    pos_feats = [feats[a.id] for a in pos_articles]
    take = min(negatives_per_round, len(non_pos))

    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(non_pos), size=take, replace=False))
    negatives = [non_pos[int(i)] for i in chosen]

    model = None
    for r in range(1, rounds + 1):
        if r > 1:
            scored = sorted(non_pos, key=lambda a: (model.margin(a), a.id))
            negatives = scored[:take]
        model = train_logreg(
            pos_feats, [feats[a.id] for a in negatives], hyper, hash_dim, hash_seed
        )
        model.rounds_trained = r
    return model


def classify(
    model: FilterModel, articles: list[Article], threshold: float = 0.0
) -> list[FilterDecision]:
    """Margin and keep/drop flag per article, in input order."""
    return [
        FilterDecision(a.id, s, s >= threshold)
        for a, s in zip(articles, model.margins(articles))
    ]


def filter_corpus(model: FilterModel, articles: list[Article], keep_count: int) -> list[str]:
    """The `keep_count` highest-margin article ids, best first, ties to smaller id.

    Because output is rank-ordered, the kept set at a smaller budget is always
    a prefix (hence subset) of the kept set at a larger one.
    """
    if not 0 <= keep_count <= len(articles):
        raise ValueError(f"keep_count {keep_count} out of range 0..{len(articles)}")
    ranked = sorted(articles, key=lambda a: (-model.margin(a), a.id))
    return [a.id for a in ranked[:keep_count]]


def filter_model_to_bytes(model: FilterModel) -> bytes:
    header = json.dumps(
        {
            "bias": model.bias,
            "hash_dim": model.hash_dim,
            "hash_seed": model.hash_seed,
            "rounds": model.rounds_trained,
        },
        sort_keys=True,
    )
    return header.encode("utf-8") + b"\n" + model.weights.astype("<f8").tobytes()


def save_filter_model(model: FilterModel, path) -> None:
    atomic_write_bytes(path, filter_model_to_bytes(model))


def filter_model_from_bytes(buf: bytes) -> FilterModel:
    nl = buf.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line")
    try:
        head = json.loads(buf[:nl].decode("utf-8"))
        hash_dim = int(head["hash_dim"])
        hash_seed = int(head["hash_seed"])
        rounds = int(head["rounds"])
        bias = float(head["bias"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError(f"bad header line: {exc}") from None
    body = buf[nl + 1 :]
    if len(body) != hash_dim * 8:
        raise FormatError(
            f"weights block: expected {hash_dim * 8} bytes, found {len(body)}"
        )
    weights = np.frombuffer(body, dtype="<f8").copy()
    return FilterModel(hash_dim, hash_seed, weights, bias, rounds_trained=rounds)


def load_filter_model(path) -> FilterModel:
    with open(path, "rb") as fh:
        return filter_model_from_bytes(fh.read())


def save_kept_ids(ids: list[str], path) -> None:
    atomic_write_bytes(path, ("\n".join(ids) + ("\n" if ids else "")).encode("utf-8"))


def load_kept_ids(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]
