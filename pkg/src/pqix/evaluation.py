"""Retrieval metrics, size/accuracy sweeps, and size-budget arithmetic.

P@k is answer containment: the fraction of queries for which some top-k
passage contains a gold answer after standard string normalization (lowercase,
strip punctuation, drop English articles, collapse whitespace). Recall-vs-exact
measures how much of the exhaustive full-precision top-k an index reproduces.
`run_sweep` builds one index per grid point and emits one CSV row each.
"""

from __future__ import annotations

import csv
import re
import string
import time
from dataclasses import dataclass, field

from .corpus import EmbeddingMatrix, PassageRecord, QueryRecord, atomic_write_bytes
from .errors import FormatError
from .filtering import FilterModel, articles_from_passages, filter_corpus
from .index import (
    IndexArtifact,
    IndexConfig,
    bits_per_dimension,
    build_index,
    exact_oracle_search,
    index_size_bytes,
    search,
)

K_VALUES = (1, 5, 10, 20, 100)
NORMALIZATION_RULES = (
    "answer-normalization v1: lowercase, strip punctuation, "
    "drop articles (a, an, the), collapse whitespace"
)
CSV_COLUMNS = (
    "mode", "d_R", "n_v", "n_b", "bits_per_dim", "passages_kept", "index_bytes",
    "p_at_1", "p_at_5", "p_at_10", "p_at_20", "p_at_100", "recall_at_10",
    "wall_time_ms",
)

_PUNCT = set(string.punctuation)
_ARTICLES = re.compile(r"\b(?:a|an|the)\b")


def normalize_answer_text(s: str) -> str:
    s = "".join(ch for ch in s.lower() if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def _contains_tokens(tokens: tuple[str, ...], sub: tuple[str, ...]) -> bool:
    if not sub or len(sub) > len(tokens):
        return False
    return any(
        tokens[i : i + len(sub)] == sub for i in range(len(tokens) - len(sub) + 1)
    )


def answer_match(passage_text: str, answers: list[str]) -> bool:
    """True iff some normalized answer appears at token boundaries in the text."""
    tokens = tuple(normalize_answer_text(passage_text).split())
    return any(
        _contains_tokens(tokens, tuple(normalize_answer_text(a).split()))
        for a in answers
    )


def _first_match_rank(
    ranked_ids: list[str],
    passage_tokens: dict[str, tuple[str, ...]],
    answer_tokens: list[tuple[str, ...]],
) -> int | None:
    """1-based rank of the first answer-bearing passage, None when absent."""
    for rank, pid in enumerate(ranked_ids, start=1):
        try:
            tokens = passage_tokens[pid]
        except KeyError:
            raise ValueError(f"retrieved id {pid!r} does not resolve to a passage") from None
        if any(_contains_tokens(tokens, a) for a in answer_tokens):
            return rank
    return None


def precision_at_ks(
    ix: IndexArtifact,
    queries: list[QueryRecord],
    query_vectors: EmbeddingMatrix,
    passages: list[PassageRecord],
    ks: tuple[int, ...] = K_VALUES,
) -> dict[int, float]:
    """P@k for several cutoffs in one retrieval pass per query."""
    if not queries:
        raise ValueError("need at least one query")
    if any(k < 1 for k in ks):
        raise ValueError("k values must be >= 1")
    ptoks = {p.id: tuple(normalize_answer_text(p.text).split()) for p in passages}
    qrow = {qid: i for i, qid in enumerate(query_vectors.ids)}
    kmax = max(ks)
    hits = dict.fromkeys(ks, 0)
    for q in queries:
        if q.id not in qrow:
            raise ValueError(f"query {q.id!r} has no vector")
        ranked = [pid for pid, _ in search(ix, query_vectors.data[qrow[q.id]], kmax)]
        atoks = [tuple(normalize_answer_text(a).split()) for a in q.answers]
        rank = _first_match_rank(ranked, ptoks, atoks)
        if rank is not None:
            for k in ks:
                if rank <= k:
                    hits[k] += 1
    return {k: hits[k] / len(queries) for k in ks}


def precision_at_k(
    ix: IndexArtifact,
    queries: list[QueryRecord],
    query_vectors: EmbeddingMatrix,
    passages: list[PassageRecord],
    k: int,
) -> float:
    return precision_at_ks(ix, queries, query_vectors, passages, (k,))[k]


def _ranked_ids(results) -> list[str]:
    return [r[0] if isinstance(r, tuple) else r for r in results]


def recall_vs_exact(approx_results: dict, oracle_results: dict, k: int) -> float:
    """Mean top-k overlap fraction against the exact ranking, per query.

    The denominator is min(k, size of the oracle list), so identical rankings
    score 1.0 even when the corpus holds fewer than k passages.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if approx_results.keys() != oracle_results.keys():
        raise ValueError("approx and oracle cover different query ids")
    if not oracle_results:
        raise ValueError("need at least one query")
    total = 0.0
    for qid, oracle in oracle_results.items():
        o = _ranked_ids(oracle)[:k]
        a = _ranked_ids(approx_results[qid])[:k]
        total += len(set(a) & set(o)) / min(k, len(o))
    return total / len(oracle_results)


@dataclass(frozen=True)
class SweepPoint:
    """One sweep configuration; `keep_fraction` < 1 filters articles first."""

    storage_mode: str
    d_r: int | None = None
    n_v: int | None = None
    n_b: int | None = None
    normalize: bool = False
    keep_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")


def grid_from_bits(
    d: int,
    bits: list[int],
    d_r: int | None = None,
    keep_fractions: tuple[float, ...] = (1.0,),
) -> list[SweepPoint]:
    """Expand a bits-per-dimension axis into sweep points.

    32 and 16 map to the flat modes; 1/2/4/8 map to one-dimensional sub-vectors
    with that many bits each (n_v = stored dimension).
    """
    dim = d_r if d_r is not None else d
    points = []
    for frac in keep_fractions:
        for b in bits:
            if b == 32:
                points.append(SweepPoint("flat32", d_r, keep_fraction=frac))
            elif b == 16:
                points.append(SweepPoint("flat16", d_r, keep_fraction=frac))
            elif b in (1, 2, 4, 8):
                points.append(SweepPoint("pq", d_r, dim, b, keep_fraction=frac))
            else:
                raise ValueError(f"unsupported bits-per-dimension {b}")
    return points


@dataclass(frozen=True)
class SweepRow:
    """One measured configuration; `n_v`/`n_b` are 0 for the flat modes."""

    mode: str
    d_r: int
    n_v: int
    n_b: int
    bits_per_dim: float
    passages_kept: int
    index_bytes: int
    p_at_k: dict[int, float] = field(hash=False)
    recall_at_10: float = 0.0
    wall_time_ms: float = 0.0

    def __post_init__(self):
        prev = 0.0
        for k in sorted(self.p_at_k):
            v = self.p_at_k[k]
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"p@{k}={v} outside [0,1]")
            if v < prev - 1e-12:
                raise ValueError("p@k must be non-decreasing in k")
            prev = v


def _sweep_one(
    point: SweepPoint,
    passages: list[PassageRecord],
    passage_vectors: EmbeddingMatrix,
    queries: list[QueryRecord],
    query_vectors: EmbeddingMatrix,
    seed: int,
    filter_model: FilterModel | None,
) -> SweepRow:
    start = time.perf_counter()
    kept_vectors = passage_vectors
    kept_passages = passages
    if point.keep_fraction < 1.0:
        if filter_model is None:
            raise ValueError("keep_fraction < 1 requires a filter model")
        articles = articles_from_passages(passages)
        keep_count = int(round(point.keep_fraction * len(articles)))
        kept_articles = set(filter_corpus(filter_model, articles, keep_count))
        kept_passages = [p for p in passages if p.article_id in kept_articles]
        if not kept_passages:
            raise ValueError("filtering removed every passage")
        kept_vectors = passage_vectors.subset([p.id for p in kept_passages])

    config = IndexConfig(
        point.storage_mode, point.d_r, point.n_v, point.n_b,
        seed=seed, normalize=point.normalize,
    )
    ix = build_index(kept_vectors, config)

    p_at_k = precision_at_ks(ix, queries, query_vectors, kept_passages, K_VALUES)
    approx: dict[str, list[str]] = {}
    oracle: dict[str, list[str]] = {}
    qrow = {qid: i for i, qid in enumerate(query_vectors.ids)}
    for q in queries:
        vec = query_vectors.data[qrow[q.id]]
        approx[q.id] = [pid for pid, _ in search(ix, vec, 10)]
        oracle[q.id] = [pid for pid, _ in exact_oracle_search(kept_vectors, vec, 10)]
    recall = recall_vs_exact(approx, oracle, 10)

    d_r = ix.d_r
    return SweepRow(
        mode=point.storage_mode,
        d_r=d_r,
        n_v=point.n_v or 0,
        n_b=point.n_b or 0,
        bits_per_dim=bits_per_dimension(point.storage_mode, point.n_v, point.n_b, d_r),
        passages_kept=len(kept_passages),
        index_bytes=index_size_bytes(ix).total_bytes,
        p_at_k=p_at_k,
        recall_at_10=recall,
        wall_time_ms=(time.perf_counter() - start) * 1000.0,
    )


def run_sweep(
    passages: list[PassageRecord],
    passage_vectors: EmbeddingMatrix,
    queries: list[QueryRecord],
    query_vectors: EmbeddingMatrix,
    grid: list[SweepPoint],
    seed: int = 0,
    filter_model: FilterModel | None = None,
) -> tuple[list[SweepRow], list[tuple[SweepPoint, str]]]:
    """Measure every grid point; invalid points land in the error list.

    Rows come back sorted by (d_R, bits_per_dim, passages_kept).
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    rows: list[SweepRow] = []
    errors: list[tuple[SweepPoint, str]] = []
    for point in grid:
        try:
            rows.append(
                _sweep_one(point, passages, passage_vectors, queries, query_vectors,
                           seed, filter_model)
            )
        except (ValueError, KeyError) as exc:
            errors.append((point, str(exc)))
    rows.sort(key=lambda r: (r.d_r, r.bits_per_dim, r.passages_kept))
    return rows, errors


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_rows_to_csv(rows: list[SweepRow]) -> str:
    """CSV with the normalization-rules version pinned in a leading comment."""
    lines = [f"# {NORMALIZATION_RULES}", ",".join(CSV_COLUMNS)]
    for r in rows:
        values = [
            r.mode, r.d_r, r.n_v, r.n_b, r.bits_per_dim, r.passages_kept,
            r.index_bytes, *(r.p_at_k[k] for k in K_VALUES), r.recall_at_10,
            r.wall_time_ms,
        ]
        lines.append(",".join(_format_value(v) for v in values))
    return "\n".join(lines) + "\n"


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    atomic_write_bytes(path, sweep_rows_to_csv(rows).encode("utf-8"))


def read_sweep_csv(path) -> list[SweepRow]:
    """Parse a sweep CSV back into rows; exact round trip with the writer."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        body = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(body)
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
        raise FormatError(f"bad CSV header, expected {','.join(CSV_COLUMNS)}")
    rows = []
    for rec in reader:
        try:
            rows.append(
                SweepRow(
                    mode=rec["mode"],
                    d_r=int(rec["d_R"]),
                    n_v=int(rec["n_v"]),
                    n_b=int(rec["n_b"]),
                    bits_per_dim=float(rec["bits_per_dim"]),
                    passages_kept=int(rec["passages_kept"]),
                    index_bytes=int(rec["index_bytes"]),
                    p_at_k={k: float(rec[f"p_at_{k}"]) for k in K_VALUES},
                    recall_at_10=float(rec["recall_at_10"]),
                    wall_time_ms=float(rec["wall_time_ms"]),
                )
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"bad CSV row {rec!r}: {exc}") from None
    return rows


@dataclass
class SizeBudget:
    """Named component sizes and their total, for system-level accounting."""

    components: list[tuple[str, int]]

    @property
    def total_bytes(self) -> int:
        return sum(b for _, b in self.components)

    def format(self) -> str:
        lines = [
            f"{name:<28}{b:>16,} B{b / 1e9:>9.2f} GB" for name, b in self.components
        ]
        lines.append(f"{'total':<28}{self.total_bytes:>16,} B{self.total_bytes / 1e9:>9.2f} GB")
        return "\n".join(lines)


def parameter_bytes(n_parameters: int, bytes_per_parameter: int = 4) -> int:
    """Storage cost of a parameter count at a fixed width (default float32)."""
    return int(n_parameters) * bytes_per_parameter


def system_size_report(components: list[tuple[str, int]]) -> SizeBudget:
    """Sum declared component sizes (models, index, corpus) into one budget."""
    return SizeBudget([(name, int(round(b))) for name, b in components])
