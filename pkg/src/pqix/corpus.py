"""Corpus I/O and synthetic corpus generation.

Embeddings travel in a small binary container (magic ``EMB1``), passages and
queries as JSONL. The synthetic generator plants cluster structure with known
exact nearest neighbors so retrieval quality can be measured at desk scale.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
_HEADER = struct.Struct("<4sIQIB7x")  # magic, version, n, d, dtype, reserved


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write `data` to `path` via a temp file + rename, so failures leave no partial file."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


@dataclass
class EmbeddingMatrix:
    """Dense float32 vectors, one row per passage or query, aligned with `ids`.

    Invariants checked on construction: float32 row-major data, unique ids,
    finite values, d >= 1.
    """

    data: np.ndarray
    ids: list[str]

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"data must be 2-D, got {self.data.ndim}-D")
        if self.data.shape[1] < 1:
            raise ValueError("dimension must be >= 1")
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != self.data.shape[0]:
            raise ValueError(
                f"ids length {len(self.ids)} != row count {self.data.shape[0]}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        if self.data.size and not np.isfinite(self.data).all():
            raise ValueError("embeddings contain non-finite values")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def subset(self, keep_ids) -> "EmbeddingMatrix":
        """Rows whose id is in `keep_ids`, in the matrix's original order."""
        keep = set(keep_ids)
        missing = keep - set(self.ids)
        if missing:
            raise KeyError(f"ids not present in matrix: {sorted(missing)[:5]}")
        rows = [i for i, pid in enumerate(self.ids) if pid in keep]
        return EmbeddingMatrix(self.data[rows].copy(), [self.ids[i] for i in rows])

    def row_by_id(self, pid: str) -> np.ndarray:
        try:
            return self.data[self.ids.index(pid)]
        except ValueError:
            raise KeyError(f"id not present in matrix: {pid!r}") from None


@dataclass
class PassageRecord:
    """One ~100-word chunk of an article, with the article-level metadata."""

    id: str
    article_id: str
    title: str
    text: str
    categories: list[str]

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"passage {self.id!r} has empty text")


@dataclass
class QueryRecord:
    id: str
    question: str
    answers: list[str]

    def __post_init__(self):
        if not self.answers:
            raise ValueError(f"query {self.id!r} has empty answers list")


@dataclass
class SyntheticSpec:
    """Parameters for the planted-cluster synthetic corpus.

    `n_queries` defaults to `n` (one perturbed query per passage).
    """

    n: int
    d: int
    n_clusters: int
    noise_sigma: float = 0.0
    seed: int = 0
    n_queries: int | None = None

    def __post_init__(self):
        if self.n < 0 or self.d < 1:
            raise ValueError("need n >= 0 and d >= 1")
        if self.n_clusters > self.n:
            raise ValueError(f"n_clusters {self.n_clusters} > n {self.n}")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.n_queries is None:
            self.n_queries = self.n


def save_embeddings(m: EmbeddingMatrix, path) -> None:
    """Serialize to the EMB1 binary format (little-endian throughout)."""
    atomic_write_bytes(path, embeddings_to_bytes(m))


def embeddings_to_bytes(m: EmbeddingMatrix) -> bytes:
    parts = [_HEADER.pack(EMB_MAGIC, EMB_VERSION, m.n, m.d, 0)]
    for pid in m.ids:
        raw = pid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(m.data, dtype="<f4").tobytes())
    return b"".join(parts)


def load_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        return embeddings_from_bytes(fh.read())


def embeddings_from_bytes(buf: bytes) -> EmbeddingMatrix:
    """Parse EMB1 bytes; format errors name the offending byte offset."""
    if len(buf) < _HEADER.size:
        raise FormatError(
            f"truncated header at offset 0: need {_HEADER.size} bytes, have {len(buf)}"
        )
    magic, version, n, d, dtype = _HEADER.unpack_from(buf, 0)
    if magic != EMB_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {EMB_MAGIC!r}")
    if version != EMB_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if d < 1:
        raise FormatError(f"dimension {d} at offset 16 must be >= 1")
    if dtype != 0:
        raise FormatError(f"unsupported dtype code {dtype} at offset 20")

    off = _HEADER.size
    ids: list[str] = []
    for i in range(n):
        if off + 4 > len(buf):
            raise FormatError(f"truncated id length for row {i} at offset {off}")
        (ln,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + ln > len(buf):
            raise FormatError(f"truncated id bytes for row {i} at offset {off}")
        ids.append(buf[off : off + ln].decode("utf-8"))
        off += ln

    need = n * d * 4
    have = len(buf) - off
    if have != need:
        raise FormatError(
            f"data block at offset {off}: expected {need} bytes, found {have}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    finite = np.isfinite(data)
    if data.size and not finite.all():
        bad = int(np.flatnonzero(~finite.ravel())[0])
        raise FormatError(f"non-finite value at offset {off + bad * 4}")
    return EmbeddingMatrix(data.copy(), ids)


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            yield lineno, obj


def _require(obj: dict, fields, lineno: int):
    for name in fields:
        if name not in obj:
            raise FormatError(f"line {lineno}: missing field {name!r}")


def load_passages(path) -> list[PassageRecord]:
    records = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        _require(obj, ("id", "article_id", "title", "text", "categories"), lineno)
        if obj["id"] in seen:
            raise FormatError(f"line {lineno}: duplicate id {obj['id']!r}")
        seen.add(obj["id"])
        try:
            records.append(
                PassageRecord(
                    id=obj["id"],
                    article_id=obj["article_id"],
                    title=obj["title"],
                    text=obj["text"],
                    categories=list(obj["categories"]),
                )
            )
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return records


def load_queries(path) -> list[QueryRecord]:
    records = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        _require(obj, ("id", "question", "answers"), lineno)
        if obj["id"] in seen:
            raise FormatError(f"line {lineno}: duplicate id {obj['id']!r}")
        seen.add(obj["id"])
        try:
            records.append(
                QueryRecord(
                    id=obj["id"], question=obj["question"], answers=list(obj["answers"])
                )
            )
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return records


def save_jsonl(records, path) -> None:
    """Write dataclass records as JSONL with stable key order."""
    lines = []
    for r in records:
        lines.append(json.dumps(r.__dict__, ensure_ascii=False, sort_keys=True))
    atomic_write_bytes(path, ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8"))


def _passage_id(i: int) -> str:
    return f"p{i:06d}"


def _query_id(i: int) -> str:
    return f"q{i:06d}"


def _planted_passages(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Cluster centers uniform in [-1,1]^d, round-robin membership, Gaussian noise."""
    centers = rng.uniform(-1.0, 1.0, size=(spec.n_clusters, spec.d))
    membership = np.arange(spec.n) % spec.n_clusters
    pts = centers[membership]
    if spec.noise_sigma > 0:
        pts = pts + spec.noise_sigma * rng.standard_normal((spec.n, spec.d))
    return pts.astype(np.float32)


def exact_ground_truth(passages: EmbeddingMatrix, queries: EmbeddingMatrix) -> dict[str, str]:
    """query id -> passage id maximizing the dot product, ties to the smaller id."""
    gt: dict[str, str] = {}
    ids = np.array(passages.ids)
    pdata = passages.data.astype(np.float64)
    for qi, qid in enumerate(queries.ids):
        scores = pdata @ queries.data[qi].astype(np.float64)
        best = np.lexsort((ids, -scores))[0]
        gt[qid] = passages.ids[int(best)]
    return gt


def generate_synthetic(
    spec: SyntheticSpec,
) -> tuple[EmbeddingMatrix, EmbeddingMatrix, dict[str, str]]:
    """Deterministic planted-cluster corpus with exact dot-product ground truth.

    Queries are perturbed copies of randomly chosen passages. The returned map
    holds, for every query id, the passage id found by exhaustive exact search.
    """
    rng = np.random.default_rng(spec.seed)
    pts = _planted_passages(spec, rng)
    passages = EmbeddingMatrix(pts, [_passage_id(i) for i in range(spec.n)])

    sources = rng.permutation(spec.n)[: spec.n_queries]
    qdata = pts[sources].astype(np.float64)
    if spec.noise_sigma > 0:
        qdata = qdata + spec.noise_sigma * rng.standard_normal(qdata.shape)
    queries = EmbeddingMatrix(
        qdata.astype(np.float32), [_query_id(i) for i in range(len(sources))]
    )
    return passages, queries, exact_ground_truth(passages, queries)


_FILLER = (
    "records notes summary concerning measurements gathered during the survey and "
    "archived for later review"
).split()


@dataclass
class SyntheticQACorpus:
    """Synthetic corpus with planted answer strings, for end-to-end P@k runs."""

    passages: list[PassageRecord]
    passage_vectors: EmbeddingMatrix
    queries: list[QueryRecord]
    query_vectors: EmbeddingMatrix
    source_passage: dict[str, str] = field(default_factory=dict)


def generate_synthetic_qa(
    spec: SyntheticSpec, answer_fraction: float = 1.0
) -> SyntheticQACorpus:
    """Text corpus over the planted embeddings, one single-passage article per vector.

    A fraction `answer_fraction` of the articles carry a unique answer token in
    their text; queries are perturbed copies of those answer-bearing passages
    and list that token as the gold answer. The remaining articles contain no
    answers and carry distinguishable title/category features, so a filter can
    learn to drop them.
    """
    if not 0.0 < answer_fraction <= 1.0:
        raise ValueError("answer_fraction must be in (0, 1]")
    rng = np.random.default_rng(spec.seed)
    pts = _planted_passages(spec, rng)
    pvecs = EmbeddingMatrix(pts, [_passage_id(i) for i in range(spec.n)])
    membership = np.arange(spec.n) % spec.n_clusters

    n_answerable = max(1, int(round(answer_fraction * spec.n)))
    answerable = rng.permutation(spec.n)[:n_answerable]
    answer_set = set(int(i) for i in answerable)

    passages = []
    for i in range(spec.n):
        group = f"group-{membership[i]}"
        filler = " ".join(_FILLER)
        if i in answer_set:
            passages.append(
                PassageRecord(
                    id=_passage_id(i),
                    article_id=f"a{i:06d}",
                    title=f"topic {i:06d} overview",
                    text=f"passage {i:06d} mentions token ans{i:06d} {filler}",
                    categories=["content", group],
                )
            )
        else:
            passages.append(
                PassageRecord(
                    id=_passage_id(i),
                    article_id=f"a{i:06d}",
                    title=f"stub {i:06d} placeholder",
                    text=f"passage {i:06d} holds routine text only {filler}",
                    categories=["leftover", group],
                )
            )

    sources = rng.choice(answerable, size=spec.n_queries, replace=spec.n_queries > n_answerable)
    qdata = pts[sources].astype(np.float64)
    if spec.noise_sigma > 0:
        qdata = qdata + spec.noise_sigma * rng.standard_normal(qdata.shape)
    qvecs = EmbeddingMatrix(
        qdata.astype(np.float32), [_query_id(i) for i in range(spec.n_queries)]
    )

    queries = []
    source_passage = {}
    for qi, src in enumerate(sources):
        qid = _query_id(qi)
        queries.append(
            QueryRecord(
                id=qid,
                question=f"which passage mentions token ans{src:06d}",
                answers=[f"ans{src:06d}"],
            )
        )
        source_passage[qid] = _passage_id(int(src))
    return SyntheticQACorpus(passages, pvecs, queries, qvecs, source_passage)
