"""Sealed search-index artifacts in three storage modes, with byte accounting.

An index stores passage vectors as raw float32 (`flat32`), half precision
(`flat16`), or product-quantized codes (`pq`), optionally behind a PCA
projection and a per-vector normalization that are replayed on queries at
search time. Artifacts serialize to a little-endian binary container (magic
``PQIX``) whose exact byte layout backs the size accounting: the report totals
match the file length to the byte.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingMatrix, atomic_write_bytes
from .errors import FormatError
from .quantizer import (
    SUPPORTED_BITS,
    PQCodebook,
    PQCodes,
    pack_codes,
    pq_encode,
    pq_search,
    pq_train,
    unpack_codes,
)
from .reduction import (
    NormalizationParams,
    PCAModel,
    apply_pca,
    fit_pca,
    layer_normalize,
    normalize_rows,
    project_rows,
)

INDEX_MAGIC = b"PQIX"
INDEX_VERSION = 1
STORAGE_MODES = ("flat32", "flat16", "pq")
_MODE_CODE = {m: i for i, m in enumerate(STORAGE_MODES)}
_FLAG_PCA = 1
_FLAG_NORM = 2
# magic, version, mode, d_original, d_R, flags, n, n_v, n_b
_FIXED = struct.Struct("<4sIBIIBQIB")
_CHECKSUM_BYTES = 8

F16_MAX = 65504.0


@dataclass(frozen=True)
class IndexConfig:
    """Build parameters; PQ shape parameters are required iff mode is `pq`.

    `d_r` requests a PCA projection to that dimension; leaving it unset (or
    equal to the corpus dimension) stores vectors in the original space.
    """

    storage_mode: str
    d_r: int | None = None
    n_v: int | None = None
    n_b: int | None = None
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if self.storage_mode not in STORAGE_MODES:
            raise ValueError(
                f"storage_mode must be one of {STORAGE_MODES}, got {self.storage_mode!r}"
            )
        if self.storage_mode == "pq":
            if self.n_v is None or self.n_b is None:
                raise ValueError("pq mode requires both n_v and n_b")
        elif self.n_v is not None or self.n_b is not None:
            raise ValueError(f"n_v/n_b only apply to pq mode, not {self.storage_mode}")
        if self.d_r is not None and self.d_r < 1:
            raise ValueError("d_r must be >= 1")


@dataclass
class IndexArtifact:
    """Immutable search index: ids plus one payload, with optional query transforms.

    Exactly one payload form is present: `vectors` for the flat modes, or
    `codebook` + `codes` for pq. Arrays are frozen after construction; build is
    exclusive, searches need no synchronization.
    """

    config: IndexConfig
    d_original: int
    ids: list[str]
    pca: PCAModel | None = None
    norm: NormalizationParams | None = None
    vectors: np.ndarray | None = None
    codebook: PQCodebook | None = None
    codes: PQCodes | None = None

    def __post_init__(self):
        mode = self.config.storage_mode
        if mode == "pq":
            if self.codebook is None or self.codes is None or self.vectors is not None:
                raise ValueError("pq artifact needs codebook+codes and no flat vectors")
            if self.codes.ids != self.ids:
                raise ValueError("code ids do not match artifact ids")
            if self.codebook.n_v != self.codes.n_v:
                raise ValueError("codebook/codes sub-vector counts differ")
        else:
            if self.vectors is None or self.codebook is not None or self.codes is not None:
                raise ValueError(f"{mode} artifact needs flat vectors and no pq payload")
            want = np.float32 if mode == "flat32" else np.float16
            if self.vectors.dtype != want:
                raise ValueError(f"{mode} payload must be {want.__name__}")
            if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
                raise ValueError("payload rows must match ids")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        if self.pca is not None:
            if self.pca.d != self.d_original or self.pca.d_r != self.d_r:
                raise ValueError("attached model dimensions do not match artifact")
        for arr in (self.vectors, *(() if self.codebook is None else (self.codebook.centroids,)),
                    *(() if self.codes is None else (self.codes.codes,))):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def storage_mode(self) -> str:
        return self.config.storage_mode

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d_r(self) -> int:
        if self.vectors is not None:
            return self.vectors.shape[1]
        return self.codebook.d


@dataclass
class SizeReport:
    """Byte totals per file section; `total_bytes` always equals their sum."""

    total_bytes: int
    breakdown: dict[str, int]

    def __post_init__(self):
        if self.total_bytes != sum(self.breakdown.values()):
            raise ValueError("total_bytes must equal the breakdown sum")


def cast_f16(X: np.ndarray) -> np.ndarray:
    """Round-to-nearest-even half precision; overflow clamps to +/-65504."""
    X = np.asarray(X, dtype=np.float32)
    if X.size and not np.isfinite(X).all():
        raise ValueError("cannot cast non-finite values")
    with np.errstate(over="ignore"):
        out = X.astype(np.float16)
    over = np.isinf(out)
    if over.any():
        out[over] = np.sign(X[over]).astype(np.float16) * np.float16(F16_MAX)
    return out


def build_index(X: EmbeddingMatrix, config: IndexConfig) -> IndexArtifact:
    """Fit the optional transforms on `X`, encode the payload, seal the artifact.

    Pipeline: PCA fit+apply (when `d_r` is set below the input dimension), then
    per-row normalization (when requested), then storage encoding. The fitted
    model is stored in float32, the precision it has on disk, so a freshly
    built index and its loaded copy score queries identically.
    """
    pca = None
    reduced = X
    if config.d_r is not None:
        if config.d_r > X.d:
            raise ValueError(f"d_r {config.d_r} > corpus dimension {X.d}")
        if config.d_r < X.d:
            pca = fit_pca(X, config.d_r).astype(np.float32)
            reduced = apply_pca(pca, X)
    norm = None
    if config.normalize:
        norm = NormalizationParams()
        reduced = normalize_rows(reduced, norm)

    if config.storage_mode == "flat32":
        return IndexArtifact(config, X.d, list(reduced.ids), pca, norm,
                             vectors=reduced.data.copy())
    if config.storage_mode == "flat16":
        return IndexArtifact(config, X.d, list(reduced.ids), pca, norm,
                             vectors=cast_f16(reduced.data))
    cb = pq_train(reduced, config.n_v, config.n_b, seed=config.seed)
    codes = pq_encode(cb, reduced)
    return IndexArtifact(config, X.d, list(reduced.ids), pca, norm,
                         codebook=cb, codes=codes)


def _transform_query(ix: IndexArtifact, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (ix.d_original,):
        raise ValueError(f"query has shape {q.shape}, expected ({ix.d_original},)")
    if ix.pca is not None:
        q = project_rows(ix.pca, q[None, :])[0]
    if ix.norm is not None:
        q = layer_normalize(q, ix.norm)
    return q


def search(ix: IndexArtifact, q: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Top-k ids by dot product with the transformed query, ties to smaller id.

    The query passes through the artifact's own PCA/normalization. Flat-16
    values are widened before scoring; compression only affects storage.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    y = _transform_query(ix, q)
    if ix.storage_mode == "pq":
        return pq_search(ix.codebook, ix.codes, y, k)
    scores = ix.vectors.astype(np.float64) @ y
    order = np.lexsort((np.array(ix.ids), -scores))[: min(k, ix.n)]
    return [(ix.ids[int(i)], float(scores[int(i)])) for i in order]


def exact_oracle_search(X: EmbeddingMatrix, q: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exhaustive full-precision dot-product ranking; the reference for recall."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (X.d,):
        raise ValueError(f"query has shape {q.shape}, expected ({X.d},)")
    scores = X.data.astype(np.float64) @ q
    order = np.lexsort((np.array(X.ids), -scores))[: min(k, X.n)]
    return [(X.ids[int(i)], float(scores[int(i)])) for i in order]


def flat_vector_bytes(n: int, d: int, bytes_per_value: int = 4) -> int:
    """Vector-section size of a flat index: n * d * width."""
    return n * d * bytes_per_value


def pq_code_bytes(n: int, n_v: int, n_b: int) -> int:
    """Code-section size of a pq index: n rows of ceil(n_v*n_b/8) bytes."""
    return n * ((n_v * n_b + 7) // 8)


def bits_per_dimension(mode: str, n_v: int | None = None, n_b: int | None = None,
                       d_r: int | None = None) -> float:
    if mode == "flat32":
        return 32.0
    if mode == "flat16":
        return 16.0
    if mode == "pq":
        return n_b * n_v / d_r
    raise ValueError(f"unknown mode {mode!r}")


def compression_factor(bits_per_dim: float) -> float:
    """Storage ratio vs 32-bit floats: 4 bits/dim compresses by exactly 8."""
    if bits_per_dim <= 0:
        raise ValueError("bits_per_dim must be positive")
    return 32.0 / bits_per_dim


def _pca_block_bytes(d: int, d_r: int) -> int:
    return (d + d_r * d + d_r) * 4


def _norm_block_bytes(d_r: int) -> int:
    return d_r * 4 * 2 + 8


def _ids_block_bytes(ids: list[str]) -> int:
    return sum(4 + len(i.encode("utf-8")) for i in ids)


def index_size_bytes(ix: IndexArtifact) -> SizeReport:
    """Per-section byte accounting; totals equal the serialized length exactly.

    The header section covers the fixed header, the normalization block, and
    the trailing checksum; everything else has its own line.
    """
    d_r = ix.d_r
    header = _FIXED.size + _CHECKSUM_BYTES
    if ix.norm is not None:
        header += _norm_block_bytes(d_r)
    breakdown = {
        "header": header,
        "pca": _pca_block_bytes(ix.d_original, d_r) if ix.pca is not None else 0,
        "ids": _ids_block_bytes(ix.ids),
        "codebook": ix.codebook.nbytes if ix.codebook is not None else 0,
        "vectors": (
            pq_code_bytes(ix.n, ix.codebook.n_v, ix.codebook.n_b)
            if ix.storage_mode == "pq"
            else flat_vector_bytes(ix.n, d_r, 4 if ix.storage_mode == "flat32" else 2)
        ),
    }
    return SizeReport(sum(breakdown.values()), breakdown)


def index_to_bytes(ix: IndexArtifact) -> bytes:
    d_r = ix.d_r
    flags = (_FLAG_PCA if ix.pca is not None else 0) | (
        _FLAG_NORM if ix.norm is not None else 0
    )
    n_v = ix.codebook.n_v if ix.codebook is not None else 0
    n_b = ix.codebook.n_b if ix.codebook is not None else 0
    parts = [
        _FIXED.pack(INDEX_MAGIC, INDEX_VERSION, _MODE_CODE[ix.storage_mode],
                    ix.d_original, d_r, flags, ix.n, n_v, n_b)
    ]
    if ix.pca is not None:
        parts.append(ix.pca.mean.astype("<f4").tobytes())
        parts.append(np.ascontiguousarray(ix.pca.components, dtype="<f4").tobytes())
        parts.append(ix.pca.eigenvalues.astype("<f4").tobytes())
    if ix.norm is not None:
        gain, bias = ix.norm.materialized(d_r)
        parts.append(gain.astype("<f4").tobytes())
        parts.append(bias.astype("<f4").tobytes())
        parts.append(struct.pack("<d", ix.norm.epsilon))
    for pid in ix.ids:
        raw = pid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    if ix.storage_mode == "pq":
        payload = (
            np.ascontiguousarray(ix.codebook.centroids, dtype="<f4").tobytes()
            + pack_codes(ix.codes)
        )
    elif ix.storage_mode == "flat16":
        payload = np.ascontiguousarray(ix.vectors, dtype="<f2").tobytes()
    else:
        payload = np.ascontiguousarray(ix.vectors, dtype="<f4").tobytes()
    parts.append(payload)
    parts.append(hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest())
    return b"".join(parts)


def save_index(ix: IndexArtifact, path) -> None:
    atomic_write_bytes(path, index_to_bytes(ix))


def _take(buf: bytes, off: int, count: int, what: str) -> tuple[bytes, int]:
    if off + count > len(buf):
        raise FormatError(
            f"truncated {what} at offset {off}: need {count} bytes, have {len(buf) - off}"
        )
    return buf[off : off + count], off + count


def index_from_bytes(buf: bytes) -> IndexArtifact:
    """Parse PQIX bytes; format errors name the offending byte offset."""
    if len(buf) < _FIXED.size:
        raise FormatError(
            f"truncated header at offset 0: need {_FIXED.size} bytes, have {len(buf)}"
        )
    magic, version, mode_code, d_original, d_r, flags, n, n_v, n_b = _FIXED.unpack_from(buf, 0)
    if magic != INDEX_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {INDEX_MAGIC!r}")
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if mode_code >= len(STORAGE_MODES):
        raise FormatError(f"unknown storage mode code {mode_code} at offset 8")
    mode = STORAGE_MODES[mode_code]
    if flags & ~(_FLAG_PCA | _FLAG_NORM):
        raise FormatError(f"unknown flag bits {flags:#x} at offset 17")
    if d_r < 1 or d_r > d_original:
        raise FormatError(f"reduced dimension {d_r} at offset 13 out of range")
    if mode == "pq":
        if n_v < 1 or d_r % n_v != 0:
            raise FormatError(f"sub-vector count {n_v} at offset 26 does not divide {d_r}")
        if n_b not in SUPPORTED_BITS:
            raise FormatError(f"bits per code {n_b} at offset 30 unsupported")
    elif n_v != 0 or n_b != 0:
        raise FormatError(f"pq fields must be zero for {mode} (offset 26)")

    off = _FIXED.size
    pca = None
    if flags & _FLAG_PCA:
        raw, off = _take(buf, off, _pca_block_bytes(d_original, d_r), "projection block")
        vals = np.frombuffer(raw, dtype="<f4")
        mean = vals[:d_original].copy()
        comps = vals[d_original : d_original + d_r * d_original].reshape(d_r, d_original).copy()
        evals = vals[d_original + d_r * d_original :].copy()
        pca = PCAModel(d_original, d_r, mean, comps, evals)
    norm = None
    if flags & _FLAG_NORM:
        raw, off = _take(buf, off, _norm_block_bytes(d_r), "normalization block")
        vals = np.frombuffer(raw[: d_r * 8], dtype="<f4")
        (eps,) = struct.unpack_from("<d", raw, d_r * 8)
        norm = NormalizationParams(vals[:d_r].copy(), vals[d_r:].copy(), eps)

    ids: list[str] = []
    for i in range(n):
        raw, off = _take(buf, off, 4, f"id length for row {i}")
        (ln,) = struct.unpack("<I", raw)
        raw, off = _take(buf, off, ln, f"id bytes for row {i}")
        ids.append(raw.decode("utf-8"))

    if mode == "pq":
        cb_bytes = n_v * 2**n_b * (d_r // n_v) * 4
        payload_len = cb_bytes + pq_code_bytes(n, n_v, n_b)
    else:
        payload_len = flat_vector_bytes(n, d_r, 4 if mode == "flat32" else 2)
    payload, off = _take(buf, off, payload_len, "payload")
    stored, off = _take(buf, off, _CHECKSUM_BYTES, "checksum")
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes at offset {off}")
    digest = hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest()
    if stored != digest:
        raise FormatError(
            f"payload checksum mismatch: stored {stored.hex()}, computed {digest.hex()}"
        )

    config = IndexConfig(
        storage_mode=mode,
        d_r=d_r if pca is not None else None,
        n_v=n_v if mode == "pq" else None,
        n_b=n_b if mode == "pq" else None,
        normalize=norm is not None,
    )
    if mode == "pq":
        centroids = (
            np.frombuffer(payload, dtype="<f4", count=cb_bytes // 4)
            .reshape(n_v, 2**n_b, d_r // n_v)
            .copy()
        )
        cb = PQCodebook(d_r, n_v, n_b, centroids)
        codes = unpack_codes(payload[cb_bytes:], n, n_v, n_b, ids)
        return IndexArtifact(config, d_original, ids, pca, norm, codebook=cb, codes=codes)
    dtype = "<f4" if mode == "flat32" else "<f2"
    vectors = np.frombuffer(payload, dtype=dtype).reshape(n, d_r).copy()
    return IndexArtifact(config, d_original, ids, pca, norm, vectors=vectors)


def load_index(path) -> IndexArtifact:
    with open(path, "rb") as fh:
        return index_from_bytes(fh.read())
