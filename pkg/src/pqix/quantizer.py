"""Product quantization: per-sub-space k-means codebooks and ADC search.

Vectors of dimension d are split into `n_v` sub-vectors of dimension d/n_v;
each sub-vector is replaced by the index of its nearest centroid among 2**n_b,
so a vector costs n_v * n_b bits instead of 32 bits per dimension. Queries are
scored against codes through a per-sub-space dot-product lookup table (ADC),
which reproduces the dot product with the decoded vector exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EmbeddingMatrix

SUPPORTED_BITS = (1, 2, 4, 8, 16)
DEFAULT_MAX_ITER = 25
DEFAULT_TRAIN_CAP = 100_000
_REL_TOL = 1e-6


@dataclass
class KMeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    objectives: list[float] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objectives[-1]


def _pairwise_sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact squared distances, chunked over rows to bound memory."""
    n = points.shape[0]
    out = np.empty((n, centroids.shape[0]), dtype=np.float64)
    step = max(1, 8_000_000 // max(1, centroids.shape[0] * points.shape[1]))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        diff = points[lo:hi, None, :] - centroids[None, :, :]
        out[lo:hi] = np.einsum("ikd,ikd->ik", diff, diff)
    return out


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[i] = points[idx]
        np.minimum(closest, ((points - centroids[i]) ** 2).sum(axis=1), out=closest)
    return centroids


def kmeans_fit(
    points: np.ndarray,
    k: int,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> KMeansResult:
    """Lloyd iterations from a k-means++ start.

    The recorded objective (sum of squared distances to the assigned centroid)
    is non-increasing across iterations; empty clusters are re-seeded from the
    point currently farthest from its centroid. Stops at `max_iter` or when the
    relative objective change drops below 1e-6.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-D array")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k {k} > number of points {n}")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, k, rng)
    objectives: list[float] = []
    assign = np.zeros(n, dtype=np.int64)
    converged = False

    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(points, centroids)
        assign = d2.argmin(axis=1)
        obj = float(((points - centroids[assign]) ** 2).sum())
        objectives.append(obj)
        if len(objectives) > 1 and objectives[-2] - obj <= _REL_TOL * objectives[-2]:
            converged = True
            break

        new_centroids = centroids.copy()
        counts = np.bincount(assign, minlength=k)
        for j in np.flatnonzero(counts > 0):
            new_centroids[j] = points[assign == j].mean(axis=0)

        empties = np.flatnonzero(counts == 0)
        if empties.size:
            # steal the points farthest from their centroids, one per empty slot
            far = ((points - new_centroids[assign]) ** 2).sum(axis=1)
            order = np.argsort(-far)
            for slot, j in enumerate(empties):
                cand = order[slot]
                if far[cand] > 0.0:
                    new_centroids[j] = points[cand]
        centroids = new_centroids

    if not converged:
        d2 = _pairwise_sq_dists(points, centroids)
        assign = d2.argmin(axis=1)
        obj = float(((points - centroids[assign]) ** 2).sum())
        if not objectives or obj != objectives[-1]:
            objectives.append(obj)

    return KMeansResult(centroids, assign, objectives)


@dataclass
class PQCodebook:
    """Per-sub-space centroids: shape (n_v, 2**n_b, d // n_v), float32."""

    d: int
    n_v: int
    n_b: int
    centroids: np.ndarray

    def __post_init__(self):
        if self.d % self.n_v != 0:
            raise ValueError(f"n_v {self.n_v} does not divide d {self.d}")
        if self.n_b not in SUPPORTED_BITS:
            raise ValueError(f"n_b must be one of {SUPPORTED_BITS}, got {self.n_b}")
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        expect = (self.n_v, 2**self.n_b, self.sub_dim)
        if self.centroids.shape != expect:
            raise ValueError(f"centroids shape {self.centroids.shape} != {expect}")
        if not np.isfinite(self.centroids).all():
            raise ValueError("centroids contain non-finite values")

    @property
    def sub_dim(self) -> int:
        return self.d // self.n_v

    @property
    def row_bytes(self) -> int:
        """Packed storage cost of one coded vector."""
        return (self.n_v * self.n_b + 7) // 8

    @property
    def nbytes(self) -> int:
        return self.centroids.nbytes


@dataclass
class PQCodes:
    """Centroid indices per vector, aligned with `ids`; every code < 2**n_b."""

    n_b: int
    codes: np.ndarray
    ids: list[str]

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.uint16)
        if self.codes.ndim != 2:
            raise ValueError("codes must be 2-D")
        if len(self.ids) != self.codes.shape[0]:
            raise ValueError("ids length must match code rows")
        if self.codes.size and int(self.codes.max()) >= 2**self.n_b:
            raise ValueError(f"codes exceed {2**self.n_b - 1}")

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def n_v(self) -> int:
        return self.codes.shape[1]


def pq_train(
    X: EmbeddingMatrix,
    n_v: int,
    n_b: int,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    train_cap: int = DEFAULT_TRAIN_CAP,
) -> PQCodebook:
    """Fit one k-means codebook per sub-space, k = 2**n_b.

    If fewer training points than centroids are available, the centroid count
    is clamped and the codebook padded with copies of the last centroid so the
    code width stays `n_b` bits. Training subsamples to `train_cap` rows.
    """
    if X.d % n_v != 0:
        raise ValueError(f"n_v {n_v} does not divide d {X.d}")
    if n_b not in SUPPORTED_BITS:
        raise ValueError(f"n_b must be one of {SUPPORTED_BITS}, got {n_b}")
    if X.n < 1:
        raise ValueError("cannot train on an empty matrix")

    ss = np.random.SeedSequence(seed)
    state = ss.generate_state(n_v + 1)
    train = X.data
    if X.n > train_cap:
        srng = np.random.default_rng(state[n_v])
        rows = np.sort(srng.choice(X.n, size=train_cap, replace=False))
        train = train[rows]

    k_full = 2**n_b
    k = min(k_full, train.shape[0])
    sub = X.d // n_v
    centroids = np.empty((n_v, k_full, sub), dtype=np.float32)
    for j in range(n_v):
        res = kmeans_fit(train[:, j * sub : (j + 1) * sub], k, max_iter, int(state[j]))
        block = res.centroids.astype(np.float32)
        if k < k_full:
            block = np.vstack([block, np.repeat(block[-1:], k_full - k, axis=0)])
        centroids[j] = block
    return PQCodebook(X.d, n_v, n_b, centroids)


def pq_encode(cb: PQCodebook, X: EmbeddingMatrix) -> PQCodes:
    """Nearest-centroid index per sub-vector; ties go to the lowest index."""
    if X.d != cb.d:
        raise ValueError(f"matrix dimension {X.d} != codebook dimension {cb.d}")
    sub = cb.sub_dim
    codes = np.empty((X.n, cb.n_v), dtype=np.uint16)
    data = X.data.astype(np.float64)
    for j in range(cb.n_v):
        d2 = _pairwise_sq_dists(
            data[:, j * sub : (j + 1) * sub], cb.centroids[j].astype(np.float64)
        )
        codes[:, j] = d2.argmin(axis=1)
    return PQCodes(cb.n_b, codes, list(X.ids))


def pq_decode(cb: PQCodebook, codes: PQCodes) -> EmbeddingMatrix:
    """Reconstruct rows by concatenating the selected centroids."""
    if codes.n_v != cb.n_v:
        raise ValueError(f"codes have {codes.n_v} sub-vectors, codebook {cb.n_v}")
    out = np.empty((codes.n, cb.d), dtype=np.float32)
    sub = cb.sub_dim
    for j in range(cb.n_v):
        out[:, j * sub : (j + 1) * sub] = cb.centroids[j][codes.codes[:, j]]
    return EmbeddingMatrix(out, list(codes.ids))


def adc_score_table(cb: PQCodebook, q: np.ndarray) -> np.ndarray:
    """table[j, c] = dot(q sub-vector j, centroid c of sub-space j).

    Summing table entries along a code row equals the dot product between `q`
    and the decoded vector.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (cb.d,):
        raise ValueError(f"query has shape {q.shape}, expected ({cb.d},)")
    sub = cb.sub_dim
    table = np.empty((cb.n_v, 2**cb.n_b), dtype=np.float64)
    for j in range(cb.n_v):
        table[j] = cb.centroids[j].astype(np.float64) @ q[j * sub : (j + 1) * sub]
    return table


def adc_scores(cb: PQCodebook, codes: PQCodes, q: np.ndarray) -> np.ndarray:
    table = adc_score_table(cb, q)
    return table[np.arange(cb.n_v), codes.codes].sum(axis=1)


def pq_search(
    cb: PQCodebook, codes: PQCodes, q: np.ndarray, k: int
) -> list[tuple[str, float]]:
    """Top-k rows by ADC score, descending; score ties go to the smaller id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = adc_scores(cb, codes, q)
    order = np.lexsort((np.array(codes.ids), -scores))[: min(k, codes.n)]
    return [(codes.ids[int(i)], float(scores[int(i)])) for i in order]


def pack_codes(codes: PQCodes) -> bytes:
    """Rows packed at byte granularity (n_b 8/16) or little-endian within bytes (1/2/4)."""
    arr = codes.codes
    n_b = codes.n_b
    if n_b == 8:
        return arr.astype(np.uint8).tobytes()
    if n_b == 16:
        return arr.astype("<u2").tobytes()
    per_byte = 8 // n_b
    n, n_v = arr.shape
    padded_cols = -(-n_v // per_byte) * per_byte
    wide = np.zeros((n, padded_cols), dtype=np.uint8)
    wide[:, :n_v] = arr
    packed = np.zeros((n, padded_cols // per_byte), dtype=np.uint8)
    for slot in range(per_byte):
        packed |= wide[:, slot::per_byte] << (slot * n_b)
    return packed.tobytes()


def unpack_codes(buf: bytes, n: int, n_v: int, n_b: int, ids: list[str]) -> PQCodes:
    row_bytes = (n_v * n_b + 7) // 8
    raw = np.frombuffer(buf, dtype=np.uint8, count=n * row_bytes).reshape(n, row_bytes)
    if n_b == 8:
        arr = raw.astype(np.uint16)
    elif n_b == 16:
        arr = np.frombuffer(buf, dtype="<u2", count=n * n_v).reshape(n, n_v).astype(np.uint16)
    else:
        per_byte = 8 // n_b
        mask = (1 << n_b) - 1
        cols = []
        for slot in range(per_byte):
            cols.append((raw >> (slot * n_b)) & mask)
        wide = np.stack(cols, axis=2).reshape(n, row_bytes * per_byte)
        arr = wide[:, :n_v].astype(np.uint16)
    return PQCodes(n_b, arr, ids)


def bytes_per_vector(n_v: int, n_b: int) -> float:
    """Storage cost of one coded vector before byte rounding: n_v * n_b / 8."""
    return n_v * n_b / 8
