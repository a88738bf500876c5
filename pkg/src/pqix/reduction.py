"""PCA dimension reduction and layer-style normalization for embeddings.

The projection is fit on already-computed embeddings via an eigendecomposition
of the (population, 1/n) covariance; with that convention the mean squared
reconstruction residual equals the sum of the discarded eigenvalues exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingMatrix


@dataclass
class PCAModel:
    """Mean vector plus orthonormal projection rows, sorted by variance captured.

    `components` has shape (d_r, d) with orthonormal rows; `eigenvalues` are the
    captured variances, non-negative and non-increasing. The sign of each row is
    fixed so its largest-magnitude entry is positive.
    """

    d: int
    d_r: int
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        if self.d_r > self.d:
            raise ValueError(f"d_r {self.d_r} > d {self.d}")
        self.mean = np.asarray(self.mean)
        self.components = np.asarray(self.components)
        self.eigenvalues = np.asarray(self.eigenvalues)
        if self.mean.shape != (self.d,):
            raise ValueError("mean must have shape (d,)")
        if self.components.shape != (self.d_r, self.d):
            raise ValueError("components must have shape (d_r, d)")
        if self.eigenvalues.shape != (self.d_r,):
            raise ValueError("eigenvalues must have shape (d_r,)")

    def astype(self, dtype) -> "PCAModel":
        return PCAModel(
            self.d,
            self.d_r,
            self.mean.astype(dtype),
            self.components.astype(dtype),
            self.eigenvalues.astype(dtype),
        )


@dataclass
class NormalizationParams:
    """Gain/bias/epsilon for per-vector normalization; `None` arrays mean identity."""

    gain: np.ndarray | None = None
    bias: np.ndarray | None = None
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.gain is not None:
            self.gain = np.asarray(self.gain, dtype=np.float64)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)

    def materialized(self, d_r: int) -> tuple[np.ndarray, np.ndarray]:
        gain = np.ones(d_r) if self.gain is None else self.gain
        bias = np.zeros(d_r) if self.bias is None else self.bias
        if gain.shape != (d_r,) or bias.shape != (d_r,):
            raise ValueError(f"gain/bias must have shape ({d_r},)")
        return gain, bias


def fit_pca(X: EmbeddingMatrix, d_r: int) -> PCAModel:
    """Top-`d_r` principal directions of the centered rows of `X`.

    Uses a dense eigendecomposition of the d x d covariance (d stays small
    here). Rank-deficient inputs yield zero eigenvalues rather than an error.
    """
    if d_r > X.d:
        raise ValueError(f"d_r {d_r} > input dimension {X.d}")
    if d_r < 1:
        raise ValueError("d_r must be >= 1")
    if X.n < 2:
        raise ValueError(f"need at least 2 rows to fit, got {X.n}")
    data = X.data.astype(np.float64)
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / X.n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d_r]
    evals = np.maximum(evals[order], 0.0)
    components = evecs[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PCAModel(X.d, d_r, mean, components, evals)


def project_rows(m: PCAModel, rows: np.ndarray) -> np.ndarray:
    """Center and project rows in float64, without the float32 output cast."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != m.d:
        raise ValueError(f"rows must have shape (n, {m.d})")
    return (rows - m.mean.astype(np.float64)) @ m.components.astype(np.float64).T


def apply_pca(m: PCAModel, X: EmbeddingMatrix) -> EmbeddingMatrix:
    """Project rows to the reduced space: y = components @ (x - mean)."""
    if X.d != m.d:
        raise ValueError(f"matrix dimension {X.d} != model dimension {m.d}")
    return EmbeddingMatrix(project_rows(m, X.data).astype(np.float32), list(X.ids))


def layer_normalize(y: np.ndarray, p: NormalizationParams | None = None) -> np.ndarray:
    """gain * (y - mean(y)) / sqrt(var(y) + epsilon) + bias, population variance."""
    if p is None:
        p = NormalizationParams()
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("expected a 1-D vector with at least one entry")
    gain, bias = p.materialized(y.size)
    mu = y.mean()
    var = np.mean((y - mu) ** 2)
    return gain * (y - mu) / np.sqrt(var + p.epsilon) + bias


def normalize_rows(X: EmbeddingMatrix, p: NormalizationParams | None = None) -> EmbeddingMatrix:
    """Apply `layer_normalize` to every row, keeping ids."""
    if p is None:
        p = NormalizationParams()
    out = np.empty_like(X.data)
    for i in range(X.n):
        out[i] = layer_normalize(X.data[i], p).astype(np.float32)
    return EmbeddingMatrix(out, list(X.ids))
