"""
PCA projection of passage embeddings to a smaller dimension
===========================================================
"""

import numpy as np

from pqix.corpus import SyntheticSpec, generate_synthetic
from pqix.reduction import apply_pca, fit_pca

spec = SyntheticSpec(n=800, d=64, n_clusters=10, noise_sigma=0.2, seed=1, n_queries=0)
passages, _, _ = generate_synthetic(spec)

# fit the projection on the corpus itself
model = fit_pca(passages, 16)

# the basis is orthonormal and variances arrive sorted
gram = model.components @ model.components.T
print("orthonormality error:", float(np.max(np.abs(gram - np.eye(16)))))
print("top five variances:", np.round(model.eigenvalues[:5], 3))

# variance kept by the 16 leading directions
total = np.var(passages.data.astype(np.float64), axis=0, ddof=0).sum()
kept = model.eigenvalues.sum()
print(f"variance kept: {kept / total:.1%} of {total:.2f}")

reduced = apply_pca(model, passages)
print(f"reduced matrix: {reduced.n} x {reduced.d}, dtype {reduced.data.dtype}")

# a 64-dim passage and its 16-dim image
print("first passage, first four dims before:", np.round(passages.data[0, :4], 3))
print("first passage, first four dims after: ", np.round(reduced.data[0, :4], 3))
