"""
Product quantization: codebooks, codes, and table-driven search
===============================================================
"""

import numpy as np

from pqix.corpus import SyntheticSpec, generate_synthetic
from pqix.quantizer import (
    adc_score_table,
    bytes_per_vector,
    pq_decode,
    pq_encode,
    pq_search,
    pq_train,
)

spec = SyntheticSpec(n=1000, d=32, n_clusters=12, noise_sigma=0.15, seed=2, n_queries=3)
passages, queries, ground_truth = generate_synthetic(spec)

# 16 sub-vectors of 2 dims each, 8 bits per code: 16 bytes per passage
codebook = pq_train(passages, n_v=16, n_b=8, seed=0)
codes = pq_encode(codebook, passages)
print(f"codebook: {codebook.n_v} sub-spaces x {2**codebook.n_b} centroids x {codebook.sub_dim} dims")
print(f"bytes per passage: {bytes_per_vector(codebook.n_v, codebook.n_b):.0f} "
      f"(was {passages.d * 4} as float32)")

# reconstruction error of the quantizer
decoded = pq_decode(codebook, codes)
err = np.linalg.norm(decoded.data - passages.data, axis=1)
print(f"mean reconstruction error: {err.mean():.4f}")

# one lookup table per query: n_v x 2^n_b partial dot products
q = queries.data[0].astype(np.float64)
table = adc_score_table(codebook, q)
print(f"score table shape: {table.shape}")

# search sums table entries per stored code, never touching full vectors
for qid in queries.ids:
    row = queries.ids.index(qid)
    hits = pq_search(codebook, codes, queries.data[row], 3)
    top = [pid for pid, _ in hits]
    print(f"{qid}: top-3 {top}, truth {ground_truth[qid]}, hit: {ground_truth[qid] in top}")
