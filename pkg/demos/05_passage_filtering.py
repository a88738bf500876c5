"""
Dropping answer-free articles with a self-trained filter
========================================================
"""

from pqix.corpus import SyntheticSpec, generate_synthetic_qa
from pqix.evaluation import precision_at_k
from pqix.filtering import articles_from_passages, filter_corpus, self_train
from pqix.index import IndexConfig, build_index, index_size_bytes

# half the articles are stubs that contain no answer strings
spec = SyntheticSpec(n=600, d=32, n_clusters=8, noise_sigma=0.25, seed=4, n_queries=60)
qa = generate_synthetic_qa(spec, answer_fraction=0.5)
articles = articles_from_passages(qa.passages)

# the training signal is just "this article contained an answer"
positives = sorted({p.article_id for p in qa.passages if "ans" in p.text})
print(f"{len(positives)} of {len(articles)} articles carry answers")

# three rounds: uniform negatives first, then the hardest non-positives
model = self_train(articles, positives, rounds=3, seed=0, hash_dim=2**16)

# keep the top 60 percent and rebuild the index on the survivors
kept = set(filter_corpus(model, articles, int(0.6 * len(articles))))
kept_passages = [p for p in qa.passages if p.article_id in kept]
kept_vectors = qa.passage_vectors.subset([p.id for p in kept_passages])

full_ix = build_index(qa.passage_vectors, IndexConfig("flat32"))
kept_ix = build_index(kept_vectors, IndexConfig("flat32"))

p10_full = precision_at_k(full_ix, qa.queries, qa.query_vectors, qa.passages, 10)
p10_kept = precision_at_k(kept_ix, qa.queries, qa.query_vectors, kept_passages, 10)
bytes_full = index_size_bytes(full_ix).total_bytes
bytes_kept = index_size_bytes(kept_ix).total_bytes

print(f"unfiltered: P@10 {p10_full:.3f}  {bytes_full:,} bytes")
print(f"filtered:   P@10 {p10_kept:.3f}  {bytes_kept:,} bytes "
      f"({bytes_kept / bytes_full:.0%} of the original)")
print(f"stubs kept: {len(kept - set(positives))} of {len(articles) - len(positives)}")
