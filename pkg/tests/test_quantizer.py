"""k-means optimality oracles, PQ encode/decode/ADC equivalence, code packing."""

import itertools

import numpy as np
import pytest

from pqix.corpus import EmbeddingMatrix
from pqix.quantizer import (
    PQCodebook,
    PQCodes,
    adc_score_table,
    adc_scores,
    bytes_per_vector,
    kmeans_fit,
    pack_codes,
    pq_decode,
    pq_encode,
    pq_search,
    pq_train,
    unpack_codes,
)


def best_two_partition_objective(points):
    """Exhaustive minimum over all assignments of points to two clusters."""
    best = np.inf
    for labels in itertools.product([0, 1], repeat=len(points)):
        labels = np.array(labels)
        obj = 0.0
        for c in (0, 1):
            members = points[labels == c]
            if len(members):
                obj += float(((members - members.mean(axis=0)) ** 2).sum())
        best = min(best, obj)
    return best


def matrix(data, prefix="p"):
    data = np.asarray(data, dtype=np.float32)
    return EmbeddingMatrix(data, [f"{prefix}{i:03d}" for i in range(len(data))])


def test_kmeans_two_points_two_clusters_is_exact():
    pts = np.array([[0.0, 0.0], [10.0, 10.0]])
    res = kmeans_fit(pts, 2, seed=0)
    assert res.objective == 0.0
    assert {tuple(c) for c in res.centroids} == {(0.0, 0.0), (10.0, 10.0)}


def test_kmeans_single_cluster_is_the_mean():
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((20, 3))
    res = kmeans_fit(pts, 1, seed=0)
    np.testing.assert_allclose(res.centroids[0], pts.mean(axis=0), atol=1e-12)
    assert np.all(res.assignments == 0)


def test_kmeans_matches_brute_force_on_six_points():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(6, 2))
    res = kmeans_fit(pts, 2, seed=0)
    assert res.objective == pytest.approx(best_two_partition_objective(pts), abs=1e-6)


def test_kmeans_objective_is_non_increasing():
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((200, 4))
    res = kmeans_fit(pts, 8, seed=5)
    diffs = np.diff(res.objectives)
    assert np.all(diffs <= 1e-12 * np.abs(res.objectives[:-1]))


def test_kmeans_k_larger_than_n_is_an_error():
    with pytest.raises(ValueError, match="k 3 > number of points 2"):
        kmeans_fit(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError, match=">= 1"):
        kmeans_fit(np.zeros((2, 2)), 0)


def test_kmeans_deterministic_per_seed():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((50, 3))
    a = kmeans_fit(pts, 4, seed=9)
    b = kmeans_fit(pts, 4, seed=9)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_array_equal(a.assignments, b.assignments)


def test_codebook_validation():
    with pytest.raises(ValueError, match="does not divide"):
        PQCodebook(4, 3, 8, np.zeros((3, 256, 1), dtype=np.float32))
    with pytest.raises(ValueError, match="n_b must be one of"):
        PQCodebook(4, 2, 3, np.zeros((2, 8, 2), dtype=np.float32))
    with pytest.raises(ValueError, match="shape"):
        PQCodebook(4, 2, 1, np.zeros((2, 3, 2), dtype=np.float32))


def test_codes_validation():
    with pytest.raises(ValueError, match="exceed"):
        PQCodes(1, np.array([[2]]), ["a"])
    with pytest.raises(ValueError, match="ids length"):
        PQCodes(8, np.zeros((2, 3), dtype=np.uint16), ["a"])


def test_pq_train_divisibility_error():
    X = matrix(np.random.default_rng(0).standard_normal((10, 4)))
    with pytest.raises(ValueError, match="n_v 3 does not divide d 4"):
        pq_train(X, 3, 8)


def test_two_distinct_rows_quantize_without_error():
    X = matrix([[0.0, 0.0, 5.0, 5.0], [1.0, 1.0, -5.0, -5.0]])
    cb = pq_train(X, 2, 1, seed=0)
    codes = pq_encode(cb, X)
    np.testing.assert_allclose(pq_decode(cb, codes).data, X.data, atol=0.0)


def test_scalar_subspaces_match_one_dimensional_brute_force():
    rng = np.random.default_rng(0)
    X = matrix(rng.uniform(-2, 2, size=(6, 4)))
    cb = pq_train(X, 4, 1, seed=1)
    codes = pq_encode(cb, X)
    recon = pq_decode(cb, codes).data
    for j in range(4):
        col = X.data[:, j : j + 1].astype(np.float64)
        achieved = float(((col[:, 0] - recon[:, j].astype(np.float64)) ** 2).sum())
        assert achieved == pytest.approx(best_two_partition_objective(col), abs=1e-6)


def test_small_corpus_pads_codebook_and_still_encodes():
    X = matrix([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    cb = pq_train(X, 1, 2, seed=0)  # 4 centroids requested, 3 points available
    assert cb.centroids.shape == (1, 4, 2)
    np.testing.assert_array_equal(cb.centroids[0, 2], cb.centroids[0, 3])
    codes = pq_encode(cb, X)
    assert int(codes.codes.max()) < 4
    np.testing.assert_allclose(pq_decode(cb, codes).data, X.data, atol=1e-6)


def test_encode_ties_take_lowest_centroid_index():
    centroids = np.array([[[0.0], [2.0], [0.0]]], dtype=np.float32)
    cb = PQCodebook(1, 1, 2, np.concatenate([centroids, [[[9.0]]]], axis=1))
    codes = pq_encode(cb, matrix([[1.0], [0.0]]))
    # 1.0 is equidistant from centroids 0 and 1; 0.0 matches centroids 0 and 2
    np.testing.assert_array_equal(codes.codes[:, 0], [0, 0])


def test_encoding_the_centroids_is_a_fixed_point():
    rng = np.random.default_rng(6)
    X = matrix(rng.standard_normal((40, 6)))
    cb = pq_train(X, 3, 2, seed=1)
    grid = matrix(cb.centroids.transpose(1, 0, 2).reshape(4, 6), prefix="c")
    back = pq_decode(cb, pq_encode(cb, grid))
    np.testing.assert_array_equal(back.data, grid.data)


def test_codes_match_exhaustive_nearest_centroid_scan():
    rng = np.random.default_rng(7)
    X = matrix(rng.standard_normal((20, 8)))
    cb = pq_train(X, 4, 2, seed=2)
    codes = pq_encode(cb, X)
    for i in range(20):
        for j in range(4):
            sub = X.data[i, j * 2 : (j + 1) * 2].astype(np.float64)
            dists = [
                float(((sub - c.astype(np.float64)) ** 2).sum())
                for c in cb.centroids[j]
            ]
            assert codes.codes[i, j] == int(np.argmin(dists))


def test_adc_table_of_zero_query_is_zero():
    cb = pq_train(matrix(np.random.default_rng(8).standard_normal((30, 4))), 2, 2)
    np.testing.assert_array_equal(adc_score_table(cb, np.zeros(4)), 0.0)


def test_adc_matches_decode_then_dot():
    rng = np.random.default_rng(9)
    X = matrix(rng.standard_normal((100, 8)))
    cb = pq_train(X, 4, 4, seed=3)
    codes = pq_encode(cb, X)
    decoded = pq_decode(cb, codes).data.astype(np.float64)
    q = rng.standard_normal(8)
    scores = adc_scores(cb, codes, q)
    np.testing.assert_allclose(scores, decoded @ q, atol=5e-4)


def test_single_subspace_table_is_plain_dot_products():
    rng = np.random.default_rng(10)
    X = matrix(rng.standard_normal((50, 5)))
    cb = pq_train(X, 1, 2, seed=0)
    q = rng.standard_normal(5)
    table = adc_score_table(cb, q)
    np.testing.assert_allclose(
        table[0], cb.centroids[0].astype(np.float64) @ q, atol=0.0
    )


def test_adc_dimension_mismatch():
    cb = pq_train(matrix(np.random.default_rng(11).standard_normal((10, 4))), 2, 1)
    with pytest.raises(ValueError, match="expected"):
        adc_score_table(cb, np.zeros(5))


def test_search_ranks_equal_norm_corpus_member_first():
    X = matrix(np.eye(4, dtype=np.float32) * 2.0)
    cb = pq_train(X, 1, 2, seed=0)
    codes = pq_encode(cb, X)
    top = pq_search(cb, codes, X.data[2], 1)
    assert top[0][0] == X.ids[2]


def test_search_equals_decode_then_exact_ranking():
    rng = np.random.default_rng(12)
    X = matrix(rng.standard_normal((60, 8)))
    cb = pq_train(X, 4, 2, seed=4)
    codes = pq_encode(cb, X)
    decoded = pq_decode(cb, codes).data.astype(np.float64)
    for t in range(5):
        q = rng.standard_normal(8)
        got = [pid for pid, _ in pq_search(cb, codes, q, 60)]
        scores = decoded @ q
        expect = [X.ids[i] for i in np.lexsort((np.array(X.ids), -scores))]
        assert got == expect


def test_search_k_covers_whole_corpus():
    rng = np.random.default_rng(13)
    X = matrix(rng.standard_normal((7, 4)))
    cb = pq_train(X, 2, 2, seed=0)
    codes = pq_encode(cb, X)
    full = pq_search(cb, codes, rng.standard_normal(4), 7)
    assert sorted(pid for pid, _ in full) == sorted(X.ids)
    assert pq_search(cb, codes, np.zeros(4), 99) == pq_search(cb, codes, np.zeros(4), 7)
    with pytest.raises(ValueError, match=">= 1"):
        pq_search(cb, codes, np.zeros(4), 0)


def test_bit_packing_is_little_endian_within_bytes():
    codes = PQCodes(1, np.array([[1, 0, 1, 1]], dtype=np.uint16), ["a"])
    assert pack_codes(codes) == bytes([0b00001101])
    two_bit = PQCodes(2, np.array([[3, 1, 0, 2]], dtype=np.uint16), ["a"])
    assert pack_codes(two_bit) == bytes([0b10000111])


def test_pack_unpack_round_trip_all_widths():
    rng = np.random.default_rng(14)
    for n_b in (1, 2, 4, 8, 16):
        for n_v in (1, 3, 4, 5, 8):
            codes = PQCodes(
                n_b,
                rng.integers(0, 2**n_b, size=(9, n_v)).astype(np.uint16),
                [f"p{i}" for i in range(9)],
            )
            packed = pack_codes(codes)
            assert len(packed) == 9 * ((n_v * n_b + 7) // 8)
            back = unpack_codes(packed, 9, n_v, n_b, list(codes.ids))
            np.testing.assert_array_equal(back.codes, codes.codes)


def test_compression_arithmetic():
    assert bytes_per_vector(64, 8) == 64.0
    assert bytes_per_vector(16, 8) == 16.0
    # two-dimensional sub-vectors at 8 bits: half a byte per dimension,
    # exactly eight times smaller than four-byte floats
    sub_dim = 2
    bits_per_dim = 8 / sub_dim
    assert 32 / bits_per_dim == 8.0
    cb = PQCodebook(8, 4, 8, np.zeros((4, 256, 2), dtype=np.float32))
    assert cb.row_bytes == 4
    assert PQCodebook(8, 8, 1, np.zeros((8, 2, 1), dtype=np.float32)).row_bytes == 1
