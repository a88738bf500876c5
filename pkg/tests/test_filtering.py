"""Hashed features, logistic-regression training, self-training, corpus filtering."""

from functools import reduce

import numpy as np
import pytest

from pqix.corpus import EmbeddingMatrix
from pqix.errors import FormatError
from pqix.filtering import (
    Article,
    FilterModel,
    TrainConfig,
    articles_from_passages,
    classify,
    featurize,
    filter_corpus,
    filter_model_from_bytes,
    filter_model_to_bytes,
    fnv1a_64,
    load_filter_model,
    load_kept_ids,
    save_filter_model,
    save_kept_ids,
    self_train,
    train_logreg,
)
from pqix.index import IndexConfig, build_index, search

HASH_DIM = 2**12


def test_fnv1a_64_published_vectors():
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8


def test_fnv1a_64_against_reduce_reimplementation():
    def reference(data, seed=0):
        step = lambda h, byte: ((h ^ byte) * 0x100000001B3) % 2**64
        return reduce(step, data, 0xCBF29CE484222325 ^ seed)

    for data in (b"", b"hello", bytes(range(256)), "café".encode("utf-8")):
        for seed in (0, 1, 7, 2**63):
            assert fnv1a_64(data, seed) == reference(data, seed)


def test_seed_changes_the_hash():
    assert fnv1a_64(b"token", 0) != fnv1a_64(b"token", 1)


def test_featurize_matches_per_term_hashing():
    idx = featurize("French Chemists", ["Science"], HASH_DIM)
    expect = sorted(
        fnv1a_64(t.encode("utf-8")) & (HASH_DIM - 1)
        for t in ("french", "chemists", "science")
    )
    assert idx.tolist() == expect


def test_featurize_edge_cases():
    assert featurize("", [], HASH_DIM).tolist() == []
    assert featurize("the THE", ["The"], HASH_DIM).tolist() == [
        fnv1a_64(b"the") & (HASH_DIM - 1)
    ]
    split = featurize("Jean-Paul's 2nd", [], HASH_DIM)
    assert len(split) == len({"jean", "paul", "s", "2nd"})
    with pytest.raises(ValueError, match="power of two"):
        featurize("x", [], hash_dim=100)


def test_articles_group_passages_by_first_appearance():
    from pqix.corpus import PassageRecord

    passages = [
        PassageRecord("p1", "art2", "Second Article", "text", ["b"]),
        PassageRecord("p2", "art1", "First Article", "text", ["a"]),
        PassageRecord("p3", "art2", "Second Article", "text", ["b"]),
    ]
    articles = articles_from_passages(passages)
    assert [(a.id, a.title, a.categories) for a in articles] == [
        ("art2", "Second Article", ["b"]),
        ("art1", "First Article", ["a"]),
    ]


def test_train_config_validation():
    with pytest.raises(ValueError, match="lr > 0"):
        TrainConfig(lr=0.0)


def test_separable_classes_get_signed_weights():
    pos = [np.array([0])] * 4
    neg = [np.array([1])] * 4
    model = train_logreg(pos, neg, hash_dim=4)
    assert model.weights[0] > 0 > model.weights[1]
    assert model.weights[2] == 0 and model.weights[3] == 0


def test_identical_classes_leave_the_model_at_zero():
    feats = [np.array([0, 2]), np.array([1])]
    model = train_logreg(feats, feats, hash_dim=4)
    np.testing.assert_array_equal(model.weights, 0.0)
    assert model.bias == 0.0


def test_loss_history_is_non_increasing():
    rng = np.random.default_rng(0)
    pos = [np.unique(rng.integers(0, 64, 5)) for _ in range(20)]
    neg = [np.unique(rng.integers(32, 96, 5)) for _ in range(20)]
    model = train_logreg(pos, neg, hash_dim=128)
    assert all(b <= a for a, b in zip(model.loss_history, model.loss_history[1:]))


def test_empty_class_is_an_error():
    with pytest.raises(ValueError, match="both classes"):
        train_logreg([], [np.array([0])])
    with pytest.raises(ValueError, match="both classes"):
        train_logreg([np.array([0])], [])


def test_training_reaches_the_grid_search_optimum():
    # four samples over three active features; every coarse grid point must
    # score no better than the trained model
    pos = [np.array([0]), np.array([0, 1])]
    neg = [np.array([1]), np.array([2])]
    model = train_logreg(pos, neg, TrainConfig(epochs=400), hash_dim=4)
    assert model.weights[3] == 0.0

    grid = np.linspace(-4, 4, 81)
    w0, w1, w2, b = np.meshgrid(grid, grid, grid, grid, indexing="ij", sparse=True)
    nll = lambda m, y: np.logaddexp(0.0, -y * m)
    loss = (
        nll(w0 + b, 1) + nll(w0 + w1 + b, 1) + nll(w1 + b, -1) + nll(w2 + b, -1)
    ) / 4 + 0.5 * 1e-4 * (w0**2 + w1**2 + w2**2)
    assert model.loss_history[-1] <= float(loss.min()) + 1e-3


def science_vs_sports():
    articles, positives = [], []
    for i in range(30):
        articles.append(Article(f"s{i:02d}", f"science item {i}", ["research", f"g{i % 3}"]))
        positives.append(f"s{i:02d}")
    for i in range(90):
        articles.append(Article(f"x{i:02d}", f"sports recap {i}", ["games", f"g{i % 3}"]))
    return articles, positives


def test_single_round_equals_plain_training_on_the_sampled_negatives():
    articles, positives = science_vs_sports()
    model = self_train(articles, positives, rounds=1, seed=5, hash_dim=HASH_DIM)

    non_pos = [a for a in articles if a.id not in set(positives)]
    chosen = np.sort(
        np.random.default_rng(5).choice(len(non_pos), size=len(positives), replace=False)
    )
    feats = lambda a: featurize(a.title, a.categories, HASH_DIM)
    direct = train_logreg(
        [feats(a) for a in articles if a.id in set(positives)],
        [feats(non_pos[int(i)]) for i in chosen],
        hash_dim=HASH_DIM,
    )
    np.testing.assert_array_equal(model.weights, direct.weights)
    assert model.bias == direct.bias


def test_self_training_separates_the_clusters():
    articles, positives = science_vs_sports()
    for rounds in (1, 3):
        model = self_train(articles, positives, rounds=rounds, seed=0, hash_dim=HASH_DIM)
        margins = {a.id: model.margin(a) for a in articles}
        worst_pos = min(margins[i] for i in positives)
        best_neg = max(m for i, m in margins.items() if i not in set(positives))
        assert worst_pos > best_neg
        assert sorted(filter_corpus(model, articles, 30)) == sorted(positives)


def test_mining_rounds_change_the_model():
    articles, positives = science_vs_sports()
    m1 = self_train(articles, positives, rounds=1, seed=0, hash_dim=HASH_DIM)
    m2 = self_train(articles, positives, rounds=2, seed=0, hash_dim=HASH_DIM)
    assert m2.rounds_trained == 2
    assert not np.array_equal(m1.weights, m2.weights)


def test_small_negative_pool_is_used_whole():
    articles = [Article("p", "alpha", []), Article("n1", "beta", []), Article("n2", "gamma", [])]
    model = self_train(articles, ["p"], rounds=2, negatives_per_round=50, hash_dim=HASH_DIM)
    assert model.rounds_trained == 2


def test_self_train_argument_validation():
    articles, positives = science_vs_sports()
    with pytest.raises(ValueError, match="not in articles"):
        self_train(articles, ["nope"], hash_dim=HASH_DIM)
    with pytest.raises(ValueError, match="rounds must be >= 1"):
        self_train(articles, positives, rounds=0, hash_dim=HASH_DIM)
    with pytest.raises(ValueError, match="negatives_per_round"):
        self_train(articles, positives, negatives_per_round=0, hash_dim=HASH_DIM)
    with pytest.raises(ValueError, match="at least one positive"):
        self_train(articles, [a.id for a in articles], hash_dim=HASH_DIM)


def test_self_training_is_deterministic():
    articles, positives = science_vs_sports()
    a = self_train(articles, positives, rounds=3, seed=2, hash_dim=HASH_DIM)
    b = self_train(articles, positives, rounds=3, seed=2, hash_dim=HASH_DIM)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.bias == b.bias


def test_filter_corpus_orders_by_margin_then_id():
    articles = [Article(f"a{i}", f"token{i}", []) for i in range(6)]
    feats = [featurize(a.title, [], HASH_DIM) for a in articles]
    assert len({int(f[0]) for f in feats}) == 6  # no hash collisions in fixture

    weights = np.zeros(HASH_DIM)
    for f, value in zip(feats, [3.0, -1.0, 3.0, 0.5, -2.0, 0.5]):
        weights[f] = value
    model = FilterModel(HASH_DIM, 0, weights, bias=0.0)

    oracle = [a.id for a in sorted(articles, key=lambda a: (-model.margin(a), a.id))]
    assert oracle == ["a0", "a2", "a3", "a5", "a1", "a4"]
    assert filter_corpus(model, articles, 6) == oracle
    assert filter_corpus(model, articles, 2) == ["a0", "a2"]
    assert filter_corpus(model, articles, 0) == []
    with pytest.raises(ValueError, match="out of range"):
        filter_corpus(model, articles, 7)


def test_smaller_budgets_are_prefixes_of_larger_ones():
    articles, positives = science_vs_sports()
    model = self_train(articles, positives, rounds=2, seed=1, hash_dim=HASH_DIM)
    kept_small = filter_corpus(model, articles, 20)
    kept_large = filter_corpus(model, articles, 70)
    assert kept_large[:20] == kept_small


def test_classify_threshold_and_order():
    articles, positives = science_vs_sports()
    model = self_train(articles, positives, rounds=1, seed=0, hash_dim=HASH_DIM)
    decisions = classify(model, articles, threshold=0.0)
    assert [d.article_id for d in decisions] == [a.id for a in articles]
    for d, a in zip(decisions, articles):
        assert d.keep == (model.margin(a) >= 0.0)
        assert d.score == model.margin(a)


def test_model_serialization_round_trips_bytes_and_margins(tmp_path):
    articles, positives = science_vs_sports()
    model = self_train(articles, positives, rounds=3, seed=4, hash_dim=HASH_DIM)
    buf = filter_model_to_bytes(model)
    assert filter_model_to_bytes(filter_model_from_bytes(buf)) == buf

    path = tmp_path / "filter.model"
    save_filter_model(model, path)
    loaded = load_filter_model(path)
    assert loaded.rounds_trained == model.rounds_trained
    np.testing.assert_array_equal(loaded.margins(articles), model.margins(articles))


def test_model_format_errors():
    with pytest.raises(FormatError, match="missing header"):
        filter_model_from_bytes(b"")
    with pytest.raises(FormatError, match="bad header line"):
        filter_model_from_bytes(b"not json\n")
    with pytest.raises(FormatError, match="bad header line"):
        filter_model_from_bytes(b'{"bias": 0.0}\n')
    good = filter_model_to_bytes(FilterModel(4, 0, np.zeros(4), 0.0))
    with pytest.raises(FormatError, match="expected 32 bytes, found 31"):
        filter_model_from_bytes(good[:-1])


def test_kept_ids_round_trip(tmp_path):
    path = tmp_path / "kept.txt"
    save_kept_ids(["b", "a", "c"], path)
    assert path.read_bytes() == b"b\na\nc\n"
    assert load_kept_ids(path) == ["b", "a", "c"]
    save_kept_ids([], path)
    assert path.read_bytes() == b""
    assert load_kept_ids(path) == []


def test_filtered_index_equals_post_hoc_filtering():
    articles, positives = science_vs_sports()
    model = self_train(articles, positives, rounds=2, seed=3, hash_dim=HASH_DIM)
    kept = set(filter_corpus(model, articles, 40))

    rng = np.random.default_rng(6)
    data = rng.standard_normal((len(articles), 8)).astype(np.float32)
    X = EmbeddingMatrix(data, [a.id for a in articles])
    full = build_index(X, IndexConfig("flat32"))
    subset = build_index(X.subset([i for i in X.ids if i in kept]), IndexConfig("flat32"))

    q = rng.standard_normal(8)
    direct = search(subset, q, 10)
    post_hoc = [r for r in search(full, q, len(articles)) if r[0] in kept][:10]
    assert direct == post_hoc
