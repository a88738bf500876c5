"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/format error. Every run first
echoes its parsed configuration as a single JSON line on standard output, and
all file outputs are written atomically. Flags are long-form only.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .corpus import (
    SyntheticSpec,
    exact_ground_truth,
    generate_synthetic_qa,
    load_embeddings,
    load_passages,
    load_queries,
    save_embeddings,
    save_jsonl,
    atomic_write_bytes,
)
from .errors import PqixError
from .evaluation import (
    K_VALUES,
    grid_from_bits,
    precision_at_ks,
    recall_vs_exact,
    run_sweep,
    write_sweep_csv,
    SweepPoint,
)
from .filtering import (
    TrainConfig,
    articles_from_passages,
    filter_corpus,
    load_filter_model,
    load_kept_ids,
    save_filter_model,
    save_kept_ids,
    self_train,
)
from .index import (
    IndexConfig,
    build_index,
    exact_oracle_search,
    bits_per_dimension,
    compression_factor,
    flat_vector_bytes,
    index_size_bytes,
    load_index,
    pq_code_bytes,
    save_index,
    search,
)

log = logging.getLogger("pqix")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _csv_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _csv_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _build_parser() -> _Parser:
    p = _Parser(prog="pqix", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--verbose", action="store_true")

    sp = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--clusters", type=int, required=True)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--queries", type=int, default=None)
    sp.add_argument("--answer-fraction", type=float, default=1.0)
    sp.add_argument("--out", required=True, help="output directory")
    common(sp)

    sp = sub.add_parser("build", help="build and save an index")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--mode", choices=["flat32", "flat16", "pq"], required=True)
    sp.add_argument("--d-r", type=int, default=None)
    sp.add_argument("--n-v", type=int, default=None)
    sp.add_argument("--n-b", type=int, default=None)
    sp.add_argument("--normalize", action="store_true")
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("search", help="run queries against a saved index")
    sp.add_argument("--index", required=True)
    sp.add_argument("--queries", required=True, help="queries JSONL")
    sp.add_argument("--query-embeddings", required=True)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("filter-train", help="self-train an article filter")
    sp.add_argument("--passages", required=True)
    sp.add_argument("--positives", required=True, help="file of article ids, one per line")
    sp.add_argument("--rounds", type=int, default=3)
    sp.add_argument("--negatives-per-round", type=int, default=None)
    sp.add_argument("--hash-dim", type=int, default=2**20)
    sp.add_argument("--hash-seed", type=int, default=0)
    sp.add_argument("--lr", type=float, default=0.5)
    sp.add_argument("--l2", type=float, default=1e-4)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("filter-apply", help="rank articles and keep the best")
    sp.add_argument("--model", required=True)
    sp.add_argument("--passages", required=True)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--keep-count", type=int)
    grp.add_argument("--keep-fraction", type=float)
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("eval", help="retrieval metrics for a saved index")
    sp.add_argument("--index", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--query-embeddings", required=True)
    sp.add_argument("--passages", required=True)
    sp.add_argument("--embeddings", default=None,
                    help="original embeddings; enables recall-vs-exact")
    sp.add_argument("--k-values", type=_csv_ints, default=list(K_VALUES))
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("sweep", help="size/accuracy sweep over configurations")
    sp.add_argument("--passages", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--query-embeddings", required=True)
    sp.add_argument("--bits", type=_csv_ints, default=[1, 2, 8, 32],
                    help="bits per dimension, from {1,2,4,8,16,32}")
    sp.add_argument("--d-r", type=int, default=None)
    sp.add_argument("--pq-grid", default=None,
                    help="extra explicit pq points, e.g. 16:8,32:4 (n_v:n_b)")
    sp.add_argument("--keep-fractions", type=_csv_floats, default=[1.0])
    sp.add_argument("--filter-model", default=None)
    sp.add_argument("--normalize", action="store_true")
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("size", help="byte accounting for an index or a formula")
    sp.add_argument("--index", default=None)
    sp.add_argument("--mode", choices=["flat32", "flat16", "pq"], default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--n-v", type=int, default=None)
    sp.add_argument("--n-b", type=int, default=None)
    sp.add_argument("--out", default=None)
    common(sp)
    return p


def _load_query_vector(vectors, qid: str):
    try:
        row = vectors.ids.index(qid)
    except ValueError:
        raise ValueError(f"query {qid!r} has no vector in the embeddings file") from None
    return vectors.data[row]


def _cmd_synth(args) -> None:
    spec = SyntheticSpec(args.n, args.d, args.clusters, args.noise, args.seed,
                         args.queries)
    corpus = generate_synthetic_qa(spec, args.answer_fraction)
    os.makedirs(args.out, exist_ok=True)
    save_jsonl(corpus.passages, os.path.join(args.out, "passages.jsonl"))
    save_jsonl(corpus.queries, os.path.join(args.out, "queries.jsonl"))
    save_embeddings(corpus.passage_vectors, os.path.join(args.out, "passages.emb"))
    save_embeddings(corpus.query_vectors, os.path.join(args.out, "queries.emb"))
    gt = exact_ground_truth(corpus.passage_vectors, corpus.query_vectors)
    atomic_write_bytes(
        os.path.join(args.out, "ground_truth.json"),
        (json.dumps(gt, sort_keys=True, indent=0) + "\n").encode("utf-8"),
    )
    log.info("wrote synthetic corpus (%d passages, %d queries) to %s",
             len(corpus.passages), len(corpus.queries), args.out)


def _cmd_build(args) -> None:
    try:
        config = IndexConfig(args.mode, args.d_r, args.n_v, args.n_b,
                             seed=args.seed, normalize=args.normalize)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    X = load_embeddings(args.embeddings)
    ix = build_index(X, config)
    save_index(ix, args.out)
    report = index_size_bytes(ix)
    log.info("built %s index: n=%d d_R=%d, %d bytes",
             ix.storage_mode, ix.n, ix.d_r, report.total_bytes)


def _cmd_search(args) -> None:
    ix = load_index(args.index)
    queries = load_queries(args.queries)
    vectors = load_embeddings(args.query_embeddings)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    lines = []
    for q in queries:
        results = search(ix, _load_query_vector(vectors, q.id), args.k)
        lines.append(json.dumps(
            {"query_id": q.id,
             "ids": [pid for pid, _ in results],
             "scores": [score for _, score in results]},
            sort_keys=True,
        ))
    atomic_write_bytes(args.out, ("\n".join(lines) + "\n").encode("utf-8"))
    log.info("wrote %d result rows to %s", len(lines), args.out)


def _cmd_filter_train(args) -> None:
    passages = load_passages(args.passages)
    positives = load_kept_ids(args.positives)
    hyper = TrainConfig(lr=args.lr, l2=args.l2, epochs=args.epochs, seed=args.seed)
    model = self_train(
        articles_from_passages(passages), positives, rounds=args.rounds,
        negatives_per_round=args.negatives_per_round, seed=args.seed, hyper=hyper,
        hash_dim=args.hash_dim, hash_seed=args.hash_seed,
    )
    save_filter_model(model, args.out)
    log.info("trained filter over %d rounds, final loss %.6f",
             model.rounds_trained, model.loss_history[-1])


def _cmd_filter_apply(args) -> None:
    model = load_filter_model(args.model)
    articles = articles_from_passages(load_passages(args.passages))
    if args.keep_count is not None:
        keep_count = args.keep_count
    else:
        if not 0.0 <= args.keep_fraction <= 1.0:
            raise UsageError("--keep-fraction must be in [0, 1]")
        keep_count = int(round(args.keep_fraction * len(articles)))
    kept = filter_corpus(model, articles, keep_count)
    save_kept_ids(kept, args.out)
    log.info("kept %d of %d articles", len(kept), len(articles))


def _cmd_eval(args) -> None:
    ix = load_index(args.index)
    queries = load_queries(args.queries)
    qvecs = load_embeddings(args.query_embeddings)
    passages = load_passages(args.passages)
    ks = tuple(args.k_values)
    p_at_k = precision_at_ks(ix, queries, qvecs, passages, ks)
    metrics = {
        "n_queries": len(queries),
        "index_bytes": index_size_bytes(ix).total_bytes,
        "p_at_k": {str(k): p_at_k[k] for k in ks},
    }
    if args.embeddings:
        X = load_embeddings(args.embeddings).subset(ix.ids)
        approx = {}
        oracle = {}
        for q in queries:
            vec = _load_query_vector(qvecs, q.id)
            approx[q.id] = [pid for pid, _ in search(ix, vec, 10)]
            oracle[q.id] = [pid for pid, _ in exact_oracle_search(X, vec, 10)]
        metrics["recall_at_10"] = recall_vs_exact(approx, oracle, 10)
    atomic_write_bytes(
        args.out, (json.dumps(metrics, sort_keys=True, indent=2) + "\n").encode("utf-8")
    )
    log.info("wrote metrics to %s", args.out)


def _cmd_sweep(args) -> None:
    passages = load_passages(args.passages)
    vectors = load_embeddings(args.embeddings)
    queries = load_queries(args.queries)
    qvecs = load_embeddings(args.query_embeddings)
    try:
        grid = grid_from_bits(vectors.d, args.bits, args.d_r,
                              tuple(args.keep_fractions))
        if args.pq_grid:
            for pair in args.pq_grid.split(","):
                n_v, _, n_b = pair.partition(":")
                for frac in args.keep_fractions:
                    grid.append(SweepPoint("pq", args.d_r, int(n_v), int(n_b),
                                           keep_fraction=frac))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.normalize:
        grid = [replace(pt, normalize=True) for pt in grid]
    model = load_filter_model(args.filter_model) if args.filter_model else None
    rows, errors = run_sweep(passages, vectors, queries, qvecs, grid,
                             seed=args.seed, filter_model=model)
    for point, message in errors:
        print(f"sweep error: {point}: {message}", file=sys.stderr)
    if not rows:
        raise ValueError("every sweep configuration failed")
    write_sweep_csv(rows, args.out)
    log.info("wrote %d sweep rows to %s (%d failed)", len(rows), args.out, len(errors))


def _cmd_size(args) -> None:
    if args.index:
        report = index_size_bytes(load_index(args.index))
        payload = {"breakdown": report.breakdown, "total_bytes": report.total_bytes}
    elif args.mode and args.n and args.d:
        if args.mode == "pq":
            if not args.n_v or not args.n_b:
                raise UsageError("pq arithmetic needs --n-v and --n-b")
            vector_bytes = pq_code_bytes(args.n, args.n_v, args.n_b)
        else:
            vector_bytes = flat_vector_bytes(args.n, args.d,
                                             4 if args.mode == "flat32" else 2)
        bits = bits_per_dimension(args.mode, args.n_v, args.n_b, args.d)
        payload = {
            "bits_per_dim": bits,
            "compression_factor_vs_flat32": compression_factor(bits),
            "mode": args.mode,
            "n": args.n,
            "vector_bytes": vector_bytes,
        }
    else:
        raise UsageError("size needs --index, or --mode with --n and --d")
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    else:
        print(text, end="")


_COMMANDS = {
    "synth": _cmd_synth,
    "build": _cmd_build,
    "search": _cmd_search,
    "filter-train": _cmd_filter_train,
    "filter-apply": _cmd_filter_apply,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "size": _cmd_size,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    echo = {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}
    print(json.dumps(echo, sort_keys=True, default=str))
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (PqixError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
