"""Command-line interface: train, estimate, evaluate, embed trees, query.

Machine-readable metric lines go to stdout as TSV; human-readable notes go
to stderr.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .corpus import SubsampleConfig, WindowConfig, build_vocab, corpus_token_stream, iter_sentences, window_pair_indices
from .evaluate import (
    average_precision,
    best_f1,
    coverage_of,
    entailment_scores,
    load_entailment_dataset,
    load_similarity_dataset,
    neighbors,
    spearman,
)
from .gaussian import COV_KINDS, DIAGONAL, dot_product_moments, dot_product_range
from .hierarchy import HierTrainConfig, containment_report, embed_tree, load_tree
from .manifest import file_sha256, read_manifest, utc_now, write_manifest
from .optim import ConstraintConfig, MarginLossConfig
from .table import EmbeddingTable, load_model, save_model
from .train import TrainConfig, finalize_empirical_diag, train


class UsageError(Exception):
    """Bad flag combination: maps to exit code 2."""


def _add_constraint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mean-cap", type=float, default=5.0,
                   help="L2 norm cap on mean vectors")
    p.add_argument("--cov-floor", type=float, default=0.05,
                   help="minimum covariance entry")
    p.add_argument("--cov-ceil", type=float, default=10.0,
                   help="maximum covariance entry")


def _constraints(args) -> ConstraintConfig:
    if args.cov_floor >= args.cov_ceil:
        raise UsageError("--cov-floor must be strictly less than --cov-ceil")
    if args.mean_cap <= 0 or args.cov_floor <= 0:
        raise UsageError("--mean-cap and --cov-floor must be positive")
    return ConstraintConfig(mean_cap=args.mean_cap, cov_floor=args.cov_floor,
                            cov_ceiling=args.cov_ceil)


def _emit(fields) -> None:
    print("\t".join(str(f) for f in fields))


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_train(args) -> int:
    constraints = _constraints(args)
    if args.margin <= 0:
        raise UsageError("--margin must be positive")
    _note(f"building vocabulary from {args.corpus} (min count {args.min_count})")
    vocab = build_vocab(corpus_token_stream(args.corpus), args.min_count)
    _note(f"vocabulary: {len(vocab)} types, {vocab.total_tokens} retained tokens")
    cfg = TrainConfig(
        dim=args.dim,
        kind=args.cov,
        epochs=args.epochs,
        minibatch_sentences=args.minibatch,
        negatives_per_positive=args.negatives,
        loss=MarginLossConfig(margin=args.margin, energy_kind=args.energy),
        constraints=constraints,
        learning_rate=args.lr,
        adagrad_epsilon=args.adagrad_eps,
        subsample=SubsampleConfig(threshold=args.subsample_t,
                                  enabled=not args.no_subsample),
        window=WindowConfig(window=args.window, dynamic_shrink=args.dynamic_window),
        negative_power=args.neg_power,
        reject_negative_equals_positive=args.reject_neg_collisions,
        seed=args.seed,
        workers=args.workers,
    )
    started = utc_now()
    table = train(args.corpus, vocab, cfg)
    save_model(table, args.out)
    if args.vocab_out:
        vocab.save(args.vocab_out)
    manifest_path = args.manifest or f"{args.out}.manifest"
    entries = {
        "command": "train",
        "gaussemb_version": __version__,
        "corpus": args.corpus,
        "corpus_sha256": file_sha256(args.corpus),
        "model": args.out,
        "vocab_size": len(vocab),
        "started": started,
        "finished": utc_now(),
    }
    entries.update(_flag_entries(args, (
        "dim", "cov", "energy", "epochs", "seed", "min_count", "window",
        "dynamic_window", "subsample_t", "no_subsample", "negatives",
        "neg_power", "reject_neg_collisions", "margin", "lr", "adagrad_eps",
        "mean_cap", "cov_floor", "cov_ceil", "minibatch", "workers",
    )))
    write_manifest(manifest_path, entries)
    _note(f"model written to {args.out}, manifest to {manifest_path}")
    return 0


def _flag_entries(args, names) -> dict[str, object]:
    return {name: getattr(args, name) for name in names}


def _load_vectors(path):
    """Point-vector text file: ``token v_1 .. v_d`` per line."""
    vecs: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ValueError(f"inconsistent vector dimension for {token!r}")
            vecs[token] = np.asarray([float(v) for v in values])
    if not vecs:
        raise ValueError(f"no vectors found in {path}")
    return vecs, dim


def cmd_empirical(args) -> int:
    constraints = _constraints(args)
    vecs, dim = _load_vectors(args.vectors)
    vocab_full = build_vocab(corpus_token_stream(args.corpus), args.min_count)
    shared = [t for t in vocab_full.tokens if t in vecs]
    if len(shared) < len(vocab_full):
        _note(
            f"warning: {len(vocab_full) - len(shared)} corpus types have no "
            f"vector; coverage {len(shared)}/{len(vocab_full)}"
        )
    if not shared:
        raise ValueError("no overlap between corpus vocabulary and vector file")
    vocab = build_vocab(
        (t for t in corpus_token_stream(args.corpus) if t in vecs), args.min_count
    )
    v = len(vocab)
    means = np.stack([vecs[t] for t in vocab.tokens])
    sum_sq = np.zeros((v, dim))
    counts = np.zeros(v, dtype=np.int64)
    wcfg = WindowConfig(window=args.window, dynamic_shrink=False)
    for sent in iter_sentences(args.corpus):
        ids = vocab.encode(sent)
        i_idx, j_idx = window_pair_indices(len(ids), wcfg)
        if len(i_idx) == 0:
            continue
        centers = ids[i_idx]
        dev = means[ids[j_idx]] - means[centers]
        np.add.at(sum_sq, centers, dev * dev)
        np.add.at(counts, centers, 1)
    missing = counts == 0
    if missing.any():
        _note(f"warning: {int(missing.sum())} words had no contexts; "
              "their covariance is the clamped ridge")
    mean_sq = sum_sq / np.maximum(counts, 1)[:, None]
    varis = finalize_empirical_diag(mean_sq, args.ridge, args.cov, constraints)
    cap = max(constraints.mean_cap, float(np.linalg.norm(means, axis=1).max()))
    table = EmbeddingTable(
        vocab=vocab,
        kind=args.cov,
        input_mean=means,
        input_var=varis,
        context_mean=means.copy(),
        context_var=varis.copy(),
        constraints=ConstraintConfig(cap, constraints.cov_floor,
                                     constraints.cov_ceiling),
    )
    save_model(table, args.out)
    manifest_path = args.manifest or f"{args.out}.manifest"
    write_manifest(manifest_path, {
        "command": "empirical",
        "gaussemb_version": __version__,
        "corpus": args.corpus,
        "corpus_sha256": file_sha256(args.corpus),
        "vectors": args.vectors,
        "vectors_sha256": file_sha256(args.vectors),
        "model": args.out,
        "vocab_size": v,
        "ridge": args.ridge,
        "cov": args.cov,
        "window": args.window,
        "min_count": args.min_count,
        "finished": utc_now(),
    })
    _note(f"empirical model written to {args.out} ({v} types)")
    return 0


def cmd_eval_sim(args) -> int:
    table = load_model(args.model)
    dataset = load_similarity_dataset(args.dataset)
    rho, coverage = spearman(table, dataset, scorer=args.scorer)
    _note(f"{args.dataset}: spearman rho {rho:.4f} at coverage {coverage:.3f} "
          f"({args.scorer})")
    _emit([args.dataset, f"spearman_{args.scorer}", repr(rho), repr(coverage)])
    if args.manifest:
        write_manifest(args.manifest, {
            "command": "eval-sim", "gaussemb_version": __version__,
            "model": args.model, "model_sha256": file_sha256(args.model),
            "dataset": args.dataset, "dataset_sha256": file_sha256(args.dataset),
            "scorer": args.scorer, "rho": repr(rho), "coverage": repr(coverage),
            "finished": utc_now(),
        })
    return 0


def cmd_eval_entail(args) -> int:
    table = load_model(args.model)
    dataset = load_entailment_dataset(args.dataset)
    ranking = entailment_scores(table, dataset, scorer=args.scorer,
                                reverse_kl=args.reverse_kl)
    cov = coverage_of(ranking)
    ap = average_precision(ranking)
    f1, threshold = best_f1(ranking)
    _note(f"{args.dataset}: AP {ap:.4f}, best F1 {f1:.4f} at threshold "
          f"{threshold:.6g}, coverage {cov:.3f} ({args.scorer})")
    _emit([args.dataset, f"ap_{args.scorer}", repr(ap), repr(cov)])
    _emit([args.dataset, f"best_f1_{args.scorer}", repr(f1), repr(cov)])
    if args.manifest:
        write_manifest(args.manifest, {
            "command": "eval-entail", "gaussemb_version": __version__,
            "model": args.model, "model_sha256": file_sha256(args.model),
            "dataset": args.dataset, "dataset_sha256": file_sha256(args.dataset),
            "scorer": args.scorer, "reverse_kl": args.reverse_kl,
            "ap": repr(ap), "best_f1": repr(f1), "coverage": repr(cov),
            "finished": utc_now(),
        })
    return 0


def cmd_embed_tree(args) -> int:
    constraints = _constraints(args)
    tree = load_tree(args.tree)
    cfg = HierTrainConfig(
        dim=args.dim, kind=args.cov, steps=args.steps, margin=args.margin,
        learning_rate=args.lr, constraints=constraints, seed=args.seed,
        restarts=args.restarts,
    )
    table = embed_tree(tree, cfg)
    report = containment_report(table, tree, seed=args.seed)
    report.write(args.report)
    if args.model_out:
        save_model(table, args.model_out)
    if args.plot_data:
        with open(args.plot_data, "w", encoding="utf-8") as f:
            f.write("node\t" + "\t".join(f"mean_{i}" for i in range(table.dim))
                    + "\t" + "\t".join(f"var_{i}" for i in range(table.input_var.shape[1]))
                    + "\n")
            for i, tok in enumerate(table.vocab.tokens):
                row = [tok] + [repr(x) for x in table.input_mean[i]] \
                    + [repr(x) for x in table.input_var[i]]
                f.write("\t".join(row) + "\n")
    _note(f"tree report written to {args.report} (AP {report.ap:.4f})")
    _emit([args.tree, "hierarchy_ap", repr(report.ap), "1.0"])
    manifest_path = args.manifest or f"{args.report}.manifest"
    write_manifest(manifest_path, {
        "command": "embed-tree", "gaussemb_version": __version__,
        "tree": args.tree, "tree_sha256": file_sha256(args.tree),
        "report": args.report, "ap": repr(report.ap),
        "dim": args.dim, "cov": args.cov, "steps": args.steps,
        "margin": args.margin, "lr": args.lr, "restarts": args.restarts,
        "seed": args.seed, "mean_cap": args.mean_cap,
        "cov_floor": args.cov_floor, "cov_ceil": args.cov_ceil,
        "finished": utc_now(),
    })
    return 0


def cmd_neighbors(args) -> int:
    table = load_model(args.model)
    found = neighbors(table, args.query, args.k, sort=args.sort)
    _note(f"top {len(found)} neighbors of {args.query!r} sorted by {args.sort}")
    for nb in found:
        _emit([nb.token, repr(nb.cosine), repr(nb.log_det)])
    return 0


def cmd_moments(args) -> int:
    if args.c < 0:
        raise UsageError("-c must be nonnegative")
    table = load_model(args.model)
    a = table.gaussian(args.word_a)
    b = table.gaussian(args.word_b)
    m = dot_product_moments(a, b)
    low, high = dot_product_range(a, b, args.c)
    _note(f"dot products {args.word_a!r} . {args.word_b!r}: mean {m.mean_z:.6g}, "
          f"variance {m.var_z:.6g}, +-{args.c} sd range [{low:.6g}, {high:.6g}]")
    _emit([args.word_a, args.word_b, repr(m.mean_z), repr(m.var_z),
           repr(low), repr(high)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaussemb",
        description="Gaussian word embeddings: train, estimate, evaluate, query.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train Gaussian embeddings on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--manifest", default=None)
    p.add_argument("--vocab-out", default=None, help="also write the vocabulary TSV")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--cov", choices=COV_KINDS, default=DIAGONAL)
    p.add_argument("--energy", choices=("el", "kl"), default="el")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--min-count", type=int, default=100)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--dynamic-window", action="store_true",
                   help="shrink each window uniformly in 1..window")
    p.add_argument("--subsample-t", type=float, default=1e-5)
    p.add_argument("--no-subsample", action="store_true")
    p.add_argument("--negatives", type=int, default=1)
    p.add_argument("--neg-power", type=float, default=0.75)
    p.add_argument("--reject-neg-collisions", action="store_true",
                   help="resample negatives equal to the positive context")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--adagrad-eps", type=float, default=1e-8)
    p.add_argument("--minibatch", type=int, default=20,
                   help="sentences per minibatch")
    p.add_argument("--workers", type=int, default=1)
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("empirical",
                       help="covariances from context scatter of fixed vectors")
    p.add_argument("--vectors", required=True, help="token v_1..v_d per line")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--ridge", type=float, default=1e-2)
    p.add_argument("--cov", choices=COV_KINDS, default=DIAGONAL)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--min-count", type=int, default=1)
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_empirical)

    p = sub.add_parser("eval-sim", help="Spearman rho on a similarity TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--scorer", choices=("cosine_means", "cosine_distributions"),
                   default="cosine_means")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_eval_sim)

    p = sub.add_parser("eval-entail", help="AP and best F1 on an entailment TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--scorer", choices=("neg_kl", "cosine_means"), default="neg_kl")
    p.add_argument("--reverse-kl", action="store_true",
                   help="score -KL(hypernym || hyponym) instead")
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_eval_entail)

    p = sub.add_parser("embed-tree", help="embed a tree hierarchy via KL energy")
    p.add_argument("--tree", required=True, help="edge list TSV: parent<TAB>child")
    p.add_argument("--report", required=True, help="containment report TSV to write")
    p.add_argument("--model-out", default=None)
    p.add_argument("--plot-data", default=None,
                   help="TSV of node means and variances for external plotting")
    p.add_argument("--manifest", default=None)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--cov", choices=COV_KINDS, default=DIAGONAL)
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_embed_tree)

    p = sub.add_parser("neighbors", help="nearest neighbors of a query word")
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--sort", choices=("similarity", "variance_desc"),
                   default="similarity")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("moments", help="dot-product moments for a word pair")
    p.add_argument("--model", required=True)
    p.add_argument("--word-a", required=True)
    p.add_argument("--word-b", required=True)
    p.add_argument("-c", type=float, default=2.0,
                   help="half-width of the range in standard deviations")
    p.set_defaults(func=cmd_moments)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
