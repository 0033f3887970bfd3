"""Evaluation: word similarity, lexical entailment, nearest neighbors.

All metrics report coverage (the fraction of dataset pairs with both words
in vocabulary) alongside their value; out-of-vocabulary pairs are excluded
from the computation rather than imputed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .gaussian import Gaussian, cosine_of_means, cosine_of_distributions, kl_energy
from .table import EmbeddingTable

COSINE_MEANS = "cosine_means"
COSINE_DISTRIBUTIONS = "cosine_distributions"
NEG_KL = "neg_kl"


@dataclass(frozen=True)
class SimilarityRecord:
    word1: str
    word2: str
    gold: float


@dataclass(frozen=True)
class EntailmentRecord:
    hyponym: str
    hypernym: str
    label: int


@dataclass(frozen=True)
class ScoredRecord:
    record: object
    score: float
    covered: bool


def load_similarity_dataset(path: str | os.PathLike) -> list[SimilarityRecord]:
    """TSV rows ``word1<TAB>word2<TAB>score``; '#' lines are comments."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            w1, w2, score = line.split("\t")
            out.append(SimilarityRecord(w1, w2, float(score)))
    return out


def load_entailment_dataset(path: str | os.PathLike) -> list[EntailmentRecord]:
    """TSV rows ``hyponym<TAB>hypernym<TAB>label`` with binary labels."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            hypo, hyper, label = line.split("\t")
            if label not in ("0", "1"):
                raise ValueError(f"entailment labels must be 0/1, got {label!r}")
            out.append(EntailmentRecord(hypo, hyper, int(label)))
    return out


def _pair_scorer(scorer: str):
    if scorer == COSINE_MEANS:
        return cosine_of_means
    if scorer == COSINE_DISTRIBUTIONS:
        return cosine_of_distributions
    raise ValueError(f"unknown similarity scorer {scorer!r}")


def spearman(table: EmbeddingTable, dataset: Sequence[SimilarityRecord],
             scorer: str = COSINE_MEANS) -> tuple[float, float]:
    """Spearman rank correlation against gold scores, with coverage.

    Ties get average ranks.  Needs at least two covered pairs.
    """
    score_fn = _pair_scorer(scorer)
    gold, ours = [], []
    for rec in dataset:
        if rec.word1 in table and rec.word2 in table:
            gold.append(rec.gold)
            ours.append(score_fn(table.gaussian(rec.word1), table.gaussian(rec.word2)))
    if len(gold) < 2:
        raise ValueError(f"only {len(gold)} covered pairs: cannot rank-correlate")
    rho = float(stats.spearmanr(gold, ours).statistic)
    coverage = len(gold) / len(dataset)
    return rho, coverage


def entailment_scores(table: EmbeddingTable, dataset: Sequence[EntailmentRecord],
                      scorer: str = NEG_KL,
                      reverse_kl: bool = False) -> list[ScoredRecord]:
    """Score each (hyponym, hypernym) record; OOV pairs are marked uncovered.

    ``neg_kl`` scores -KL(N_hyponym || N_hypernym): high when the hyponym's
    mass sits inside the hypernym's.  ``reverse_kl`` flips the direction.
    ``cosine_means`` is the symmetric baseline.
    """
    out = []
    for rec in dataset:
        if rec.hyponym not in table or rec.hypernym not in table:
            out.append(ScoredRecord(rec, 0.0, False))
            continue
        g_hypo = table.gaussian(rec.hyponym)
        g_hyper = table.gaussian(rec.hypernym)
        if scorer == NEG_KL:
            if reverse_kl:
                score = -kl_energy(g_hypo, g_hyper)
            else:
                score = -kl_energy(g_hyper, g_hypo)
        elif scorer == COSINE_MEANS:
            score = cosine_of_means(g_hypo, g_hyper)
        else:
            raise ValueError(f"unknown entailment scorer {scorer!r}")
        out.append(ScoredRecord(rec, score, True))
    return out


def coverage_of(ranking: Sequence[ScoredRecord]) -> float:
    if not ranking:
        return 0.0
    return sum(r.covered for r in ranking) / len(ranking)


def _covered_labels_scores(ranking: Sequence[ScoredRecord]):
    labels, scores = [], []
    for r in ranking:
        if r.covered:
            labels.append(int(r.record.label))
            scores.append(float(r.score))
    return labels, scores


def average_precision(ranking: Sequence[ScoredRecord]) -> float:
    """Mean of precision-at-each-positive over the covered records.

    Scores sort descending; ties keep their input order (stable sort).
    """
    labels, scores = _covered_labels_scores(ranking)
    n_pos = sum(labels)
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


def best_f1(ranking: Sequence[ScoredRecord]) -> tuple[float, float]:
    """Max F1 over every threshold position, and the achieving threshold.

    Items score strictly above the threshold are predicted positive.
    Candidate thresholds are -inf, the midpoints between adjacent distinct
    scores, and +inf, swept from -inf upward; the first maximum wins.
    """
    labels, scores = _covered_labels_scores(ranking)
    n_pos = sum(labels)
    if n_pos == 0:
        raise ValueError("best F1 needs at least one positive")
    distinct = sorted(set(scores))
    thresholds = [-math.inf]
    thresholds += [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    thresholds.append(math.inf)
    best = (-1.0, -math.inf)
    for theta in thresholds:
        tp = fp = 0
        for lab, sc in zip(labels, scores):
            if sc > theta:
                if lab == 1:
                    tp += 1
                else:
                    fp += 1
        fn = n_pos - tp
        f1 = 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
        if f1 > best[0]:
            best = (f1, theta)
    return best


@dataclass(frozen=True)
class Neighbor:
    token: str
    cosine: float
    log_det: float


SORT_SIMILARITY = "similarity"
SORT_VARIANCE = "variance_desc"


def log_det_rows(table: EmbeddingTable) -> np.ndarray:
    """Log-determinant of each input covariance (sum of log diagonal)."""
    logs = np.log(table.input_var)
    out = logs.sum(axis=1)
    if table.input_var.shape[1] == 1 and table.dim != 1:
        out = out * table.dim
    return out


def neighbors(table: EmbeddingTable, query: str, k: int,
              sort: str = SORT_SIMILARITY) -> list[Neighbor]:
    """Top-k nearest words to ``query`` by cosine of means.

    ``variance_desc`` re-sorts that same top-k set from largest to smallest
    covariance log-determinant (the paper-style specificity view).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if sort not in (SORT_SIMILARITY, SORT_VARIANCE):
        raise ValueError(f"unknown neighbor sort {sort!r}")
    if query not in table:
        raise KeyError(f"out-of-vocabulary query: {query!r}")
    qid = table.vocab.id_of[query]
    q = table.input_mean[qid]
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(table.input_mean, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = table.input_mean @ q / (norms * qn)
    cos[~np.isfinite(cos)] = 0.0
    cos[qid] = -np.inf  # a word is not its own neighbor
    k = min(k, table.size - 1)
    top = np.argsort(-cos, kind="stable")[:k]
    logdets = log_det_rows(table)
    out = [Neighbor(table.vocab.tokens[int(i)], float(cos[i]), float(logdets[i]))
           for i in top]
    if sort == SORT_VARIANCE:
        out.sort(key=lambda nb: -nb.log_det)
    return out
