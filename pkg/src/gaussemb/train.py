"""Unsupervised training loop and the empirical covariance estimator.

The loop streams sentences, subsamples frequent tokens, extracts window
pairs, attaches sampled negatives, and applies one AdaGrad update per
touched row per minibatch (gradients are accumulated across the minibatch
at fixed parameters).  Constraint projections run at minibatch boundaries
on the touched rows and once more after training.

Single-worker runs are bitwise reproducible for a fixed seed.  With more
workers, threads share the table and update it without locks; disjoint
rows never conflict, same-row collisions are benign and accepted in
exchange for throughput, and reproducibility is no longer guaranteed.
"""

from __future__ import annotations

import logging
import os
import threading
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpus import (
    NegativeSampler,
    SubsampleConfig,
    Vocabulary,
    WindowConfig,
    iter_sentences,
    keep_probabilities,
    window_pair_indices,
)
from .gaussian import (
    DIAGONAL,
    SPHERICAL,
    el_energy_arrays,
    el_energy_with_grads,
    kl_energy_arrays,
    kl_energy_with_grads,
)
from .optim import (
    EL,
    ConstraintConfig,
    MarginLossConfig,
    adagrad_step_values,
    project_covariance_rows,
    project_mean_rows,
)
from .table import EmbeddingTable, init_table

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 50
    kind: str = DIAGONAL
    epochs: int = 1
    minibatch_sentences: int = 20
    negatives_per_positive: int = 1
    loss: MarginLossConfig = field(default_factory=MarginLossConfig)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    learning_rate: float = 0.05
    adagrad_epsilon: float = 1e-8
    subsample: SubsampleConfig = field(default_factory=SubsampleConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    negative_power: float = 0.75
    reject_negative_equals_positive: bool = False
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.minibatch_sentences < 1:
            raise ValueError("minibatch_sentences must be >= 1")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def _sentence_id_stream(corpus, vocab: Vocabulary) -> Iterator[np.ndarray]:
    """Normalize a corpus argument into per-sentence id arrays.

    Accepts a path to a one-sentence-per-line text file, or an iterable of
    token lists / raw lines.
    """
    if isinstance(corpus, (str, os.PathLike)):
        sentences: Iterable = iter_sentences(corpus)
    else:
        sentences = corpus
    for sent in sentences:
        if isinstance(sent, str):
            sent = sent.split()
        yield vocab.encode(sent)


def _sentence_triples(ids: np.ndarray, cfg: TrainConfig, keep: np.ndarray,
                      sampler: NegativeSampler, rng: np.random.Generator):
    """Subsample one sentence and emit its (center, pos, neg) id arrays.

    Consumes the rng in a fixed order (subsample mask, window draws,
    negatives) so the triple stream is a pure function of corpus + seed.
    """
    if cfg.subsample.enabled and len(ids):
        mask = rng.random(len(ids)) < keep[ids]
        ids = ids[mask]
    i_idx, j_idx = window_pair_indices(len(ids), cfg.window, rng)
    if len(i_idx) == 0:
        return None
    centers = ids[i_idx]
    positives = ids[j_idx]
    g = cfg.negatives_per_positive
    if g > 1:
        centers = np.repeat(centers, g)
        positives = np.repeat(positives, g)
    negatives = sampler.sample(rng, len(centers))
    if cfg.reject_negative_equals_positive:
        bad = negatives == positives
        while bad.any():
            negatives[bad] = sampler.sample(rng, int(bad.sum()))
            bad = negatives == positives
    return centers, positives, negatives


def collect_triples(corpus, vocab: Vocabulary, cfg: TrainConfig, seed: int,
                    max_triples: int | None = None
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Materialize the training-triple stream (e.g. for held-out hinge checks).

    Uses its own rng seeded with ``seed``, so a different seed yields a
    fresh subsampling/negative draw over the same corpus.
    """
    rng = np.random.default_rng(seed)
    keep = keep_probabilities(vocab, cfg.subsample)
    sampler = NegativeSampler(vocab, cfg.negative_power)
    cs, ps, ns = [], [], []
    total = 0
    for ids in _sentence_id_stream(corpus, vocab):
        out = _sentence_triples(ids, cfg, keep, sampler, rng)
        if out is None:
            continue
        cs.append(out[0])
        ps.append(out[1])
        ns.append(out[2])
        total += len(out[0])
        if max_triples is not None and total >= max_triples:
            break
    if not cs:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    c = np.concatenate(cs)[:max_triples]
    p = np.concatenate(ps)[:max_triples]
    n = np.concatenate(ns)[:max_triples]
    return c, p, n


class _TableUpdater:
    """Applies one accumulated-gradient minibatch to the shared table."""

    def __init__(self, table: EmbeddingTable, cfg: TrainConfig):
        self.table = table
        self.cfg = cfg
        self.acc_in_mean = np.zeros_like(table.input_mean)
        self.acc_in_var = np.zeros_like(table.input_var)
        self.acc_ctx_mean = np.zeros_like(table.context_mean)
        self.acc_ctx_var = np.zeros_like(table.context_var)
        self.triples_seen = 0
        self.active_seen = 0
        self.loss_sum = 0.0

    def _fused(self, cm, cv, om, ov):
        if self.cfg.loss.energy_kind == EL:
            return el_energy_with_grads(cm, cv, om, ov)
        return kl_energy_with_grads(cm, cv, om, ov)

    def apply_batch(self, centers, positives, negatives) -> None:
        t = self.table
        cm, cv = t.input_mean[centers], t.input_var[centers]
        pm, pv = t.context_mean[positives], t.context_var[positives]
        nm, nv = t.context_mean[negatives], t.context_var[negatives]

        e_pos, dmi_p, dmj_p, dci_p, dcj_p = self._fused(cm, cv, pm, pv)
        e_neg, dmi_n, dmj_n, dci_n, dcj_n = self._fused(cm, cv, nm, nv)

        raw = self.cfg.loss.margin - e_pos + e_neg
        if not np.all(np.isfinite(raw)):
            bad = int(np.argmax(~np.isfinite(raw)))
            toks = t.vocab.tokens
            raise RuntimeError(
                "non-finite loss for triple "
                f"(center={toks[centers[bad]]!r}, pos={toks[positives[bad]]!r}, "
                f"neg={toks[negatives[bad]]!r})"
            )
        act = raw > 0
        self.triples_seen += len(raw)
        self.active_seen += int(act.sum())
        self.loss_sum += float(raw[act].sum())
        if not act.any():
            return
        w = act.astype(np.float64)[:, None]

        # descent direction on the hinge: -dE_pos + dE_neg where active
        self._scatter(
            centers, (dmi_n - dmi_p) * w, (dci_n - dci_p) * w,
            t.input_mean, t.input_var, self.acc_in_mean, self.acc_in_var,
        )
        rows = np.concatenate([positives, negatives])
        gm = np.concatenate([-dmj_p * w, dmj_n * w])
        gv = np.concatenate([-dcj_p * w, dcj_n * w])
        self._scatter(rows, gm, gv, t.context_mean, t.context_var,
                      self.acc_ctx_mean, self.acc_ctx_var)

    def _scatter(self, rows, grad_mean, grad_var, mean, var, acc_mean, acc_var):
        uniq, gm, gv = _sum_by_row(rows, grad_mean, grad_var)
        cfg = self.cfg
        new_mean, new_acc_m = adagrad_step_values(
            mean[uniq], gm, acc_mean[uniq], cfg.learning_rate, cfg.adagrad_epsilon
        )
        new_var, new_acc_v = adagrad_step_values(
            var[uniq], gv, acc_var[uniq], cfg.learning_rate, cfg.adagrad_epsilon
        )
        acc_mean[uniq] = new_acc_m
        acc_var[uniq] = new_acc_v
        mean[uniq] = project_mean_rows(new_mean, cfg.constraints)
        var[uniq] = project_covariance_rows(new_var, cfg.constraints)


def _sum_by_row(rows: np.ndarray, *values: np.ndarray):
    """Group-sum value arrays by row id; sorted unique rows come back first."""
    uniq, inv = np.unique(rows, return_inverse=True)
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(uniq)))
    sums = tuple(np.add.reduceat(v[order], bounds, axis=0) for v in values)
    return (uniq, *sums)


def _run_stream(sentence_ids: Iterable[np.ndarray], updater: _TableUpdater,
                cfg: TrainConfig, keep: np.ndarray, sampler: NegativeSampler,
                rng: np.random.Generator) -> int:
    """Feed one sentence stream through the updater; returns sentences seen."""
    seen = 0
    pending: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    pending_sents = 0

    def flush():
        if not pending:
            return
        c = np.concatenate([t[0] for t in pending])
        p = np.concatenate([t[1] for t in pending])
        n = np.concatenate([t[2] for t in pending])
        updater.apply_batch(c, p, n)
        pending.clear()

    for ids in sentence_ids:
        seen += 1
        out = _sentence_triples(ids, cfg, keep, sampler, rng)
        if out is not None:
            pending.append(out)
        pending_sents += 1
        if pending_sents >= cfg.minibatch_sentences:
            flush()
            pending_sents = 0
    flush()
    return seen


def train(corpus, vocab: Vocabulary, cfg: TrainConfig) -> EmbeddingTable:
    """Train Gaussian embeddings on a corpus; returns the table (both sides).

    The energy is log expected likelihood or -KL per the loss config; the
    hinge pushes each observed pair's energy above a sampled negative's by
    the margin.  An empty corpus returns the freshly initialized table with
    a warning.
    """
    rng = np.random.default_rng(cfg.seed)
    table = init_table(vocab, cfg.dim, cfg.kind, rng, cfg.constraints)
    updater = _TableUpdater(table, cfg)
    keep = keep_probabilities(vocab, cfg.subsample)
    sampler = NegativeSampler(vocab, cfg.negative_power)

    total_sentences = 0
    for epoch in range(cfg.epochs):
        if cfg.workers == 1:
            seen = _run_stream(_sentence_id_stream(corpus, vocab), updater,
                               cfg, keep, sampler, rng)
        else:
            seen = _run_threads(corpus, vocab, updater, cfg, keep, sampler)
        total_sentences += seen
        denom = max(updater.triples_seen, 1)
        log.info(
            "epoch %d: %d sentences, %d triples, mean hinge loss %.4f, active %.1f%%",
            epoch, seen, updater.triples_seen, updater.loss_sum / denom,
            100.0 * updater.active_seen / denom,
        )
    if cfg.epochs > 0 and total_sentences == 0:
        warnings.warn("empty corpus: returning the initialized table", RuntimeWarning)
    table.project_all()
    return table


def _run_threads(corpus, vocab, updater, cfg, keep, sampler) -> int:
    """Lock-free threaded pass over contiguous sentence chunks."""
    sentences = list(_sentence_id_stream(corpus, vocab))
    chunks = [sentences[i::cfg.workers] for i in range(cfg.workers)]
    counts = [0] * cfg.workers

    def work(widx: int):
        wrng = np.random.default_rng(cfg.seed ^ widx)
        counts[widx] = _run_stream(chunks[widx], updater, cfg, keep, sampler, wrng)

    threads = [threading.Thread(target=work, args=(w,)) for w in range(cfg.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return sum(counts)


def hinge_energies(table: EmbeddingTable, centers, others, side: str,
                   energy_kind: str) -> np.ndarray:
    """Batched energies between input rows and context rows."""
    cm, cv = table.input_mean[centers], table.input_var[centers]
    if side == "context":
        om, ov = table.context_mean[others], table.context_var[others]
    else:
        om, ov = table.input_mean[others], table.input_var[others]
    if energy_kind == EL:
        return el_energy_arrays(cm, cv, om, ov)
    return -kl_energy_arrays(cm, cv, om, ov)


def hinge_satisfaction(table: EmbeddingTable, triples, loss: MarginLossConfig) -> float:
    """Fraction of triples whose hinge is already satisfied (zero loss)."""
    centers, positives, negatives = triples
    if len(centers) == 0:
        raise ValueError("no triples to evaluate")
    e_pos = hinge_energies(table, centers, positives, "context", loss.energy_kind)
    e_neg = hinge_energies(table, centers, negatives, "context", loss.energy_kind)
    raw = loss.margin - e_pos + e_neg
    return float(np.mean(raw <= 0))


def finalize_empirical_diag(mean_sq_dev: np.ndarray, ridge: float, kind: str,
                            constraints: ConstraintConfig) -> np.ndarray:
    """Ridge, representation restriction, and clamping of a scatter diagonal."""
    diag = np.asarray(mean_sq_dev, dtype=np.float64) + ridge
    if kind == SPHERICAL:
        diag = diag.mean(axis=-1, keepdims=diag.ndim > 1)
        diag = np.atleast_1d(diag)
    return project_covariance_rows(diag, constraints)


def empirical_covariance(mean: np.ndarray, context_vectors: np.ndarray,
                         ridge: float = 1e-2, kind: str = DIAGONAL,
                         constraints: ConstraintConfig | None = None) -> np.ndarray:
    """Scatter of context vectors about a fixed word vector, plus a ridge.

    Averages (c - mean)(c - mean)^T over all supplied context vectors,
    keeps the diagonal (or its mean, for a spherical estimate), adds the
    ridge, and clamps into the constraint box.  At least one context
    vector is required.
    """
    cvecs = np.atleast_2d(np.asarray(context_vectors, dtype=np.float64))
    if cvecs.size == 0:
        raise ValueError("insufficient data: no context vectors supplied")
    if cvecs.shape[1] != mean.shape[0]:
        raise ValueError("context vectors and mean dimension mismatch")
    constraints = constraints or ConstraintConfig()
    dev = cvecs - mean
    return finalize_empirical_diag((dev * dev).mean(axis=0), ridge, kind, constraints)
