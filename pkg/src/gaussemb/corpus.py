"""Streaming corpus ingestion: vocabulary, subsampling, windows, negatives.

Input corpora are UTF-8 plain text, one sentence per line, tokens separated
by whitespace (pre-tokenized and lowercased; no linguistics happens here).
The output unit is the training triple (center, positive context, negative
context), all integer ids into a fixed vocabulary.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np


@dataclass
class Vocabulary:
    """Dense word-type ids assigned in descending count order.

    ``total_tokens`` counts retained tokens only; subsampling frequencies
    are relative to that mass.
    """

    tokens: list[str]
    counts: np.ndarray
    min_count: int
    id_of: dict[str, int] = field(init=False, repr=False)
    total_tokens: int = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.id_of = {t: i for i, t in enumerate(self.tokens)}
        self.total_tokens = int(self.counts.sum())
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts length mismatch")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def frequency(self, word_id: int) -> float:
        if self.total_tokens == 0:
            return 0.0
        return float(self.counts[word_id]) / self.total_tokens

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Map tokens to ids, silently dropping out-of-vocabulary ones."""
        get = self.id_of.get
        ids = [i for i in map(get, tokens) if i is not None]
        return np.asarray(ids, dtype=np.int64)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for token, count in zip(self.tokens, self.counts):
                f.write(f"{token}\t{int(count)}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Vocabulary":
        tokens: list[str] = []
        counts: list[int] = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, count = line.split("\t")
                tokens.append(token)
                counts.append(int(count))
        return cls(tokens=tokens, counts=np.asarray(counts, dtype=np.int64), min_count=0)


@dataclass(frozen=True)
class SubsampleConfig:
    threshold: float = 1e-5
    enabled: bool = True

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class WindowConfig:
    window: int = 5
    dynamic_shrink: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass(frozen=True)
class TrainingTriple:
    center: int
    positive_ctx: int
    negative_ctx: int


def iter_sentences(path: str | os.PathLike) -> Iterator[list[str]]:
    """Yield token lists, one per nonempty corpus line."""
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens = line.split()
            if tokens:
                yield tokens


def corpus_token_stream(path: str | os.PathLike) -> Iterator[str]:
    for sentence in iter_sentences(path):
        yield from sentence


def build_vocab(tokens: Iterable[str], min_count: int) -> Vocabulary:
    """Count types in one pass and keep those with count >= min_count.

    Ids are assigned in descending count order, ties broken lexically.
    """
    counts = Counter(tokens)
    kept = sorted(
        ((t, c) for t, c in counts.items() if c >= min_count),
        key=lambda tc: (-tc[1], tc[0]),
    )
    return Vocabulary(
        tokens=[t for t, _ in kept],
        counts=np.asarray([c for _, c in kept], dtype=np.int64),
        min_count=min_count,
    )


def keep_probabilities(vocab: Vocabulary, cfg: SubsampleConfig) -> np.ndarray:
    """Per-id probability of keeping a token: min(1, sqrt(t / f))."""
    if not cfg.enabled or len(vocab) == 0:
        return np.ones(len(vocab))
    freqs = vocab.counts / max(vocab.total_tokens, 1)
    with np.errstate(divide="ignore"):
        keep = np.sqrt(cfg.threshold / freqs)
    return np.minimum(keep, 1.0)


def subsample_keep(word_id: int, vocab: Vocabulary, cfg: SubsampleConfig,
                   rng: np.random.Generator) -> bool:
    """Decide whether to keep one token occurrence.

    A token of corpus frequency f is discarded with probability
    max(0, 1 - sqrt(t/f)); words at or below the threshold always survive.
    """
    if not cfg.enabled:
        return True
    f = vocab.frequency(word_id)
    if f <= cfg.threshold:
        return True
    return rng.random() < float(np.sqrt(cfg.threshold / f))


def window_pair_indices(n: int, cfg: WindowConfig,
                        rng: np.random.Generator | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Position pairs (i, j), j != i, |i - j| <= w_i, in position-major order.

    w_i is the configured window, or uniform in 1..window per position when
    dynamic shrinking is on (requires an rng).
    """
    if n < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    pos = np.arange(n, dtype=np.int64)
    if cfg.dynamic_shrink:
        if rng is None:
            raise ValueError("dynamic_shrink needs an rng")
        w = rng.integers(1, cfg.window + 1, size=n)
    else:
        w = np.full(n, cfg.window, dtype=np.int64)
    starts = np.maximum(0, pos - w)
    ends = np.minimum(n - 1, pos + w)
    lens = ends - starts  # window span minus the center itself
    total = int(lens.sum())
    i_idx = np.repeat(pos, lens)
    cum = np.concatenate(([0], np.cumsum(lens)))
    r = np.arange(total, dtype=np.int64) - np.repeat(cum[:-1], lens)
    j_idx = starts[i_idx] + r
    j_idx += j_idx >= i_idx
    return i_idx, j_idx


def extract_pairs(sentence: np.ndarray | list[int], cfg: WindowConfig,
                  rng: np.random.Generator | None = None
                  ) -> list[tuple[int, int]]:
    """(center, context) id pairs for one already-subsampled sentence."""
    ids = np.asarray(sentence, dtype=np.int64)
    i_idx, j_idx = window_pair_indices(len(ids), cfg, rng)
    return list(zip(ids[i_idx].tolist(), ids[j_idx].tolist()))


class NegativeSampler:
    """Draws negative context ids from unigram^power via a cumulative table."""

    def __init__(self, vocab: Vocabulary, power: float = 0.75):
        if len(vocab) == 0:
            raise ValueError("cannot sample from an empty vocabulary")
        weights = vocab.counts.astype(np.float64) ** power
        cum = np.cumsum(weights)
        cum /= cum[-1]
        cum[-1] = 1.0  # guard against accumulated rounding
        self._cum = cum
        self.power = power

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        idx = np.searchsorted(self._cum, u, side="right")
        if size is None:
            return int(idx)
        return idx.astype(np.int64)


def sample_negative(vocab: Vocabulary, rng: np.random.Generator,
                    power: float = 0.75) -> int:
    """One negative id; convenience wrapper over NegativeSampler."""
    return NegativeSampler(vocab, power=power).sample(rng)
