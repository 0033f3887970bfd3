"""Vocabulary-indexed store of input and context Gaussians, plus file IO.

Model file format (UTF-8 text):

    GAUSSEMB 1 <V> <d> <spherical|diagonal> <C> <m> <M>
    #INPUT
    token mean_1..mean_d cov_1..cov_k     (V lines, id order)
    #CONTEXT
    token mean_1..mean_d cov_1..cov_k     (V lines, id order)

Floats are written with Python's shortest round-trip repr, so a
read -> write -> read cycle is bitwise stable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .gaussian import COV_KINDS, DIAGONAL, SPHERICAL, Gaussian
from .optim import ConstraintConfig, project_covariance_rows, project_mean_rows

MAGIC = "GAUSSEMB"
FORMAT_VERSION = 1


@dataclass
class EmbeddingTable:
    """Separate input-side and context-side Gaussians over one vocabulary.

    Mean arrays are (V, d); variance arrays are (V, 1) for spherical and
    (V, d) for diagonal covariances.  The constraint box is carried along
    so that serialized models are self-describing.
    """

    vocab: Vocabulary
    kind: str
    input_mean: np.ndarray
    input_var: np.ndarray
    context_mean: np.ndarray
    context_var: np.ndarray
    constraints: ConstraintConfig

    def __post_init__(self):
        if self.kind not in COV_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        v, d = self.input_mean.shape
        k = 1 if self.kind == SPHERICAL else d
        for name in ("input_mean", "input_var", "context_mean", "context_var"):
            arr = getattr(self, name)
            want = (v, d) if name.endswith("mean") else (v, k)
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
        if v != len(self.vocab):
            raise ValueError("table size does not match vocabulary")

    @property
    def dim(self) -> int:
        return self.input_mean.shape[1]

    @property
    def size(self) -> int:
        return self.input_mean.shape[0]

    def _resolve(self, word: int | str) -> int:
        if isinstance(word, str):
            if word not in self.vocab:
                raise KeyError(f"out-of-vocabulary word: {word!r}")
            return self.vocab.id_of[word]
        return int(word)

    def gaussian(self, word: int | str, side: str = "input") -> Gaussian:
        i = self._resolve(word)
        if side == "input":
            return Gaussian(self.input_mean[i], self.input_var[i], self.kind)
        if side == "context":
            return Gaussian(self.context_mean[i], self.context_var[i], self.kind)
        raise ValueError(f"unknown side {side!r}")

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def project_all(self) -> None:
        """Clamp every row into the constraint sets, in place."""
        project_mean_rows(self.input_mean, self.constraints)
        project_mean_rows(self.context_mean, self.constraints)
        project_covariance_rows(self.input_var, self.constraints)
        project_covariance_rows(self.context_var, self.constraints)

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(
            vocab=self.vocab,
            kind=self.kind,
            input_mean=self.input_mean.copy(),
            input_var=self.input_var.copy(),
            context_mean=self.context_mean.copy(),
            context_var=self.context_var.copy(),
            constraints=self.constraints,
        )


def init_table(vocab: Vocabulary, d: int, kind: str, rng: np.random.Generator,
               constraints: ConstraintConfig | None = None) -> EmbeddingTable:
    """Fresh table: means uniform in [-0.5/d, 0.5/d], variances 1 (clamped).

    Input means are drawn before context means, so a fixed seed fixes the
    whole table.
    """
    if len(vocab) == 0:
        raise ValueError("cannot initialize a table over an empty vocabulary")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    constraints = constraints or ConstraintConfig()
    v = len(vocab)
    k = 1 if kind == SPHERICAL else d
    bound = 0.5 / d
    input_mean = rng.uniform(-bound, bound, size=(v, d))
    context_mean = rng.uniform(-bound, bound, size=(v, d))
    var0 = float(np.clip(1.0, constraints.cov_floor, constraints.cov_ceiling))
    table = EmbeddingTable(
        vocab=vocab,
        kind=kind,
        input_mean=input_mean,
        input_var=np.full((v, k), var0),
        context_mean=context_mean,
        context_var=np.full((v, k), var0),
        constraints=constraints,
    )
    return table


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_section(f, marker: str, vocab: Vocabulary,
                   means: np.ndarray, varis: np.ndarray) -> None:
    f.write(marker + "\n")
    for i, token in enumerate(vocab.tokens):
        nums = " ".join(map(_fmt, means[i])) + " " + " ".join(map(_fmt, varis[i]))
        f.write(f"{token} {nums}\n")


def save_model(table: EmbeddingTable, path: str | os.PathLike) -> None:
    c = table.constraints
    header = (
        f"{MAGIC} {FORMAT_VERSION} {table.size} {table.dim} {table.kind} "
        f"{_fmt(c.mean_cap)} {_fmt(c.cov_floor)} {_fmt(c.cov_ceiling)}"
    )
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        _write_section(f, "#INPUT", table.vocab, table.input_mean, table.input_var)
        _write_section(f, "#CONTEXT", table.vocab, table.context_mean, table.context_var)


def _read_section(lines: list[str], start: int, marker: str, v: int, d: int,
                  k: int) -> tuple[list[str], np.ndarray, np.ndarray, int]:
    if start >= len(lines) or lines[start].strip() != marker:
        raise ValueError(f"model file: expected section marker {marker}")
    tokens: list[str] = []
    means = np.empty((v, d))
    varis = np.empty((v, k))
    for row in range(v):
        parts = lines[start + 1 + row].split()
        if len(parts) != 1 + d + k:
            raise ValueError(f"model file: bad row under {marker}: expected "
                             f"{1 + d + k} fields, got {len(parts)}")
        tokens.append(parts[0])
        means[row] = [float(x) for x in parts[1:1 + d]]
        varis[row] = [float(x) for x in parts[1 + d:]]
    return tokens, means, varis, start + 1 + v


def load_model(path: str | os.PathLike) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ValueError("model file is empty")
    head = lines[0].split()
    if len(head) != 8 or head[0] != MAGIC:
        raise ValueError("model file: bad header")
    if int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"model file: unsupported version {head[1]}")
    v, d, kind = int(head[2]), int(head[3]), head[4]
    if kind not in COV_KINDS:
        raise ValueError(f"model file: unknown covariance kind {kind!r}")
    constraints = ConstraintConfig(
        mean_cap=float(head[5]), cov_floor=float(head[6]), cov_ceiling=float(head[7])
    )
    k = 1 if kind == SPHERICAL else d
    tokens_in, in_mean, in_var, nxt = _read_section(lines, 1, "#INPUT", v, d, k)
    tokens_ctx, ctx_mean, ctx_var, _ = _read_section(lines, nxt, "#CONTEXT", v, d, k)
    if tokens_in != tokens_ctx:
        raise ValueError("model file: input and context vocabularies differ")
    vocab = Vocabulary(tokens=tokens_in, counts=np.ones(v, dtype=np.int64), min_count=0)
    return EmbeddingTable(
        vocab=vocab,
        kind=kind,
        input_mean=in_mean,
        input_var=in_var,
        context_mean=ctx_mean,
        context_var=ctx_var,
        constraints=constraints,
    )
