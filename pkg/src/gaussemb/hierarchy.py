"""Supervised embedding of tree hierarchies as Gaussians under KL energy.

Nodes and contexts share a single embedding table (separate tables would
let the objective inflate variances without bound).  A positive example is
an (ancestor, descendant) pair scored as -KL(descendant || ancestor), so a
well-trained descendant sits inside its ancestor's ellipsoid; negatives
are uniformly sampled unrelated ordered pairs.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary
from .evaluate import EntailmentRecord, ScoredRecord, average_precision
from .gaussian import DIAGONAL, kl_energy_arrays, kl_energy_with_grads
from .optim import ConstraintConfig, adagrad_step_values, project_covariance_rows, project_mean_rows
from .table import EmbeddingTable, init_table
from .train import _sum_by_row

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TreeSpec:
    """A forest given as named nodes and (parent, child) edges."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        known = set(self.nodes)
        if len(known) != len(self.nodes):
            raise ValueError("duplicate node names")
        seen_child: set[str] = set()
        for parent, child in self.edges:
            if parent not in known or child not in known:
                raise ValueError(f"edge ({parent!r}, {child!r}) uses unknown node")
            if parent == child:
                raise ValueError(f"self-edge on {child!r}")
            if child in seen_child:
                raise ValueError(f"node {child!r} has more than one parent")
            seen_child.add(child)

    @classmethod
    def from_edges(cls, edges) -> "TreeSpec":
        nodes: list[str] = []
        seen = set()
        for parent, child in edges:
            for n in (parent, child):
                if n not in seen:
                    seen.add(n)
                    nodes.append(n)
        return cls(nodes=tuple(nodes), edges=tuple((p, c) for p, c in edges))


def load_tree(path: str | os.PathLike) -> TreeSpec:
    """Edge-list TSV: one ``parent<TAB>child`` per line."""
    edges = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parent, child = line.split("\t")
            edges.append((parent, child))
    return TreeSpec.from_edges(edges)


def ancestor_pairs(tree: TreeSpec) -> set[tuple[str, str]]:
    """Transitive closure of the edge relation, self-pairs excluded.

    Raises on cycles (a node reachable from itself).
    """
    children: dict[str, list[str]] = {n: [] for n in tree.nodes}
    for parent, child in tree.edges:
        children[parent].append(child)
    closure: set[tuple[str, str]] = set()
    for root in tree.nodes:
        stack = list(children[root])
        seen: set[str] = set()
        while stack:
            node = stack.pop()
            if node == root:
                raise ValueError(f"cycle detected through node {root!r}")
            if node in seen:
                continue
            seen.add(node)
            closure.add((root, node))
            stack.extend(children[node])
    return closure


@dataclass(frozen=True)
class HierTrainConfig:
    dim: int = 2
    kind: str = DIAGONAL
    steps: int = 3000
    margin: float = 1.0
    learning_rate: float = 0.1
    adagrad_epsilon: float = 1e-8
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    seed: int = 0
    restarts: int = 5
    check_every: int = 250

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")
        if self.margin <= 0 or self.learning_rate <= 0:
            raise ValueError("margin and learning rate must be positive")


def _node_vocab(tree: TreeSpec) -> Vocabulary:
    return Vocabulary(tokens=sorted(tree.nodes),
                      counts=np.ones(len(tree.nodes), dtype=np.int64), min_count=0)


def _pair_id_arrays(tree: TreeSpec, vocab: Vocabulary):
    """Related (ancestor, descendant) id pairs and the negative pool.

    Negatives are ordered pairs of nodes with no ancestor relation either
    way.  A tree so small that none exist (e.g. two nodes) falls back to
    the reversed related pairs as fillers, flagged by the returned label.
    """
    closure = ancestor_pairs(tree)
    related = np.asarray(
        sorted((vocab.id_of[a], vocab.id_of[x]) for a, x in closure),
        dtype=np.int64,
    ).reshape(-1, 2)
    n = len(vocab)
    comparable = {(vocab.id_of[a], vocab.id_of[x]) for a, x in closure}
    unrelated = [
        (u, v)
        for u in range(n)
        for v in range(n)
        if u != v and (u, v) not in comparable and (v, u) not in comparable
    ]
    if unrelated:
        return related, np.asarray(unrelated, dtype=np.int64).reshape(-1, 2), "unrelated"
    return related, related[:, ::-1].copy(), "reversed"


def _shared_table(vocab: Vocabulary, cfg: HierTrainConfig,
                  rng: np.random.Generator) -> EmbeddingTable:
    table = init_table(vocab, cfg.dim, cfg.kind, rng, cfg.constraints)
    # nodes and contexts are the same embeddings
    table.context_mean = table.input_mean
    table.context_var = table.input_var
    return table


def _related_scores(table: EmbeddingTable, pairs: np.ndarray) -> np.ndarray:
    """-KL(descendant || ancestor) for (ancestor, descendant) id pairs."""
    anc, desc = pairs[:, 0], pairs[:, 1]
    return -kl_energy_arrays(table.input_mean[anc], table.input_var[anc],
                             table.input_mean[desc], table.input_var[desc])


def _train_once(related, unrelated, vocab, cfg, rng) -> tuple[EmbeddingTable, float]:
    table = _shared_table(vocab, cfg, rng)
    mean, var = table.input_mean, table.input_var
    acc_mean = np.zeros_like(mean)
    acc_var = np.zeros_like(var)
    best_ap = 0.0
    for step in range(1, cfg.steps + 1):
        a, x = related[rng.integers(len(related))]
        u, v = unrelated[rng.integers(len(unrelated))]
        e_pos, dm_a, dm_x, dc_a, dc_x = kl_energy_with_grads(
            mean[a], var[a], mean[x], var[x])
        e_neg, dm_u, dm_v, dc_u, dc_v = kl_energy_with_grads(
            mean[u], var[u], mean[v], var[v])
        if cfg.margin - e_pos + e_neg > 0:
            rows = np.array([a, x, u, v])
            gm = np.stack([-dm_a, -dm_x, dm_u, dm_v])
            gv = np.stack([-dc_a, -dc_x, dc_u, dc_v])
            uniq, gm, gv = _sum_by_row(rows, gm, gv)
            new_mean, acc_m = adagrad_step_values(
                mean[uniq], gm, acc_mean[uniq], cfg.learning_rate, cfg.adagrad_epsilon)
            new_var, acc_v = adagrad_step_values(
                var[uniq], gv, acc_var[uniq], cfg.learning_rate, cfg.adagrad_epsilon)
            acc_mean[uniq] = acc_m
            acc_var[uniq] = acc_v
            mean[uniq] = project_mean_rows(new_mean, cfg.constraints)
            var[uniq] = project_covariance_rows(new_var, cfg.constraints)
        if step % cfg.check_every == 0 or step == cfg.steps:
            ap = _ranking_ap(table, related, unrelated)
            best_ap = max(best_ap, ap)
            if ap == 1.0:
                return table, 1.0
    return table, _ranking_ap(table, related, unrelated)


def _ranking_ap(table, related, unrelated) -> float:
    pos = _related_scores(table, related)
    neg = -kl_energy_arrays(
        table.input_mean[unrelated[:, 0]], table.input_var[unrelated[:, 0]],
        table.input_mean[unrelated[:, 1]], table.input_var[unrelated[:, 1]])
    ranking = [ScoredRecord(EntailmentRecord("", "", 1), float(s), True) for s in pos]
    ranking += [ScoredRecord(EntailmentRecord("", "", 0), float(s), True) for s in neg]
    return average_precision(ranking)


def embed_tree(tree: TreeSpec, cfg: HierTrainConfig | None = None) -> EmbeddingTable:
    """Embed a forest's nodes as Gaussians; returns the best of k restarts.

    The objective is highly nonconvex, so each restart reinitializes from a
    derived seed and the table with the best related-vs-negative ranking
    AP wins.  Trees with no comparable node pair cannot be ranked.
    """
    cfg = cfg or HierTrainConfig()
    vocab = _node_vocab(tree)
    related, negatives, _ = _pair_id_arrays(tree, vocab)
    if len(related) == 0:
        raise ValueError("tree has no comparable node pairs: nothing to rank")
    best: tuple[float, EmbeddingTable] | None = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng((cfg.seed, r))
        table, ap = _train_once(related, negatives, vocab, cfg, rng)
        log.info("restart %d: ranking AP %.4f", r, ap)
        if best is None or ap > best[0]:
            best = (ap, table)
        if ap == 1.0:
            break
    return best[1]


@dataclass(frozen=True)
class ContainmentReport:
    rows: tuple[tuple[str, str, str, float], ...]
    ap: float

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("node_a\tnode_b\trelation\tscore\n")
            for a, b, rel, score in self.rows:
                f.write(f"{a}\t{b}\t{rel}\t{score!r}\n")
            f.write(f"# average_precision {self.ap!r}\n")


def containment_report(table: EmbeddingTable, tree: TreeSpec, seed: int = 0,
                       max_unrelated: int = 10000) -> ContainmentReport:
    """Score every related pair and a set of unrelated pairs, with AP.

    Unrelated ordered pairs are enumerated exhaustively when there are at
    most ``max_unrelated`` of them, otherwise sampled (seeded).
    """
    vocab = _node_vocab(tree)
    related, negatives, neg_label = _pair_id_arrays(tree, vocab)
    if len(related) == 0:
        raise ValueError("tree has no related pairs to report on")
    if len(negatives) > max_unrelated:
        rng = np.random.default_rng(seed)
        negatives = negatives[rng.choice(len(negatives), max_unrelated, replace=False)]

    pos_scores = _related_scores(table, related)
    neg_scores = -kl_energy_arrays(
        table.input_mean[negatives[:, 0]], table.input_var[negatives[:, 0]],
        table.input_mean[negatives[:, 1]], table.input_var[negatives[:, 1]])
    rows = []
    ranking = []
    for (a, x), s in zip(related, pos_scores):
        rows.append((vocab.tokens[int(a)], vocab.tokens[int(x)], "related", float(s)))
        ranking.append(ScoredRecord(EntailmentRecord("", "", 1), float(s), True))
    for (u, v), s in zip(negatives, neg_scores):
        rows.append((vocab.tokens[int(u)], vocab.tokens[int(v)], neg_label, float(s)))
        ranking.append(ScoredRecord(EntailmentRecord("", "", 0), float(s), True))
    return ContainmentReport(rows=tuple(rows), ap=average_precision(ranking))
