"""Reading the rows of ``A`` as a committee of label rankers, and the k sweep.

Row ``r`` scores label ``w`` by ``(a_r . w)^2``, its additive share of
``||A w||^2``, so the full ranking is the sum of the row scores.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .dataset import Dataset
from .embeddings import LabelEmbeddingTable
from .evaluation import MetricsReport, PredictionRanking, evaluate, metrics_from_sets
from .model import ModelConfig, ModelParams, forward_batch
from .training import AdamConfig, LossConfig, train


def row_scores(A, table: LabelEmbeddingTable) -> np.ndarray:
    """``(|V|, k)`` squared projections of every label on every row of ``A``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != table.dim:
        raise ValueError(f"A{A.shape} does not match embedding dim {table.dim}")
    proj = table.vectors @ A.T
    return proj * proj


def _row_orders(scores: np.ndarray) -> np.ndarray:
    # (k, |V|): label indices per row, best first, ties by index
    return np.argsort(scores.T, axis=1, kind="stable")


def row_classifier_ranking(A, table: LabelEmbeddingTable, row: int) -> PredictionRanking:
    A = np.asarray(A, dtype=np.float64)
    if not 0 <= row < A.shape[0]:
        raise IndexError(f"row {row} out of range for k={A.shape[0]}")
    scores = row_scores(A, table)[:, row]
    order = np.argsort(scores, kind="stable")
    return PredictionRanking(order, scores[order])


def _vote_order(scores: np.ndarray, n_top: int) -> np.ndarray:
    n_labels, k = scores.shape
    orders = _row_orders(scores)
    ranks = np.empty_like(orders)
    rows = np.arange(k)[:, None]
    ranks[rows, orders] = np.arange(n_labels)[None, :]
    votes = np.zeros(n_labels, dtype=np.int64)
    np.add.at(votes, orders[:, :n_top].ravel(), 1)
    mean_rank = ranks.mean(axis=0)
    return np.lexsort((np.arange(n_labels), mean_rank, -votes)), votes


def committee_vote(A, table: LabelEmbeddingTable, n_top: int, k_pred: int) -> set[int]:
    """Each row votes for its ``n_top`` best labels; the ``k_pred`` most-voted win.

    Equal vote counts are broken by the lower mean rank across rows, then by
    label index.
    """
    n_labels = len(table)
    if not 1 <= n_top <= n_labels:
        raise ValueError(f"n_top must be in [1, {n_labels}]")
    if not 1 <= k_pred <= n_labels:
        raise ValueError(f"k_pred must be in [1, {n_labels}]")
    order, _ = _vote_order(row_scores(A, table), n_top)
    return set(order[:k_pred].tolist())


def jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def committee_jaccard(A, table: LabelEmbeddingTable, top_n: int):
    """Mean and per-pair Jaccard overlap of the rows' top-``top_n`` label sets."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] < 2:
        raise ValueError("need k >= 2 rows for pairwise overlap")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    orders = _row_orders(row_scores(A, table))
    tops = [set(o[:top_n].tolist()) for o in orders]
    pairs = [jaccard(tops[i], tops[j]) for i, j in combinations(range(len(tops)), 2)]
    return float(np.mean(pairs)), pairs


@dataclass
class CommitteeResult:
    row_tops: list[set[int]]
    votes: np.ndarray
    prediction: set[int]
    mean_jaccard: float | None


def committee(A, table: LabelEmbeddingTable, n_top: int, k_pred: int,
              jaccard_n: int | None = None) -> CommitteeResult:
    scores = row_scores(A, table)
    orders = _row_orders(scores)
    order, votes = _vote_order(scores, n_top)
    mean_j = None
    if jaccard_n is not None and scores.shape[1] >= 2:
        mean_j = committee_jaccard(A, table, jaccard_n)[0]
    return CommitteeResult([set(o[:n_top].tolist()) for o in orders], votes,
                           set(order[:k_pred].tolist()), mean_j)


def committee_evaluate(params: ModelParams, test: Dataset, table: LabelEmbeddingTable,
                       n_top: int, k_pred: int, threads: int = 1) -> MetricsReport:
    """Metric suite for voting predictions over the test set."""
    As = forward_batch(params, test.features_matrix())
    vote = lambda A: committee_vote(A, table, n_top, k_pred)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            predicted = list(pool.map(vote, As))
    else:
        predicted = [vote(A) for A in As]
    report = metrics_from_sets(predicted, [inst.positives for inst in test], len(table))
    report.k_pred = k_pred
    return report


def jaccard_per_image(params: ModelParams, test: Dataset, table: LabelEmbeddingTable,
                      top_n: int) -> np.ndarray:
    As = forward_batch(params, test.features_matrix())
    return np.array([committee_jaccard(A, table, top_n)[0] for A in As])


def jaccard_histogram(values, bins: int = 20):
    """Counts over ``bins`` equal-width bins of [0, 1]; returns ``(centers, counts)``."""
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64),
                                 bins=bins, range=(0.0, 1.0))
    return (edges[:-1] + edges[1:]) / 2, counts


def format_histogram(centers, counts) -> str:
    return "".join(f"{c:.3f} {n}\n" for c, n in zip(centers, counts))


@dataclass
class SweepRow:
    k: int
    metrics: MetricsReport
    final_loss: float


def sweep_k(train_set: Dataset, test_set: Dataset, table: LabelEmbeddingTable,
            k_values, model_config: ModelConfig, loss_config: LossConfig = LossConfig(),
            opt_config: AdamConfig = AdamConfig(), epochs: int = 20, seed: int = 0,
            k_pred: int = 3, threads: int = 1) -> list[SweepRow]:
    """Train one model per ``k`` with otherwise identical settings and seed."""
    k_values = list(k_values)
    if not k_values:
        raise ValueError("k_values must not be empty")

    def run(k):
        cfg = replace(model_config, k=int(k))
        params, report = train(train_set, table, cfg, loss_config, opt_config, epochs, seed)
        metrics = evaluate(params, test_set, table, k_pred)
        final = report.losses[-1] if report.losses else float("nan")
        return SweepRow(int(k), metrics, final)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, k_values))
    return [run(k) for k in k_values]


def sweep_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "C-P", "C-R", "C-F1", "O-P", "O-R", "O-F1", "final_loss"])
    for row in rows:
        m = row.metrics
        writer.writerow([row.k] + [repr(v) for v in (
            m.c_precision, m.c_recall, m.c_f1, m.o_precision, m.o_recall, m.o_f1,
            row.final_loss)])
    return buf.getvalue()
