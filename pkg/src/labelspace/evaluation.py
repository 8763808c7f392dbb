"""Label ranking by transformed distance and the C-P/C-R/O-P/O-R metric suite."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset
from .embeddings import LabelEmbeddingTable, format_float
from .model import ModelParams, forward_batch, forward_transform


@dataclass(frozen=True, eq=False)
class PredictionRanking:
    """All labels, nearest-to-origin first; ties go to the lower index."""

    indices: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return zip(self.indices.tolist(), self.distances.tolist())

    def top(self, k_pred: int) -> list[int]:
        return self.indices[:k_pred].tolist()


def ranking_from_scores(scores) -> PredictionRanking:
    """Rank ascending by ``scores`` (squared distances); report their roots."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    return PredictionRanking(order, np.sqrt(scores[order]))


def rank_from_matrix(A, table: LabelEmbeddingTable) -> PredictionRanking:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != table.dim:
        raise ValueError(f"A{A.shape} does not match embedding dim {table.dim}")
    proj = table.vectors @ A.T
    return ranking_from_scores(np.sum(proj * proj, axis=1))


def rank_labels(params: ModelParams, features, table: LabelEmbeddingTable) -> PredictionRanking:
    """Rank every label by ``||A w||`` for the matrix ``A`` predicted from ``features``."""
    if params.config.d != table.dim:
        raise ValueError(f"model d={params.config.d} but embeddings have dim {table.dim}")
    return rank_from_matrix(forward_transform(params, features), table)


def rank_batch(params: ModelParams, X, table: LabelEmbeddingTable,
               threads: int = 1) -> list[PredictionRanking]:
    """Rankings for every row of ``X``; ``threads > 1`` maps rows concurrently."""
    if params.config.d != table.dim:
        raise ValueError(f"model d={params.config.d} but embeddings have dim {table.dim}")
    As = forward_batch(params, X)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda A: rank_from_matrix(A, table), As))
    return [rank_from_matrix(A, table) for A in As]


def predict_topk(ranking: PredictionRanking, k_pred: int) -> set[int]:
    if not 1 <= k_pred <= len(ranking):
        raise ValueError(f"k_pred must be in [1, {len(ranking)}], got {k_pred}")
    return set(ranking.top(k_pred))


# -- metrics -----------------------------------------------------------------

def f1_score(precision, recall):
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0 * precision
    return 2 * precision * recall / (precision + recall)


@dataclass
class ClassStats:
    index: int
    n_predicted: int
    n_true: int
    n_correct: int

    @property
    def precision(self) -> float | None:
        return self.n_correct / self.n_predicted if self.n_predicted else None

    @property
    def recall(self) -> float | None:
        return self.n_correct / self.n_true if self.n_true else None


@dataclass
class MetricsReport:
    c_precision: float
    c_recall: float
    o_precision: float
    o_recall: float
    c_f1: float
    o_f1: float
    per_class: list[ClassStats] = field(default_factory=list)
    n_images: int = 0
    k_pred: int | None = None

    def summary(self) -> dict[str, float]:
        return {"C-P": self.c_precision, "C-R": self.c_recall, "C-F1": self.c_f1,
                "O-P": self.o_precision, "O-R": self.o_recall, "O-F1": self.o_f1}

    @property
    def classes_in_precision(self) -> int:
        return sum(1 for c in self.per_class if c.n_predicted)

    @property
    def classes_in_recall(self) -> int:
        return sum(1 for c in self.per_class if c.n_true)

    def to_csv(self, labels: Sequence[str] | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "n_predicted", "n_true", "n_correct",
                         "precision", "recall"])
        for c in self.per_class:
            name = labels[c.index] if labels is not None else str(c.index)
            writer.writerow([name, c.n_predicted, c.n_true, c.n_correct,
                             "" if c.precision is None else repr(c.precision),
                             "" if c.recall is None else repr(c.recall)])
        s = self.summary()
        writer.writerow(["# summary", "C-P", "C-R", "C-F1", "O-P", "O-R", "O-F1"])
        writer.writerow(["summary"] + [repr(s[key]) for key in
                                       ("C-P", "C-R", "C-F1", "O-P", "O-R", "O-F1")])
        return buf.getvalue()

    def format_table(self) -> str:
        s = self.summary()
        head = "  ".join(f"{key:>7}" for key in s)
        vals = "  ".join(f"{100 * v:6.2f}%" for v in s.values())
        return (f"{head}\n{vals}\n"
                f"images={self.n_images} k_pred={self.k_pred} "
                f"classes(C-P)={self.classes_in_precision} "
                f"classes(C-R)={self.classes_in_recall}")


def metrics_from_sets(predicted: Sequence[Iterable[int]], truth: Sequence[Iterable[int]],
                      n_classes: int) -> MetricsReport:
    """Metric suite for per-image predicted and true label sets.

    Classes never predicted drop out of the C-P mean and classes never true
    drop out of the C-R mean.  Means are formed in exact rational
    arithmetic and rounded once, so the result does not depend on the order
    in which images or classes are combined.
    """
    if len(predicted) != len(truth):
        raise ValueError("predicted and truth lengths differ")
    if not predicted:
        raise ValueError("no images to evaluate")
    n_pred = np.zeros(n_classes, dtype=np.int64)
    n_true = np.zeros(n_classes, dtype=np.int64)
    n_corr = np.zeros(n_classes, dtype=np.int64)
    for pred, true in zip(predicted, truth):
        pred, true = set(pred), set(true)
        for c in pred:
            n_pred[c] += 1
        for c in true:
            n_true[c] += 1
        for c in pred & true:
            n_corr[c] += 1

    per_class = [ClassStats(c, int(n_pred[c]), int(n_true[c]), int(n_corr[c]))
                 for c in range(n_classes)]
    total_correct = int(n_corr.sum())
    op = Fraction(total_correct, int(n_pred.sum())) if n_pred.sum() else Fraction(0)
    orr = Fraction(total_correct, int(n_true.sum())) if n_true.sum() else Fraction(0)
    precisions = [Fraction(c.n_correct, c.n_predicted) for c in per_class if c.n_predicted]
    recalls = [Fraction(c.n_correct, c.n_true) for c in per_class if c.n_true]
    cp = sum(precisions, Fraction(0)) / len(precisions) if precisions else Fraction(0)
    cr = sum(recalls, Fraction(0)) / len(recalls) if recalls else Fraction(0)
    return MetricsReport(float(cp), float(cr), float(op), float(orr),
                         float(f1_score(cp, cr)), float(f1_score(op, orr)),
                         per_class, len(predicted))


def evaluate(params: ModelParams, test: Dataset, table: LabelEmbeddingTable,
             k_pred: int, threads: int = 1) -> MetricsReport:
    """Top-``k_pred`` predictions for every test image, scored against its positives."""
    if len(test) == 0:
        raise ValueError("empty test set")
    rankings = rank_batch(params, test.features_matrix(), table, threads)
    predicted = [predict_topk(r, k_pred) for r in rankings]
    report = metrics_from_sets(predicted, [inst.positives for inst in test], len(table))
    report.k_pred = k_pred
    return report


# -- prediction dump ---------------------------------------------------------

def format_predictions(ids: Sequence[str], rankings: Sequence[PredictionRanking],
                       k_pred: int, table: LabelEmbeddingTable) -> str:
    """``id | label1 ... | dist1 ...`` lines for the top ``k_pred`` of each ranking."""
    lines = []
    for inst_id, ranking in zip(ids, rankings):
        if not 1 <= k_pred <= len(ranking):
            raise ValueError(f"k_pred must be in [1, {len(ranking)}]")
        names = " ".join(table.labels[i] for i in ranking.indices[:k_pred])
        dists = " ".join(format_float(v) for v in ranking.distances[:k_pred])
        lines.append(f"{inst_id} | {names} | {dists}")
    return "\n".join(lines) + "\n"


def parse_predictions(text: str) -> list[tuple[str, list[str], list[float]]]:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        inst_id, names, dists = (part.strip() for part in line.split("|"))
        out.append((inst_id, names.split(), [float(v) for v in dists.split()]))
    return out
