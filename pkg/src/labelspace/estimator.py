"""scikit-learn interface over the functional training and ranking code."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state

from .dataset import Dataset, Instance
from .embeddings import LabelEmbeddingTable
from .evaluation import metrics_from_sets, rank_batch
from .model import ModelConfig, forward_batch
from .training import AdamConfig, LossConfig, train

logger = logging.getLogger(__name__)


def _as_table(label_embeddings) -> LabelEmbeddingTable:
    if isinstance(label_embeddings, LabelEmbeddingTable):
        return label_embeddings
    vectors = check_array(label_embeddings, dtype=np.float64)
    width = len(str(vectors.shape[0] - 1))
    return LabelEmbeddingTable(tuple(f"label{i:0{width}d}" for i in range(len(vectors))),
                               vectors)


class LabelSpaceClassifier(TransformerMixin, BaseEstimator):
    """Multilabel classifier that learns a feature-conditioned label transform.

    ``fit`` takes features ``X`` of shape ``(n, f)`` and a binary indicator
    matrix ``Y`` of shape ``(n, n_labels)``.  Each sample is mapped to a
    ``k x d`` matrix ``A``; labels with small ``||A w||`` are predicted.

    Parameters
    ----------
    label_embeddings : array of shape (n_labels, d) or LabelEmbeddingTable
        Word vectors of the labels, used as given.
    k : int
        Rows of the transformation matrix.
    hidden_dims : tuple of int
        Widths of rectified hidden layers before the linear head.
    top_k : int
        Labels returned per sample by ``predict``.

    Attributes
    ----------
    params_ : ModelParams
    train_report_ : TrainReport
    classes_ : ndarray of label names
    """

    def __init__(self, label_embeddings=None, k=8, hidden_dims=(), margin=1.0,
                 n_negatives=40, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                 epsilon=1e-8, decay=1.0, epochs=30, init_scale=0.1, top_k=3,
                 random_state=0):
        self.label_embeddings = label_embeddings
        self.k = k
        self.hidden_dims = hidden_dims
        self.margin = margin
        self.n_negatives = n_negatives
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.decay = decay
        self.epochs = epochs
        self.init_scale = init_scale
        self.top_k = top_k
        self.random_state = random_state

    def _seed(self) -> int:
        if self.random_state is None or isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state or 0)
        return int(check_random_state(self.random_state).randint(2 ** 31 - 1))

    def fit(self, X, Y):
        if self.label_embeddings is None:
            raise ValueError("label_embeddings is required")
        table = _as_table(self.label_embeddings)
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, ensure_2d=True)
        if Y.shape != (X.shape[0], len(table)):
            raise ValueError(f"Y must have shape ({X.shape[0]}, {len(table)}), "
                             f"got {Y.shape}")
        Y = Y.astype(bool)
        counts = Y.sum(axis=1)
        keep = (counts > 0) & (counts < len(table))
        self.n_skipped_ = int((~keep).sum())
        if self.n_skipped_:
            logger.warning("ignoring %d samples with no negatives or no positives",
                           self.n_skipped_)
        if not keep.any():
            raise ValueError("no sample has both positive and negative labels")
        dataset = Dataset(
            tuple(Instance(str(i), X[i], frozenset(np.flatnonzero(Y[i]).tolist()))
                  for i in np.flatnonzero(keep)),
            X.shape[1], len(table))
        config = ModelConfig(X.shape[1], tuple(self.hidden_dims), self.k, table.dim,
                             self.init_scale)
        self.params_, self.train_report_ = train(
            dataset, table, config,
            LossConfig(self.margin, self.n_negatives),
            AdamConfig(self.learning_rate, self.beta1, self.beta2, self.epsilon, self.decay),
            self.epochs, self._seed())
        self.table_ = table
        self.classes_ = np.array(table.labels)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_X(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def transform(self, X):
        """Flattened row-major ``A`` per sample, shape ``(n, k * d)``."""
        X = self._check_X(X)
        return forward_batch(self.params_, X).reshape(X.shape[0], -1)

    def distances(self, X):
        """``||A w||`` for every sample and label, shape ``(n, n_labels)``."""
        X = self._check_X(X)
        A = forward_batch(self.params_, X)
        proj = np.einsum("nkd,vd->nvk", A, self.table_.vectors)
        return np.sqrt(np.sum(proj * proj, axis=2))

    def decision_function(self, X):
        return -self.distances(X)

    def predict_ranking(self, X):
        X = self._check_X(X)
        return rank_batch(self.params_, X, self.table_)

    def predict(self, X):
        rankings = self.predict_ranking(X)
        out = np.zeros((len(rankings), len(self.table_)), dtype=np.int64)
        for row, ranking in enumerate(rankings):
            out[row, ranking.top(self.top_k)] = 1
        return out

    def score(self, X, Y, sample_weight=None):
        """Overall F1 of the top-``top_k`` predictions."""
        Y = check_array(Y).astype(bool)
        predicted = [set(np.flatnonzero(row).tolist()) for row in self.predict(X)]
        truth = [set(np.flatnonzero(row).tolist()) for row in Y]
        return metrics_from_sets(predicted, truth, len(self.table_)).o_f1
