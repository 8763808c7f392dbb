"""Feature-conditioned label-space transformation for multilabel classification."""

__version__ = "0.1.0"

from .embeddings import (LabelEmbeddingTable, load_embeddings, lookup,
                         random_embeddings, save_embeddings)
from .dataset import (Dataset, Instance, SyntheticSpec, generate_synthetic, load_dataset,
                      sample_negatives, save_dataset, split)
from .model import (ModelConfig, ModelParams, forward_transform, init_params,
                    label_distance, load_checkpoint, save_checkpoint, transform_label)
from .training import (AdamConfig, AdamState, LossConfig, TrainReport, adam_step,
                       backprop, finite_diff_check, hinge_rank_loss,
                       loss_gradient_wrt_A, train)
from .evaluation import (MetricsReport, PredictionRanking, evaluate, f1_score,
                         predict_topk, rank_labels)
from .analysis import (committee_jaccard, committee_vote, row_classifier_ranking,
                       sweep_k)
from .estimator import LabelSpaceClassifier

__all__ = [
    "LabelEmbeddingTable", "load_embeddings", "lookup", "random_embeddings",
    "save_embeddings", "Dataset", "Instance", "SyntheticSpec", "generate_synthetic",
    "load_dataset", "sample_negatives", "save_dataset", "split", "ModelConfig",
    "ModelParams", "forward_transform", "init_params", "label_distance",
    "load_checkpoint", "save_checkpoint", "transform_label", "AdamConfig", "AdamState",
    "LossConfig", "TrainReport", "adam_step", "backprop", "finite_diff_check",
    "hinge_rank_loss", "loss_gradient_wrt_A", "train", "MetricsReport",
    "PredictionRanking", "evaluate", "f1_score", "predict_topk", "rank_labels",
    "committee_jaccard", "committee_vote", "row_classifier_ranking", "sweep_k",
    "LabelSpaceClassifier",
]
