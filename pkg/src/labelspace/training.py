"""Hinge rank loss, its gradients, Adam, and the per-instance training loop."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ._random import stream
from .dataset import Dataset, sample_negatives
from .embeddings import LabelEmbeddingTable
from .exceptions import DataFormatError
from .model import ModelConfig, ModelParams, forward_cache, init_params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    margin: float = 1.0
    negatives_per_instance: int = 40
    epsilon_norm: float = 1e-8

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be > 0")
        if self.negatives_per_instance < 1:
            raise ValueError("negatives_per_instance must be >= 1")
        if not 0 < self.epsilon_norm <= 1e-6:
            raise ValueError("epsilon_norm must be in (0, 1e-6]")


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    # multiplicative learning-rate factor applied after every epoch; 1.0 = off
    decay: float = 1.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must be in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams, config: AdamConfig = AdamConfig()):
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays],
                   [np.zeros_like(a) for a in arrays],
                   config.learning_rate, config.beta1, config.beta2, config.epsilon)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    violation_rate: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    skipped: int = 0
    header: dict = field(default_factory=dict)

    @property
    def losses(self) -> list[float]:
        return [e.mean_loss for e in self.epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.header.items():
            buf.write(f"# {key} = {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "mean_loss", "violation_rate", "seconds"])
        for e in self.epochs:
            writer.writerow([e.epoch, repr(e.mean_loss), repr(e.violation_rate),
                             f"{e.seconds:.3f}"])
        return buf.getvalue()


# -- loss --------------------------------------------------------------------

def _as_rows(vectors, name) -> np.ndarray:
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim == 1:
        V = V[None, :]
    if V.ndim != 2 or V.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty list of vectors")
    return V


def _norms(A, V):
    proj = V @ A.T
    return proj, np.sqrt(np.sum(proj * proj, axis=1))


def hinge_rank_loss(A, positives, negatives, margin: float):
    """Sum over negatives of ``max(0, m + mean_i ||A p_i|| - ||A n_j||)``.

    Returns ``(loss, active)`` where ``active[j]`` marks negatives whose
    hinge term is positive.
    """
    A = np.asarray(A, dtype=np.float64)
    P = _as_rows(positives, "positives")
    N = _as_rows(negatives, "negatives")
    if P.shape[1] != A.shape[1] or N.shape[1] != A.shape[1]:
        raise ValueError("label vectors do not match A's column count")
    _, pos_norms = _norms(A, P)
    _, neg_norms = _norms(A, N)
    terms = margin + pos_norms.mean() - neg_norms
    active = terms > 0
    return float(np.sum(terms[active])), active


def loss_gradient_wrt_A(A, positives, negatives, margin: float,
                        epsilon_norm: float = 1e-8) -> np.ndarray:
    """Subgradient of :func:`hinge_rank_loss` with respect to ``A``.

    Uses ``d||Av||/dA = (Av) v^T / max(||Av||, eps)``; the guard makes the
    gradient zero, rather than undefined, where ``Av = 0``.
    """
    return _loss_and_grad(np.asarray(A, dtype=np.float64),
                          _as_rows(positives, "positives"),
                          _as_rows(negatives, "negatives"),
                          margin, epsilon_norm)[2]


def _loss_and_grad(A, P, N, margin, eps):
    if P.shape[1] != A.shape[1] or N.shape[1] != A.shape[1]:
        raise ValueError("label vectors do not match A's column count")
    pos_proj, pos_norms = _norms(A, P)
    neg_proj, neg_norms = _norms(A, N)
    terms = margin + pos_norms.mean() - neg_norms
    active = terms > 0
    n_active = int(np.count_nonzero(active))
    if n_active == 0:
        return 0.0, active, np.zeros_like(A)
    pos_unit = pos_proj / np.maximum(pos_norms, eps)[:, None]
    grad = (n_active / P.shape[0]) * (pos_unit.T @ P)
    neg_unit = neg_proj[active] / np.maximum(neg_norms[active], eps)[:, None]
    grad -= neg_unit.T @ N[active]
    return float(np.sum(terms[active])), active, grad


def backprop(params: ModelParams, features, positives, negatives,
             config: LossConfig = LossConfig()):
    """Loss and gradients for every parameter tensor of one training tuple.

    ``positives`` and ``negatives`` are label vectors (rows).  Gradients come
    back as a :class:`ModelParams` with the same layout as ``params``.
    """
    loss, _, grads = _backprop(params, features, _as_rows(positives, "positives"),
                               _as_rows(negatives, "negatives"), config)
    return loss, grads


def _backprop(params, features, P, N, config):
    A, inputs, pre = forward_cache(params, features)
    loss, active, dA = _loss_and_grad(A, P, N, config.margin, config.epsilon_norm)

    n_layers = len(params.weights)
    grad_W = [None] * n_layers
    grad_b = [None] * n_layers
    dz = dA.reshape(-1)
    for layer in range(n_layers - 1, -1, -1):
        grad_W[layer] = np.outer(dz, inputs[layer])
        grad_b[layer] = dz
        if layer:
            dz = (params.weights[layer].T @ dz) * (pre[layer - 1] > 0)
    return loss, active, ModelParams(params.config, grad_W, grad_b)


def _activation_pattern(params, features, P, N, margin):
    A, _, pre = forward_cache(params, features)
    _, active = hinge_rank_loss(A, P, N, margin)
    relu = [z > 0 for z in pre[:-1]]
    return np.concatenate([active, *relu]) if relu else active


def finite_diff_check(params: ModelParams, features, positives, negatives,
                      config: LossConfig = LossConfig(), step: float = 1e-5,
                      floor: float = 1e-6) -> float:
    """Worst relative error of :func:`backprop` against central differences.

    Each scalar parameter is perturbed by ``+-step``.  Coordinates where the
    perturbation flips a hinge term or a rectifier (a kink of the loss) are
    skipped.  The error per coordinate is ``|g - fd| / max(|g|, |fd|, floor)``.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    P = _as_rows(positives, "positives")
    N = _as_rows(negatives, "negatives")
    _, grads = backprop(params, features, P, N, config)
    base = _activation_pattern(params, features, P, N, config.margin)

    probe = params.copy()
    worst = 0.0
    for array, grad in zip(probe.arrays(), grads.arrays()):
        flat, gflat = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            A_plus = forward_cache(probe, features)[0]
            loss_plus, _ = hinge_rank_loss(A_plus, P, N, config.margin)
            same = np.array_equal(
                _activation_pattern(probe, features, P, N, config.margin), base)
            flat[i] = orig - step
            A_minus = forward_cache(probe, features)[0]
            loss_minus, _ = hinge_rank_loss(A_minus, P, N, config.margin)
            same = same and np.array_equal(
                _activation_pattern(probe, features, P, N, config.margin), base)
            flat[i] = orig
            if not same:
                continue
            fd = (loss_plus - loss_minus) / (2 * step)
            g = gflat[i]
            denom = max(abs(g), abs(fd), floor)
            worst = max(worst, abs(g - fd) / denom)
    return worst


# -- optimizer ---------------------------------------------------------------

def adam_step(state: AdamState, params: ModelParams, gradients: ModelParams):
    """One bias-corrected Adam update, applied in place; returns ``(state, params)``."""
    arrays, grads = params.arrays(), gradients.arrays()
    if len(arrays) != len(grads) or len(arrays) != len(state.first_moment):
        raise ValueError("parameter, gradient and state tensors do not line up")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    # folded bias correction: lr * sqrt(1 - b2^t) / (1 - b1^t)
    lr_t = state.learning_rate * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
    eps_t = state.epsilon * np.sqrt(1 - b2 ** t)
    for p, g, m, v in zip(arrays, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= lr_t * m / (np.sqrt(v) + eps_t)
    return state, params


# -- training loop -----------------------------------------------------------

def train(dataset: Dataset, table: LabelEmbeddingTable, model_config: ModelConfig,
          loss_config: LossConfig = LossConfig(), opt_config: AdamConfig = AdamConfig(),
          epochs: int = 10, seed: int = 0, callback=None):
    """Per-instance Adam training on the hinge rank loss.

    Instances are visited in a freshly shuffled order every epoch and get
    freshly sampled negatives on every visit.  Returns ``(params, report)``.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if dataset.vocab_size != len(table):
        raise ValueError(f"dataset vocabulary ({dataset.vocab_size}) does not match "
                         f"the embedding table ({len(table)})")
    if model_config.feature_dim != dataset.feature_dim:
        raise ValueError("model feature_dim does not match the dataset")
    if model_config.d != table.dim:
        raise ValueError("model d does not match the embedding dimension")

    params = init_params(model_config, seed)
    state = AdamState.zeros_like(params, opt_config)
    shuffle_rng = stream(seed, "shuffle")
    negative_rng = stream(seed, "negatives")
    W = table.vectors
    report = TrainReport(header={
        "k": model_config.k, "d": model_config.d,
        "hidden_dims": " ".join(map(str, model_config.hidden_dims)),
        "margin": loss_config.margin,
        "negatives": loss_config.negatives_per_instance,
        "lr": opt_config.learning_rate, "beta1": opt_config.beta1,
        "beta2": opt_config.beta2, "eps": opt_config.epsilon,
        "decay": opt_config.decay, "epochs": epochs, "seed": seed,
    })

    usable = [inst for inst in dataset if len(inst.positives) < dataset.vocab_size]
    report.skipped = len(dataset) - len(usable)
    if report.skipped:
        logger.warning("skipping %d instances whose positives cover the vocabulary",
                       report.skipped)
    positive_rows = [W[sorted(inst.positives)] for inst in usable]

    for epoch in range(1, epochs + 1):
        start = time.perf_counter()
        total_loss, violations, sampled = 0.0, 0, 0
        for idx in shuffle_rng.permutation(len(usable)):
            inst = usable[idx]
            neg = sample_negatives(inst, dataset.vocab_size,
                                   loss_config.negatives_per_instance, negative_rng)
            loss, active, grads = _backprop(params, inst.features, positive_rows[idx],
                                            W[neg], loss_config)
            adam_step(state, params, grads)
            total_loss += loss
            sampled += neg.size
            violations += int(np.count_nonzero(active))
        seconds = time.perf_counter() - start
        n = max(len(usable), 1)
        stats = EpochStats(epoch, total_loss / n, violations / max(sampled, 1), seconds)
        report.epochs.append(stats)
        logger.info("epoch %d loss %.6f violations %.4f (%.1fs)", epoch,
                    stats.mean_loss, stats.violation_rate, seconds)
        if callback is not None:
            callback(stats, params)
        state.learning_rate *= opt_config.decay
    return params, report


def random_grad_check(trials: int, step: float = 1e-5, seed: int = 0) -> list[float]:
    """Finite-difference errors over ``trials`` random small models and tuples.

    Each trial draws a configuration (0-2 hidden layers), nonzero biases so
    rectifier patterns vary, random label vectors and a random margin.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = stream(seed, "gradcheck")
    errors = []
    for _ in range(trials):
        f = int(rng.integers(1, 6))
        hidden = tuple(int(h) for h in rng.integers(1, 7, size=int(rng.integers(0, 3))))
        k, d = int(rng.integers(1, 5)), int(rng.integers(2, 6))
        params = init_params(ModelConfig(f, hidden, k, d, 1.0), int(rng.integers(2 ** 31)))
        for b in params.biases:
            b[:] = rng.normal(0.0, 0.1, size=b.shape)
        x = rng.standard_normal(f)
        P = rng.standard_normal((int(rng.integers(1, 4)), d))
        N = rng.standard_normal((int(rng.integers(1, 6)), d))
        config = LossConfig(margin=float(rng.uniform(0.5, 3.0)))
        errors.append(finite_diff_check(params, x, P, N, config, step))
    return errors


CONFIG_KEYS = {
    "margin": float, "negatives": int, "lr": float, "beta1": float, "beta2": float,
    "eps": float, "epochs": int, "seed": int, "k": int, "decay": float,
    "init_scale": float,
    "hidden_dims": lambda v: tuple(int(h) for h in v.replace(",", " ").split()),
}


def read_train_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep or key not in CONFIG_KEYS:
                raise DataFormatError(path, lineno, f"unknown or malformed entry {line!r}")
            try:
                values[key] = CONFIG_KEYS[key](value)
            except ValueError as exc:
                raise DataFormatError(path, lineno, str(exc)) from None
    return values
