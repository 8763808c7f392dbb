"""Multilabel instances, negative sampling and the planted synthetic benchmark."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._random import stream
from .embeddings import LabelEmbeddingTable, format_float, random_embeddings
from .exceptions import DataFormatError


@dataclass(frozen=True, eq=False)
class Instance:
    id: str
    features: np.ndarray
    positives: frozenset[int]

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(features)):
            raise ValueError(f"instance {self.id!r}: non-finite features")
        features.setflags(write=False)
        positives = frozenset(int(p) for p in self.positives)
        if not positives:
            raise ValueError(f"instance {self.id!r}: empty positive set")
        if min(positives) < 0:
            raise ValueError(f"instance {self.id!r}: negative label index")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "positives", positives)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.id == other.id and self.positives == other.positives
                and np.array_equal(self.features, other.features))

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    instances: tuple[Instance, ...]
    feature_dim: int
    vocab_size: int

    def __post_init__(self):
        instances = tuple(self.instances)
        object.__setattr__(self, "instances", instances)
        for inst in instances:
            if inst.features.shape[0] != self.feature_dim:
                raise ValueError(
                    f"instance {inst.id!r} has {inst.features.shape[0]} features, "
                    f"expected {self.feature_dim}")
            if max(inst.positives) >= self.vocab_size:
                raise ValueError(f"instance {inst.id!r}: label index out of range")
            if len(inst.positives) >= self.vocab_size:
                raise ValueError(f"instance {inst.id!r}: positives cover the vocabulary")

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def features_matrix(self) -> np.ndarray:
        if not self.instances:
            return np.zeros((0, self.feature_dim))
        return np.stack([inst.features for inst in self.instances])

    def indicator_matrix(self) -> np.ndarray:
        Y = np.zeros((len(self), self.vocab_size), dtype=np.int8)
        for row, inst in enumerate(self.instances):
            Y[row, sorted(inst.positives)] = 1
        return Y

    @property
    def ids(self) -> list[str]:
        return [inst.id for inst in self.instances]


def load_dataset(path, table: LabelEmbeddingTable) -> Dataset:
    """Read ``id | f1 ... ff | label1 label2 ...`` lines.

    A ``#dims f`` comment declares the feature dimension; without it the
    first instance fixes it.
    """
    path = Path(path)
    feature_dim = None
    instances = []
    ids = set()
    text = path.read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            words = line[1:].split()
            if len(words) == 2 and words[0] == "dims":
                try:
                    feature_dim = int(words[1])
                except ValueError:
                    raise DataFormatError(path, lineno, "bad '#dims' value") from None
            continue
        sections = line.split("|")
        if len(sections) != 3:
            raise DataFormatError(path, lineno, "expected 'id | features | labels'")
        inst_id = sections[0].strip()
        if not inst_id or inst_id in ids:
            raise DataFormatError(path, lineno, f"missing or duplicate id {inst_id!r}")
        try:
            features = [float(v) for v in sections[1].split()]
        except ValueError as exc:
            raise DataFormatError(path, lineno, str(exc)) from None
        if feature_dim is None:
            feature_dim = len(features)
        if len(features) != feature_dim:
            raise DataFormatError(
                path, lineno, f"expected {feature_dim} features, got {len(features)}")
        if not all(math.isfinite(v) for v in features):
            raise DataFormatError(path, lineno, "non-finite feature")
        names = sections[2].split()
        if not names:
            raise DataFormatError(path, lineno, "empty positive label set")
        positives = set()
        for name in names:
            try:
                positives.add(table.index(name))
            except KeyError:
                raise DataFormatError(path, lineno, f"unknown label {name!r}") from None
        if len(positives) >= len(table):
            raise DataFormatError(path, lineno, "positives cover the whole vocabulary")
        ids.add(inst_id)
        instances.append(Instance(inst_id, np.array(features), frozenset(positives)))
    if feature_dim is None:
        raise DataFormatError(path, 1, "no '#dims' header and no instances")
    return Dataset(tuple(instances), feature_dim, len(table))


def save_dataset(dataset: Dataset, table: LabelEmbeddingTable, path) -> None:
    out = [f"#dims {dataset.feature_dim}"]
    for inst in dataset:
        feats = " ".join(format_float(v) for v in inst.features)
        labels = " ".join(table.labels[i] for i in sorted(inst.positives))
        out.append(f"{inst.id} | {feats} | {labels}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def sample_negatives(instance: Instance, vocab_size: int, count: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Uniform draw without replacement from the labels not in ``instance.positives``.

    Returns all of the complement (in random order) when it has fewer than
    ``count`` members.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mask = np.ones(vocab_size, dtype=bool)
    mask[list(instance.positives)] = False
    complement = np.flatnonzero(mask)
    if complement.size == 0:
        raise ValueError(f"instance {instance.id!r}: positives cover the vocabulary")
    size = min(count, complement.size)
    return rng.choice(complement, size=size, replace=False)


@dataclass(frozen=True)
class SyntheticSpec:
    num_labels: int = 50
    d: int = 20
    f: int = 16
    k_star: int = 2
    num_instances: int = 2000
    positives_per_instance: int = 2
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_labels < 2:
            raise ValueError("num_labels must be >= 2")
        if min(self.d, self.f, self.k_star, self.num_instances) < 1:
            raise ValueError("d, f, k_star and num_instances must be >= 1")
        if not 1 <= self.positives_per_instance < self.num_labels:
            raise ValueError("need 1 <= positives_per_instance < num_labels")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be >= 0")


@dataclass(frozen=True, eq=False)
class PlantedTruth:
    """Hidden generator of a synthetic dataset.

    ``mixing`` has shape ``(k_star * d, f)``; instance ``i`` gets
    ``A*_i = (mixing @ x_i).reshape(k_star, d) + noise_i``.  ``distances[i, c]``
    is ``||A*_i w_c||``.
    """
    mixing: np.ndarray
    k_star: int
    noise_std: float
    distances: np.ndarray
    ids: tuple[str, ...] = field(default=())

    def to_json(self) -> str:
        doc = {
            "k_star": self.k_star,
            "noise_std": self.noise_std,
            "mixing": self.mixing.tolist(),
            "instances": [
                {"id": i, "distances": row.tolist()}
                for i, row in zip(self.ids, self.distances)
            ],
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PlantedTruth":
        doc = json.loads(text)
        rows = doc["instances"]
        return cls(np.array(doc["mixing"], dtype=np.float64), int(doc["k_star"]),
                   float(doc["noise_std"]),
                   np.array([r["distances"] for r in rows], dtype=np.float64),
                   tuple(r["id"] for r in rows))


def generate_synthetic(spec: SyntheticSpec):
    """Planted-structure dataset: returns ``(dataset, table, truth)``.

    Each instance's positives are the labels with the smallest planted
    distance ``||A* w||`` (ties by index), so relevance depends on the
    features through a hidden linear map.
    """
    table = random_embeddings(spec.num_labels, spec.d, spec.seed)
    rng = stream(spec.seed, "synthesis")
    mixing = rng.standard_normal((spec.k_star * spec.d, spec.f)) / math.sqrt(spec.f)
    X = rng.standard_normal((spec.num_instances, spec.f))
    A = (X @ mixing.T).reshape(spec.num_instances, spec.k_star, spec.d)
    if spec.noise_std > 0:
        A = A + spec.noise_std * rng.standard_normal(A.shape)
    # (n, k_star, |V|) projections -> (n, |V|) distances
    proj = A @ table.vectors.T
    distances = np.sqrt(np.einsum("nkv,nkv->nv", proj, proj))

    width = len(str(spec.num_instances - 1))
    instances = []
    for i in range(spec.num_instances):
        order = np.lexsort((np.arange(spec.num_labels), distances[i]))
        positives = frozenset(order[:spec.positives_per_instance].tolist())
        instances.append(Instance(f"img{i:0{width}d}", X[i], positives))
    dataset = Dataset(tuple(instances), spec.f, spec.num_labels)
    truth = PlantedTruth(mixing, spec.k_star, spec.noise_std, distances,
                         tuple(dataset.ids))
    return dataset, table, truth


def split(dataset: Dataset, train_fraction: float, seed: int):
    """Seeded shuffle, then the first ``round(train_fraction * n)`` go to train."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(dataset)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"train_fraction {train_fraction} leaves an empty side "
                         f"for {n} instances")
    order = stream(seed, "split").permutation(n)
    pick = lambda idx: Dataset(tuple(dataset.instances[i] for i in idx),
                               dataset.feature_dim, dataset.vocab_size)
    return pick(order[:n_train]), pick(order[n_train:])


def from_arrays(X, label_sets: Sequence, vocab_size: int, ids=None) -> Dataset:
    """Build a Dataset from a feature matrix and per-row label index sets."""
    X = np.asarray(X, dtype=np.float64)
    if ids is None:
        ids = [str(i) for i in range(X.shape[0])]
    return Dataset(tuple(Instance(i, x, frozenset(s))
                         for i, x, s in zip(ids, X, label_sets)),
                   X.shape[1], vocab_size)


def load_features(path):
    """Read ``id | f1 ... ff`` lines (a trailing label section is ignored).

    Returns ``(ids, X)``.
    """
    path = Path(path)
    ids, rows = [], []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sections = line.split("|")
        if len(sections) not in (2, 3):
            raise DataFormatError(path, lineno, "expected 'id | features [| labels]'")
        try:
            values = [float(v) for v in sections[1].split()]
        except ValueError as exc:
            raise DataFormatError(path, lineno, str(exc)) from None
        if rows and len(values) != len(rows[0]):
            raise DataFormatError(path, lineno, "inconsistent feature count")
        if not values or not all(math.isfinite(v) for v in values):
            raise DataFormatError(path, lineno, "missing or non-finite features")
        ids.append(sections[0].strip())
        rows.append(values)
    if not rows:
        raise DataFormatError(path, 1, "no feature rows")
    return ids, np.array(rows, dtype=np.float64)
