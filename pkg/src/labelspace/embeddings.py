"""Label vocabulary with word vectors.

Text format: a ``"<count> <dim>"`` header, then one ``"<label> v1 ... vdim"``
row per label.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import DataFormatError


@dataclass(frozen=True, eq=False)
class LabelEmbeddingTable:
    """Ordered label names and their ``(n_labels, dim)`` vectors."""

    labels: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if len(labels) != vectors.shape[0]:
            raise ValueError(
                f"{len(labels)} labels but {vectors.shape[0]} vector rows")
        if len(labels) < 2:
            raise ValueError("at least 2 labels are required")
        if vectors.shape[1] < 1:
            raise ValueError("dim must be positive")
        if len(set(labels)) != len(labels):
            raise ValueError("label names must be unique")
        for name in labels:
            if not name or any(c.isspace() for c in name):
                raise ValueError(f"invalid label name {name!r}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("vectors contain non-finite values")
        vectors.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(labels)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def lookup(self, label: str | int) -> np.ndarray:
        return lookup(self, label)

    def __eq__(self, other):
        if not isinstance(other, LabelEmbeddingTable):
            return NotImplemented
        return (self.labels == other.labels
                and self.vectors.shape == other.vectors.shape
                and bool(np.array_equal(self.vectors, other.vectors)))

    __hash__ = None


def lookup(table: LabelEmbeddingTable, label: str | int) -> np.ndarray:
    """Return the stored vector for a label name or row index."""
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if not 0 <= label < len(table):
            raise KeyError(f"label index {label} out of range [0, {len(table)})")
        return table.vectors[int(label)]
    return table.vectors[table.index(label)]


def load_embeddings(path, normalize: bool = False) -> LabelEmbeddingTable:
    """Parse a text embedding file.

    Vectors are used as stored unless ``normalize`` is set, in which case
    every row is rescaled to unit L2 norm.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")

    header = lines[0].split() if lines else []
    if len(header) != 2:
        raise DataFormatError(path, 1, "header must be '<vocab_size> <dim>'")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError:
        raise DataFormatError(path, 1, "header must hold two integers") from None
    if count < 2 or dim < 1:
        raise DataFormatError(path, 1, f"bad header sizes {count} {dim}")

    labels: list[str] = []
    rows: list[list[float]] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(labels) == count:
            raise DataFormatError(path, lineno, f"more than {count} rows")
        if len(parts) != dim + 1:
            raise DataFormatError(
                path, lineno, f"expected {dim} components, got {len(parts) - 1}")
        name = parts[0]
        if name in seen:
            raise DataFormatError(
                path, lineno, f"duplicate label {name!r} (first on line {seen[name]})")
        try:
            values = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DataFormatError(path, lineno, str(exc)) from None
        if not all(math.isfinite(v) for v in values):
            raise DataFormatError(path, lineno, "non-finite component")
        seen[name] = lineno
        labels.append(name)
        rows.append(values)

    if len(labels) != count:
        raise DataFormatError(
            path, len(lines), f"header declares {count} rows, found {len(labels)}")
    vectors = np.array(rows, dtype=np.float64)
    if normalize:
        vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    return LabelEmbeddingTable(tuple(labels), vectors)


def format_float(x: float, precision: int | None = None) -> str:
    if precision is None:
        return repr(float(x))
    return f"{x:.{precision}g}"


def save_embeddings(table: LabelEmbeddingTable, path,
                    precision: int | None = None) -> None:
    """Write ``table`` in the text format.

    With the default ``precision=None`` floats are written with ``repr`` so
    that loading gives back the identical table.
    """
    out = [f"{len(table)} {table.dim}"]
    for name, row in zip(table.labels, table.vectors):
        out.append(" ".join([name] + [format_float(v, precision) for v in row]))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def random_embeddings(num_labels: int, d: int, seed: int,
                      names: Sequence[str] | None = None) -> LabelEmbeddingTable:
    """Unit-norm Gaussian label vectors, a pure function of its arguments."""
    if num_labels < 2:
        raise ValueError("num_labels must be >= 2")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((num_labels, d))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    if names is None:
        width = len(str(num_labels - 1))
        names = [f"label{i:0{width}d}" for i in range(num_labels)]
    return LabelEmbeddingTable(tuple(names), vectors)
