"""Feed-forward encoder from features to a ``k x d`` transformation matrix.

The encoder is a stack of affine layers with rectifiers between them; the
last layer is plain affine and its ``k*d`` outputs are reshaped row-major
into ``A``.  A label vector ``w`` is scored by ``||A w||``: small means
relevant.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._random import stream

CHECKPOINT_MAGIC = b"LABELSPACE-CHECKPOINT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 16
    # no hidden layers: the head acts directly on precomputed features
    hidden_dims: tuple[int, ...] = ()
    k: int = 8
    d: int = 20
    init_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden widths must be positive")
        if self.k < 1 or self.d < 1:
            raise ValueError("k and d must be >= 1")
        if not self.init_scale >= 0:
            raise ValueError("init_scale must be >= 0")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.feature_dim, *self.hidden_dims, self.k * self.d]


@dataclass(eq=False)
class ModelParams:
    """Encoder weights ``(out, in)`` and biases ``(out,)``, one pair per layer."""

    config: ModelConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self):
        """``(name, array)`` pairs in a fixed order."""
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            yield f"layer{i}.weight", W
            yield f"layer{i}.bias", b

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.tensors()]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, [W.copy() for W in self.weights],
                           [b.copy() for b in self.biases])

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.config == other.config and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.arrays(), other.arrays()))

    __hash__ = None


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform(+-init_scale/sqrt(fan_in)) weights and zero biases."""
    rng = stream(seed, "init")
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = config.init_scale / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(config, weights, biases)


def _check_features(params: ModelParams, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != params.config.feature_dim:
        raise ValueError(f"expected {params.config.feature_dim} features, "
                         f"got {x.shape[-1]}")
    return x


def forward_cache(params: ModelParams, features):
    """Forward pass that also returns the layer inputs and pre-activations.

    Returns ``(A, inputs, pre)`` where ``inputs[l]`` feeds layer ``l`` and
    ``pre[l]`` is that layer's affine output.
    """
    h = _check_features(params, features)
    inputs, pre = [], []
    last = len(params.weights) - 1
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = W @ h + b
        pre.append(z)
        h = np.maximum(z, 0.0) if layer < last else z
    cfg = params.config
    return h.reshape(cfg.k, cfg.d), inputs, pre


def forward_transform(params: ModelParams, features) -> np.ndarray:
    """Map one feature vector to its ``(k, d)`` matrix ``A``."""
    return forward_cache(params, features)[0]


def forward_batch(params: ModelParams, X) -> np.ndarray:
    """``(n, f)`` features to ``(n, k, d)`` matrices."""
    h = _check_features(params, np.atleast_2d(X))
    last = len(params.weights) - 1
    for layer, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ W.T + b
        if layer < last:
            h = np.maximum(h, 0.0)
    return h.reshape(h.shape[0], params.config.k, params.config.d)


def _check_pair(A, w):
    A = np.asarray(A, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if A.ndim != 2 or w.ndim != 1 or A.shape[1] != w.shape[0]:
        raise ValueError(f"cannot apply A{A.shape} to w{w.shape}")
    return A, w


def transform_label(A, w) -> np.ndarray:
    """``A @ w``: the label's position in the transformed k-dim space."""
    A, w = _check_pair(A, w)
    return A @ w


def label_distance(A, w) -> float:
    """Distance of ``A @ w`` from the origin."""
    A, w = _check_pair(A, w)
    return float(np.linalg.norm(A @ w))


def squared_distances(A, W) -> np.ndarray:
    """``||A w_c||^2`` for every row ``w_c`` of ``W``, summed row by row of A."""
    proj = np.asarray(W) @ np.asarray(A).T
    return np.sum(proj * proj, axis=1)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Binary checkpoint: magic line, JSON header line, float64 LE payloads."""
    header = {
        "version": CHECKPOINT_VERSION,
        "config": {**asdict(params.config),
                   "hidden_dims": list(params.config.hidden_dims)},
        "tensors": [{"name": n, "shape": list(a.shape), "dtype": "<f8"}
                    for n, a in params.tensors()],
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b" %d\n" % CHECKPOINT_VERSION)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, a in params.tensors():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    first, _, rest = data.partition(b"\n")
    magic, _, version = first.partition(b" ")
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {int(version)}")
    header_line, _, payload = rest.partition(b"\n")
    header = json.loads(header_line)
    cfg = header["config"]
    config = ModelConfig(cfg["feature_dim"], tuple(cfg["hidden_dims"]), cfg["k"],
                         cfg["d"], cfg["init_scale"])
    arrays, offset = {}, 0
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = 8 * count
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated tensor {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(
            spec["shape"]).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes after tensors")
    n_layers = len(config.layer_sizes) - 1
    params = ModelParams(config,
                         [arrays[f"layer{i}.weight"] for i in range(n_layers)],
                         [arrays[f"layer{i}.bias"] for i in range(n_layers)])
    sizes = config.layer_sizes
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        if W.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
            raise ValueError(f"{path}: layer {i} shape does not match config")
    return params
