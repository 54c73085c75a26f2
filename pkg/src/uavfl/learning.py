"""Local learning machinery: model, gradients, SGD, datasets, aggregation.

A small dense network trained with exact backpropagation and mini-batch SGD,
dataset generation/ingestion and the three partitioning modes, and the server
aggregation rules (uniform mean, size-weighted mean, staleness-weighted
asynchronous mean). Everything is float64 numpy with caller-supplied RNGs.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LayerSpec",
    "ModelParams",
    "TrainingHyper",
    "Dataset",
    "DatasetPartition",
    "PartitionSpec",
    "AsyncPolicy",
    "mlp_shape",
    "param_count",
    "init_model",
    "cross_entropy_loss",
    "gradient",
    "predict",
    "evaluate",
    "local_train_epoch",
    "split_model",
    "join_model",
    "train_epoch_split",
    "synthetic_blobs",
    "load_idx_file",
    "load_mnist",
    "partition",
    "fedavg",
    "fedavg_weighted",
    "staleness_weight",
    "async_aggregate",
]


# ---- Model structure -------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: output = activation(input @ W + b)."""

    fan_in: int
    fan_out: int
    activation: str = "tanh"  # "tanh" or "linear"

    def __post_init__(self):
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ("tanh", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")


def mlp_shape(input_dim: int, hidden_sizes, num_classes: int) -> tuple[LayerSpec, ...]:
    """Dense network with tanh hidden layers and a linear (logit) output."""
    dims = [int(input_dim)] + [int(h) for h in hidden_sizes] + [int(num_classes)]
    layers = []
    for i in range(len(dims) - 1):
        act = "linear" if i == len(dims) - 2 else "tanh"
        layers.append(LayerSpec(dims[i], dims[i + 1], act))
    return tuple(layers)


def param_count(shape_spec: tuple[LayerSpec, ...]) -> int:
    return sum(l.fan_in * l.fan_out + l.fan_out for l in shape_spec)


@dataclass
class ModelParams:
    """Flat float64 parameter vector plus the layer layout it encodes."""

    values: np.ndarray
    shape_spec: tuple[LayerSpec, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("parameter vector must be one-dimensional")
        if self.values.size != param_count(self.shape_spec):
            raise ValueError(
                f"parameter vector has {self.values.size} entries, "
                f"layout needs {param_count(self.shape_spec)}"
            )

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.shape_spec)


def _layer_views(values: np.ndarray, shape_spec) -> list[tuple[np.ndarray, np.ndarray]]:
    """(W, b) views into the flat vector, in layer order."""
    views = []
    offset = 0
    for layer in shape_spec:
        w = values[offset : offset + layer.fan_in * layer.fan_out]
        w = w.reshape(layer.fan_in, layer.fan_out)
        offset += layer.fan_in * layer.fan_out
        b = values[offset : offset + layer.fan_out]
        offset += layer.fan_out
        views.append((w, b))
    return views


def init_model(shape_spec: tuple[LayerSpec, ...], rng: np.random.Generator) -> ModelParams:
    """Uniform(-sqrt(6/(fan_in+fan_out)), +) weights, zero biases."""
    values = np.zeros(param_count(shape_spec), dtype=np.float64)
    for layer, (w, _) in zip(shape_spec, _layer_views(values, shape_spec)):
        limit = np.sqrt(6.0 / (layer.fan_in + layer.fan_out))
        w[:] = rng.uniform(-limit, limit, size=w.shape)
    return ModelParams(values, shape_spec)


# ---- Forward / backward ----------------------------------------------------

def _forward_chain(layers, views, x):
    """Activations [input, a1, ..., output] for a list of layers."""
    acts = [x]
    for layer, (w, b) in zip(layers, views):
        z = acts[-1] @ w + b
        acts.append(np.tanh(z) if layer.activation == "tanh" else z)
    return acts


def _softmax_delta(logits, labels):
    """(softmax(logits) - onehot) / batch, plus the mean cross-entropy."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    log_probs = shifted[rows, labels] - np.log(total[:, 0])
    loss = -log_probs.mean()
    delta = exp / total
    delta[rows, labels] -= 1.0
    delta /= len(labels)
    return delta, float(loss)


def _backward_chain(layers, views, acts, delta, grads=None, lr=None, need_input_grad=False):
    """Backpropagate delta (d loss / d output) through a list of layers.

    Either accumulates gradients into `grads` (list of (gW, gb) arrays) or,
    when `lr` is given, applies the SGD step in place after each layer's
    downstream delta has been formed. Returns d loss / d input when asked.
    """
    for i in range(len(layers) - 1, -1, -1):
        if layers[i].activation == "tanh":
            delta = delta * (1.0 - acts[i + 1] ** 2)
        w, b = views[i]
        gw = acts[i].T @ delta
        gb = delta.sum(axis=0)
        if i > 0 or need_input_grad:
            delta = delta @ w.T
        if grads is not None:
            grads[i] = (gw, gb)
        if lr is not None:
            w -= lr * gw
            b -= lr * gb
    return delta


def cross_entropy_loss(model: ModelParams, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of the model on a batch."""
    views = _layer_views(model.values, model.shape_spec)
    acts = _forward_chain(model.shape_spec, views, np.asarray(features, dtype=np.float64))
    _, loss = _softmax_delta(acts[-1], np.asarray(labels))
    return loss


def gradient(model: ModelParams, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Exact flat gradient of the mean cross-entropy on a batch."""
    views = _layer_views(model.values, model.shape_spec)
    acts = _forward_chain(model.shape_spec, views, np.asarray(features, dtype=np.float64))
    delta, _ = _softmax_delta(acts[-1], np.asarray(labels))
    grads = [None] * len(model.shape_spec)
    _backward_chain(model.shape_spec, views, acts, delta, grads=grads)
    flat = np.empty_like(model.values)
    for (gw, gb), (wv, bv) in zip(grads, _layer_views(flat, model.shape_spec)):
        wv[:] = gw
        bv[:] = gb
    return flat


def predict(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class indices with the highest logit (ties go to the lowest index)."""
    views = _layer_views(model.values, model.shape_spec)
    acts = _forward_chain(model.shape_spec, views, np.asarray(features, dtype=np.float64))
    return np.argmax(acts[-1], axis=1)


def evaluate(model: ModelParams, dataset: "Dataset") -> tuple[float, float]:
    """(mean cross-entropy, accuracy) on a held-out dataset."""
    loss = cross_entropy_loss(model, dataset.features, dataset.labels)
    acc = float(np.mean(predict(model, dataset.features) == dataset.labels))
    return loss, acc


# ---- Training --------------------------------------------------------------

@dataclass
class TrainingHyper:
    local_epochs: int = 6
    batch_size: int = 10
    learning_rate: float = 0.01
    num_classes: int = 10

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")


def _epoch_batches(size: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(size)
    for start in range(0, size, batch_size):
        yield order[start : start + batch_size]


def local_train_epoch(
    model: ModelParams,
    part: "DatasetPartition",
    hyper: TrainingHyper,
    rng: np.random.Generator,
) -> ModelParams:
    """One full mini-batch SGD pass over the partition; returns new params.

    The shuffle order comes from rng; the trailing short batch is included.
    """
    updated = model.copy()
    views = _layer_views(updated.values, updated.shape_spec)
    for idx in _epoch_batches(part.size, hyper.batch_size, rng):
        x = part.features[idx]
        y = part.labels[idx]
        acts = _forward_chain(updated.shape_spec, views, x)
        delta, _ = _softmax_delta(acts[-1], y)
        _backward_chain(updated.shape_spec, views, acts, delta, lr=hyper.learning_rate)
    return updated


def split_model(model: ModelParams, cut_layer: int) -> tuple[ModelParams, ModelParams]:
    """Split into (user-side prefix, server-side suffix) after cut_layer layers."""
    n_layers = len(model.shape_spec)
    if not 1 <= cut_layer <= n_layers - 1:
        raise ValueError(f"cut_layer must lie in 1..{n_layers - 1}")
    prefix_spec = model.shape_spec[:cut_layer]
    suffix_spec = model.shape_spec[cut_layer:]
    split_at = param_count(prefix_spec)
    prefix = ModelParams(model.values[:split_at].copy(), prefix_spec)
    suffix = ModelParams(model.values[split_at:].copy(), suffix_spec)
    return prefix, suffix


def join_model(prefix: ModelParams, suffix: ModelParams) -> ModelParams:
    """Reassemble a full model from its split halves."""
    if prefix.shape_spec[-1].fan_out != suffix.shape_spec[0].fan_in:
        raise ValueError("prefix output width does not match suffix input width")
    return ModelParams(
        np.concatenate([prefix.values, suffix.values]),
        prefix.shape_spec + suffix.shape_spec,
    )


def train_epoch_split(
    prefix: ModelParams,
    suffix: ModelParams,
    part: "DatasetPartition",
    hyper: TrainingHyper,
    rng: np.random.Generator,
) -> tuple[ModelParams, ModelParams]:
    """One SGD epoch with the forward/backward pass crossing a model split.

    The user side runs the prefix, ships cut-layer activations up, receives
    the cut-layer gradient back, and both halves apply the same SGD step the
    unsplit model would. Bit-identical to local_train_epoch on the joined
    model with the same rng.
    """
    new_prefix = prefix.copy()
    new_suffix = suffix.copy()
    pre_views = _layer_views(new_prefix.values, new_prefix.shape_spec)
    suf_views = _layer_views(new_suffix.values, new_suffix.shape_spec)
    for idx in _epoch_batches(part.size, hyper.batch_size, rng):
        x = part.features[idx]
        y = part.labels[idx]
        pre_acts = _forward_chain(new_prefix.shape_spec, pre_views, x)
        suf_acts = _forward_chain(new_suffix.shape_spec, suf_views, pre_acts[-1])
        delta, _ = _softmax_delta(suf_acts[-1], y)
        cut_grad = _backward_chain(
            new_suffix.shape_spec, suf_views, suf_acts, delta,
            lr=hyper.learning_rate, need_input_grad=True,
        )
        _backward_chain(
            new_prefix.shape_spec, pre_views, pre_acts, cut_grad,
            lr=hyper.learning_rate,
        )
    return new_prefix, new_suffix


# ---- Datasets --------------------------------------------------------------

@dataclass
class Dataset:
    """Feature matrix in [0, 1] and integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must have equal length")

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass
class DatasetPartition:
    """One user's local shard of the training data."""

    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class PartitionSpec:
    """How to split the training set across users."""

    mode: str = "iid"  # iid | noniid_shards | imbalanced
    classes_per_user: int = 2
    alpha_class: float = 0.01
    alpha_size: float = 2.0

    def __post_init__(self):
        if self.mode not in ("iid", "noniid_shards", "imbalanced"):
            raise ValueError(f"unknown partition mode {self.mode!r}")
        if self.classes_per_user < 1:
            raise ValueError("classes_per_user must be at least 1")
        if self.alpha_class <= 0.0 or self.alpha_size <= 0.0:
            raise ValueError("Dirichlet concentrations must be positive")


def synthetic_blobs(
    n_samples: int,
    num_classes: int,
    dim: int,
    cluster_std: float,
    rng: np.random.Generator,
) -> Dataset:
    """Balanced Gaussian class clusters clipped into the unit cube.

    Class centres are uniform in [0.25, 0.75]^dim; counts differ by at most
    one when num_classes does not divide n_samples.
    """
    if n_samples < 1 or num_classes < 2 or dim < 1:
        raise ValueError("need n_samples >= 1, num_classes >= 2, dim >= 1")
    if cluster_std < 0.0:
        raise ValueError("cluster_std must be non-negative")
    centers = rng.uniform(0.25, 0.75, size=(num_classes, dim))
    labels = np.arange(n_samples) % num_classes
    features = centers[labels] + cluster_std * rng.standard_normal((n_samples, dim))
    np.clip(features, 0.0, 1.0, out=features)
    return Dataset(features, labels)


def _read_idx(path: str) -> tuple[int, np.ndarray]:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX file")
    magic = struct.unpack(">I", raw[:4])[0]
    return magic, np.frombuffer(raw, dtype=np.uint8, offset=4)


def load_idx_file(path: str) -> np.ndarray:
    """Read one big-endian IDX file (optionally gzipped) into an array."""
    magic, body = _read_idx(path)
    if magic == 0x00000803:  # rank-3 unsigned bytes: images
        if len(body) < 12:
            raise ValueError(f"{path}: truncated IDX header")
        count, rows, cols = struct.unpack(">III", body[:12].tobytes())
        pixels = body[12:]
        if len(pixels) != count * rows * cols:
            raise ValueError(f"{path}: size does not match header counts")
        return pixels.reshape(count, rows * cols)
    if magic == 0x00000801:  # rank-1 unsigned bytes: labels
        if len(body) < 4:
            raise ValueError(f"{path}: truncated IDX header")
        count = struct.unpack(">I", body[:4].tobytes())[0]
        labels = body[4:]
        if len(labels) != count:
            raise ValueError(f"{path}: size does not match header count")
        return labels.copy()
    raise ValueError(f"{path}: unrecognized IDX magic 0x{magic:08x}")


def load_mnist(images_path: str, labels_path: str, limit: int = 0) -> Dataset:
    """Pair an IDX image file with its label file; pixels scaled to [0, 1]."""
    images = load_idx_file(images_path)
    labels = load_idx_file(labels_path)
    if images.ndim != 2:
        raise ValueError(f"{images_path}: expected an image file")
    if labels.ndim != 1:
        raise ValueError(f"{labels_path}: expected a label file")
    if len(images) != len(labels):
        raise ValueError("image and label counts differ")
    if limit:
        images = images[:limit]
        labels = labels[:limit]
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64))


# ---- Partitioning ----------------------------------------------------------

def _largest_remainder(weights: np.ndarray, total: int, minimum: int = 0) -> np.ndarray:
    """Integer allocation summing to `total`, proportional to weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0:
        raise ValueError("allocation weights must have positive sum")
    raw = weights / weights.sum() * total
    counts = np.maximum(np.floor(raw).astype(int), minimum)
    # distribute the leftover to the largest fractional parts, stable order
    while counts.sum() > total:
        counts[int(np.argmax(counts))] -= 1
    leftover = total - counts.sum()
    if leftover > 0:
        order = np.lexsort((np.arange(len(raw)), -(raw - np.floor(raw))))
        for i in range(leftover):
            counts[order[i % len(raw)]] += 1
    return counts


def partition(
    dataset: Dataset,
    num_users: int,
    spec: PartitionSpec,
    rng: np.random.Generator,
) -> list[DatasetPartition]:
    """Split the training set into one shard per user.

    iid: a shuffled equal split (sizes differ by at most one).
    noniid_shards: label-sorted data cut into classes_per_user * num_users
        single-class shards, classes_per_user shards per user.
    imbalanced: per-user class mixture ~ Dirichlet(alpha_class) and relative
        sizes ~ Dirichlet(alpha_size); classes are drawn with replacement
        once their pool is exhausted, so shards may overlap.
    """
    if num_users < 1:
        raise ValueError("num_users must be at least 1")
    if dataset.n < num_users:
        raise ValueError("fewer samples than users")
    labels = dataset.labels
    if spec.mode == "iid":
        order = rng.permutation(dataset.n)
        chunks = np.array_split(order, num_users)
    elif spec.mode == "noniid_shards":
        classes = np.unique(labels)
        total_shards = spec.classes_per_user * num_users
        if total_shards < len(classes):
            raise ValueError(
                f"{total_shards} shards cannot cover {len(classes)} classes; "
                "raise classes_per_user or num_users"
            )
        class_sizes = np.array([(labels == c).sum() for c in classes])
        shards_per_class = _largest_remainder(class_sizes, total_shards, minimum=1)
        shards = []
        for c, n_shards in zip(classes, shards_per_class):
            members = np.flatnonzero(labels == c)
            shards.extend(np.array_split(members, n_shards))
        order = rng.permutation(total_shards)
        chunks = [
            np.concatenate([shards[j] for j in order[u * spec.classes_per_user : (u + 1) * spec.classes_per_user]])
            for u in range(num_users)
        ]
    else:  # imbalanced
        classes = np.unique(labels)
        pools = {c: rng.permutation(np.flatnonzero(labels == c)).tolist() for c in classes}
        sizes = _largest_remainder(
            rng.dirichlet(np.full(num_users, spec.alpha_size)), dataset.n, minimum=1
        )
        chunks = []
        for u in range(num_users):
            mix = rng.dirichlet(np.full(len(classes), spec.alpha_class))
            wanted = _largest_remainder(mix, int(sizes[u]))
            picked = []
            for c, count in zip(classes, wanted):
                pool = pools[c]
                take = min(count, len(pool))
                picked.extend(pool[:take])
                del pool[:take]
                if count > take:  # class exhausted: fall back to replacement
                    members = np.flatnonzero(labels == c)
                    picked.extend(rng.choice(members, size=count - take, replace=True).tolist())
            chunks.append(np.array(sorted(picked), dtype=int))
    parts = []
    for chunk in chunks:
        idx = np.sort(np.asarray(chunk, dtype=int))
        parts.append(DatasetPartition(dataset.features[idx], labels[idx]))
    return parts


# ---- Aggregation -----------------------------------------------------------

def _stack_updates(updates) -> np.ndarray:
    if not updates:
        raise ValueError("cannot aggregate an empty update list")
    ref = updates[0]
    for m in updates[1:]:
        if m.shape_spec != ref.shape_spec:
            raise ValueError("aggregation inputs have mismatched layouts")
        if m.values.shape != ref.values.shape:
            raise ValueError("aggregation inputs have mismatched sizes")
    return np.stack([m.values for m in updates])


def fedavg(updates: list[ModelParams]) -> ModelParams:
    """Coordinate-wise arithmetic mean of the updates.

    Each coordinate is summed in a canonical sorted order relative to its
    smallest value, so the result is bit-identical under permutation of the
    inputs and an all-identical list averages to itself exactly.
    """
    stack = _stack_updates(updates)
    ordered = np.sort(stack, axis=0)
    base = ordered[0]
    mean = base + np.add.reduce(ordered - base, axis=0) / len(updates)
    return ModelParams(mean, updates[0].shape_spec)


def fedavg_weighted(updates: list[ModelParams], weights) -> ModelParams:
    """Weighted mean sum(w_i * u_i) / sum(w_i), index-order reduction."""
    stack = _stack_updates(updates)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(updates),):
        raise ValueError("need exactly one weight per update")
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("weights must not all be zero")
    mean = np.add.reduce(stack * w[:, None], axis=0) / total
    return ModelParams(mean, updates[0].shape_spec)


@dataclass
class AsyncPolicy:
    """Staleness weighting for delayed updates: alpha * (delay+1)^(-a)."""

    alpha: float = 0.4
    exponent: float = 0.5
    max_delay: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.exponent < 0.0:
            raise ValueError("exponent must be non-negative")
        if self.max_delay < 0:
            raise ValueError("max_delay must be non-negative")


def staleness_weight(delay: int, policy: AsyncPolicy) -> float:
    """Down-weighting for an update that arrives `delay` rounds late."""
    if delay < 0:
        raise ValueError("delay must be non-negative")
    return policy.alpha * (delay + 1.0) ** (-policy.exponent)


def async_aggregate(
    timely: list[ModelParams],
    stale: list[tuple[ModelParams, int]],
    policy: AsyncPolicy,
) -> ModelParams:
    """Weighted mean of timely updates (weight 1) and stale ones (staleness weight)."""
    for _, delay in stale:
        if delay > policy.max_delay:
            raise ValueError(f"stale delay {delay} exceeds max_delay {policy.max_delay}")
    updates = list(timely) + [p for p, _ in stale]
    weights = [1.0] * len(timely) + [staleness_weight(d, policy) for _, d in stale]
    return fedavg_weighted(updates, weights)
