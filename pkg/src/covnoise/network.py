"""Bias-free feed-forward classifier with softmax / negative log-likelihood.

Layer i computes ``z_i = W_i a_{i-1}`` and ``a_i = phi(z_i)`` for hidden layers;
the last pre-activation is the logit vector. Parameters are flattened layer by
layer, each weight matrix in column-major order, so that the gradient of layer
i, ``g_i a_{i-1}^T``, maps onto a contiguous block.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadLabel, DimMismatch, EmptyBatch, ShapeMismatch

ACTIVATIONS = ("relu", "tanh")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_deriv(name, z):
    if name == "relu":
        return (z > 0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


@dataclass(frozen=True, eq=False)
class Mlp:
    weights: tuple
    activation: str = "relu"

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        if not ws:
            raise ShapeMismatch("an Mlp needs at least one layer")
        for w in ws:
            if w.ndim != 2:
                raise ShapeMismatch("weight matrices must be 2-D")
        for lower, upper in zip(ws, ws[1:]):
            if upper.shape[1] != lower.shape[0]:
                raise ShapeMismatch(f"layer shapes {lower.shape} -> {upper.shape} do not compose")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        object.__setattr__(self, "weights", ws)

    @property
    def shapes(self):
        return tuple(w.shape for w in self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def num_classes(self):
        return self.weights[-1].shape[0]

    @property
    def param_dim(self):
        return sum(r * c for r, c in self.shapes)

    def layer_slices(self):
        out, off = [], 0
        for r, c in self.shapes:
            out.append(slice(off, off + r * c))
            off += r * c
        return out

    def with_params(self, v):
        return unflatten(self.shapes, v, self.activation)


def init_mlp(sizes, rng, activation="relu", scale=1.0):
    """Gaussian init with std ``scale / sqrt(fan_in)``; ``sizes`` = [in, hidden..., classes]."""
    ws = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        ws.append(rng.normal(fan_out * fan_in).reshape(fan_out, fan_in) * (scale / np.sqrt(fan_in)))
    return Mlp(tuple(ws), activation)


def flatten(mlp):
    return np.concatenate([w.ravel(order="F") for w in mlp.weights])


def unflatten(shapes, v, activation="relu"):
    v = np.asarray(v, dtype=np.float64)
    total = sum(r * c for r, c in shapes)
    if v.shape != (total,):
        raise DimMismatch(f"parameter vector has shape {v.shape}, expected ({total},)")
    ws, off = [], 0
    for r, c in shapes:
        ws.append(v[off : off + r * c].reshape((r, c), order="F").copy())
        off += r * c
    return Mlp(tuple(ws), activation)


@dataclass(frozen=True, eq=False)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.labels)
        if x.shape[0] == 0:
            raise EmptyBatch("batch has no samples")
        if y.shape != (x.shape[0],):
            raise ShapeMismatch(f"{x.shape[0]} inputs but labels have shape {y.shape}")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise BadLabel("labels must be integers")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return Batch(self.inputs[idx], self.labels[idx])


@dataclass(frozen=True, eq=False)
class ForwardCache:
    activations: tuple  # a_0 .. a_{L-1}: the input of each layer
    preactivations: tuple  # z_1 .. z_L


def _check_input(mlp, x):
    if x.shape[-1] != mlp.in_dim:
        raise ShapeMismatch(f"input has {x.shape[-1]} features, network expects {mlp.in_dim}")


def _forward(mlp, X):
    acts, pre = [X], []
    a = X
    last = len(mlp.weights) - 1
    for i, w in enumerate(mlp.weights):
        z = a @ w.T
        pre.append(z)
        if i < last:
            a = _act(mlp.activation, z)
            acts.append(a)
    return pre[-1], ForwardCache(tuple(acts), tuple(pre))


def forward(mlp, x):
    """Logits and cache for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("forward takes a single input vector; use forward_batch for matrices")
    _check_input(mlp, x)
    logits, cache = _forward(mlp, x[None, :])
    return logits[0], ForwardCache(
        tuple(a[0] for a in cache.activations), tuple(z[0] for z in cache.preactivations)
    )


def forward_batch(mlp, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_input(mlp, X)
    return _forward(mlp, X)


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    m = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def nll_loss(logits, label):
    logits = np.asarray(logits, dtype=np.float64)
    if not (float(label).is_integer() and 0 <= label < logits.shape[-1]):
        raise BadLabel(f"label {label} outside [0, {logits.shape[-1]})")
    return float(-log_softmax(logits)[int(label)])


def _check_labels(mlp, labels):
    if labels.size and (labels.min() < 0 or labels.max() >= mlp.num_classes):
        raise BadLabel(f"labels must lie in [0, {mlp.num_classes})")


def per_sample_losses(mlp, batch):
    _check_labels(mlp, batch.labels)
    logits, _ = forward_batch(mlp, batch.inputs)
    return -log_softmax(logits)[np.arange(len(batch)), batch.labels]


def mean_loss(mlp, batch):
    return float(np.mean(per_sample_losses(mlp, batch)))


@dataclass(frozen=True, eq=False)
class PerExampleGrads:
    matrix: np.ndarray  # (n, d); row i = grad of loss_i, flattened
    layer_inputs: tuple = None  # a_{i-1}, each (n, in_i)
    layer_deltas: tuple = None  # g_i = d loss / d z_i, each (n, out_i)

    @property
    def count(self):
        return self.matrix.shape[0]

    @property
    def dim(self):
        return self.matrix.shape[1]

    def mean(self):
        return np.mean(self.matrix, axis=0)


def backprop(mlp, batch):
    """Per-layer inputs and pre-activation derivatives of each sample's NLL."""
    _check_labels(mlp, batch.labels)
    logits, cache = forward_batch(mlp, batch.inputs)
    n = len(batch)
    delta = softmax(logits)
    delta[np.arange(n), batch.labels] -= 1.0
    deltas = [None] * len(mlp.weights)
    deltas[-1] = delta
    for i in range(len(mlp.weights) - 1, 0, -1):
        delta = (delta @ mlp.weights[i]) * _act_deriv(mlp.activation, cache.preactivations[i - 1])
        deltas[i - 1] = delta
    return cache.activations, tuple(deltas)


def per_example_gradients(mlp, batch):
    inputs, deltas = backprop(mlp, batch)
    n = len(batch)
    blocks = []
    for a, g in zip(inputs, deltas):
        # column-major vec of g a^T: index j * out + i holds g_i a_j
        blocks.append((a[:, :, None] * g[:, None, :]).reshape(n, -1))
    return PerExampleGrads(np.concatenate(blocks, axis=1), tuple(inputs), tuple(deltas))


def loss_and_grad_fn(template, batch):
    """Closure theta -> (mean loss, gradient) at the template's architecture."""

    def fn(theta):
        m = template.with_params(theta)
        grads = per_example_gradients(m, batch)
        return mean_loss(m, batch), grads.mean()

    return fn
