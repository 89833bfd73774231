"""Dense MLP classifier with exact analytic gradients and flat parameter views.

The network is a stack of fully connected layers with ReLU on every hidden
layer and raw logits at the output; the loss is mean softmax cross-entropy.
All parameters are 64-bit floats. ``flatten``/``unflatten`` give the flat,
ordered parameter vector that aggregation and the replacement attacks
operate on.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .backends import mlp_forward, mlp_loss_grads
from .errors import FormatError, LayoutError, NumericError, ShapeError


class LayoutEntry(NamedTuple):
    layer: int
    kind: str  # "weight" or "bias"
    shape: tuple


@dataclass
class ParamVector:
    """Flat, ordered view of all model parameters.

    Ordering: layer 0 weights row-major, layer 0 biases, layer 1 weights, ...
    """

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = sum(int(np.prod(e.shape)) for e in self.layout)
        if self.values.ndim != 1 or self.values.size != expected:
            raise LayoutError(
                f"expected {expected} values for layout, got {self.values.size}"
            )

    def copy(self):
        return ParamVector(self.values.copy(), self.layout)


@dataclass
class MlpModel:
    layer_sizes: tuple
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ShapeError("need at least input and output sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out_d, in_d = self.layer_sizes[k + 1], self.layer_sizes[k]
            if w.shape != (out_d, in_d) or b.shape != (out_d,):
                raise ShapeError(
                    f"layer {k}: weight {w.shape} / bias {b.shape} inconsistent "
                    f"with sizes {in_d}->{out_d}"
                )

    @property
    def class_count(self):
        return self.layer_sizes[-1]

    def copy(self):
        return MlpModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass
class Batch:
    inputs: np.ndarray  # n x d, values in [0, 1]
    labels: np.ndarray  # n class indices

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ShapeError("inputs must be 2-D and labels 1-D")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeError("inputs and labels disagree on batch size")
        if self.inputs.size and (
            self.inputs.min() < 0.0 or self.inputs.max() > 1.0
        ):
            raise ValueError("batch inputs must lie in [0, 1]")

    def __len__(self):
        return self.inputs.shape[0]


def init_model(layer_sizes, seed):
    """He-style random init, deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for in_d, out_d in zip(layer_sizes[:-1], layer_sizes[1:]):
        scale = np.sqrt(2.0 / in_d)
        weights.append(rng.normal(0.0, scale, size=(out_d, in_d)))
        biases.append(np.zeros(out_d))
    return MlpModel(tuple(layer_sizes), weights, biases)


def forward(model, inputs):
    """Logits for a batch of inputs, shape n x class_count."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != model.layer_sizes[0]:
        raise ShapeError(
            f"inputs have {inputs.shape} but model expects width {model.layer_sizes[0]}"
        )
    return np.asarray(mlp_forward(inputs, model.weights, model.biases))


def loss_and_grads(model, batch):
    """Mean cross-entropy loss with gradients w.r.t. parameters and inputs."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.inputs.shape[1] != model.layer_sizes[0]:
        raise ShapeError("batch width does not match model input size")
    if batch.labels.max(initial=0) >= model.class_count or batch.labels.min(initial=0) < 0:
        raise ValueError("label out of range for model class count")
    loss, gw, gb, gx = mlp_loss_grads(
        batch.inputs, batch.labels, model.weights, model.biases
    )
    flat = np.concatenate(
        [np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(gw, gb)]
    )
    return float(loss), ParamVector(flat, model_layout(model)), np.asarray(gx)


def model_layout(model):
    entries = []
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        entries.append(LayoutEntry(k, "weight", w.shape))
        entries.append(LayoutEntry(k, "bias", b.shape))
    return tuple(entries)


def flatten(model):
    flat = np.concatenate(
        [
            np.concatenate([w.ravel(), b.ravel()])
            for w, b in zip(model.weights, model.biases)
        ]
    )
    return ParamVector(flat, model_layout(model))


def unflatten(layout, values):
    values = np.asarray(values, dtype=np.float64)
    expected = sum(int(np.prod(e.shape)) for e in layout)
    if values.ndim != 1 or values.size != expected:
        raise LayoutError(f"expected {expected} values, got {values.size}")

    weights, biases = {}, {}
    pos = 0
    for entry in layout:
        n = int(np.prod(entry.shape))
        block = values[pos : pos + n].reshape(entry.shape).copy()
        pos += n
        if entry.kind == "weight":
            weights[entry.layer] = block
        elif entry.kind == "bias":
            biases[entry.layer] = block
        else:
            raise LayoutError(f"unknown layout kind {entry.kind!r}")
    layers = sorted(weights)
    if layers != sorted(biases) or layers != list(range(len(layers))):
        raise LayoutError("layout must pair a weight and a bias per layer")
    sizes = [weights[0].shape[1]] + [weights[k].shape[0] for k in layers]
    return MlpModel(
        tuple(sizes), [weights[k] for k in layers], [biases[k] for k in layers]
    )


def sgd_step(model, param_grads, lr):
    """One plain SGD step: theta <- theta - lr * grad."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    if param_grads.layout != model_layout(model):
        raise LayoutError("gradient layout does not match model")
    if not np.isfinite(param_grads.values).all():
        raise NumericError("non-finite gradient")
    new_values = flatten(model).values - lr * param_grads.values
    return unflatten(param_grads.layout, new_values)


def predict(model, inputs):
    """Argmax class per row; ties broken toward the lowest class index."""
    return np.argmax(forward(model, inputs), axis=1)


def accuracy(model, batch):
    if len(batch) == 0:
        raise ValueError("empty batch")
    return float(np.mean(predict(model, batch.inputs) == batch.labels))


CHECKPOINT_HEADER = "fedarena-model v1"


def save_checkpoint(model, path):
    """Text checkpoint: header, layout lines, then one decimal value per line.

    Values use shortest round-trip formatting so load is bit-exact.
    """
    pv = flatten(model)
    with open(path, "w") as f:
        f.write(CHECKPOINT_HEADER + "\n")
        for e in pv.layout:
            if e.kind == "weight":
                f.write(f"layer {e.layer} weight {e.shape[0]} {e.shape[1]}\n")
            else:
                f.write(f"layer {e.layer} bias {e.shape[0]}\n")
        for v in pv.values:
            f.write(repr(float(v)) + "\n")


def load_checkpoint(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise FormatError(f"{path}: line 1: expected header {CHECKPOINT_HEADER!r}")
    entries = []
    i = 1
    while i < len(lines) and lines[i].startswith("layer "):
        parts = lines[i].split()
        try:
            layer = int(parts[1])
            kind = parts[2]
            if kind == "weight":
                shape = (int(parts[3]), int(parts[4]))
            elif kind == "bias":
                shape = (int(parts[3]),)
            else:
                raise ValueError(kind)
        except (IndexError, ValueError):
            raise FormatError(f"{path}: line {i + 1}: bad layout line {lines[i]!r}")
        entries.append(LayoutEntry(layer, kind, shape))
        i += 1
    layout = tuple(entries)
    expected = sum(int(np.prod(e.shape)) for e in layout)
    raw = [ln for ln in lines[i:] if ln.strip()]
    if len(raw) != expected:
        raise FormatError(
            f"{path}: line {i + 1}: expected {expected} values, found {len(raw)}"
        )
    try:
        values = np.array([float(v) for v in raw], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: bad value: {exc}")
    return unflatten(layout, values)
