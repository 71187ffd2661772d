"""Multilayer perceptron equalizer core.

Hand-written forward/backward passes (no autodiff), cross-entropy loss,
He-style initialization, JSON checkpoints, and floating-point multiplication
accounting with closed-form counterparts.

Layer sizes are ``[input_dim, R, ..., R, n_classes]`` with ``num_layers``
entries; hidden layers use ReLU (derivative 0 at exactly 0) and the output
layer softmax.  The output-layer gradient is fused as ``probs - target``,
charged as ``n_classes`` multiplications per sample in the accounting.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend
from .errors import ShapeError, UsageError

LOG_FLOOR = 1e-12
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Shape of the equalizer network."""

    input_dim: int
    hidden_width: int
    num_layers: int
    num_classes: int

    def __post_init__(self):
        if self.input_dim < 1:
            raise UsageError(f"input_dim must be positive, got {self.input_dim}")
        if self.hidden_width < 1:
            raise UsageError(f"hidden_width must be positive, got {self.hidden_width}")
        if self.num_layers < 3:
            raise UsageError(f"num_layers must be >= 3, got {self.num_layers}")
        if self.num_classes < 2:
            raise UsageError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def layer_sizes(self):
        hidden = [self.hidden_width] * (self.num_layers - 2)
        return [self.input_dim, *hidden, self.num_classes]

    @property
    def weight_shapes(self):
        sizes = self.layer_sizes
        return [(sizes[k + 1], sizes[k]) for k in range(self.num_layers - 1)]

    def forward_mults(self) -> int:
        return count_forward_mults(self.input_dim, self.hidden_width,
                                   self.num_layers, self.num_classes)

    def backward_mults(self) -> int:
        return count_backward_mults(self.input_dim, self.hidden_width,
                                    self.num_layers, self.num_classes)


def _frozen_array(a, shape, what):
    arr = np.array(a, dtype=np.float64)
    if arr.shape != shape:
        raise ShapeError(f"{what}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{what}: entries must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Mlp:
    """Immutable network parameters: one weight matrix and bias per layer gap."""

    arch: Architecture
    weights: tuple
    biases: tuple

    def __post_init__(self):
        shapes = self.arch.weight_shapes
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ShapeError(
                f"expected {len(shapes)} weight/bias pairs, got "
                f"{len(self.weights)}/{len(self.biases)}")
        ws = tuple(_frozen_array(w, s, f"weights[{k}]")
                   for k, (w, s) in enumerate(zip(self.weights, shapes)))
        bs = tuple(_frozen_array(b, (s[0],), f"biases[{k}]")
                   for k, (b, s) in enumerate(zip(self.biases, shapes)))
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)


class MultCounter:
    """Accumulates floating-point multiplication counts."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


@dataclass(frozen=True)
class ForwardCache:
    """Per-sample activations: pre_acts[k]/post_acts[k] per layer, output probs."""

    pre_acts: tuple
    post_acts: tuple
    probs: np.ndarray


@dataclass(frozen=True)
class BatchForwardCache:
    """Batched activations; rows are samples."""

    pre_acts: tuple
    post_acts: tuple
    probs: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class Gradients:
    """Parameter gradients, shape-congruent with the Mlp they came from."""

    d_weights: tuple
    d_biases: tuple


def relu(x):
    """max(x, 0), elementwise on arrays."""
    return np.maximum(x, 0.0)


def softmax(v):
    """Stable softmax (max-subtraction); rows sum to 1."""
    v = np.asarray(v, dtype=np.float64)
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(o, y) -> float:
    """-sum_j y_j ln(o_j) with probabilities floored at LOG_FLOOR."""
    o = np.asarray(o, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if o.shape != y.shape:
        raise ShapeError(f"probability/target shapes differ: {o.shape} vs {y.shape}")
    return float(-(y * np.log(np.maximum(o, LOG_FLOOR))).sum())


def _charge_forward(counter, mlp, n):
    if counter is not None:
        counter.add(n * sum(w.shape[0] * w.shape[1] for w in mlp.weights))


def _charge_backward_params(counter, mlp, n):
    if counter is not None:
        # Fused output gradient: M per sample; per matrix: weight-gradient
        # outer product plus the propagation matvec; per hidden layer the
        # elementwise ReLU-derivative product.
        total = mlp.arch.num_classes
        total += sum(2 * w.shape[0] * w.shape[1] for w in mlp.weights)
        total += sum(w.shape[1] for w in mlp.weights[1:])
        counter.add(n * total)


def _charge_backward_input(counter, mlp, n):
    if counter is not None:
        total = mlp.arch.num_classes
        total += sum(w.shape[0] * w.shape[1] for w in mlp.weights)
        total += sum(w.shape[1] for w in mlp.weights[1:])
        counter.add(n * total)


def forward_batch(mlp: Mlp, x, counter: MultCounter | None = None) -> BatchForwardCache:
    """Forward pass over a batch of feature rows."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.arch.input_dim:
        raise ShapeError(
            f"feature batch must be (N, {mlp.arch.input_dim}), got {x.shape}")
    pre, post, probs = backend.batch_forward(mlp.weights, mlp.biases, x)
    _charge_forward(counter, mlp, x.shape[0])
    return BatchForwardCache(tuple(pre), tuple(post), probs)


def forward(mlp: Mlp, v, counter: MultCounter | None = None) -> ForwardCache:
    """Forward pass for a single feature vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mlp.arch.input_dim,):
        raise ShapeError(f"feature must have shape ({mlp.arch.input_dim},), got {v.shape}")
    cache = forward_batch(mlp, v[np.newaxis, :], counter)
    return ForwardCache(tuple(a[0] for a in cache.pre_acts),
                        tuple(h[0] for h in cache.post_acts),
                        cache.probs[0])


def _check_cache(mlp: Mlp, cache: BatchForwardCache):
    if len(cache.post_acts) != len(mlp.weights):
        raise ShapeError("cache does not match model depth")
    for k, w in enumerate(mlp.weights):
        if cache.post_acts[k].shape[1] != w.shape[1]:
            raise ShapeError(
                f"cache layer {k} width {cache.post_acts[k].shape[1]} does not "
                f"match weight shape {w.shape}")
    if cache.probs.shape[1] != mlp.arch.num_classes:
        raise ShapeError("cache output width does not match num_classes")


def backward_batch(mlp: Mlp, cache: BatchForwardCache, targets_onehot,
                   counter: MultCounter | None = None) -> Gradients:
    """Gradients of the mean cross-entropy over the batch.

    Uses the fused softmax/cross-entropy output gradient
    ``(probs - targets) / N``.
    """
    _check_cache(mlp, cache)
    targets = np.asarray(targets_onehot, dtype=np.float64)
    if targets.shape != cache.probs.shape:
        raise ShapeError(
            f"targets must be {cache.probs.shape}, got {targets.shape}")
    n = cache.n_samples
    g_last = (cache.probs - targets) / n
    dws, dbs, _ = backend.batch_backward_params(mlp.weights, cache.post_acts, g_last)
    _charge_backward_params(counter, mlp, n)
    return Gradients(tuple(dws), tuple(dbs))


def backward(mlp: Mlp, cache: ForwardCache, target,
             counter: MultCounter | None = None) -> Gradients:
    """Cross-entropy gradients for one sample given its forward cache."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (mlp.arch.num_classes,):
        raise ShapeError(
            f"target must have shape ({mlp.arch.num_classes},), got {target.shape}")
    batch_cache = BatchForwardCache(
        tuple(a[np.newaxis, :] for a in cache.pre_acts),
        tuple(h[np.newaxis, :] for h in cache.post_acts),
        cache.probs[np.newaxis, :])
    return backward_batch(mlp, batch_cache, target[np.newaxis, :], counter)


def input_gradient_batch(mlp: Mlp, cache: BatchForwardCache, g_last,
                         counter: MultCounter | None = None) -> np.ndarray:
    """Backpropagate an output-layer gradient to the input rows."""
    _check_cache(mlp, cache)
    g_last = np.asarray(g_last, dtype=np.float64)
    if g_last.shape != cache.probs.shape:
        raise ShapeError(f"g_last must be {cache.probs.shape}, got {g_last.shape}")
    dx = backend.batch_backward_input(mlp.weights, cache.post_acts, g_last)
    _charge_backward_input(counter, mlp, cache.n_samples)
    return dx


def count_forward_mults(input_dim: int, hidden_width: int,
                        num_layers: int, num_classes: int) -> int:
    """Closed-form multiplications for one forward pass."""
    if num_layers < 3:
        raise UsageError(f"num_layers must be >= 3, got {num_layers}")
    r = hidden_width
    return input_dim * r + (num_layers - 3) * r * r + r * num_classes


def count_backward_mults(input_dim: int, hidden_width: int,
                         num_layers: int, num_classes: int) -> int:
    """Closed-form multiplications for one backward pass."""
    fwd = count_forward_mults(input_dim, hidden_width, num_layers, num_classes)
    return 2 * fwd + (num_layers - 2) * hidden_width + num_classes


def init_weights(arch: Architecture, seed: int) -> Mlp:
    """He-initialized weights (zero-mean Gaussian, variance 2/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for (n_out, n_in) in arch.weight_shapes:
        std = np.sqrt(2.0 / n_in)
        weights.append(rng.normal(0.0, std, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return Mlp(arch, tuple(weights), tuple(biases))


def save_checkpoint(mlp: Mlp, path):
    """Write a JSON checkpoint; float64 values round-trip exactly."""
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": {
            "input_dim": mlp.arch.input_dim,
            "R": mlp.arch.hidden_width,
            "l_NN": mlp.arch.num_layers,
            "M": mlp.arch.num_classes,
        },
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path) -> Mlp:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise UsageError(f"unsupported checkpoint format_version: {version}")
    a = doc["arch"]
    arch = Architecture(input_dim=a["input_dim"], hidden_width=a["R"],
                        num_layers=a["l_NN"], num_classes=a["M"])
    return Mlp(arch, tuple(np.array(w) for w in doc["weights"]),
               tuple(np.array(b) for b in doc["biases"]))
