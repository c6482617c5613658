"""Dense feed-forward network with segment-wise forward and backward passes.

Activations are stored column-per-sample: a block for a batch of ``B``
samples at a layer of width ``n`` has shape ``(n, B)``.  Layer ``l`` owns the
flat vector ``w_l = [vec(W_l) (row-major, n_out x n_in), b_l]`` of length
``(n_in + 1) * n_out``; a network's parameters are the concatenation of the
``w_l`` in layer order.  Layer indices are 1-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh")
LOSSES = ("softmax-cross-entropy", "half-squared-error")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    n_in: int
    n_out: int
    activation: str = "tanh"

    @property
    def size(self) -> int:
        return (self.n_in + 1) * self.n_out


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[Layer, ...]
    loss: str = "softmax-cross-entropy"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.n_in < 1 or layer.n_out < 1:
                raise ValueError(f"bad layer dims {layer}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer dims do not chain: {a.n_out} -> {b.n_in}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss kind {self.loss!r}")

    @classmethod
    def mlp(
        cls,
        dims,
        activation: str = "tanh",
        output_activation: str = "identity",
        loss: str = "softmax-cross-entropy",
    ) -> "NetworkSpec":
        """Fully connected net through widths ``dims`` (input first, output last)."""
        dims = list(dims)
        if len(dims) < 2:
            raise ValueError("need at least input and output widths")
        acts = [activation] * (len(dims) - 2) + [output_activation]
        return cls(tuple(Layer(i, o, a) for i, o, a in zip(dims, dims[1:], acts)), loss)

    @property
    def L(self) -> int:
        return len(self.layers)

    @property
    def n_params(self) -> int:
        return sum(layer.size for layer in self.layers)

    def layer(self, l: int) -> Layer:
        return self.layers[l - 1]

    def offset(self, l: int) -> int:
        """Start index of ``w_l`` in the full parameter vector."""
        return sum(layer.size for layer in self.layers[: l - 1])

    def layer_slice(self, l: int) -> slice:
        start = self.offset(l)
        return slice(start, start + self.layers[l - 1].size)

    def segment_slice(self, first: int, last: int) -> slice:
        """Slice of the full vector covering layers ``first..last`` inclusive."""
        return slice(self.offset(first), self.offset(last + 1))

    def segment_size(self, first: int, last: int) -> int:
        return sum(self.layer(l).size for l in range(first, last + 1))


@dataclass
class ParamSegment:
    """Weights of the contiguous layers ``first..last``."""

    first: int
    last: int
    w: np.ndarray

    def check(self, spec: NetworkSpec) -> None:
        if not 1 <= self.first <= self.last <= spec.L:
            raise ShapeError(f"bad layer range [{self.first}..{self.last}] for L={spec.L}")
        expect = spec.segment_size(self.first, self.last)
        if self.w.shape != (expect,):
            raise ShapeError(f"segment [{self.first}..{self.last}] needs {expect} weights, got {self.w.shape}")


@dataclass
class ForwardTrace:
    """Everything a later backward pass needs, including the weights used."""

    batch_id: int
    first: int
    last: int
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    weights: np.ndarray
    targets: np.ndarray | None = field(default=None, repr=False)

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


def _unpack(layer: Layer, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = layer.n_in * layer.n_out
    return w[:n].reshape(layer.n_out, layer.n_in), w[n : n + layer.n_out]


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(kind: str, g: np.ndarray, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Chain ``g = dphi/dh`` through the activation to get ``dphi/dz``."""
    if kind == "tanh":
        return g * (1.0 - h * h)
    if kind == "relu":
        return g * (z > 0.0)
    return g


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    gen = np.random.default_rng(seed)
    parts = []
    for layer in spec.layers:
        bound = np.sqrt(6.0 / (layer.n_in + layer.n_out))
        W = gen.uniform(-bound, bound, size=(layer.n_out, layer.n_in))
        parts.append(W.ravel())
        parts.append(np.zeros(layer.n_out))
    return np.concatenate(parts)


def forward_segment(
    h_in: np.ndarray,
    params: ParamSegment,
    spec: NetworkSpec,
    batch_id: int = 0,
    targets: np.ndarray | None = None,
) -> tuple[ForwardTrace, np.ndarray]:
    """Run layers ``params.first..params.last`` on the block ``h_in``.

    The returned trace holds a private copy of the weights so that the
    matching backward pass can run later even if ``params.w`` has moved on.
    """
    params.check(spec)
    h_in = np.asarray(h_in, dtype=float)
    n_in = spec.layer(params.first).n_in
    if h_in.ndim != 2 or h_in.shape[0] != n_in:
        raise ShapeError(f"layer {params.first} expects input ({n_in}, B), got {h_in.shape}")
    weights = params.w.copy()
    pre, post = [], []
    h = h_in
    pos = 0
    for l in range(params.first, params.last + 1):
        layer = spec.layer(l)
        W, b = _unpack(layer, weights[pos : pos + layer.size])
        pos += layer.size
        z = W @ h + b[:, None]
        h = _activate(layer.activation, z)
        pre.append(z)
        post.append(h)
    trace = ForwardTrace(batch_id, params.first, params.last, h_in, pre, post, weights, targets)
    return trace, h


def backward_segment(
    trace: ForwardTrace | None, upstream: np.ndarray, spec: NetworkSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate ``upstream = dphi/dh_last`` through a traced segment.

    Gradients are taken at the weights stored in the trace.

    Returns
    -------
    grad_w : ndarray
        Flat gradient for layers ``first..last`` (same layout as the weights).
    grad_in : ndarray
        ``dphi/dh_{first-1}``, the error gradient for the preceding segment.
    """
    if trace is None:
        raise KeyError("no forward trace for this batch")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != trace.output.shape:
        raise ShapeError(f"upstream gradient {upstream.shape} does not match output {trace.output.shape}")
    grads: list[np.ndarray] = []
    g = upstream
    end = trace.weights.size
    for idx in range(trace.last - trace.first, -1, -1):
        layer = spec.layer(trace.first + idx)
        start = end - layer.size
        W, _ = _unpack(layer, trace.weights[start:end])
        end = start
        h_prev = trace.post[idx - 1] if idx > 0 else trace.inputs
        dz = _activation_grad(layer.activation, g, trace.pre[idx], trace.post[idx])
        grads.append(dz.sum(axis=1))
        grads.append((dz @ h_prev.T).ravel())
        g = W.T @ dz
    grads.reverse()
    return np.concatenate(grads), g


def loss_and_output_grad(h_L: np.ndarray, targets: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient with respect to the network output.

    ``targets`` are integer labels of shape ``(B,)`` for softmax-cross-entropy
    and a real block shaped like ``h_L`` for half-squared-error.
    """
    h_L = np.asarray(h_L, dtype=float)
    B = h_L.shape[1]
    if kind == "softmax-cross-entropy":
        labels = np.asarray(targets).astype(int).ravel()
        if labels.shape != (B,):
            raise ShapeError(f"need {B} labels, got {labels.shape}")
        shifted = h_L - h_L.max(axis=0, keepdims=True)
        expz = np.exp(shifted)
        norm = expz.sum(axis=0)
        cols = np.arange(B)
        loss = float(np.mean(np.log(norm) - shifted[labels, cols]))
        grad = expz / norm
        grad[labels, cols] -= 1.0
        return loss, grad / B
    if kind == "half-squared-error":
        targets = np.asarray(targets, dtype=float)
        if targets.shape != h_L.shape:
            raise ShapeError(f"targets {targets.shape} do not match outputs {h_L.shape}")
        diff = h_L - targets
        return float(0.5 * np.sum(diff * diff) / B), diff / B
    raise ValueError(f"unknown loss kind {kind!r}")


def encode_targets(spec: NetworkSpec, labels: np.ndarray) -> np.ndarray:
    """Labels as the loss expects them: raw for cross-entropy, one-hot columns otherwise."""
    labels = np.asarray(labels)
    if spec.loss == "softmax-cross-entropy":
        return labels.astype(int)
    onehot = np.zeros((spec.layers[-1].n_out, labels.size))
    onehot[labels.astype(int), np.arange(labels.size)] = 1.0
    return onehot


# --- monolithic reference path -------------------------------------------


def forward(spec: NetworkSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Whole-network forward pass, kept separate from the segment engine."""
    h = np.asarray(X, dtype=float)
    for l, layer in enumerate(spec.layers, start=1):
        W, b = _unpack(layer, params[spec.layer_slice(l)])
        h = _activate(layer.activation, W @ h + b[:, None])
    return h


def loss(spec: NetworkSpec, params: np.ndarray, X: np.ndarray, targets: np.ndarray) -> float:
    return loss_and_output_grad(forward(spec, params, X), targets, spec.loss)[0]


def full_gradient(spec: NetworkSpec, params: np.ndarray, X: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient by one monolithic backprop."""
    zs, hs = [], [np.asarray(X, dtype=float)]
    for l, layer in enumerate(spec.layers, start=1):
        W, b = _unpack(layer, params[spec.layer_slice(l)])
        zs.append(W @ hs[-1] + b[:, None])
        hs.append(_activate(layer.activation, zs[-1]))
    value, g = loss_and_output_grad(hs[-1], targets, spec.loss)
    grad = np.empty(spec.n_params)
    for l in range(spec.L, 0, -1):
        layer = spec.layer(l)
        sl = spec.layer_slice(l)
        W, _ = _unpack(layer, params[sl])
        dz = _activation_grad(layer.activation, g, zs[l - 1], hs[l])
        n = layer.n_in * layer.n_out
        grad[sl.start : sl.start + n] = (dz @ hs[l - 1].T).ravel()
        grad[sl.start + n : sl.stop] = dz.sum(axis=1)
        g = W.T @ dz
    return value, grad


def per_sample_grad_norms(spec: NetworkSpec, params: np.ndarray, X: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Euclidean norm of each sample's own loss gradient, vectorised over the batch.

    For one sample the layer gradient is ``dz h_prev^T`` plus ``dz`` for the
    bias, whose squared norm factors as ``|dz|^2 (|h_prev|^2 + 1)``.
    """
    X = np.asarray(X, dtype=float)
    B = X.shape[1]
    zs, hs = [], [X]
    for l, layer in enumerate(spec.layers, start=1):
        W, b = _unpack(layer, params[spec.layer_slice(l)])
        zs.append(W @ hs[-1] + b[:, None])
        hs.append(_activate(layer.activation, zs[-1]))
    _, g = loss_and_output_grad(hs[-1], targets, spec.loss)
    g = g * B
    sq = np.zeros(B)
    for l in range(spec.L, 0, -1):
        layer = spec.layer(l)
        W, _ = _unpack(layer, params[spec.layer_slice(l)])
        dz = _activation_grad(layer.activation, g, zs[l - 1], hs[l])
        sq += np.sum(dz * dz, axis=0) * (np.sum(hs[l - 1] ** 2, axis=0) + 1.0)
        g = W.T @ dz
    return np.sqrt(sq)


def finite_diff_check(
    spec: NetworkSpec,
    params: np.ndarray,
    X: np.ndarray,
    targets: np.ndarray,
    epsilon: float = 1e-6,
) -> float:
    """Max relative error between backprop and central differences.

    The per-coordinate error is ``|a - f| / max(1, |a|, |f|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params = np.array(params, dtype=float)
    _, analytic = full_gradient(spec, params, X, targets)
    worst = 0.0
    for i in range(params.size):
        saved = params[i]
        params[i] = saved + epsilon
        up = loss(spec, params, X, targets)
        params[i] = saved - epsilon
        down = loss(spec, params, X, targets)
        params[i] = saved
        fd = (up - down) / (2.0 * epsilon)
        a = analytic[i]
        worst = max(worst, abs(a - fd) / max(1.0, abs(a), abs(fd)))
    return worst
