"""Flat-parameter neural networks: layout, initialization, forward passes.

Every model in this package is a single flat float64 vector of weights and
biases. ``NetworkSpec`` describes the architecture and owns the mapping
between flat indices and (weight, bias) slots; forward passes reshape the
flat vector into per-block views without copying, so optimizers can treat
the model as an opaque point in R^N.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "NetworkSpec",
    "ActivationTrace",
    "NumericOverflowError",
    "init_params",
    "mlp_forward",
    "rnn_forward",
    "softmax",
]

OUTPUT_HEADS = ("linear", "softmax", "linear-classifier")
INIT_SCHEMES = ("gaussian", "kaiming")


class NumericOverflowError(FloatingPointError):
    """A forward pass produced a non-finite value."""

    def __init__(self, kind: str, layer: str):
        super().__init__(f"non-finite output in {kind} forward pass at {layer}")
        self.kind = kind
        self.layer = layer


@dataclass(frozen=True)
class WeightBlock:
    """A dense weight matrix inside the flat parameter vector.

    ``shape`` is (fan_out, fan_in); ``src_ids`` / ``dst_ids`` are half-open
    ranges of global neuron ids for the neurons this block reads from and
    feeds into.
    """

    name: str
    offset: int
    shape: tuple[int, int]
    src_ids: tuple[int, int]
    dst_ids: tuple[int, int]

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]


@dataclass(frozen=True)
class BiasBlock:
    name: str
    offset: int
    size: int
    dst_ids: tuple[int, int]
    fan_in: int  # fan-in of the layer this bias belongs to (init scaling)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    kind "mlp": layer_sizes = (input, hidden..., output).
    kind "rnn": layer_sizes = (input dim, hidden dim, stacked layers, classes);
    a stack of simple tanh recurrent layers where each layer's hidden state at
    a timestep is the next layer's input at the same timestep, and the final
    hidden state of the last layer feeds a linear classifier.
    """

    kind: str
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_head: str = "linear"

    def __post_init__(self):
        if self.kind not in ("mlp", "rnn"):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.hidden_activation != "tanh":
            raise ValueError(f"unsupported activation {self.hidden_activation!r}")
        if self.output_head not in OUTPUT_HEADS:
            raise ValueError(f"unknown output head {self.output_head!r}")
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if self.kind == "mlp" and len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if self.kind == "rnn" and len(sizes) != 4:
            raise ValueError("rnn layer_sizes must be (input, hidden, layers, classes)")

    # -- layout ---------------------------------------------------------

    @cached_property
    def _blocks(self) -> tuple[tuple[WeightBlock, ...], tuple[BiasBlock, ...], tuple[tuple[int, ...], ...]]:
        """(weight_blocks, bias_blocks, lambda_groups).

        lambda_groups lists indices into weight_blocks whose weights share a
        common per-parameter scale: all blocks in a group feed the same
        destination neurons, so the feeding set over which activation power
        is summed is the union of the group's source ranges.
        """
        weights: list[WeightBlock] = []
        biases: list[BiasBlock] = []
        groups: list[tuple[int, ...]] = []
        off = 0
        if self.kind == "mlp":
            sizes = self.layer_sizes
            neuron_off = np.concatenate([[0], np.cumsum(sizes)])
            for layer in range(1, len(sizes)):
                fan_in, fan_out = sizes[layer - 1], sizes[layer]
                src = (int(neuron_off[layer - 1]), int(neuron_off[layer]))
                dst = (int(neuron_off[layer]), int(neuron_off[layer + 1]))
                weights.append(WeightBlock(f"W{layer}", off, (fan_out, fan_in), src, dst))
                groups.append((len(weights) - 1,))
                off += fan_out * fan_in
                biases.append(BiasBlock(f"b{layer}", off, fan_out, dst, fan_in))
                off += fan_out
        else:
            d, h, n_layers, n_classes = self.layer_sizes
            in_range = (0, d)
            for layer in range(1, n_layers + 1):
                src_in = in_range if layer == 1 else (d + (layer - 2) * h, d + (layer - 1) * h)
                dst = (d + (layer - 1) * h, d + layer * h)
                in_dim = d if layer == 1 else h
                weights.append(WeightBlock(f"W_in{layer}", off, (h, in_dim), src_in, dst))
                off += h * in_dim
                weights.append(WeightBlock(f"W_rec{layer}", off, (h, h), dst, dst))
                off += h * h
                groups.append((len(weights) - 2, len(weights) - 1))
                biases.append(BiasBlock(f"b{layer}", off, h, dst, h))
                off += h
            src = (d + (n_layers - 1) * h, d + n_layers * h)
            dst = (d + n_layers * h, d + n_layers * h + n_classes)
            weights.append(WeightBlock("W_out", off, (n_classes, h), src, dst))
            groups.append((len(weights) - 1,))
            off += n_classes * h
            biases.append(BiasBlock("b_out", off, n_classes, dst, h))
            off += n_classes
        return tuple(weights), tuple(biases), tuple(groups)

    @property
    def weight_blocks(self) -> tuple[WeightBlock, ...]:
        return self._blocks[0]

    @property
    def bias_blocks(self) -> tuple[BiasBlock, ...]:
        return self._blocks[1]

    @property
    def lambda_groups(self) -> tuple[tuple[int, ...], ...]:
        return self._blocks[2]

    @cached_property
    def param_count(self) -> int:
        w, b, _ = self._blocks
        return sum(blk.size for blk in w) + sum(blk.size for blk in b)

    @cached_property
    def neuron_count(self) -> int:
        if self.kind == "mlp":
            return int(sum(self.layer_sizes))
        d, h, n_layers, n_classes = self.layer_sizes
        return d + n_layers * h + n_classes

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @cached_property
    def param_layout(self) -> np.ndarray:
        """Structured array mapping flat index -> (role, dst neuron, src neuron).

        role 0 is a weight, role 1 a bias; src is -1 for biases. The map is a
        bijection between [0, param_count) and the network's parameter slots.
        """
        layout = np.empty(
            self.param_count,
            dtype=[("role", np.uint8), ("dst", np.int64), ("src", np.int64)],
        )
        for blk in self.weight_blocks:
            n_out, n_in = blk.shape
            dst = np.repeat(np.arange(blk.dst_ids[0], blk.dst_ids[1]), n_in)
            src = np.tile(np.arange(blk.src_ids[0], blk.src_ids[1]), n_out)
            sl = slice(blk.offset, blk.offset + blk.size)
            layout["role"][sl] = 0
            layout["dst"][sl] = dst
            layout["src"][sl] = src
        for blk in self.bias_blocks:
            sl = slice(blk.offset, blk.offset + blk.size)
            layout["role"][sl] = 1
            layout["dst"][sl] = np.arange(blk.dst_ids[0], blk.dst_ids[1])
            layout["src"][sl] = -1
        return layout

    def views(self, params: np.ndarray) -> dict[str, np.ndarray]:
        """Per-block views into the flat vector (no copies)."""
        out: dict[str, np.ndarray] = {}
        for blk in self.weight_blocks:
            out[blk.name] = params[blk.offset : blk.offset + blk.size].reshape(blk.shape)
        for blk in self.bias_blocks:
            out[blk.name] = params[blk.offset : blk.offset + blk.size]
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layer_sizes": list(self.layer_sizes),
            "hidden_activation": self.hidden_activation,
            "output_head": self.output_head,
        }

    @staticmethod
    def from_dict(d: dict) -> "NetworkSpec":
        return NetworkSpec(
            kind=d["kind"],
            layer_sizes=tuple(d["layer_sizes"]),
            hidden_activation=d.get("hidden_activation", "tanh"),
            output_head=d.get("output_head", "linear"),
        )


class ActivationTrace:
    """Accumulated per-neuron activation power from forward passes.

    sum_sq[i] holds the running sum over network evaluations of the squared
    output of neuron i (inputs included: they feed first-layer weights).
    For recurrent networks the sum also runs over timesteps within each
    sequence, while n_data counts sequences.
    """

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.sum_sq = np.zeros(spec.neuron_count)
        self.n_data = 0

    def reset(self) -> None:
        self.sum_sq[:] = 0.0
        self.n_data = 0

    def add(self, ids: tuple[int, int], values: np.ndarray) -> None:
        """Accumulate squared activations for a neuron range; values is
        (batch, n) or (batch, time, n)."""
        v = values.reshape(-1, ids[1] - ids[0])
        self.sum_sq[ids[0] : ids[1]] += np.einsum("bi,bi->i", v, v)

    def bump(self, n: int) -> None:
        self.n_data += int(n)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    z = np.atleast_2d(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def init_params(
    spec: NetworkSpec,
    scheme: str = "gaussian",
    rng: np.random.Generator | None = None,
    sigma0: float | None = None,
) -> np.ndarray:
    """Draw a fresh flat parameter vector.

    "gaussian" draws every entry from N(0, sigma0^2); sigma0 = 0 yields the
    all-zero vector. "kaiming" follows the common uniform convention,
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for each weight matrix, with biases
    drawn at their layer's bound.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng() if rng is None else rng
    if scheme == "gaussian":
        if sigma0 is None or sigma0 < 0:
            raise ValueError("gaussian init needs sigma0 >= 0")
        return rng.normal(0.0, sigma0, spec.param_count)
    params = np.empty(spec.param_count)
    for blk in spec.weight_blocks:
        bound = 1.0 / np.sqrt(blk.shape[1])
        params[blk.offset : blk.offset + blk.size] = rng.uniform(-bound, bound, blk.size)
    for blk in spec.bias_blocks:
        bound = 1.0 / np.sqrt(blk.fan_in)
        params[blk.offset : blk.offset + blk.size] = rng.uniform(-bound, bound, blk.size)
    return params


def _neuron_offsets_mlp(spec: NetworkSpec) -> list[tuple[int, int]]:
    off = np.concatenate([[0], np.cumsum(spec.layer_sizes)])
    return [(int(off[i]), int(off[i + 1])) for i in range(len(spec.layer_sizes))]


def _apply_head(z: np.ndarray, head: str) -> np.ndarray:
    if head == "softmax":
        return softmax(z)
    return z


def mlp_forward(
    spec: NetworkSpec,
    params: np.ndarray,
    x: np.ndarray,
    trace: ActivationTrace | None = None,
) -> np.ndarray:
    """Evaluate the MLP on one input (n_in,) or a batch (B, n_in).

    Hidden layers apply tanh; the output head is linear, softmax, or a
    linear classifier (identical to linear, flagged for accuracy metrics).
    Raises NumericOverflowError naming the first offending layer if the
    output is not finite.
    """
    if spec.kind != "mlp":
        raise ValueError("mlp_forward needs an mlp spec")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != spec.input_size:
        raise ValueError(f"input width {X.shape[1]} != spec input size {spec.input_size}")
    out = _mlp_batch(spec, params, X, trace)
    if not np.all(np.isfinite(out)):
        _locate_overflow_mlp(spec, params, X)
    return out[0] if single else out


def _mlp_batch(spec, params, X, trace):
    v = spec.views(params)
    n_layers = len(spec.layer_sizes) - 1
    ids = _neuron_offsets_mlp(spec)
    if trace is not None:
        trace.add(ids[0], X)
    act = X
    for layer in range(1, n_layers + 1):
        z = act @ v[f"W{layer}"].T + v[f"b{layer}"]
        if layer < n_layers:
            act = np.tanh(z)
        else:
            act = _apply_head(z, spec.output_head)
        if trace is not None:
            trace.add(ids[layer], act)
    if trace is not None:
        trace.bump(X.shape[0])
    return act


def _locate_overflow_mlp(spec, params, X):
    v = spec.views(params)
    n_layers = len(spec.layer_sizes) - 1
    act = X
    for layer in range(1, n_layers + 1):
        z = act @ v[f"W{layer}"].T + v[f"b{layer}"]
        act = np.tanh(z) if layer < n_layers else _apply_head(z, spec.output_head)
        if not np.all(np.isfinite(act)):
            raise NumericOverflowError("mlp", f"layer {layer}")
    raise NumericOverflowError("mlp", "output")  # pragma: no cover


def _rnn_sequence_batch(spec: NetworkSpec, seq) -> tuple[np.ndarray | None, np.ndarray | None, bool]:
    """Normalize sequence input to (idx, onehot, single).

    Accepts a compact index form, uint (T,) or (B, T) with entries in
    [0, input dim), or an explicit one-hot / real-valued form (T, d) or
    (B, T, d). Exactly one of idx/onehot is returned non-None.
    """
    a = np.asarray(seq)
    d = spec.layer_sizes[0]
    if np.issubdtype(a.dtype, np.integer):
        single = a.ndim == 1
        if single:
            a = a[None, :]
        if a.ndim != 2:
            raise ValueError("index-form sequences must be (T,) or (B, T)")
        if a.size and (a.min() < 0 or a.max() >= d):
            raise ValueError("sequence indices out of range")
        return a, None, single
    a = a.astype(np.float64, copy=False)
    single = a.ndim == 2
    if single:
        a = a[None, :, :]
    if a.ndim != 3 or a.shape[2] != d:
        raise ValueError(f"one-hot sequences must be (T, {d}) or (B, T, {d})")
    return None, a, single


def rnn_forward(
    spec: NetworkSpec,
    params: np.ndarray,
    seq,
    trace: ActivationTrace | None = None,
) -> np.ndarray:
    """Run the stacked recurrent net over a sequence and return class logits.

    seq is one sequence or a batch; sequences are one-hot vectors (or a
    compact integer index form meaning the same thing). Hidden states start
    at zero. Returns (classes,) for a single sequence, (B, classes) for a
    batch.
    """
    if spec.kind != "rnn":
        raise ValueError("rnn_forward needs an rnn spec")
    idx, onehot, single = _rnn_sequence_batch(spec, seq)
    logits = _rnn_batch(spec, params, idx, onehot, trace)
    if not np.all(np.isfinite(logits)):
        _locate_overflow_rnn(spec, params, idx, onehot)
    return logits[0] if single else logits


def _rnn_layer(pre: np.ndarray, w_rec: np.ndarray) -> np.ndarray:
    """tanh recurrence over pre-computed input projections (B, T, h)."""
    B, T, h = pre.shape
    out = np.empty_like(pre)
    state = np.zeros((B, h))
    w = w_rec.T
    for t in range(T):
        z = pre[:, t] + state @ w
        np.tanh(z, out=z)
        out[:, t] = z
        state = z
    return out


def _rnn_batch(spec, params, idx, onehot, trace):
    d, h, n_layers, _ = spec.layer_sizes
    v = spec.views(params)
    if idx is not None:
        series = v["W_in1"].T[idx]  # gather: (B, T, h)
    else:
        series = onehot @ v["W_in1"].T
    series += v["b1"]
    if trace is not None:
        if idx is not None:
            trace.sum_sq[0:d] += np.bincount(idx.ravel(), minlength=d).astype(np.float64)
        else:
            trace.add((0, d), onehot)
    for layer in range(1, n_layers + 1):
        series = _rnn_layer(series, v[f"W_rec{layer}"])
        if trace is not None:
            trace.add((d + (layer - 1) * h, d + layer * h), series)
        if layer < n_layers:
            series = series @ v[f"W_in{layer + 1}"].T + v[f"b{layer + 1}"]
    logits = series[:, -1] @ v["W_out"].T + v["b_out"]
    if trace is not None:
        trace.add((spec.neuron_count - spec.layer_sizes[3], spec.neuron_count), logits)
        trace.bump(series.shape[0])
    return logits


def _locate_overflow_rnn(spec, params, idx, onehot):
    d, h, n_layers, _ = spec.layer_sizes
    v = spec.views(params)
    if idx is not None:
        series = v["W_in1"].T[idx] + v["b1"]
    else:
        series = onehot @ v["W_in1"].T + v["b1"]
    for layer in range(1, n_layers + 1):
        series = _rnn_layer(series, v[f"W_rec{layer}"])
        if not np.all(np.isfinite(series)):
            raise NumericOverflowError("rnn", f"recurrent layer {layer}")
        if layer < n_layers:
            series = series @ v[f"W_in{layer + 1}"].T + v[f"b{layer + 1}"]
    raise NumericOverflowError("rnn", "classifier")
