"""Loss functions and classification accuracy.

Conventions, fixed once for every oracle in the test suite:
mean-squared grid losses average over grid points; the one-hot MSE sums the
squared error over output components and averages over examples; cross
entropy is the mean of -log p(correct class). Large evaluations run in
fixed-size chunks so the reduction order never depends on batch size.
"""
from __future__ import annotations

import numpy as np

from .data import Dataset
from .networks import ActivationTrace, NetworkSpec, mlp_forward, rnn_forward
from .tasks import GridTask

__all__ = [
    "mse_values",
    "grid_predictions",
    "mse_grid_loss",
    "pseudo_loss",
    "mse_onehot_loss",
    "cross_entropy_loss",
    "classification_accuracy",
    "onehot_mse_from_probs",
    "cross_entropy_from_logits",
    "accuracy_from_outputs",
    "labels_to_onehot",
]

CHUNK = 4096
RNN_CHUNK = 128
LOG_P_FLOOR = np.log(1e-300)


def mse_values(pred: np.ndarray, target: np.ndarray) -> float:
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


def grid_predictions(
    spec: NetworkSpec,
    params: np.ndarray,
    task: GridTask,
    trace: ActivationTrace | None = None,
) -> np.ndarray:
    """Network outputs f_x(theta_k) on the task grid, shape (K,)."""
    if spec.input_size != 1 or spec.output_size != 1:
        raise ValueError("grid tasks need a 1-input, 1-output network")
    out = mlp_forward(spec, params, task.thetas[:, None], trace)
    return out[:, 0]


def mse_grid_loss(
    spec: NetworkSpec,
    params: np.ndarray,
    task: GridTask,
    trace: ActivationTrace | None = None,
) -> float:
    return mse_values(grid_predictions(spec, params, task, trace), task.target_values)


def pseudo_loss(spec: NetworkSpec, params: np.ndarray, task: GridTask) -> float:
    """Mean-squared difference between the net and the task's low-frequency
    auxiliary component. Diagnostic only; never a training signal."""
    return mse_values(grid_predictions(spec, params, task), task.aux_values)


def labels_to_onehot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def onehot_mse_from_probs(probs: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """Per-example sum over components of (p - y)^2, averaged over examples."""
    y = labels_to_onehot(labels, n_classes)
    d = probs - y
    return float(np.sum(d * d) / len(labels))


def cross_entropy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(_logp_correct(logits, labels) * -1.0))


def _logp_correct(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    return np.maximum(logp[np.arange(len(labels)), labels], LOG_P_FLOOR)


def accuracy_from_outputs(outputs: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax matches; ties resolve to the lowest class index."""
    return float(np.mean(np.argmax(outputs, axis=1) == labels))


def _forward_dataset(spec, params, inputs, trace):
    """Chunked forward pass over a whole input set; fixed chunk sizes keep
    the reduction order independent of how callers batch their data."""
    if spec.kind == "mlp":
        chunk = CHUNK
        fwd = mlp_forward
    else:
        chunk = RNN_CHUNK
        fwd = rnn_forward
    outs = [fwd(spec, params, inputs[i : i + chunk], trace) for i in range(0, len(inputs), chunk)]
    return outs[0] if len(outs) == 1 else np.concatenate(outs, axis=0)


def mse_onehot_loss(
    spec: NetworkSpec,
    params: np.ndarray,
    data: Dataset,
    trace: ActivationTrace | None = None,
) -> float:
    if spec.output_head != "softmax":
        raise ValueError("one-hot MSE needs a softmax head")
    if spec.output_size != data.one_hot_dim:
        raise ValueError("output size != one_hot_dim")
    probs = _forward_dataset(spec, params, data.inputs, trace)
    return onehot_mse_from_probs(probs, data.labels, data.one_hot_dim)


def cross_entropy_loss(
    spec: NetworkSpec,
    params: np.ndarray,
    data: Dataset,
    trace: ActivationTrace | None = None,
) -> float:
    if spec.output_head != "linear-classifier":
        raise ValueError("cross entropy needs a linear-classifier head (logits)")
    logits = _forward_dataset(spec, params, data.inputs, trace)
    return cross_entropy_from_logits(logits, data.labels)


def classification_accuracy(spec: NetworkSpec, params: np.ndarray, data: Dataset) -> float:
    if spec.output_head not in ("linear-classifier", "softmax"):
        raise ValueError("accuracy needs a classifier or softmax head")
    outputs = _forward_dataset(spec, params, data.inputs, trace=None)
    return accuracy_from_outputs(outputs, data.labels)
