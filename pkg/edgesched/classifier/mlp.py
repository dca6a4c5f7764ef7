"""
Fully connected pre-classifier written directly against numpy.

Nine dense layers by default: the input layer, seven hidden-to-hidden layers
and the output layer. All but the last use ReLU; the last uses softmax. Trained with Adam on categorical cross-entropy against
label-smoothed one-hot targets.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import TrainingError
from ..features import FeatureVector, NormStats, normalize
from ..utils.json_utils import read_json, write_json
from .labels import LabeledSet

logger = logging.getLogger(__name__)

MODEL_FORMAT = "edgesched-mlp/1"
GRADCHECK_STEP = 1e-5
GRADCHECK_FLOOR = 1e-6


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(default=8, gt=0)
    learning_rate: float = Field(default=0.001, gt=0.0)
    beta1: float = Field(default=0.9, gt=0.0, lt=1.0)
    beta2: float = Field(default=0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(default=1e-7, gt=0.0)
    label_smoothing: float = Field(default=0.05, ge=0.0, lt=1.0)
    epochs: int = Field(default=300, ge=0)
    hidden_width: int = Field(default=128, gt=0)
    depth: int = Field(default=9, ge=2)
    seed: int = 0

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def smooth_targets(y: np.ndarray, n_classes: int, smoothing: float) -> np.ndarray:
    """(1 - s) * onehot + s / K: the smoothing mass s is spread uniformly over all K classes."""
    onehot = np.zeros((len(y), n_classes), dtype=np.float64)
    onehot[np.arange(len(y)), y] = 1.0
    return (1.0 - smoothing) * onehot + smoothing / n_classes


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class MLPModel:
    """Weights, biases and bookkeeping of a trained (or freshly initialized) classifier."""

    def __init__(
        self,
        weights: List[np.ndarray],
        biases: List[np.ndarray],
        labels: Sequence[str],
        norm_stats: Optional[NormStats] = None,
        config_hash: str = "",
        history: Optional[List[Dict[str, float]]] = None,
        evaluation: Optional[dict] = None,
    ):
        if len(weights) != len(biases):
            raise ValueError("weights and biases must have the same number of layers")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.labels = list(labels)
        self.norm_stats = norm_stats
        self.config_hash = config_hash
        self.history = list(history or [])
        self.evaluation = dict(evaluation or {})

    @classmethod
    def initialize(cls, n_inputs: int, labels: Sequence[str], cfg: TrainConfig, rng: np.random.Generator):
        """He-uniform weights (limit sqrt(6 / fan_in)) and zero biases."""
        sizes = [n_inputs] + [cfg.hidden_width] * (cfg.depth - 1) + [len(labels)]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out, dtype=np.float64))
        return cls(weights, biases, labels, config_hash=cfg.config_hash())

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        return [tuple(w.shape) for w in self.weights]

    def parameters(self) -> List[np.ndarray]:
        """Weight and bias arrays interleaved, layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x: np.ndarray):
        """Return (logits, pre-activations of the ReLU layers, layer inputs)."""
        inputs, pre = [], []
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            a = np.maximum(z, 0.0)
        inputs.append(a)
        logits = a @ self.weights[-1] + self.biases[-1]
        return logits, pre, inputs

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_inputs:
            raise TrainingError(
                f"input has {x.shape[1]} features, model expects {self.n_inputs}",
                payload={"expected": self.n_inputs, "got": int(x.shape[1])},
            )
        return _softmax(self.forward(x)[0])

    def loss_and_grads(self, x: np.ndarray, targets: np.ndarray):
        """Mean smoothed cross-entropy over the batch and its gradients (same order as parameters())."""
        logits, pre, inputs = self.forward(x)
        loss = float(-(targets * _log_softmax(logits)).sum(axis=1).mean())
        delta = (_softmax(logits) - targets) / x.shape[0]

        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = inputs[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0.0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend([gw, gb])
        return loss, grads

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "layer_shapes": [list(s) for s in self.layer_shapes],
            "activations": ["relu"] * (len(self.weights) - 1) + ["softmax"],
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "labels": self.labels,
            "norm_stats": self.norm_stats.model_dump(mode="json") if self.norm_stats else None,
            "config_hash": self.config_hash,
            "history": self.history,
            "evaluation": self.evaluation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MLPModel":
        if data.get("format") != MODEL_FORMAT:
            raise TrainingError(f"unsupported model format {data.get('format')!r}")
        stats = NormStats.model_validate(data["norm_stats"]) if data.get("norm_stats") else None
        model = cls(
            [np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(data["weights"], data["layer_shapes"])],
            [np.asarray(b, dtype=np.float64) for b in data["biases"]],
            data["labels"],
            norm_stats=stats,
            config_hash=data.get("config_hash", ""),
            history=data.get("history", []),
            evaluation=data.get("evaluation", {}),
        )
        return model

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MLPModel":
        return cls.from_dict(read_json(path))


class _Adam:
    def __init__(self, params: List[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]):
        cfg = self.cfg
        self.t += 1
        correction1 = 1.0 - cfg.beta1**self.t
        correction2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.epsilon)


def accuracy(model: MLPModel, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    return float((model.predict_proba(x).argmax(axis=1) == y).mean())


def evaluate(model: MLPModel, data: LabeledSet) -> dict:
    """Accuracy on both splits and per-class counts of the held-out rows."""
    x_test, y_test = data.X[data.test], data.y[data.test]
    predicted = model.predict_proba(x_test).argmax(axis=1) if len(y_test) else np.array([], dtype=np.int64)
    return {
        "train_accuracy": accuracy(model, data.X[data.train], data.y[data.train]),
        "test_accuracy": accuracy(model, x_test, y_test) if len(y_test) else None,
        "n_train": int(len(data.train)),
        "n_test": int(len(data.test)),
        "test_true_counts": {name: int((y_test == k).sum()) for k, name in enumerate(data.labels)},
        "test_predicted_counts": {name: int((predicted == k).sum()) for k, name in enumerate(data.labels)},
    }


def train(data: LabeledSet, cfg: TrainConfig = TrainConfig()) -> MLPModel:
    """
    Train on the set's train split with shuffled mini-batches.

    The returned model carries the set's NormStats and a per-epoch history of
    mean training loss, training accuracy and test accuracy.

    Raises:
        TrainingError: the loss became NaN/inf; payload holds epoch and batch.
    """
    rng = np.random.default_rng(cfg.seed)
    x_train, y_train = data.X[data.train], data.y[data.train]
    x_test, y_test = data.X[data.test], data.y[data.test]
    targets = smooth_targets(y_train, len(data.labels), cfg.label_smoothing)

    model = MLPModel.initialize(data.X.shape[1], data.labels, cfg, rng)
    model.norm_stats = data.norm_stats
    params = model.parameters()
    optimizer = _Adam(params, cfg)

    n = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total_loss = 0.0
        for batch_no, start in enumerate(range(0, n, cfg.batch_size), start=1):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(x_train[idx], targets[idx])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"loss became {loss} at epoch {epoch}, batch {batch_no}",
                    payload={"epoch": epoch, "batch": batch_no},
                )
            total_loss += loss * len(idx)
            optimizer.step(params, grads)
        correct = int((model.predict_proba(x_train).argmax(axis=1) == y_train).sum())
        record = {
            "epoch": epoch,
            "loss": total_loss / n,
            "accuracy": correct / n,
            "test_accuracy": accuracy(model, x_test, y_test) if len(y_test) else None,
        }
        model.history.append(record)
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            logger.info(
                f"epoch {epoch}/{cfg.epochs} loss={record['loss']:.5f} accuracy={record['accuracy']:.4f}"
            )
    model.evaluation = evaluate(model, data)
    return model


def predict(m: MLPModel, fv: FeatureVector) -> Tuple[int, np.ndarray]:
    """Label index and class probabilities for an already normalized feature vector."""
    proba = m.predict_proba(fv.values)[0]
    return int(proba.argmax()), proba


def predict_raw(m: MLPModel, fv: FeatureVector) -> Tuple[int, np.ndarray]:
    """Normalize with the model's own statistics, then predict."""
    if m.norm_stats is None:
        raise TrainingError("model carries no normalization statistics")
    return predict(m, normalize(fv, m.norm_stats))


def _relu_masks(model: MLPModel, x: np.ndarray) -> List[np.ndarray]:
    return [z > 0.0 for z in model.forward(x)[1]]


def gradient_check(
    m: MLPModel,
    x: np.ndarray,
    targets: np.ndarray,
    max_entries: int = 20,
    seed: int = 0,
) -> float:
    """
    Largest relative error between analytic gradients and central differences.

    Up to `max_entries` entries per parameter array are checked, chosen by
    `seed`. Relative error is |a - n| / max(|a| + |n|, 1e-6). Entries whose
    +/- step flips any ReLU on/off state straddle a kink, where the
    derivative does not exist, and are skipped.
    """
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    rng = np.random.default_rng(seed)
    _, analytic = m.loss_and_grads(x, targets)
    base_masks = _relu_masks(m, x)

    worst = 0.0
    for param, grad in zip(m.parameters(), analytic):
        flat, flat_grad = param.reshape(-1), grad.reshape(-1)
        picks = rng.choice(flat.size, size=min(max_entries, flat.size), replace=False)
        for i in picks:
            original = flat[i]
            flat[i] = original + GRADCHECK_STEP
            plus, _ = m.loss_and_grads(x, targets)
            plus_masks = _relu_masks(m, x)
            flat[i] = original - GRADCHECK_STEP
            minus, _ = m.loss_and_grads(x, targets)
            minus_masks = _relu_masks(m, x)
            flat[i] = original

            crossed = any(
                not (np.array_equal(b, p) and np.array_equal(b, q))
                for b, p, q in zip(base_masks, plus_masks, minus_masks)
            )
            if crossed:
                continue
            numeric = (plus - minus) / (2.0 * GRADCHECK_STEP)
            a = float(flat_grad[i])
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), GRADCHECK_FLOOR))
    return worst
