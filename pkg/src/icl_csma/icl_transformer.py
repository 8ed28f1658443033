"""One-layer masked softmax attention for in-context threshold prediction.

The model is a single bilinear attention matrix Q (the value path is fixed at
identity on the label row).  Given an embedded prompt, the query column
attends over the masked in-context columns with logits x_m^T Q x_q, and the
prediction is the attention-weighted mean of the in-context labels -- always
a convex combination, never an extrapolation.  Training is plain full-batch
gradient descent from Q = 0 with the exact softmax chain-rule gradient;
labels are scaled to O(1) internally so a fixed step size behaves across
ladders whose thresholds span several orders of magnitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .prompt_pipeline import FeatureScaler

__all__ = [
    "TransformerParams",
    "TrainConfig",
    "TrainTrace",
    "AttentionReport",
    "TrainedModel",
    "TrainingDivergenceError",
    "attention",
    "predict",
    "loss",
    "gradient",
    "train",
    "convergence_check",
    "round_threshold",
    "resolve_label_scale",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "icl-csma-model"
MODEL_VERSION = 1

# training aborts when the loss exceeds this multiple of its starting value
_DIVERGENCE_FACTOR = 10.0

# logit spread beyond which exp() underflows and the softmax freezes; a
# healthy eta = 0.05 run grows logit gaps logarithmically and stays in the
# tens, so only a wildly oversized step can cross this
_LOGIT_FREEZE_SPAN = 745.0


class TrainingDivergenceError(RuntimeError):
    """Gradient descent left the recoverable regime (step size too large)."""

    def __init__(self, step, value, reason="loss blew up"):
        super().__init__(f"training diverged at step {step}: {reason} (loss {value})")
        self.step = step
        self.value = value


@dataclass(frozen=True)
class TransformerParams:
    """The d x d bilinear attention matrix; the value-path scalar is fixed at 1."""

    q_matrix: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"q_matrix must be square, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("q_matrix entries must be finite")
        object.__setattr__(self, "q_matrix", q)

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros((dim, dim)))

    @property
    def dim(self):
        return self.q_matrix.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    step_size: float = 0.05
    max_rounds: int = 10_000
    stop_eps: float = 1e-9
    label_scale: float | None = None  # None: max label over the training batch

    def __post_init__(self):
        if self.step_size <= 0 or self.max_rounds <= 0 or self.stop_eps <= 0:
            raise ValueError("step_size, max_rounds, and stop_eps must all be > 0")
        if self.label_scale is not None and self.label_scale <= 0:
            raise ValueError("label_scale must be > 0")


@dataclass
class TrainTrace:
    """Loss at every visited parameter plus per-update step norms."""

    losses: list[float]
    step_norms: list[float]
    converged_at: int | None
    final_params: TransformerParams
    label_scale: float


@dataclass(frozen=True)
class AttentionReport:
    scores: np.ndarray
    stage_scores: dict[int, float]
    query_stage_mass: float


def _stack(prompts):
    """Stack same-shape embedded prompts into (P,d,M), (P,M), (P,d), (P,) arrays."""
    if not prompts:
        raise ValueError("prompt batch must be non-empty")
    d = prompts[0].dim
    m = prompts[0].n_examples
    if any(p.dim != d or p.n_examples != m for p in prompts):
        raise ValueError("all prompts in a batch must share (d, M)")
    feats = np.stack([p.matrix[:d, :m] for p in prompts])
    labels = np.stack([p.matrix[d, :m] for p in prompts])
    queries = np.stack([p.matrix[:d, m] for p in prompts])
    query_labels = np.array([p.query_label for p in prompts])
    return feats, labels, queries, query_labels


def _attend(q_matrix, feats, queries):
    """Softmax over masked columns of logits x_m^T Q x_q, per prompt."""
    logits = np.einsum("pdm,de,pe->pm", feats, q_matrix, queries)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def attention(params, embedded):
    """Attention scores over the in-context columns, aggregated per stage."""
    if params.dim != embedded.dim:
        raise ValueError(f"dimension mismatch: Q is {params.dim}, prompt is {embedded.dim}")
    feats, _, queries, _ = _stack([embedded])
    scores = _attend(params.q_matrix, feats, queries)[0]
    stage_scores: dict[int, float] = {}
    for tag, score in zip(embedded.stage_tags, scores):
        stage_scores[tag] = stage_scores.get(tag, 0.0) + float(score)
    return AttentionReport(scores, stage_scores,
                           stage_scores.get(embedded.query_stage, 0.0))


def predict(params, embedded):
    """Attention-weighted mean of the in-context labels (raw label units)."""
    if params.dim != embedded.dim:
        raise ValueError(f"dimension mismatch: Q is {params.dim}, prompt is {embedded.dim}")
    feats, labels, queries, _ = _stack([embedded])
    attn = _attend(params.q_matrix, feats, queries)
    return float((attn * labels).sum())


def loss(params, prompts, label_scale=1.0):
    """Mean squared prediction error over the batch, on the scaled-label axis."""
    feats, labels, queries, query_labels = _stack(prompts)
    attn = _attend(params.q_matrix, feats, queries)
    pred = (attn * labels).sum(axis=1)
    err = (pred - query_labels) / label_scale
    return float(np.mean(err ** 2))


def gradient(params, prompts, label_scale=1.0):
    """Exact gradient of ``loss`` w.r.t. Q via the softmax chain rule.

    d pred / dQ = sum_m attn_m (W_m - pred) x_m x_q^T for each prompt;
    accumulated as 2 (pred - W_q) * d pred / dQ and averaged over the batch.
    """
    feats, labels, queries, query_labels = _stack(prompts)
    attn = _attend(params.q_matrix, feats, queries)
    labels_s = labels / label_scale
    pred = (attn * labels_s).sum(axis=1)
    resid = 2.0 * (pred - query_labels / label_scale)
    coef = attn * (labels_s - pred[:, None])  # (P, M)
    grad = np.einsum("p,pm,pdm,pe->de", resid, coef, feats, queries)
    return grad / len(prompts)


def resolve_label_scale(prompts, config=None):
    """Configured label scale, or the largest label seen in the batch."""
    if config is not None and config.label_scale is not None:
        return config.label_scale
    _, labels, _, query_labels = _stack(prompts)
    top = max(float(np.abs(labels).max()), float(np.abs(query_labels).max()))
    return top if top > 0 else 1.0


def train(prompts, config):
    """Full-batch gradient descent from Q = 0.

    Stops at the first update with ||theta_{t+1} - theta_t|| <= stop_eps, or
    after ``max_rounds`` updates.  Raises TrainingDivergenceError when the
    loss goes non-finite, exceeds 10x its starting value, or an update
    saturates the softmax into an exact one-hot (off-peak weights underflow
    to zero, so the gradient dies with the loss stuck) -- the signature of a
    step size far too large for the label scale.
    """
    scale = resolve_label_scale(prompts, config)
    feats, labels, queries, query_labels = _stack(prompts)
    labels_s = labels / scale
    targets = query_labels / scale
    q = np.zeros((feats.shape[1], feats.shape[1]))

    losses = []
    step_norms = []
    converged_at = None
    for step in range(config.max_rounds):
        logits = np.einsum("pdm,de,pe->pm", feats, q, queries)
        span = logits.max(axis=1) - logits.min(axis=1)
        shifted = logits - logits.max(axis=1, keepdims=True)
        weights = np.exp(shifted)
        attn = weights / weights.sum(axis=1, keepdims=True)
        pred = (attn * labels_s).sum(axis=1)
        cur = float(np.mean((pred - targets) ** 2))
        losses.append(cur)
        if not math.isfinite(cur) or (losses[0] > 0 and cur > _DIVERGENCE_FACTOR * losses[0]):
            raise TrainingDivergenceError(step, cur)
        if logits.shape[1] > 1 and span.min() > _LOGIT_FREEZE_SPAN:
            raise TrainingDivergenceError(step, cur,
                                          reason="softmax frozen by an oversized update")
        resid = 2.0 * (pred - targets)
        coef = attn * (labels_s - pred[:, None])
        grad = np.einsum("p,pm,pdm,pe->de", resid, coef, feats, queries) / len(prompts)
        update = config.step_size * grad
        q = q - update
        norm = float(np.linalg.norm(update))
        step_norms.append(norm)
        if norm <= config.stop_eps:
            converged_at = step
            break

    attn = _attend(q, feats, queries)
    pred = (attn * labels_s).sum(axis=1)
    losses.append(float(np.mean((pred - targets) ** 2)))
    params = TransformerParams(q)
    return params, TrainTrace(losses, step_norms, converged_at, params, scale)


def convergence_check(report, threshold):
    """True iff the mass off the query's own stage is within ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return 1.0 - report.query_stage_mass <= threshold


def round_threshold(prediction, cap):
    """Round half-up and clamp into [1, cap] for deployment."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    return max(1, min(int(cap), int(math.floor(prediction + 0.5))))


@dataclass(frozen=True)
class TrainedModel:
    """Everything needed to predict on new prompts.

    ``n_stages`` and ``stage_gain`` pin the embedding layout the attention
    matrix was trained against; the feature scaler and label scale travel
    with the weights so inference on fresh prompts reproduces training-time
    preprocessing exactly.
    """

    params: TransformerParams
    scaler: FeatureScaler
    label_scale: float
    n_stages: int
    stage_gain: float


def save_model(model, path):
    """Persist a trained model as versioned JSON."""
    record = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dim": model.params.dim,
        "q_matrix": [float(v) for v in model.params.q_matrix.ravel()],
        "scaler": {"shift": list(model.scaler.shift), "scale": list(model.scaler.scale)},
        "label_scale": model.label_scale,
        "n_stages": model.n_stages,
        "stage_gain": model.stage_gain,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} file: {path}")
    if record.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {record.get('version')} "
                         f"(expected {MODEL_VERSION})")
    dim = int(record["dim"])
    q = np.array(record["q_matrix"], dtype=float).reshape(dim, dim)
    scaler = FeatureScaler(tuple(record["scaler"]["shift"]),
                           tuple(record["scaler"]["scale"]))
    return TrainedModel(TransformerParams(q), scaler, float(record["label_scale"]),
                        int(record["n_stages"]), float(record["stage_gain"]))
