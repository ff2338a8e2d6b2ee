"""Backpropagation-through-time training of the discretized AFUA layer."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import TENSOR_NAMES, ModelParams, activation, activation_grad, initial_state
from .netsim import Label, accuracy, quantize

EPS = 1e-6


class TrainingError(RuntimeError):
    def __init__(self, message, last_good: Optional[ModelParams] = None):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 8
    class_weights: tuple = (1.0, 1.0)
    weight_clip: float = 3.0
    seed: int = 0
    split: tuple = (0.68, 0.12, 0.20)
    m: int = 2
    unit_gains: Optional[tuple] = None
    restarts: int = 4

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.weight_clip <= 0:
            raise ValueError("weight_clip must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["class_weights"] = list(self.class_weights)
        d["split"] = list(self.split)
        d["unit_gains"] = None if self.unit_gains is None else list(self.unit_gains)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("class_weights", "split", "unit_gains"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    valid_accuracy: list = field(default_factory=list)
    best_valid_loss: list = field(default_factory=list)
    best_epoch: int = -1
    params: Optional[ModelParams] = None
    wallclock: float = 0.0

    def as_dict(self, include_params: bool = True) -> dict:
        d = {k: getattr(self, k) for k in ("train_loss", "valid_loss", "train_accuracy",
                                          "valid_accuracy", "best_valid_loss", "best_epoch",
                                          "wallclock")}
        if include_params and self.params is not None:
            d["params"] = {k: v.tolist() for k, v in self.params.as_dict().items()}
        return d


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def _targets(labels) -> np.ndarray:
    return np.stack([Label(int(l)).one_hot() for l in labels]) / 2.0


def _sample_weights(labels, class_weights) -> np.ndarray:
    w_pos, w_neg = class_weights
    return np.array([w_pos if int(l) == Label.CHEWING else w_neg for l in labels], dtype=float)


def loss(h_final, label, class_weights=(1.0, 1.0)) -> float:
    """Weighted binary cross-entropy of ``h/2`` against the one-hot target ``/2``."""
    h = np.asarray(h_final, dtype=float)
    if isinstance(label, (Label, int, np.integer)):
        target = Label(int(label)).one_hot() / 2.0
        lab = Label(int(label))
    else:
        target = np.asarray(label, dtype=float) / 2.0
        lab = Label.from_one_hot(label)
    p = np.clip(h / 2.0, EPS, 1 - EPS)
    w = _sample_weights([lab], class_weights)[0]
    return float(-w * np.sum(target * np.log(p) + (1 - target) * np.log(1 - p)))


def batch_loss_and_grad(h_final: np.ndarray, labels, class_weights):
    """Mean loss over the batch and its gradient with respect to ``h_final``."""
    t = _targets(labels)
    w = _sample_weights(labels, class_weights)[:, None]
    p_raw = h_final / 2.0
    p = np.clip(p_raw, EPS, 1 - EPS)
    per = -w * (t * np.log(p) + (1 - t) * np.log(1 - p))
    B = h_final.shape[0]
    inside = (p_raw > EPS) & (p_raw < 1 - EPS)
    dp = -w * (t / p - (1 - t) / (1 - p)) * inside
    return float(per.sum() / B), dp * 0.5 / B


# ---------------------------------------------------------------------------
# BPTT
# ---------------------------------------------------------------------------


def _stack(batch):
    frames = np.stack([np.asarray(w.frames, dtype=float) for w in batch])
    labels = [int(w.label) for w in batch]
    return frames, labels


def _fused(params: ModelParams):
    """Stack gate and candidate weights so one matmul serves both."""
    return (np.concatenate([params.Wz, params.W]), np.concatenate([params.Uz, params.U]),
            np.concatenate([params.bz, params.b]))


def forward_cached(params: ModelParams, frames: np.ndarray, unit_gains=None):
    """Run ``(B, T, n)`` frames and keep what the backward pass needs.

    Returns the state list ``[h_0, ..., h_T]`` and per-step
    ``(pre-activation, z, h_cand)`` with the pre-activation holding the gate
    half first.
    """
    B, T, _ = frames.shape
    m = params.m
    g = np.ones(m) if unit_gains is None else np.asarray(unit_gains, dtype=float)
    Wc, Uc, bc = _fused(params)
    h = initial_state(m, (B,))
    hs = [h]
    cache = []
    drive = frames @ Wc.T + bc
    for t in range(T):
        a = drive[:, t, :] + (h - 1.0) @ Uc.T
        act = activation(a)
        z = g * act[:, :m]
        c = g * act[:, m:]
        h = (1.0 - z) * h + 2.0 * z * c
        cache.append((a, z, c))
        hs.append(h)
    if not np.all(np.isfinite(h)):
        raise TrainingError("non-finite hidden state")
    return hs, cache


def bptt_gradients(params: ModelParams, batch: Sequence, class_weights=(1.0, 1.0),
                   unit_gains=None):
    """Exact gradients of the mean batch loss; returns ``(loss, grads)``."""
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    frames, labels = _stack(batch)
    return _bptt(params, frames, labels, class_weights, unit_gains)


def _bptt(params, frames, labels, class_weights, unit_gains=None):
    m = params.m
    g = np.ones(m) if unit_gains is None else np.asarray(unit_gains, dtype=float)
    _, Uc, _ = _fused(params)
    hs, cache = forward_cached(params, frames, unit_gains)
    value, dh = batch_loss_and_grad(hs[-1], labels, class_weights)
    B, T, _ = frames.shape
    da_all = np.empty((B, T, 2 * m))
    for t in range(T - 1, -1, -1):
        a, z, c = cache[t]
        fp = activation_grad(a)
        da = np.concatenate([dh * (2.0 * c - hs[t]) * g * fp[:, :m],
                             dh * 2.0 * z * g * fp[:, m:]], axis=1)
        da_all[:, t, :] = da
        dh = dh * (1.0 - z) + da @ Uc
    hc = np.stack(hs[:-1], axis=1) - 1.0
    dW = np.einsum("bta,btn->an", da_all, frames)
    dU = np.einsum("bta,btk->ak", da_all, hc)
    db = da_all.sum(axis=(0, 1))
    grads = {"Wz": dW[:m], "W": dW[m:], "Uz": dU[:m], "U": dU[m:], "bz": db[:m], "b": db[m:]}
    return value, grads


def batch_loss(params: ModelParams, batch: Sequence, class_weights=(1.0, 1.0),
               unit_gains=None) -> float:
    frames, labels = _stack(batch)
    return _loss_and_accuracy(params, frames, labels, class_weights, unit_gains)[0]


def _loss_and_accuracy(params, frames, labels, class_weights, unit_gains=None):
    hs, _ = forward_cached(params, frames, unit_gains)
    value = batch_loss_and_grad(hs[-1], labels, class_weights)[0]
    predicted = (hs[-1][:, 1] - hs[-1][:, 0] >= 0).astype(int)
    return value, float(np.mean(predicted == np.asarray(labels)))


@dataclass
class GradCheckReport:
    max_relative_error: float
    max_abs_error: float
    analytic: dict
    numeric: dict

    @property
    def worst(self) -> float:
        return self.max_relative_error


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    # Below ``floor`` a central difference with delta = 1e-5 is dominated by
    # round-off in the loss (about 1e-11 absolute), so smaller components are
    # compared on an absolute scale of ``floor``.
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_gradients(params: ModelParams, batch, delta: float = 1e-5,
                      class_weights=(1.0, 1.0)) -> dict:
    """Central finite differences of :func:`batch_loss`, one entry at a time."""
    out = {}
    for name in TENSOR_NAMES:
        base = getattr(params, name)
        grad = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1.0, -1.0):
                p = params.copy()
                getattr(p, name)[idx] += sign * delta
                vals.append(batch_loss(p, batch, class_weights))
            grad[idx] = (vals[0] - vals[1]) / (2 * delta)
        out[name] = grad
    return out


def grad_check(params: ModelParams, window, delta: float = 1e-5, tolerance: float = 1e-4,
               class_weights=(1.0, 1.0), raise_on_failure: bool = True) -> GradCheckReport:
    if delta <= 0:
        raise ValueError("delta must be positive")
    batch = window if isinstance(window, (list, tuple)) else [window]
    _, analytic = bptt_gradients(params, batch, class_weights)
    numeric = numeric_gradients(params, batch, delta, class_weights)
    rel = max(float(relative_error(analytic[k], numeric[k]).max()) for k in TENSOR_NAMES)
    ab = max(float(np.abs(analytic[k] - numeric[k]).max()) for k in TENSOR_NAMES)
    report = GradCheckReport(rel, ab, analytic, numeric)
    if raise_on_failure and rel > tolerance:
        raise AssertionError(f"gradient check failed: max relative error {rel:.3e} > {tolerance:g}")
    return report


# ---------------------------------------------------------------------------
# optimizer and training loop
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict):
        """Update the arrays in ``params`` in place."""
        self.t += 1
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def init_params(m: int, n: int, rng: np.random.Generator) -> ModelParams:
    """Weights uniform in [-0.5, 0.5]; biases 0.5 so gates start off the dead zone."""
    return ModelParams(W=rng.uniform(-0.5, 0.5, (m, n)), Wz=rng.uniform(-0.5, 0.5, (m, n)),
                       U=rng.uniform(-0.5, 0.5, (m, m)), Uz=rng.uniform(-0.5, 0.5, (m, m)),
                       b=np.full(m, 0.5), bz=np.full(m, 0.5))


def split_dataset(windows: Sequence, split=(0.68, 0.12, 0.20), seed: int = 0):
    """Stratified train/valid/test split; deterministic under ``seed``."""
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for label in (Label.NOT_CHEWING, Label.CHEWING):
        idx = [i for i, w in enumerate(windows) if int(w.label) == label]
        idx = [idx[i] for i in rng.permutation(len(idx))]
        n_train = int(round(split[0] * len(idx)))
        n_valid = int(round(split[1] * len(idx)))
        for part, sel in zip(parts, (idx[:n_train], idx[n_train:n_train + n_valid],
                                      idx[n_train + n_valid:])):
            part.extend(sel)
    return tuple([windows[i] for i in sorted(p)] for p in parts)


def train(train_set: Sequence, valid_set: Sequence, cfg: TrainConfig = TrainConfig(),
          init: Optional[ModelParams] = None) -> tuple[ModelParams, TrainReport]:
    """Adam on the BPTT gradients with weight clipping after each step.

    Returns the parameters with the lowest validation loss.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    n = np.asarray(train_set[0].frames).shape[-1]
    params = init.copy() if init is not None else init_params(cfg.m, n, rng)
    frames, labels = _stack(train_set)
    valid = valid_set if len(valid_set) else train_set
    v_frames, v_labels = _stack(valid)
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    report = TrainReport()
    best, best_loss = params.copy(), np.inf
    tensors = params.as_dict()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        for s in range(0, len(order), cfg.batch_size):
            sel = order[s:s + cfg.batch_size]
            try:
                value, grads = _bptt(params, frames[sel], [labels[i] for i in sel],
                                     cfg.class_weights, cfg.unit_gains)
            except TrainingError as err:
                raise TrainingError(f"epoch {epoch}: {err}", last_good=best) from err
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"loss diverged at epoch {epoch}", last_good=best)
            opt.step(tensors, grads)
            for t in tensors.values():
                np.clip(t, -cfg.weight_clip, cfg.weight_clip, out=t)
        tl, ta = _loss_and_accuracy(params, frames, labels, cfg.class_weights, cfg.unit_gains)
        vl, va = _loss_and_accuracy(params, v_frames, v_labels, cfg.class_weights,
                                    cfg.unit_gains)
        report.train_loss.append(tl)
        report.valid_loss.append(vl)
        report.train_accuracy.append(ta)
        report.valid_accuracy.append(va)
        if vl < best_loss:
            best_loss, best = vl, params.copy()
            report.best_epoch = epoch
        report.best_valid_loss.append(float(best_loss))
    if cfg.epochs == 0:
        best = params.copy()
    report.params = best
    report.wallclock = time.perf_counter() - started
    return best, report


@dataclass
class RestartSummary:
    seed: int
    best_valid_loss: float
    quantized_accuracy: float


def train_with_restarts(train_set: Sequence, valid_set: Sequence,
                        cfg: TrainConfig = TrainConfig()):
    """Train ``cfg.restarts`` times from seeds ``cfg.seed, cfg.seed + 1, ...``.

    A run whose update gate starts in the flat region of the activation can
    settle on a decision offset that does not survive rounding to the
    integer grid. The kept run is the one whose quantized weights classify
    train and validation windows best; ties go to the lower full-precision
    validation loss. Test data is never consulted.

    Returns ``(params, report, summaries)``.
    """
    pool = list(train_set) + list(valid_set)
    best_key, best = None, None
    summaries = []
    for r in range(cfg.restarts):
        run_cfg = TrainConfig.from_dict({**cfg.as_dict(), "seed": cfg.seed + r})
        params, report = train(train_set, valid_set, run_cfg)
        q_acc = accuracy(quantize(params), pool)
        v_loss = report.best_valid_loss[-1] if report.best_valid_loss else np.inf
        summaries.append(RestartSummary(run_cfg.seed, float(v_loss), float(q_acc)))
        key = (-q_acc, v_loss)
        if best_key is None or key < best_key:
            best_key, best = key, (params, report)
    return best[0], best[1], summaries
