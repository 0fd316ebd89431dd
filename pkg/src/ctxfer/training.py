"""RMSprop on binary cross-entropy with per-epoch metrics and a callback stop."""

import csv
import enum
import io
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .augment import augmented_batches
from .dataset import stack_samples
from .errors import ConfigError, EmptyDataset, NonFiniteGradient, NonFiniteLoss, ShapeMismatch
from .kernels import rmsprop_update
from .metrics import ConfusionCounts, confusion_counts, rates
from .model import extract_features, head_backward, head_forward

BCE_EPSILON = 1e-7
CSV_COLUMNS = (
    "epoch", "train_loss", "train_acc", "train_precision", "train_recall",
    "val_loss", "val_acc", "val_precision", "val_recall", "seconds",
)


class StopReason(enum.Enum):
    THRESHOLD = "THRESHOLD"
    PATIENCE = "PATIENCE"
    MAX_EPOCHS = "MAX_EPOCHS"


@dataclass(frozen=True)
class StopRule:
    train_accuracy_threshold: float = 0.91  # None disables
    patience: int = 10
    min_delta: float = 0.0

    def __post_init__(self):
        t = self.train_accuracy_threshold
        if t is not None and not 0.0 <= t <= 1.0:
            raise ConfigError("train_accuracy_threshold must lie in [0, 1]")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-5
    batch_size: int = 32
    rho: float = 0.9
    epsilon: float = 1e-7
    max_epochs: int = 100
    stop_rule: StopRule = field(default_factory=StopRule)
    seed: int = 0
    timing: str = "wall"  # "off" writes 0.0 durations for byte-stable logs
    threshold: float = 0.5

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.rho < 1:
            raise ConfigError("rho must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.timing not in ("wall", "off"):
            raise ConfigError("timing must be 'wall' or 'off'")

    def to_dict(self):
        d = asdict(self)
        d.update(d.pop("stop_rule"))
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        rule_keys = {f.name for f in fields(StopRule)}
        rule = StopRule(**{k: d.pop(k) for k in list(d) if k in rule_keys})
        try:
            return cls(stop_rule=rule, **d)
        except TypeError as exc:
            raise ConfigError(f"training section: {exc}") from None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    train_precision: float
    train_recall: float
    val_loss: float
    val_accuracy: float
    val_precision: float
    val_recall: float
    duration_seconds: float = 0.0

    def csv_row(self):
        return [
            self.epoch, self.train_loss, self.train_accuracy, self.train_precision, self.train_recall,
            self.val_loss, self.val_accuracy, self.val_precision, self.val_recall, self.duration_seconds,
        ]


@dataclass
class TrainingRun:
    records: list
    stop_reason: StopReason = None
    config: dict = field(default_factory=dict)
    total_seconds: float = 0.0
    batch_losses: list = field(default_factory=list)  # per epoch, per batch

    @property
    def final(self):
        return self.records[-1]

    def to_csv(self):
        return records_to_csv(self.records)

    def to_dict(self):
        return {
            "stop_reason": self.stop_reason.value if self.stop_reason else None,
            "epochs": len(self.records),
            "total_seconds": self.total_seconds,
            "config": self.config,
            "history": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            records=[EpochRecord(**r) for r in d["history"]],
            stop_reason=StopReason(d["stop_reason"]) if d.get("stop_reason") else None,
            config=d.get("config", {}),
            total_seconds=d.get("total_seconds", 0.0),
        )


def _fmt(v):
    return str(v) if isinstance(v, int) else repr(float(v))


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(v) for v in r.csv_row()])
    return buf.getvalue()


def records_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"epoch log header must be {','.join(CSV_COLUMNS)}")
    out = []
    for row in rows[1:]:
        vals = [int(row[0])] + [float(v) for v in row[1:]]
        out.append(EpochRecord(*vals))
    return out


def binary_cross_entropy(p, y, eps=BCE_EPSILON):
    """Mean of ``-[y ln p + (1 - y) ln(1 - p)]`` with ``p`` clipped to ``[eps, 1 - eps]``."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ShapeMismatch(f"{p.shape[0]} probabilities vs {y.shape[0]} targets")
    pc = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def bce_logit_gradient(p, y, eps=BCE_EPSILON):
    # d(mean BCE)/d(logit); zero where the clip is active
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inside = (p > eps) & (p < 1.0 - eps)
    return np.where(inside, (p - y) / len(p), 0.0)


def loss_and_gradients(model, features, y, training_mode=False, rng=None, all_params=False):
    """``(loss, probabilities, grads)`` for a batch of backbone features.

    Gradients cover the head. With ``all_params`` every model parameter gets
    an entry; frozen ones are exact zeros since no gradient flows into them.
    """
    p, cache = head_forward(model.params, features, model.head, training_mode, rng)
    loss = binary_cross_entropy(p, y)
    grads = head_backward(model.params, cache, bce_logit_gradient(p, y), model.head)
    if all_params:
        for k, v in model.params.items():
            if not model.trainable_mask[k]:
                grads[k] = np.zeros_like(v)
    return loss, p, grads


def rmsprop_step(params, grads, state, cfg):
    """One RMSprop update over every name in ``grads``.

    ``state <- rho * state + (1 - rho) * g**2`` then
    ``param <- param - lr * g / (sqrt(state) + eps)``. Returns new dicts;
    missing accumulators start at zero.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {k}")
        if np.shape(g) != np.shape(params[k]) or (k in state and np.shape(state[k]) != np.shape(g)):
            raise ShapeMismatch(f"shape mismatch for {k}")
    new_params, new_state = dict(params), dict(state)
    for k, g in grads.items():
        p = np.asarray(params[k])
        s = state.get(k)
        if s is None:
            s = np.zeros_like(p)
        new_params[k], new_state[k] = rmsprop_update(p, g, s, cfg.learning_rate, cfg.rho, cfg.epsilon)
    return new_params, new_state


def early_stop_check(history, rule):
    """``StopReason`` if training should stop after the latest epoch, else ``None``."""
    if not history:
        raise ValueError("history is empty")
    t = rule.train_accuracy_threshold
    if t is not None and history[-1].train_accuracy >= t:
        return StopReason.THRESHOLD
    best = math.inf
    wait = 0
    for r in history:
        if r.val_loss < best - rule.min_delta:
            best = r.val_loss
            wait = 0
        else:
            wait += 1
    if wait >= rule.patience:
        return StopReason.PATIENCE
    return None


def _evaluate_features(model, features, y, threshold):
    p, _ = head_forward(model.params, features, model.head, training=False)
    return binary_cross_entropy(p, y), confusion_counts(p, y, threshold)


def train(model, data, aug, cfg, on_epoch=None, clock=time.perf_counter):
    """Fit the head of ``model`` on ``data``; returns the full :class:`TrainingRun`.

    Training metrics are accumulated over the epoch's batches as they are
    seen (loss: mean of batch losses; rates: pooled confusion counts).
    Validation runs once per epoch on unaugmented images.
    """
    size = model.backbone.input_size
    for s in list(data.train_samples) + list(data.val_samples):
        if tuple(s.target_size) != size:
            raise ShapeMismatch(f"{s.path} is loaded at {s.target_size}, model expects {size}")
    timed = cfg.timing == "wall"
    now = clock if timed else (lambda: 0.0)
    if not data.val_samples:
        raise EmptyDataset("no validation samples")
    x_val, y_val = stack_samples(data.val_samples)
    val_features = extract_features(model, x_val)

    aug_rng = np.random.default_rng(aug.seed)
    drop_rng = np.random.default_rng(cfg.seed)
    state = {}
    run = TrainingRun(records=[], config=cfg.to_dict())
    start = now()
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = now()
        losses = []
        counts = ConfusionCounts()
        for pixels, targets in augmented_batches(data.train_samples, aug, cfg.batch_size, aug_rng):
            feats = extract_features(model, pixels)
            loss, p, grads = loss_and_gradients(model, feats, targets, True, drop_rng)
            if not math.isfinite(loss):
                run.total_seconds = now() - start
                raise NonFiniteLoss(f"non-finite training loss at epoch {epoch}", run)
            losses.append(loss)
            counts = counts + confusion_counts(p, targets, cfg.threshold)
            new_params, state = rmsprop_step(model.head_params(), grads, state, cfg)
            model.params.update(new_params)
        train_rates = rates(counts)
        val_loss, vc = _evaluate_features(model, val_features, y_val, cfg.threshold)
        val_rates = rates(vc)
        if not math.isfinite(val_loss):
            run.total_seconds = now() - start
            raise NonFiniteLoss(f"non-finite validation loss at epoch {epoch}", run)
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            train_accuracy=train_rates.accuracy,
            train_precision=train_rates.precision,
            train_recall=train_rates.recall,
            val_loss=val_loss,
            val_accuracy=val_rates.accuracy,
            val_precision=val_rates.precision,
            val_recall=val_rates.recall,
            duration_seconds=now() - t0,
        )
        run.records.append(record)
        run.batch_losses.append(losses)
        if on_epoch is not None:
            on_epoch(record)
        reason = early_stop_check(run.records, cfg.stop_rule)
        if reason is not None:
            run.stop_reason = reason
            break
    else:
        run.stop_reason = StopReason.MAX_EPOCHS
    run.total_seconds = now() - start
    return run
