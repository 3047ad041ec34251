"""Mini-batch Adam training with per-epoch validation and early stopping."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from ..constellation import QamConstellation
from ..data import EvalSet
from ..metrics import count_label_errors, evm_rms, mi_lower_bound, q_from_ber
from .losses import LOSSES, loss_l2
from .models import Model
from .optim import AdamState, adam_step
from .stats import grad_norm_last_layer, weight_stats

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, trace: "TrainTrace"):
        super().__init__(f"non-finite loss in epoch {epoch}")
        self.epoch = epoch
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "mse"
    l2_lambda: float = 0.0
    batch_size: int = 2048
    learning_rate: float = 1e-3
    max_epochs: int = 1000
    early_stop_metric: str = "val_q"
    patience: int | None = 50
    seed: int = 0
    shuffle: bool = True
    dtype: str = "float64"
    snapshot_every: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {sorted(LOSSES)}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.early_stop_metric not in ("val_q", "val_loss"):
            raise ValueError("early_stop_metric must be val_q or val_loss")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")


@dataclass(frozen=True)
class EvalMetrics:
    loss: float
    ber: float
    q_db: float
    evm: float
    mi: float


def equalized_symbols(model: Model, data: EvalSet, constellation: QamConstellation) -> tuple[np.ndarray, np.ndarray]:
    """Model output as complex symbols plus hard decisions.

    Classifiers yield the posterior-mean symbol ``sum_i p_i x_i`` and the
    argmax label.
    """
    out = model.predict(data.inputs)
    if model.arch.task == "regression":
        rx = out[:, 0] + 1j * out[:, 1]
        return rx, constellation.decide(rx)
    probs = softmax(out.astype(np.float64), axis=1)
    return probs @ constellation.points, np.argmax(out, axis=1)


def evaluate(model: Model, data: EvalSet, constellation: QamConstellation, loss: str = "mse") -> EvalMetrics:
    """Loss, counted BER/Q, EVM and MI of ``model`` on one split.

    For classifiers the MI is the cross-entropy bound ``log2 M - CE`` (bits),
    and EVM is taken on the posterior-mean symbol.
    """
    out = model.predict(data.inputs).astype(np.float64)
    tx = data.target_symbols
    if model.arch.task == "regression":
        rx = out[:, 0] + 1j * out[:, 1]
        pred = constellation.decide(rx)
        value = float(np.mean(np.sum((out - data.targets_regression) ** 2, axis=1)))
        try:
            mi = mi_lower_bound(rx, tx, constellation)
        except ValueError:
            mi = math.nan
    else:
        logp = log_softmax(out, axis=1)
        rx = np.exp(logp) @ constellation.points
        pred = np.argmax(out, axis=1)
        ce_nats = -float(np.mean(logp[np.arange(len(data)), data.targets_class]))
        value = ce_nats if loss == "categorical_cel" else math.nan
        mi = float(np.clip(np.log2(constellation.order) - ce_nats / np.log(2), 0.0, np.log2(constellation.order)))
    counts = count_label_errors(pred, data.targets_class, constellation)
    return EvalMetrics(loss=value, ber=counts.ber, q_db=q_from_ber(min(counts.ber, 0.5)),
                       evm=evm_rms(rx, tx), mi=mi)


@dataclass
class TrainTrace:
    records: list[dict] = field(default_factory=list)
    snapshots: dict[int, dict] = field(default_factory=dict)

    BASE_COLUMNS = ("epoch", "train_loss", "val_q_db", "val_mi", "val_evm", "grad_norm")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    def to_csv(self, path) -> None:
        if not self.records:
            cols = list(self.BASE_COLUMNS)
        else:
            cols = list(self.BASE_COLUMNS) + [k for k in self.records[0] if k not in self.BASE_COLUMNS]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            writer.writeheader()
            for r in self.records:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


@dataclass
class TrainResult:
    model: Model
    trace: TrainTrace
    best_epoch: int
    stop_reason: str


def _batch_loss(model: Model, batch: EvalSet, cfg: TrainConfig):
    out = model.forward(batch.inputs)
    if cfg.loss == "mse":
        value, dout = LOSSES["mse"](out, batch.targets_regression.astype(out.dtype))
    else:
        value, dout = LOSSES["categorical_cel"](out, batch.targets_class)
    grads = model.backward(dout.astype(out.dtype))
    value, reg = loss_l2(value, model.params, cfg.l2_lambda)
    for k, g in reg.items():
        grads[k] = grads[k] + g
    return value, grads


def train(model: Model, data, cfg: TrainConfig, constellation: QamConstellation, val: EvalSet,
          monitors: dict[str, EvalSet] | None = None, on_epoch=None) -> TrainResult:
    """Train ``model`` in place and return it with the best-epoch parameters restored.

    Parameters
    ----------
    data
        Anything with ``epoch_batches(epoch, batch_size, shuffle)`` yielding
        :class:`EvalSet` batches (a windowed dataset or a multi-trace sampler).
    val : EvalSet
        Validation split driving early stopping.
    monitors : dict, optional
        Extra named splits whose loss/Q/MI/EVM are logged every epoch.
    on_epoch : callable, optional
        Called as ``on_epoch(epoch, model, record)`` after each epoch.
    """
    if cfg.dtype == "float32":
        model.astype(np.float32)
    task_ok = (cfg.loss == "mse") == (model.arch.task == "regression")
    if not task_ok:
        raise ValueError(f"loss {cfg.loss} does not match a {model.arch.task} head")
    monitors = monitors or {}
    state = AdamState()
    trace = TrainTrace()
    sign = 1.0 if cfg.early_stop_metric == "val_q" else -1.0
    best_score, best_epoch, best_params = -math.inf, -1, model.copy_params()
    since_best = 0
    reason = "max_epochs"
    for epoch in range(cfg.max_epochs):
        losses, norms, sizes = [], [], []
        for batch in data.epoch_batches(epoch, cfg.batch_size, cfg.shuffle):
            value, grads = _batch_loss(model, batch, cfg)
            value = float(value)
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, trace)
            losses.append(value)
            sizes.append(len(batch))
            norms.append(grad_norm_last_layer(grads))
            adam_step(model.params, grads, state, cfg.learning_rate)
        v = evaluate(model, val, constellation, cfg.loss)
        rec = {
            "epoch": epoch,
            "train_loss": float(np.average(losses, weights=sizes)),
            "val_q_db": v.q_db,
            "val_mi": v.mi,
            "val_evm": v.evm,
            "grad_norm": float(np.mean(norms)),
            "val_loss": v.loss,
        }
        for name, split in monitors.items():
            m = evaluate(model, split, constellation, cfg.loss)
            rec.update({f"{name}_q_db": m.q_db, f"{name}_loss": m.loss, f"{name}_mi": m.mi, f"{name}_evm": m.evm})
        trace.records.append(rec)
        if cfg.snapshot_every and epoch % cfg.snapshot_every == 0:
            trace.snapshots[epoch] = weight_stats(model.params)
        if on_epoch is not None:
            on_epoch(epoch, model, rec)
        logger.info("epoch %d loss %.5g val Q %.3f dB", epoch, rec["train_loss"], v.q_db)
        score = sign * (v.q_db if cfg.early_stop_metric == "val_q" else v.loss)
        if score > best_score:
            best_score, best_epoch, best_params = score, epoch, model.copy_params()
            since_best = 0
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                reason = "patience"
                break
    model.params = best_params
    return TrainResult(model=model, trace=trace, best_epoch=best_epoch, stop_reason=reason)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
