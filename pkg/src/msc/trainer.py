"""Mini-batch training on a balanced corpus and document-level evaluation."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from msc import DataError, NumericalError
from msc.balance import ReplicationPlan, replicate
from msc.corpus import CorpusSplit
from msc.metrics import PRF, micro_prf
from msc.neuralcore import AMSGrad, backward, bce_loss
from msc.pipeline import MscModel, ModelConfig, forward_batch, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 256
    batches_per_epoch: int = 300
    epochs: int = 1000
    learning_rate: float = 0.001
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 keeps only the best checkpoint
    batch_pool: str = "per_epoch"  # or "fixed": one pool of batches reused every epoch
    patience: int | None = None  # early stopping on validation micro-F1; off by default
    loss_weight: float = 1.0
    threshold: float = 0.5
    restore_best: bool = True
    eval_batch_size: int = 64
    prior_bias: bool = True  # set the document head bias to the label prior before step one

    def __post_init__(self):
        for name in ("batch_size", "batches_per_epoch", "epochs", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise DataError("learning_rate must be non-negative")
        if self.batch_pool not in ("per_epoch", "fixed"):
            raise DataError(f"unknown batch_pool {self.batch_pool!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_precision: float
    val_recall: float
    val_f1: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = -1.0

    @property
    def losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    def write_csv(self, path: str | Path, include_time: bool = False) -> None:
        cols = ["epoch", "train_loss", "val_precision", "val_recall", "val_f1"]
        if include_time:
            cols.append("seconds")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for e in self.epochs:
                row = [e.epoch, repr(e.train_loss), repr(e.val_precision), repr(e.val_recall), repr(e.val_f1)]
                if include_time:
                    row.append(f"{e.seconds:.3f}")
                w.writerow(row)


def batch_loss(model: MscModel, docs: Sequence, weight: float = 1.0):
    """BCE of the document head against the labels of ``docs``; graph attached."""
    out = forward_batch(model, [d.tokens for d in docs])
    y = np.array([d.labels for d in docs], dtype=np.float64)
    return bce_loss(out.C_d, y, weight)


def predict_documents(model: MscModel, docs: Sequence, batch_size: int = 64) -> np.ndarray:
    """C_d for every document, shape (len(docs), 17)."""
    rows = []
    for lo in range(0, len(docs), batch_size):
        out = forward_batch(model, [d.tokens for d in docs[lo: lo + batch_size]])
        rows.append(out.C_d.data)
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, model.config.n_classes))


def evaluate_documents(model: MscModel, docs: Sequence, threshold: float = 0.5, batch_size: int = 64) -> PRF:
    if not docs:
        raise DataError("no documents to evaluate")
    probs = predict_documents(model, docs, batch_size)
    truth = np.array([d.labels for d in docs])
    return micro_prf(probs >= threshold, truth)


def init_head_bias(model: MscModel, docs: Sequence, floor: float = 1e-3) -> np.ndarray:
    """Set the phrase head bias to the logit of each class's rate in ``docs``.

    The untrained model then already predicts the label prior, so the first
    updates are not spent dragging every class towards its base rate. Without
    this the optimizer reaches that prior fastest by pushing the phrase GRU
    into saturation, after which almost no gradient reaches the word stage.
    """
    prior = np.clip(np.mean([d.labels for d in docs], axis=0), floor, 1.0 - floor)
    bias = np.log(prior / (1.0 - prior))
    model.params["phrase_head.b"].data[:] = bias
    return bias


def _batches(n_items: int, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, n_items, size=(cfg.batches_per_epoch, cfg.batch_size))


def train(split: CorpusSplit, plan: ReplicationPlan | np.ndarray | None, config: TrainConfig,
          model: MscModel | None = None, model_config: ModelConfig | None = None,
          out_dir: str | Path | None = None) -> tuple[MscModel, TrainReport]:
    """Fit ``model`` (or a fresh one from ``model_config``) on the replicated training split.

    Unless ``prior_bias`` is off, the document head starts at the label prior
    of the balanced list. Each epoch draws ``batches_per_epoch`` batches with
    replacement from the balanced list and takes one AMSGrad step per batch. Validation micro-F1
    is tracked per epoch; the best model is written to ``out_dir/best.ckpt``
    and returned when ``restore_best`` is set.
    """
    if not split.train:
        raise DataError("training split is empty")
    rng = np.random.default_rng(config.seed)
    model_seed = int(rng.integers(2**31))
    if model is None:
        if model_config is None:
            raise DataError("need a model or a model_config")
        model = MscModel.init(model_config, seed=model_seed)
    if plan is None:
        pool = list(split.train)
    else:
        pool = replicate(split.train, plan, seed=int(rng.integers(2**31)))
    if config.prior_bias:
        init_head_bias(model, pool)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    opt = AMSGrad(model.parameters(), lr=config.learning_rate)
    report = TrainReport()
    best_state = model.state()
    fixed = _batches(len(pool), config, rng) if config.batch_pool == "fixed" else None
    stale = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        batches = fixed if fixed is not None else _batches(len(pool), config, rng)
        losses = []
        for bi, picks in enumerate(batches):
            docs = [pool[i] for i in picks]
            opt.zero_grad()
            try:
                loss = batch_loss(model, docs, config.loss_weight)
                if not np.isfinite(loss.data):
                    raise NumericalError("non-finite loss")
                backward(loss)
                for p in model.parameters():
                    if p.grad is not None and not np.all(np.isfinite(p.grad)):
                        raise NumericalError(f"non-finite gradient for {p.name}")
            except NumericalError as exc:
                ids = ", ".join(d.note_id for d in docs[:5])
                raise NumericalError(f"epoch {epoch} batch {bi}: {exc} (notes {ids}, ...)") from exc
            opt.step()
            losses.append(float(loss.data))
        if split.validation:
            prf = evaluate_documents(model, split.validation, config.threshold, config.eval_batch_size)
        else:
            prf = PRF(0.0, 0.0, 0.0, 0, 0, 0)
        rec = EpochRecord(epoch, float(np.mean(losses)), prf.precision, prf.recall, prf.f1,
                          time.perf_counter() - t0)
        report.epochs.append(rec)
        log.info("epoch %d loss %.5f val P %.3f R %.3f F1 %.3f", epoch, rec.train_loss,
                 prf.precision, prf.recall, prf.f1)
        if prf.f1 > report.best_f1:
            report.best_f1, report.best_epoch = prf.f1, epoch
            best_state = model.state()
            stale = 0
            if out is not None:
                save_checkpoint(model, out / "best.ckpt", {"epoch": epoch, "val_f1": prf.f1})
        else:
            stale += 1
        if out is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_checkpoint(model, out / f"epoch_{epoch:04d}.ckpt", {"epoch": epoch, "val_f1": prf.f1})
        if config.patience is not None and stale >= config.patience:
            log.info("early stop at epoch %d", epoch)
            break
    if config.restore_best and split.validation:
        model = MscModel(model.config, best_state, model.vocab_words)
    return model, report
