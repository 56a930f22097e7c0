"""Mini-batch Adam training with linear warmup, gradient clipping, and
entity-F1 early stopping; plus grid search over hyperparameter candidates.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from ..corpus import Corpus, iob_spans
from ..errors import NumericError, ValidationError
from ..evaluation import entity_match_counts, micro_f1
from .model import ModelParams, TrainConfig, batch_nll_and_grads, predict

log = logging.getLogger(__name__)


@dataclass
class TrainState:
    """Adam moments and bookkeeping across steps and epochs."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    best_metric: float = float("-inf")
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: ModelParams) -> "TrainState":
        return cls(
            m={k: np.zeros_like(t) for k, t in model.tensors().items()},
            v={k: np.zeros_like(t) for k, t in model.tensors().items()},
        )


@dataclass
class EpochRecord:
    epoch: int
    step: int
    lr: float
    train_loss: float
    val_micro_f1: float

    def to_line(self) -> str:
        return (
            f"epoch={self.epoch} step={self.step} lr={self.lr!r} "
            f"train_loss={self.train_loss!r} val_micro_f1={self.val_micro_f1!r}"
        )


def warmup_lr(base_lr: float, step: int, warmup_steps: int) -> float:
    """Linear 0 -> base_lr over warmup_steps, constant afterwards."""
    if warmup_steps <= 0:
        return base_lr
    return base_lr * min(1.0, step / warmup_steps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def adam_step(
    model: ModelParams,
    grads: dict[str, np.ndarray],
    state: TrainState,
    config: TrainConfig,
) -> float:
    """One Adam update with warmup; returns the learning rate used."""
    state.step += 1
    t = state.step
    lr = warmup_lr(config.learning_rate, t, config.warmup_steps)
    b1, b2, eps = config.beta1, config.beta2, config.epsilon
    tensors = model.tensors()
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        tensors[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    model.pin_masked_transitions()
    return lr


def validation_micro_f1(model: ModelParams, corpus: Corpus) -> float:
    """Entity-level micro-F1 of the model's predictions against gold tags."""
    gold_spans = []
    pred_spans = []
    for sent in corpus.sentences:
        tags, _ = predict(model, sent)
        gold_spans.append(iob_spans(sent.tags(), "IOB2"))
        pred_spans.append(iob_spans(tags, "IOB2"))
    return micro_f1(entity_match_counts(gold_spans, pred_spans))


@dataclass
class FitResult:
    model: ModelParams
    history: list[EpochRecord]

    def log_lines(self) -> list[str]:
        return [r.to_line() for r in self.history]


def fit(
    model: ModelParams,
    train_corpus: Corpus,
    val_corpus: Corpus,
    config: TrainConfig | None = None,
) -> FitResult:
    """Train with mini-batch Adam; keep the best-validation-epoch parameters.

    Deterministic for a fixed seed: epoch shuffles come from one seeded
    generator, dropout from the counter-based stream, and gradient batches
    are summed in a fixed sentence order.
    """
    cfg = model.config if config is None else config
    if len(train_corpus) == 0:
        raise ValidationError("training corpus is empty")
    if train_corpus.schema.tags != model.schema.tags:
        raise ValidationError("training corpus schema does not match the model schema")
    if val_corpus.schema.tags != model.schema.tags:
        raise ValidationError("validation corpus schema does not match the model schema")
    for sent in itertools.chain(train_corpus.sentences, val_corpus.sentences):
        if not sent.is_tagged:
            raise ValidationError(f"{sent.doc_id}[{sent.sent_index}] is untagged")

    state = TrainState.for_model(model)
    rng = np.random.default_rng(cfg.seed)
    history: list[EpochRecord] = []
    best_tensors: dict[str, np.ndarray] | None = None

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_corpus))
        epoch_loss = 0.0
        lr = warmup_lr(cfg.learning_rate, state.step + 1, cfg.warmup_steps)
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_corpus.sentences[i] for i in order[lo : lo + cfg.batch_size]]
            loss, grads = batch_nll_and_grads(model, batch, train_mode=True, step=state.step)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss!r} at epoch {epoch}, step {state.step}"
                )
            clip_gradients(grads, cfg.grad_clip_norm)
            lr = adam_step(model, grads, state, cfg)
            model.assert_finite()
            epoch_loss += loss
            state.loss_history.append(loss)

        metric = validation_micro_f1(model, val_corpus)
        history.append(EpochRecord(epoch, state.step, lr, epoch_loss, metric))
        log.info("epoch %d: step=%d lr=%.3g loss=%.4f val_micro_f1=%.4f",
                 epoch, state.step, lr, epoch_loss, metric)

        if metric > state.best_metric:
            state.best_metric = metric
            state.best_epoch = epoch
            state.epochs_since_improvement = 0
            best_tensors = {k: t.copy() for k, t in model.tensors().items()}
        else:
            state.epochs_since_improvement += 1
            if state.epochs_since_improvement >= cfg.early_stopping_patience:
                log.info("early stopping after epoch %d (best epoch %d)",
                         epoch, state.best_epoch)
                break

    if best_tensors is not None:
        for name, tensor in model.tensors().items():
            tensor[...] = best_tensors[name]
    return FitResult(model, history)


@dataclass
class GridRun:
    config: TrainConfig
    val_micro_f1: float
    num_parameters: int


@dataclass
class GridResult:
    best_config: TrainConfig
    runs: list[GridRun]


def grid_search(
    config_grid: dict[str, list],
    train_corpus: Corpus,
    val_corpus: Corpus,
    base_config: TrainConfig,
    build_model,
) -> GridResult:
    """Train one model per grid point; pick the best validation micro-F1.

    Ties break toward the lower learning rate, then the smaller model, then
    grid order. `build_model(config)` must return a fresh ModelParams.
    """
    names = sorted(config_grid)
    if not names or any(not config_grid[n] for n in names):
        raise ValidationError("config grid is empty")
    runs: list[GridRun] = []
    for values in itertools.product(*(config_grid[n] for n in names)):
        cfg = dataclasses.replace(base_config, **dict(zip(names, values)))
        model = build_model(cfg)
        result = fit(model, train_corpus, val_corpus, cfg)
        score = max((r.val_micro_f1 for r in result.history), default=0.0)
        runs.append(GridRun(cfg, score, model.num_parameters()))
        log.info("grid point %s -> val_micro_f1=%.4f", dict(zip(names, values)), score)
    best = min(
        range(len(runs)),
        key=lambda i: (-runs[i].val_micro_f1, runs[i].config.learning_rate,
                       runs[i].num_parameters, i),
    )
    return GridResult(runs[best].config, runs)
