"""BiLSTM-CNN-CRF sequence tagger: layers, CRF inference, training, and
model serialization.
"""

from . import crf, layers, model, serialize, training
from .crf import (
    MASK_SCORE,
    apply_mask,
    log_partition as crf_log_partition,
    marginals as crf_marginals,
    nll as crf_nll_single,
    score_sequence as crf_score_sequence,
    viterbi as crf_viterbi,
    viterbi_batch,
)
from .layers import (
    LstmParams,
    bilstm_forward,
    char_cnn_forward,
    dropout_mask,
    emission_scores,
    lstm_forward,
)
from .model import (
    ForwardCache,
    ModelParams,
    TrainConfig,
    batch_nll as crf_nll,
    batch_nll_and_grads,
    init_model,
    model_backward,
    model_forward,
    predict,
)
from .serialize import load_model, save_model
from .training import (
    EpochRecord,
    FitResult,
    GridResult,
    TrainState,
    adam_step,
    clip_gradients,
    fit,
    grid_search,
    validation_micro_f1,
    warmup_lr,
)

__all__ = [
    "MASK_SCORE",
    "apply_mask",
    "crf_log_partition",
    "crf_marginals",
    "crf_nll",
    "crf_nll_single",
    "crf_score_sequence",
    "crf_viterbi",
    "viterbi_batch",
    "LstmParams",
    "bilstm_forward",
    "char_cnn_forward",
    "dropout_mask",
    "emission_scores",
    "lstm_forward",
    "ForwardCache",
    "ModelParams",
    "TrainConfig",
    "batch_nll_and_grads",
    "model_backward",
    "init_model",
    "model_forward",
    "predict",
    "load_model",
    "save_model",
    "EpochRecord",
    "FitResult",
    "GridResult",
    "TrainState",
    "adam_step",
    "clip_gradients",
    "fit",
    "grid_search",
    "validation_micro_f1",
    "warmup_lr",
    "crf",
    "layers",
    "model",
    "serialize",
    "training",
]
