"""Trainable stage: gated fusion, BiLSTM Mel decoder, weighted L1 loss, Adam."""

from .fusion import FusionGrads, FusionInput, FusionParams, gated_fuse, gated_fuse_grad, sigmoid
from .loss import LossWeights, freq_weighted_l1, freq_weighted_l1_grad, loss_weights
from .lstm import LSTMDirection, bilstm_backward, bilstm_forward, lstm_backward, lstm_forward
from .model import (
    DecoderParams,
    ModelDims,
    ModelParams,
    backward,
    decode_mel,
    empty_model,
    expand_sequence,
    forward,
    init_model,
    loss_and_grad,
    positional_table,
    predict,
)
from .serialize import (
    DimensionMismatchError,
    ParamFormatError,
    TruncatedStreamError,
    load_params,
    read_header,
    save_params,
)
from .train import Adam, EpochStats, TrainConfig, TrainingDiverged, TrainResult, evaluate, train
