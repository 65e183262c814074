from .checkpoint import load_model, save_model, write_loss_trace
from .network import (
    BilstmModel,
    LstmParams,
    NetworkConfig,
    backward,
    forward,
    forward_batch,
    init_model,
    loss,
    loss_and_grads,
    lstm_step,
    pad_batch,
    zero_model,
)
from .optim import AdamState, adam_step, clip_by_global_norm, global_norm
from .train import (
    TrainConfig,
    drop_non_target,
    ensemble_predict,
    feature_score,
    predict,
    select_top_k,
    train,
    train_with_restarts,
)

__all__ = [
    "AdamState", "BilstmModel", "LstmParams", "NetworkConfig", "TrainConfig",
    "adam_step", "backward", "clip_by_global_norm", "drop_non_target", "ensemble_predict",
    "feature_score", "forward", "forward_batch", "global_norm", "init_model", "load_model",
    "loss", "loss_and_grads", "lstm_step", "pad_batch", "predict", "save_model",
    "select_top_k", "train", "train_with_restarts", "write_loss_trace", "zero_model",
]
