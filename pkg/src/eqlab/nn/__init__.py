"""From-scratch numpy equalizers: models, losses, Adam, training, checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import loss_cel, loss_l2, loss_mse
from .models import (
    BiLstm,
    BiLstmArch,
    Mlp,
    MlpArch,
    Model,
    arch_from_dict,
    bilstm_forward,
    build_model,
    mlp_forward,
)
from .optim import AdamState, adam_step
from .stats import grad_norm_last_layer, weight_stats
from .train import (
    EvalMetrics,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    TrainTrace,
    equalized_symbols,
    evaluate,
    train,
)

__all__ = [
    "AdamState", "BiLstm", "BiLstmArch", "EvalMetrics", "Mlp", "MlpArch", "Model", "TrainConfig",
    "TrainResult", "TrainTrace", "TrainingDiverged", "adam_step", "arch_from_dict", "bilstm_forward",
    "build_model", "equalized_symbols", "evaluate", "grad_norm_last_layer", "load_checkpoint", "loss_cel",
    "loss_l2", "loss_mse", "mlp_forward", "save_checkpoint", "train", "weight_stats",
]
