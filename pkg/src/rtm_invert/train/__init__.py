"""Training: Adam, the gradient stabilizer, the four model set-ups and checkpoints."""

from .config import MODEL_TAGS, TrainConfig
from .loops import (
    COMPONENTS, Checkpoint, InversionModel, evaluate_loss, load_checkpoint, save_checkpoint,
    train_model, write_history_csv,
)
from .optim import AdamState, adam_step, learning_rate, mse, stabilize_gradients

__all__ = [
    "AdamState", "COMPONENTS", "Checkpoint", "InversionModel", "MODEL_TAGS", "TrainConfig",
    "adam_step", "evaluate_loss", "learning_rate", "load_checkpoint", "mse", "save_checkpoint",
    "stabilize_gradients", "train_model", "write_history_csv",
]
