"""Numpy SENet classifier: layers, A-Softmax head, Adam, training, checkpoints."""

from .asoftmax import asoftmax_loss, cosine_logits
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .senet import ModelState, SenetConfig, forward, init_model, llr_scores
from .train import EpochRecord, TrainConfig, TrainingError, score_trials, train

__all__ = [
    "CheckpointError",
    "EpochRecord",
    "ModelState",
    "SenetConfig",
    "TrainConfig",
    "TrainingError",
    "asoftmax_loss",
    "cosine_logits",
    "forward",
    "init_model",
    "llr_scores",
    "load_checkpoint",
    "save_checkpoint",
    "score_trials",
    "train",
]
