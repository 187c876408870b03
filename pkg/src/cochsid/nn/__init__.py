"""From-scratch CNN: layers, model, SGDM training, CSPK serialization, gradient checks."""

from .gradcheck import GradCheckReport, check_model
from .layers import glorot_init
from .model import SpeakerModel, predict, predict_batch
from .optim import OptimizerState, sgdm_step
from .serialize import load_model, save_model
from .train import EpochLog, train, write_training_log

__all__ = [
    "GradCheckReport", "check_model", "glorot_init", "SpeakerModel", "predict",
    "predict_batch", "OptimizerState", "sgdm_step", "load_model", "save_model",
    "EpochLog", "train", "write_training_log",
]
