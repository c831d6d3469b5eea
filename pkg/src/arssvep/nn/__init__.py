"""From-scratch numpy network layers, the MACNN-BiLSTM model and its trainer."""
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import (bilstm_backward, bilstm_forward, conv1d_backward, conv1d_forward,
                         mha_backward, mha_forward, softmax, softmax_cross_entropy)
from .model import MACNNBiLSTM, ModelConfig
from .tensor import ParameterStore, Tensor
from .training import TrainConfig, TrainReport, evaluate, learning_rate, train


def model_forward(x, model: MACNNBiLSTM):
    """Eval-mode logits ``[B, n_classes]`` for a batch of feature sequences."""
    logits = model.forward(x, train=False)
    model._cache = None
    return logits


__all__ = [
    "MACNNBiLSTM", "ModelConfig", "ParameterStore", "Tensor", "TrainConfig", "TrainReport",
    "bilstm_backward", "bilstm_forward", "conv1d_backward", "conv1d_forward", "evaluate",
    "learning_rate", "load_checkpoint", "mha_backward", "mha_forward", "model_forward",
    "save_checkpoint", "softmax", "softmax_cross_entropy", "train",
]
