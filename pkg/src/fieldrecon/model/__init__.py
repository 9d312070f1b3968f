"""Convolutional reconstructor, masked loss, Adam and gradient checking."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, corrupted_gradients, default_battery, grad_check
from .net import (
    ConvLayer,
    ConvNet,
    architecture,
    backward,
    conv_backward,
    conv_forward,
    forward,
    forward_array,
    init_params,
    loss_and_grads,
    masked_mse,
)
from .optim import AdamState, adam_step
from .training import History, TrainConfig, TrainingDivergedError, predict, train
