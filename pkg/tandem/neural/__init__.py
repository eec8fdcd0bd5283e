from .layers import Conv3x3, Dense, Flatten, MaxPool2x2, ReLU, Sequential, Sigmoid, dense_stack
from .losses import loss_bce, loss_inn, loss_mse_l2, reparameterize
from .metrics import R2Accumulator, metric_r2, metric_ssim
from .optim import AdamState, adam_step
