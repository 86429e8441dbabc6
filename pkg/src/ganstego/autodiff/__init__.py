from .functional import avg_pool2d, batch_norm, conv2d, conv_transpose2d, global_avg_pool, linear
from .gradcheck import grad_check, numeric_grad
from .nn import (
    Activation, BatchNorm2d, Conv2d, ConvTranspose2d, Dense, LayerSpec, Module, Sequential,
    build_layer, layer_rng, set_stat_updates, validate_stack,
)
from .optim import Adam, AdamState, adam_step
from .tensor import (
    ShapeError, Tape, TapeError, Tensor, backward, clip, concat, exp, leaky_relu, log, mean,
    relu, sigmoid, square, tanh,
)
