"""Array operations, parameters, optimizer, RNG and tensor I/O."""
from .gradcheck import grad_check, relative_error
from .io import decode_tensor, encode_tensor, load_tensor, save_tensor
from .ops import (
    averaged_softmax_nll,
    conv2d,
    conv2d_backward,
    conv3d_depthwise,
    conv3d_depthwise_backward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    maxpool2d,
    maxpool2d_backward,
    relu,
    relu_backward,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_backward,
)
from .params import Parameter, sgd_momentum_step
from .rng import check_random_state, derive_seed, make_rng
