"""Differentiation engine, optimizer, seeded streams and special functions."""

from .gradcheck import gradient_check, numerical_gradient, relative_error
from .ops import (
    BatchNormState,
    activation,
    batchnorm_1d,
    conv1d_valid,
    cross_entropy_logits,
    linear,
    log_softmax,
    maxpool1d,
    relu,
    sigmoid,
    softmax_rows,
    tanh,
)
from .optim import Adam, AdamState, adam_step
from .rng import DEFAULT_SEED, Prng, derive_seed
from .special import betainc_regularized, t_two_sided_p
from .tensor import (
    NonFiniteError,
    Tensor,
    absolute,
    as_tensor,
    backward,
    concat,
    exp,
    log,
    matmul,
    mean,
    reshape,
    stack,
    swapaxes,
    transpose,
    tsum,
)

__all__ = [name for name in dir() if not name.startswith("_")]
