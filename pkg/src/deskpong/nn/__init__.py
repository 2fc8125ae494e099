from . import tape
from .mlp import Mlp
from .optim import Adam, NonFiniteGradError, adam_step
from .policy import GaussianPolicy, normalize_rows, sample_sphere
from .tape import Tensor, finite_difference_grad, grad_of, no_grad, np_grads

__all__ = [
    "tape",
    "Mlp",
    "Adam",
    "NonFiniteGradError",
    "adam_step",
    "GaussianPolicy",
    "normalize_rows",
    "sample_sphere",
    "Tensor",
    "finite_difference_grad",
    "grad_of",
    "no_grad",
    "np_grads",
]
