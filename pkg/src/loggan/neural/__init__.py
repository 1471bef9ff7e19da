"""Numeric core and sequence networks."""

from loggan.neural.autograd import NumericalError, Tensor, no_grad
from loggan.neural.nets import (
    DiscriminatorNet,
    GeneratorNet,
    MediatorNet,
    NoiseSource,
    discriminate,
    forward_generator,
    sample_batch,
    sample_sequence,
)
from loggan.neural.objectives import DomainError, grad_check, value_function

__all__ = [
    "NumericalError",
    "Tensor",
    "no_grad",
    "DiscriminatorNet",
    "GeneratorNet",
    "MediatorNet",
    "NoiseSource",
    "discriminate",
    "forward_generator",
    "sample_batch",
    "sample_sequence",
    "DomainError",
    "grad_check",
    "value_function",
]
