"""Reverse-mode autodiff over numpy: Tensor, op set, seeded RNG."""
from acq_core.autodiff.tensor import Tensor, TapeNode, no_grad, is_grad_enabled, unbroadcast
from acq_core.autodiff.rng import SeededRng, seeded_rng
from acq_core.autodiff import ops

__all__ = [
    "Tensor",
    "TapeNode",
    "no_grad",
    "is_grad_enabled",
    "unbroadcast",
    "SeededRng",
    "seeded_rng",
    "ops",
]
