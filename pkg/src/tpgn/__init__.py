"""Tensor-product caption generator and captioning challenge service."""

from .tensor import ContractViolation, Tape, Var

__version__ = "0.1.0"

__all__ = ["ContractViolation", "Tape", "Var", "__version__"]
