"""Piecewise affine arithmetic for multiplication-free training.

Submodules: :mod:`float_codec` (bit fields), :mod:`pa_scalar` (PAM, PAD
and derived functions), :mod:`pa_tensor` (tensors and matmul),
:mod:`pa_autodiff` (tape-based gradients), :mod:`pa_nn` (layers and
models), :mod:`pa_optim` (optimizers), :mod:`harness` (command line).
"""
from . import float_codec, instrument, pa_autodiff, pa_scalar, pa_tensor
from .pa_scalar import pad, paexp, paexp2, palog, palog2, pam, pasqrt

__version__ = "0.1.0"

__all__ = ["float_codec", "instrument", "pa_autodiff", "pa_scalar", "pa_tensor",
           "pam", "pad", "paexp2", "palog2", "paexp", "palog", "pasqrt"]
