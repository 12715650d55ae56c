"""Minimal float64 tensor library with reverse-mode differentiation."""

from kcl.autodiff.adam import AdamState, adam_step
from kcl.autodiff.gradcheck import finite_diff_check
from kcl.autodiff.tensor import Parameter, Tape, Tensor, backward

__all__ = ["AdamState", "Parameter", "Tape", "Tensor", "adam_step", "backward", "finite_diff_check"]
