"""Desk-scale all-in-one image restoration with multimodal prompt learning.

A toy latent diffusion backbone conditioned through two trainable prompt
branches (textual and visual), a degradation predictor, and a detail
refinement module, together with the synthetic degradation pipeline and
metrics needed to exercise the whole system end to end on a CPU.
"""

__version__ = "0.1.0"

from .tensor import Tensor, backward, finite_difference_grad, no_grad, use_dtype

__all__ = ["Tensor", "backward", "finite_difference_grad", "no_grad", "use_dtype", "__version__"]
