"""Degradation predictor: pooled image embedding -> per-class probabilities.

Multi-label sigmoid head (mixed degradations can all be active at once),
trained with focal loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import LinearLayer, Module
from .tensor import Tensor

LOG_FLOOR = 1e-12


@dataclass
class DegradationProbabilities:
    """Per-degradation weights, each in [0,1]."""

    p: Tensor

    def __post_init__(self):
        if self.p.ndim != 1:
            raise ValueError(f"expected a probability vector, got shape {self.p.shape}")
        if self.p.data.min() < 0.0 or self.p.data.max() > 1.0:
            raise ValueError("probabilities outside [0,1]")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def detach(self) -> "DegradationProbabilities":
        return DegradationProbabilities(self.p.detach())

    @staticmethod
    def from_values(values) -> "DegradationProbabilities":
        return DegradationProbabilities(Tensor(np.asarray(values)))


class PredictorHead(Module):
    """Two linear layers with a nonlinearity between; per-class sigmoid.

    The final layer starts at zero so an untrained head emits 0.5
    everywhere.
    """

    def __init__(self, clip_width: int, n_degradations: int, rng: np.random.Generator,
                 hidden: int = 64):
        super().__init__()
        self.n_degradations = n_degradations
        self.fc1 = self.add("fc1", LinearLayer(clip_width, hidden, rng))
        self.fc2 = self.add("fc2", LinearLayer(hidden, n_degradations, rng))
        self.fc2.weight.data[:] = 0.0

    def logits(self, e_img: Tensor) -> Tensor:
        return self.fc2(T.silu(self.fc1(e_img)))

    def __call__(self, e_img: Tensor) -> DegradationProbabilities:
        return predict(self, e_img)


def predict(head: PredictorHead, e_img: Tensor) -> DegradationProbabilities:
    return DegradationProbabilities(T.sigmoid(head.logits(e_img)))


def focal_loss(probs: DegradationProbabilities | Tensor, targets: Tensor,
               gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Mean over classes of -alpha_t * (1 - p_t)^gamma * log(p_t)."""
    p = probs.p if isinstance(probs, DegradationProbabilities) else probs
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    tv = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
    if not np.all((tv == 0.0) | (tv == 1.0)):
        raise ValueError("targets must be binary 0/1")
    if tv.shape != p.shape:
        raise ValueError(f"targets shape {tv.shape} does not match probabilities {p.shape}")
    t = Tensor(tv, dtype=p.dtype)
    p_t = p * t + (1.0 - p) * (1.0 - t)
    alpha_t = alpha * t + (1.0 - alpha) * (1.0 - t)
    log_pt = T.log(T.maximum(p_t, LOG_FLOOR))
    return (alpha_t * ((1.0 - p_t) ** gamma) * log_pt).mean() * -1.0
