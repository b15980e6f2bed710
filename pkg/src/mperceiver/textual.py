"""Textual conditioning branch.

Inverts the pooled image embedding into per-degradation text vectors
through a shared mapping plus parallel per-degradation self-attention,
then blends learned prompt rows with those vectors into one conditioning
sequence, weighted by the degradation probabilities.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .encoders import TextEncoder
from .nn import LayerNorm, LinearLayer, Module, SelfAttentionLayer, trunc_normal
from .predictor import DegradationProbabilities
from .tensor import Tensor


class TextualPromptPool(Module):
    """Learnable per-degradation prompt rows, shape [N, L, C_clip]."""

    def __init__(self, n_degradations: int, tokens: int, clip_width: int,
                 rng: np.random.Generator):
        super().__init__()
        self.n_degradations = n_degradations
        self.tokens = tokens
        self.pool = self.register("pool", trunc_normal((n_degradations, tokens, clip_width), rng))


class CrossModalAdapter(Module):
    """Image embedding -> per-degradation text vectors [N, L_cm, C_clip]."""

    def __init__(self, n_degradations: int, clip_width: int, cm_tokens: int,
                 head_count: int, rng: np.random.Generator):
        super().__init__()
        self.n_degradations = n_degradations
        self.clip_width = clip_width
        self.cm_tokens = cm_tokens
        self.fc = self.add("fc", LinearLayer(clip_width, cm_tokens * clip_width, rng))
        self.ln = self.add("ln", LayerNorm(cm_tokens * clip_width))
        self.attn = [SelfAttentionLayer(clip_width, head_count, rng)
                     for _ in range(n_degradations)]
        for i, layer in enumerate(self.attn):
            self.add(f"attn{i}", layer)

    def __call__(self, e_img: Tensor) -> Tensor:
        return cross_modal_inversion(self, e_img)


def cross_modal_inversion(adapter: CrossModalAdapter, e_img: Tensor) -> Tensor:
    """Shared LN(FC(e)) mapping reshaped to tokens, then N parallel
    self-attention passes; returns [N, L_cm, C_clip]."""
    if e_img.shape != (adapter.clip_width,):
        raise ValueError(f"expected [{adapter.clip_width}] embedding, got {e_img.shape}")
    shared = adapter.ln(adapter.fc(e_img))
    tokens = shared.reshape(adapter.cm_tokens, adapter.clip_width)
    rows = [adapter.attn[i](tokens).reshape(1, adapter.cm_tokens, adapter.clip_width)
            for i in range(adapter.n_degradations)]
    return T.concat(rows, axis=0)


def integrate_textual(pool: TextualPromptPool, e_cm: Tensor,
                      probs: DegradationProbabilities, text_enc: TextEncoder) -> Tensor:
    """Probability-weighted sum of encoded {text vectors, prompt rows}.

    Encodes concat(e_cm_i, T_i) per degradation and reduces in fixed
    index order; returns [L_cm + L, C_ctx].
    """
    n = pool.n_degradations
    if e_cm.shape[0] != n or probs.n != n:
        raise ValueError(f"inconsistent degradation counts: pool {n}, "
                         f"e_cm {e_cm.shape[0]}, P {probs.n}")
    total = None
    for i in range(n):
        seq = T.concat([e_cm[i], pool.pool[i]], axis=0)
        term = text_enc(seq) * probs.p[i]
        total = term if total is None else total + term
    return total
