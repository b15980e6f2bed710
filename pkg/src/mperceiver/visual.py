"""Visual conditioning branch.

Decomposes the VAE latent into four multiscale feature maps, modulates
each with its visual prompt pool through per-scale cross-attention, and
exposes adaptive instance normalization injectors that condition the
denoiser at every scale.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, CrossAttentionLayer, Module, ResidualBlock, WindowAttentionBlock, instance_norm, trunc_normal
from .predictor import DegradationProbabilities
from .tensor import Tensor


class VisualPromptPools(Module):
    """Four per-scale pools of learnable prompts, V^k in [N, M, C_k]."""

    def __init__(self, n_degradations: int, capacity: int, scale_channels,
                 rng: np.random.Generator):
        super().__init__()
        self.n_degradations = n_degradations
        self.capacity = capacity
        self.scale_channels = tuple(scale_channels)
        for k, c in enumerate(self.scale_channels):
            self.register(f"pool{k}", trunc_normal((n_degradations, capacity, c), rng))

    def pool(self, k: int) -> Tensor:
        return self._params[f"pool{k}"]


class MultiscaleExtractor(Module):
    """Latent [4,H,W] -> four feature maps with spatial halving."""

    def __init__(self, scale_channels, window: int, head_count: int,
                 rng: np.random.Generator, latent_channels: int = 4):
        super().__init__()
        self.scale_channels = tuple(scale_channels)
        self.conv_in = self.add("conv_in", Conv2d(latent_channels, self.scale_channels[0], 3, rng, padding=1))
        for k, c in enumerate(self.scale_channels):
            self.add(f"rb{k}", ResidualBlock(c, rng))
            self.add(f"wa{k}", WindowAttentionBlock(c, window, head_count, rng))
            if k + 1 < len(self.scale_channels):
                self.add(f"down{k}", Conv2d(c, self.scale_channels[k + 1], 3, rng, stride=2, padding=1))

    def __call__(self, e_vae: Tensor) -> list[Tensor]:
        return extract_multiscale(self, e_vae)


def extract_multiscale(extractor: MultiscaleExtractor, e_vae: Tensor) -> list[Tensor]:
    if e_vae.ndim != 3:
        raise ValueError(f"expected [C,H,W] latent, got {e_vae.shape}")
    if e_vae.shape[1] % 8 or e_vae.shape[2] % 8:
        raise ValueError(f"latent extents {e_vae.shape[1:]} not divisible by 8")
    feats: list[Tensor] = []
    x = extractor.conv_in(e_vae)
    for k in range(len(extractor.scale_channels)):
        x = extractor._children[f"rb{k}"](x)
        x = extractor._children[f"wa{k}"](x)
        feats.append(x)
        if k + 1 < len(extractor.scale_channels):
            x = extractor._children[f"down{k}"](x)
    return feats


def vp_modulate(f_k: Tensor, v_k: Tensor, probs: DegradationProbabilities,
                mhca: CrossAttentionLayer, rb: ResidualBlock) -> Tensor:
    """f <- RB(f + sum_i p_i * MHCA(f, V_i, V_i)) on one scale.

    Queries are the flattened spatial positions; keys/values are the
    prompt rows of each degradation, reduced in fixed index order.
    """
    n = v_k.shape[0]
    if probs.n != n:
        raise ValueError(f"prompt pool has {n} degradations, P has {probs.n}")
    c, h, w = f_k.shape
    if v_k.shape[2] != c:
        raise ValueError(f"pool width {v_k.shape[2]} does not match feature channels {c}")
    queries = T.transpose(f_k.reshape(c, h * w), (1, 0))
    acc = None
    for i in range(n):
        term = mhca(queries, v_k[i]) * probs.p[i]
        acc = term if acc is None else acc + term
    mod = f_k + T.transpose(acc, (1, 0)).reshape(c, h, w)
    return rb(mod)


class AdaInInjector(Module):
    """gamma(f_cond) * InstanceNorm(f_in) + beta(f_cond) at one site.

    The gamma conv starts at the constant-1 map and the beta conv at the
    constant-0 map, so an untrained injector is plain instance norm.
    """

    def __init__(self, cond_channels: int, feature_channels: int, rng: np.random.Generator):
        super().__init__()
        self.gamma_conv = self.add("gamma_conv", Conv2d(cond_channels, feature_channels, 3, rng, padding=1))
        self.beta_conv = self.add("beta_conv", Conv2d(cond_channels, feature_channels, 3, rng, padding=1))
        self.gamma_conv.weight.data[:] = 0.0
        self.gamma_conv.bias.data[:] = 1.0
        self.beta_conv.weight.data[:] = 0.0

    def __call__(self, f_in: Tensor, f_cond: Tensor) -> Tensor:
        return adain_inject(f_in, f_cond, self.gamma_conv, self.beta_conv)


def adain_inject(f_in: Tensor, f_cond: Tensor, gamma_conv: Conv2d, beta_conv: Conv2d) -> Tensor:
    if f_in.shape[-2:] != f_cond.shape[-2:]:
        raise ValueError(f"spatial mismatch: feature {f_in.shape[-2:]}, condition {f_cond.shape[-2:]}")
    gamma = gamma_conv(f_cond)
    beta = beta_conv(f_cond)
    return gamma * instance_norm(f_in) + beta


class VisualConditioning:
    """Per-sample conditioning bound to modulated multiscale features."""

    def __init__(self, branch: "VisualBranch", feats: list[Tensor]):
        self.branch = branch
        self.feats = feats

    def modulate(self, site: str, k: int, f_in: Tensor) -> Tensor:
        injector = self.branch.injector(site, k)
        return injector(f_in, self.feats[k])


class VisualBranch(Module):
    """Extractor, prompt pools, per-scale modulators and the 8 injectors."""

    def __init__(self, n_degradations: int, capacity: int, scale_channels,
                 window: int, head_count: int, rng: np.random.Generator):
        super().__init__()
        self.scale_channels = tuple(scale_channels)
        self.extractor = self.add("extractor", MultiscaleExtractor(
            self.scale_channels, window, head_count, rng))
        self.pools = self.add("pools", VisualPromptPools(
            n_degradations, capacity, self.scale_channels, rng))
        for k, c in enumerate(self.scale_channels):
            self.add(f"mhca{k}", CrossAttentionLayer(c, c, head_count, rng))
            self.add(f"mod_rb{k}", ResidualBlock(c, rng))
            self.add(f"inj_enc{k}", AdaInInjector(c, c, rng))
            self.add(f"inj_dec{k}", AdaInInjector(c, c, rng))

    def injector(self, site: str, k: int) -> AdaInInjector:
        if site not in ("enc", "dec"):
            raise ValueError(f"unknown injection site '{site}'")
        return self._children[f"inj_{site}{k}"]

    def condition(self, e_vae: Tensor, probs: DegradationProbabilities) -> VisualConditioning:
        feats = self.extractor(e_vae)
        modulated = [
            vp_modulate(feats[k], self.pools.pool(k), probs,
                        self._children[f"mhca{k}"], self._children[f"mod_rb{k}"])
            for k in range(len(self.scale_channels))
        ]
        return VisualConditioning(self, modulated)
