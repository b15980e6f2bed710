"""Frozen surrogates for the pretrained components the system builds on:
an image embedding encoder, a text-vector encoder, and the latent VAE.

The image and text encoders are randomly initialized and frozen at
construction; downstream contracts are structural (shapes, determinism,
separability), not semantic. The VAE is pre-fit once as a plain
autoencoder on the clean toy distribution and then frozen, so latents
carry real image structure.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, LinearLayer, Module, ResidualBlock, TransformerBlock
from .tensor import Tensor


def _check_image(img: Tensor, divisor: int) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected [3,H,W] image, got {img.shape}")
    if img.shape[1] % divisor or img.shape[2] % divisor:
        raise ValueError(f"spatial extents {img.shape[1:]} not divisible by {divisor}")


class ImageEncoder(Module):
    """Strided conv + residual stack ending in a global pooled embedding."""

    STRIDE_PRODUCT = 8

    def __init__(self, clip_width: int, rng: np.random.Generator,
                 channels: tuple[int, int, int] = (16, 32, 64)):
        super().__init__()
        self.clip_width = clip_width
        c0, c1, c2 = channels
        self.conv0 = self.add("conv0", Conv2d(3, c0, 3, rng, stride=2, padding=1))
        self.rb0 = self.add("rb0", ResidualBlock(c0, rng))
        self.conv1 = self.add("conv1", Conv2d(c0, c1, 3, rng, stride=2, padding=1))
        self.rb1 = self.add("rb1", ResidualBlock(c1, rng))
        self.conv2 = self.add("conv2", Conv2d(c1, c2, 3, rng, stride=2, padding=1))
        self.rb2 = self.add("rb2", ResidualBlock(c2, rng))
        self.proj = self.add("proj", Conv2d(c2, clip_width, 1, rng))
        self.freeze()

    def __call__(self, img: Tensor) -> Tensor:
        _check_image(img, self.STRIDE_PRODUCT)
        if img.data.min() < 0.0 or img.data.max() > 1.0:
            raise ValueError("pixel values outside [0,1]")
        h = self.rb0(T.silu(self.conv0(img)))
        h = self.rb1(T.silu(self.conv1(h)))
        h = self.rb2(T.silu(self.conv2(h)))
        h = self.proj(T.silu(h))
        return h.mean(axis=(-2, -1))  # [clip_width]


def encode_image(enc: ImageEncoder, img: Tensor) -> Tensor:
    return enc(img)


class TextEncoder(Module):
    """Two-block token transformer mapping [L, C_clip] to [L, C_ctx]."""

    def __init__(self, clip_width: int, ctx_width: int, head_count: int,
                 rng: np.random.Generator):
        super().__init__()
        self.clip_width = clip_width
        self.ctx_width = ctx_width
        self.block0 = self.add("block0", TransformerBlock(clip_width, head_count, rng))
        self.block1 = self.add("block1", TransformerBlock(clip_width, head_count, rng))
        self.out_proj = self.add("out_proj", LinearLayer(clip_width, ctx_width, rng))
        self.freeze()

    def __call__(self, seq: Tensor) -> Tensor:
        if seq.ndim != 2 or seq.shape[1] != self.clip_width:
            raise ValueError(f"expected [L,{self.clip_width}] token sequence, got {seq.shape}")
        return self.out_proj(self.block1(self.block0(seq)))


class LatentVAE(Module):
    """Factor-8 convolutional autoencoder with 4 latent channels.

    encode() also returns the per-stage encoder features tapped by the
    detail refinement path; decode() optionally routes each decoder stage
    through a refinement object.
    """

    DOWNSAMPLE = 8
    LATENT_CHANNELS = 4

    def __init__(self, rng: np.random.Generator,
                 channels: tuple[int, int, int] = (32, 64, 128)):
        super().__init__()
        c0, c1, c2 = channels
        self.channels = channels
        self.enc_conv0 = self.add("enc_conv0", Conv2d(3, c0, 3, rng, stride=2, padding=1))
        self.enc_rb0 = self.add("enc_rb0", ResidualBlock(c0, rng))
        self.enc_conv1 = self.add("enc_conv1", Conv2d(c0, c1, 3, rng, stride=2, padding=1))
        self.enc_rb1 = self.add("enc_rb1", ResidualBlock(c1, rng))
        self.enc_conv2 = self.add("enc_conv2", Conv2d(c1, c2, 3, rng, stride=2, padding=1))
        self.enc_rb2 = self.add("enc_rb2", ResidualBlock(c2, rng))
        self.enc_out = self.add("enc_out", Conv2d(c2, self.LATENT_CHANNELS, 3, rng, padding=1))
        self.dec_in = self.add("dec_in", Conv2d(self.LATENT_CHANNELS, c2, 3, rng, padding=1))
        self.dec_rb2 = self.add("dec_rb2", ResidualBlock(c2, rng))
        self.dec_conv2 = self.add("dec_conv2", Conv2d(c2, c1, 3, rng, padding=1))
        self.dec_rb1 = self.add("dec_rb1", ResidualBlock(c1, rng))
        self.dec_conv1 = self.add("dec_conv1", Conv2d(c1, c0, 3, rng, padding=1))
        self.dec_rb0 = self.add("dec_rb0", ResidualBlock(c0, rng))
        self.dec_out = self.add("dec_out", Conv2d(c0, 3, 3, rng, padding=1))

    def encode(self, img: Tensor) -> tuple[Tensor, list[Tensor]]:
        _check_image(img, self.DOWNSAMPLE)
        f1 = self.enc_rb0(T.silu(self.enc_conv0(img)))      # [c0, H/2, W/2]
        f2 = self.enc_rb1(T.silu(self.enc_conv1(f1)))       # [c1, H/4, W/4]
        f3 = self.enc_rb2(T.silu(self.enc_conv2(f2)))       # [c2, H/8, W/8]
        latent = self.enc_out(f3)
        return latent, [f1, f2, f3]

    # decoder stage widths, deepest first, matching refinement taps [f3, f2, f1]
    def decoder_stage_channels(self) -> tuple[int, int, int]:
        c0, c1, c2 = self.channels
        return (c2, c1, c0)

    def decode(self, latent: Tensor, refinement=None, clamp_output: bool = True) -> Tensor:
        if latent.ndim != 3 or latent.shape[0] != self.LATENT_CHANNELS:
            raise ValueError(f"expected [{self.LATENT_CHANNELS},H,W] latent, got {latent.shape}")
        h = self.dec_rb2(T.silu(self.dec_in(latent)))
        if refinement is not None:
            h = refinement.fuse(0, h)
        h = self.dec_rb1(T.silu(self.dec_conv2(T.upsample2x(h))))
        if refinement is not None:
            h = refinement.fuse(1, h)
        h = self.dec_rb0(T.silu(self.dec_conv1(T.upsample2x(h))))
        if refinement is not None:
            h = refinement.fuse(2, h)
        img = self.dec_out(T.upsample2x(h))
        return T.clamp(img, 0.0, 1.0) if clamp_output else img


def vae_encode(vae: LatentVAE, img: Tensor) -> tuple[Tensor, list[Tensor]]:
    return vae.encode(img)


def vae_decode(vae: LatentVAE, latent: Tensor, refinement=None) -> Tensor:
    return vae.decode(latent, refinement=refinement)
