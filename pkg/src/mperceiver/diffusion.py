"""Toy latent diffusion core.

A linear-beta noise schedule, a small 4-scale denoising U-Net with
cross-attention text conditioning and per-scale AdaIN hooks, the noise
prediction training objective, a deterministic DDIM sampler, and
dihedral self-ensembling.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import Conv2d, CrossAttentionLayer, LinearLayer, Module, ResidualBlock, instance_norm
from .tensor import Tensor


class DiffusionSchedule:
    """Linear betas with cumulative-product noise coefficients.

    Coefficient arithmetic stays in float64; values are handed to tensor
    code as python floats so float32 data is never promoted.
    """

    def __init__(self, timesteps: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02):
        if timesteps < 1:
            raise ValueError("timesteps must be >= 1")
        self.timesteps = timesteps
        self.betas = np.linspace(beta_min, beta_max, timesteps, dtype=np.float64)
        self.alpha_bar = np.cumprod(1.0 - self.betas)
        if not (np.all(np.diff(self.alpha_bar) < 0) and
                np.all(self.alpha_bar > 0) and np.all(self.alpha_bar < 1)):
            raise ValueError("alpha_bar must be strictly decreasing within (0,1)")

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self.timesteps:
            raise ValueError(f"timestep {t} outside [0, {self.timesteps})")
        return t


def forward_noise(schedule: DiffusionSchedule, z0: Tensor, t: int, eps: Tensor) -> Tensor:
    """z_t = sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps."""
    t = schedule.check_t(t)
    if z0.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} does not match latent {z0.shape}")
    abar = float(schedule.alpha_bar[t])
    return z0 * math.sqrt(abar) + eps * math.sqrt(1.0 - abar)


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half - 1, 1))
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)]).astype(np.float32)


class DenoisingUNet(Module):
    """4-scale encoder/decoder noise predictor.

    Each scale has an AdaIN site at its input on both the encoder and the
    decoder path (8 sites). Without conditioning a site reduces to plain
    instance normalization, which is also how the backbone is pre-fit, so
    freshly initialized injectors perturb nothing.
    """

    TIME_DIM = 64

    def __init__(self, scale_channels, ctx_width: int, head_count: int,
                 rng: np.random.Generator, latent_channels: int = 4):
        super().__init__()
        self.scale_channels = tuple(scale_channels)
        self.ctx_width = ctx_width
        self.latent_channels = latent_channels
        cs = self.scale_channels
        self.time_fc1 = self.add("time_fc1", LinearLayer(self.TIME_DIM, self.TIME_DIM, rng))
        self.time_fc2 = self.add("time_fc2", LinearLayer(self.TIME_DIM, self.TIME_DIM, rng))
        self.conv_in = self.add("conv_in", Conv2d(latent_channels, cs[0], 3, rng, padding=1))
        for k, c in enumerate(cs):
            self.add(f"enc_time{k}", LinearLayer(self.TIME_DIM, c, rng))
            self.add(f"enc_rb{k}", ResidualBlock(c, rng))
            self.add(f"enc_xattn{k}", CrossAttentionLayer(c, ctx_width, head_count, rng))
            if k + 1 < len(cs):
                self.add(f"down{k}", Conv2d(c, cs[k + 1], 3, rng, stride=2, padding=1))
                self.add(f"up{k}", Conv2d(cs[k + 1], c, 3, rng, padding=1))
                self.add(f"merge{k}", Conv2d(2 * c, c, 1, rng))
            self.add(f"dec_time{k}", LinearLayer(self.TIME_DIM, c, rng))
            self.add(f"dec_rb{k}", ResidualBlock(c, rng))
        self.conv_out = self.add("conv_out", Conv2d(cs[0], latent_channels, 3, rng, padding=1))

    def _site(self, site: str, k: int, x: Tensor, cond) -> Tensor:
        if cond is None:
            return instance_norm(x)
        return cond.modulate(site, k, x)

    def _attend(self, k: int, x: Tensor, context: Tensor | None) -> Tensor:
        c, h, w = x.shape
        if context is None:
            context = T.zeros(1, self.ctx_width)
        tokens = T.transpose(x.reshape(c, h * w), (1, 0))
        out = self._children[f"enc_xattn{k}"](tokens, context)
        return x + T.transpose(out, (1, 0)).reshape(c, h, w)

    def __call__(self, z_t: Tensor, t: int, context: Tensor | None = None,
                 cond=None) -> Tensor:
        if z_t.ndim != 3 or z_t.shape[0] != self.latent_channels:
            raise ValueError(f"expected [{self.latent_channels},H,W] latent, got {z_t.shape}")
        temb = Tensor(timestep_embedding(t, self.TIME_DIM))
        temb = self.time_fc2(T.silu(self.time_fc1(temb)))
        ch = self._children
        x = self.conv_in(z_t)
        skips: list[Tensor] = []
        for k in range(len(self.scale_channels)):
            x = self._site("enc", k, x, cond)
            x = x + ch[f"enc_time{k}"](temb).reshape(-1, 1, 1)
            x = ch[f"enc_rb{k}"](x)
            x = self._attend(k, x, context)
            skips.append(x)
            if k + 1 < len(self.scale_channels):
                x = ch[f"down{k}"](x)
        for k in reversed(range(len(self.scale_channels))):
            if k + 1 < len(self.scale_channels):
                x = ch[f"up{k}"](T.upsample2x(x))
                x = ch[f"merge{k}"](T.concat([x, skips[k]], axis=0))
            x = self._site("dec", k, x, cond)
            x = x + ch[f"dec_time{k}"](temb).reshape(-1, 1, 1)
            x = ch[f"dec_rb{k}"](x)
        return self.conv_out(x)


def ldm_loss(unet, schedule: DiffusionSchedule, z0: Tensor, context: Tensor | None,
             cond, rng: np.random.Generator, t: int | None = None,
             eps: Tensor | None = None) -> Tensor:
    """Mean squared error between drawn and predicted noise.

    t and eps may be pinned for deterministic tests and gradient checks;
    otherwise they are sampled from rng.
    """
    if t is None:
        t = int(rng.integers(0, schedule.timesteps))
    t = schedule.check_t(t)
    if eps is None:
        eps = Tensor(rng.standard_normal(z0.shape))
    z_t = forward_noise(schedule, z0, t, eps)
    pred = unet(z_t, t, context, cond)
    diff = eps - pred
    return (diff * diff).mean()


def ddim_timesteps(timesteps: int, steps: int) -> np.ndarray:
    """Uniformly spaced descending sub-schedule from T-1 to 0."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps > timesteps:
        raise ValueError(f"steps {steps} exceeds schedule length {timesteps}")
    if steps == 1:
        return np.array([timesteps - 1], dtype=np.int64)
    return np.round(np.linspace(timesteps - 1, 0, steps)).astype(np.int64)


def ddim_sample(unet, schedule: DiffusionSchedule, z_start: Tensor,
                context: Tensor | None, cond, steps: int) -> Tensor:
    """Deterministic (eta = 0) DDIM over a uniform sub-schedule."""
    ts = ddim_timesteps(schedule.timesteps, steps)
    z = z_start
    for i, t in enumerate(ts):
        abar = float(schedule.alpha_bar[t])
        eps_hat = unet(z, int(t), context, cond)
        z0_hat = (z - eps_hat * math.sqrt(1.0 - abar)) * (1.0 / math.sqrt(abar))
        if i + 1 < len(ts):
            abar_next = float(schedule.alpha_bar[ts[i + 1]])
            z = z0_hat * math.sqrt(abar_next) + eps_hat * math.sqrt(1.0 - abar_next)
        else:
            z = z0_hat
    return z


DIHEDRAL_TRANSFORMS = 8


def _dihedral(img: np.ndarray, idx: int) -> np.ndarray:
    out = np.rot90(img, k=idx % 4, axes=(-2, -1))
    if idx >= 4:
        out = out[..., ::-1]
    return np.ascontiguousarray(out)


def _dihedral_inverse(img: np.ndarray, idx: int) -> np.ndarray:
    out = img[..., ::-1] if idx >= 4 else img
    return np.ascontiguousarray(np.rot90(out, k=-(idx % 4), axes=(-2, -1)))


def self_ensemble_restore(restore_fn, lq_image: np.ndarray) -> np.ndarray:
    """Average restorations over the 8 dihedral transforms of the input."""
    acc = np.zeros_like(lq_image, dtype=np.float64)
    for idx in range(DIHEDRAL_TRANSFORMS):
        out = restore_fn(_dihedral(lq_image, idx))
        acc += _dihedral_inverse(np.asarray(out, dtype=np.float64), idx)
    return (acc / DIHEDRAL_TRANSFORMS).astype(np.float32)
