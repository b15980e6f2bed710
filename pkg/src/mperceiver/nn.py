"""Reusable neural building blocks.

Fully-connected layers, layer/instance normalization, self- and
cross-attention, residual convolution blocks and windowed attention.
All layers are seeded explicitly at construction so golden tests are
reproducible.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

NORM_EPS = 1e-5


class Module:
    """Minimal parameter container with dotted-name introspection."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Module"] = {}

    def register(self, name: str, tensor: Tensor) -> Tensor:
        self._params[name] = tensor
        return tensor

    def add(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for name, child in self._children.items():
            out.update(child.params(prefix + name + "."))
        return out

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if v.requires_grad}

    def freeze(self) -> None:
        for p in self.params().values():
            p.requires_grad = False

    def zero_grad(self) -> None:
        for p in self.params().values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params().items()}

    def load_state(self, named: dict[str, np.ndarray]) -> None:
        mine = self.params()
        for name, arr in named.items():
            if name not in mine:
                raise KeyError(f"unknown parameter '{name}'")
            if mine[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for '{name}': {mine[name].shape} vs {arr.shape}")
            mine[name].data = np.ascontiguousarray(arr, dtype=mine[name].dtype)


def trunc_normal(shape, rng: np.random.Generator, std: float = 0.02) -> Tensor:
    vals = rng.standard_normal(shape) * std
    return Tensor(np.clip(vals, -2.0 * std, 2.0 * std), requires_grad=True)


class LinearLayer(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        if in_features <= 0 or out_features <= 0:
            raise ValueError("layer widths must be positive")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.register("weight", trunc_normal((out_features, in_features), rng))
        self.bias = self.register("bias", Tensor(np.zeros(out_features), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ValueError(f"linear width mismatch: input {x.shape[-1]}, expected {self.in_features}")
        if x.ndim == 1:
            return (x.reshape(1, -1) @ T.transpose(self.weight) + self.bias).reshape(self.out_features)
        return x @ T.transpose(self.weight) + self.bias


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply affine."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / T.sqrt(var + NORM_EPS) * gain + shift


class LayerNorm(Module):
    def __init__(self, width: int):
        super().__init__()
        self.gain = self.register("gain", Tensor(np.ones(width), requires_grad=True))
        self.shift = self.register("shift", Tensor(np.zeros(width), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.shift)


def instance_norm(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Per-channel spatial normalization of [..,C,H,W] features."""
    mu = x.mean(axis=(-2, -1), keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=(-2, -1), keepdims=True)
    return xc / T.sqrt(var + eps)


def _split_heads(x: Tensor, heads: int, head_dim: int) -> Tensor:
    # [L, W] -> [heads, L, head_dim]
    L = x.shape[0]
    return T.transpose(x.reshape(L, heads, head_dim), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    # [heads, L, head_dim] -> [L, W]
    h, L, d = x.shape
    return T.transpose(x, (1, 0, 2)).reshape(L, h * d)


class SelfAttentionLayer(Module):
    """Multi-head self-attention over a [L, C] token sequence."""

    def __init__(self, width: int, head_count: int, rng: np.random.Generator):
        super().__init__()
        if width % head_count != 0:
            raise ValueError(f"width {width} not divisible by head_count {head_count}")
        self.head_count = head_count
        self.head_dim = width // head_count
        self.width = width
        self.q_proj = self.add("q_proj", LinearLayer(width, width, rng))
        self.k_proj = self.add("k_proj", LinearLayer(width, width, rng))
        self.v_proj = self.add("v_proj", LinearLayer(width, width, rng))
        self.out_proj = self.add("out_proj", LinearLayer(width, width, rng))

    def __call__(self, seq: Tensor) -> Tensor:
        return self_attention(self, seq)


def self_attention(layer: SelfAttentionLayer, seq: Tensor) -> Tensor:
    if seq.shape[-1] != layer.width:
        raise ValueError(f"attention width mismatch: input {seq.shape[-1]}, layer {layer.width}")
    q = _split_heads(layer.q_proj(seq), layer.head_count, layer.head_dim)
    k = _split_heads(layer.k_proj(seq), layer.head_count, layer.head_dim)
    v = _split_heads(layer.v_proj(seq), layer.head_count, layer.head_dim)
    scores = (q @ T.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(layer.head_dim))
    ctx = T.softmax(scores, axis=-1) @ v
    return layer.out_proj(_merge_heads(ctx))


class CrossAttentionLayer(Module):
    """Multi-head attention of [Lq, Cq] queries over [Lc, Cc] context."""

    def __init__(self, query_width: int, context_width: int, head_count: int,
                 rng: np.random.Generator, inner_width: int | None = None):
        super().__init__()
        inner = inner_width or query_width
        if inner % head_count != 0:
            raise ValueError(f"width {inner} not divisible by head_count {head_count}")
        self.head_count = head_count
        self.head_dim = inner // head_count
        self.query_width = query_width
        self.context_width = context_width
        self.q_proj = self.add("q_proj", LinearLayer(query_width, inner, rng))
        self.k_proj = self.add("k_proj", LinearLayer(context_width, inner, rng))
        self.v_proj = self.add("v_proj", LinearLayer(context_width, inner, rng))
        self.out_proj = self.add("out_proj", LinearLayer(inner, query_width, rng))

    def __call__(self, queries: Tensor, context: Tensor) -> Tensor:
        return cross_attention(self, queries, context)


def cross_attention(layer: CrossAttentionLayer, queries: Tensor, context: Tensor) -> Tensor:
    if context.shape[0] < 1:
        raise ValueError("cross-attention needs a non-empty context")
    q = _split_heads(layer.q_proj(queries), layer.head_count, layer.head_dim)
    k = _split_heads(layer.k_proj(context), layer.head_count, layer.head_dim)
    v = _split_heads(layer.v_proj(context), layer.head_count, layer.head_dim)
    scores = (q @ T.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(layer.head_dim))
    ctx = T.softmax(scores, axis=-1) @ v
    return layer.out_proj(_merge_heads(ctx))


def conv3x3_params(cin: int, cout: int, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    w = trunc_normal((cout, cin, 3, 3), rng)
    b = Tensor(np.zeros(cout), requires_grad=True)
    return w, b


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = self.register("weight", trunc_normal((cout, cin, kernel, kernel), rng))
        self.bias = self.register("bias", Tensor(np.zeros(cout), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ResidualBlock(Module):
    """Pre-activation residual unit: x + conv(act(norm(conv(act(norm(x)))))).

    Output shape always equals input shape.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.conv1 = self.add("conv1", Conv2d(channels, channels, 3, rng, padding=1))
        self.conv2 = self.add("conv2", Conv2d(channels, channels, 3, rng, padding=1))

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv1(T.silu(instance_norm(x)))
        h = self.conv2(T.silu(instance_norm(h)))
        return x + h


class TransformerBlock(Module):
    """Pre-norm self-attention + feed-forward over a token sequence."""

    def __init__(self, width: int, head_count: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = self.add("norm1", LayerNorm(width))
        self.attn = self.add("attn", SelfAttentionLayer(width, head_count, rng))
        self.norm2 = self.add("norm2", LayerNorm(width))
        self.ff1 = self.add("ff1", LinearLayer(width, 2 * width, rng))
        self.ff2 = self.add("ff2", LinearLayer(2 * width, width, rng))

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ff2(T.silu(self.ff1(self.norm2(x))))


class WindowAttentionBlock(Module):
    """Self-attention over non-overlapping w x w spatial windows plus a
    feed-forward sublayer, both with pre-norm residuals.

    Spatial extents that do not divide the window size are zero-padded
    and the output is cropped back.
    """

    def __init__(self, channels: int, window: int, head_count: int, rng: np.random.Generator):
        super().__init__()
        self.window = window
        self.channels = channels
        self.norm1 = self.add("norm1", LayerNorm(channels))
        self.attn = self.add("attn", SelfAttentionLayer(channels, head_count, rng))
        self.norm2 = self.add("norm2", LayerNorm(channels))
        self.ff1 = self.add("ff1", LinearLayer(channels, 2 * channels, rng))
        self.ff2 = self.add("ff2", LinearLayer(2 * channels, channels, rng))

    def __call__(self, x: Tensor) -> Tensor:
        c, h, w = x.shape
        ww = self.window
        ph = (-h) % ww
        pw = (-w) % ww
        xp = T.pad2d(x, 0, ph, 0, pw) if (ph or pw) else x
        hp, wp = h + ph, w + pw
        nh, nw = hp // ww, wp // ww
        # [C,hp,wp] -> [nh*nw, ww*ww, C]
        tokens = T.transpose(xp.reshape(c, nh, ww, nw, ww), (1, 3, 2, 4, 0))
        tokens = tokens.reshape(nh * nw, ww * ww, c)
        outs = []
        for i in range(nh * nw):
            t = tokens[i]
            t = t + self.attn(self.norm1(t))
            t = t + self.ff2(T.silu(self.ff1(self.norm2(t))))
            outs.append(t.reshape(1, ww * ww, c))
        merged = T.concat(outs, axis=0).reshape(nh, nw, ww, ww, c)
        out = T.transpose(merged, (4, 0, 2, 1, 3)).reshape(c, hp, wp)
        if ph or pw:
            out = out[:, :h, :w]
        return out
