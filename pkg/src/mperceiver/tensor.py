"""Dense n-d float tensors with reverse-mode automatic differentiation.

Everything downstream (layers, encoders, the diffusion core) is built on
this. Tensors store contiguous row-major float32 data by default; every
public operation validates that its result is finite and raises otherwise.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Temporarily change the dtype of newly created leaf tensors.

    Training and persistence run in float32. Gradient checks run under
    float64 because the finite-difference noise floor of a float32 forward
    pass (~1e-7 * |f| / eps) is too large for the stated tolerances.
    """
    global _DEFAULT_DTYPE
    prev = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference / data synthesis)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values produced by '{op}'")


class Tensor:
    """A dense array with optional gradient tracking.

    Attributes:
        data: contiguous row-major numpy array of reals.
        requires_grad: whether backward() accumulates into .grad.
        grad: Tensor of identical shape, populated by backward().
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.ascontiguousarray(data, dtype=dtype or _DEFAULT_DTYPE)
        _check_finite(arr, "tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None
        self._op = "leaf"

    # ---- basic introspection ----

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad, dtype=self.data.dtype)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data, dtype=dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # ---- graph plumbing ----

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = Tensor(np.zeros_like(self.data))
        self.grad.data += g.astype(self.data.dtype, copy=False)

    def backward(self) -> None:
        backward(self)

    # ---- operators ----

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


class ComputationTape:
    """Topologically ordered record of the ops reachable from a root tensor.

    Inputs of every node precede it; the backward replay walks the record
    in reverse and visits each node exactly once. After replay the graph
    edges are severed, so a second backward on the same root fails.
    """

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.nodes = order  # inputs first

    def run_backward(self, root: Tensor, seed: np.ndarray) -> None:
        root._accumulate(seed)
        for node in reversed(self.nodes):
            if node._vjp is None:
                continue
            g = node.grad.data if node.grad is not None else np.zeros_like(node.data)
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is not None and parent.requires_grad:
                    parent._accumulate(pg)
            node.grad = None  # interior grads are transient; leaves keep theirs
        for node in self.nodes:
            if node._vjp is not None:
                node._parents = ()
                node._vjp = None
                node._op = "consumed"


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every gradient-tracking leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._op == "consumed":
        raise RuntimeError("backward() on a consumed tape; rebuild the graph")
    tape = ComputationTape(loss)
    if loss.requires_grad or loss._vjp is not None:
        tape.run_backward(loss, np.ones_like(loss.data))


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), dtype=dtype or _DEFAULT_DTYPE)


def _result(data: np.ndarray, op: str, parents: Sequence[Tensor], vjp) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data)
    out.grad = None
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    else:
        out._parents = ()
        out._vjp = None
        out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---- elementwise arithmetic ----

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(out, "add", (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(out, "sub", (a, b), vjp)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        s = float(b)

        def vjp_s(g):
            return (g * s,)

        return _result(a.data * s, "mul", (a,), vjp_s)
    a, b = _as_tensor(a), _as_tensor(b)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, "mul", (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _result(out, "div", (a, b), vjp)


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    if p == 0.0:
        return _result(np.ones_like(a.data), "pow", (a,), lambda g: (np.zeros_like(g),))
    out = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _result(out, "pow", (a,), vjp)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _result(out, "exp", (a,), vjp)


def log(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _result(out, "log", (a,), vjp)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _result(out, "sqrt", (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # stable two-sided form
    out = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    out = out.astype(a.data.dtype, copy=False)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _result(out, "sigmoid", (a,), vjp)


def silu(a) -> Tensor:
    """x * sigmoid(x); the smooth nonlinearity used throughout."""
    a = _as_tensor(a)
    return mul(a, sigmoid(a))


def clamp(a, lo: float, hi: float) -> Tensor:
    a = _as_tensor(a)
    out = np.clip(a.data, lo, hi)

    def vjp(g):
        mask = (a.data >= lo) & (a.data <= hi)
        return (g * mask,)

    return _result(out, "clamp", (a,), vjp)


def maximum(a, s: float) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, s)

    def vjp(g):
        return (g * (a.data > s),)

    return _result(out, "maximum", (a,), vjp)


# ---- reductions ----

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g2 = g
        if not keepdims:
            g2 = np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).copy(),)

    return _result(np.asarray(out), "sum", (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for i in ax:
            count *= a.shape[i]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        g2 = g
        if not keepdims:
            g2 = np.expand_dims(g, axis)
        return (np.broadcast_to(g2 / count, a.shape).copy(),)

    return _result(np.asarray(out), "mean", (a,), vjp)


# ---- shape ops ----

def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _result(out, "reshape", (a,), vjp)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    out = a.data.transpose(axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inv),)

    return _result(out, "transpose", (a,), vjp)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat() of an empty sequence")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _result(out, "concat", ts, vjp)


def take(a, idx) -> Tensor:
    """Basic slicing / integer indexing with gradient scatter-add."""
    a = _as_tensor(a)
    out = a.data[idx]

    def vjp(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        return (buf,)

    return _result(np.asarray(out), "take", (a,), vjp)


def pad2d(a, top: int, bottom: int, left: int, right: int) -> Tensor:
    """Zero-pad the last two axes."""
    a = _as_tensor(a)
    widths = [(0, 0)] * (a.ndim - 2) + [(top, bottom), (left, right)]
    out = np.pad(a.data, widths)

    def vjp(g):
        sl = [slice(None)] * (a.ndim - 2)
        sl += [slice(top, g.shape[-2] - bottom), slice(left, g.shape[-1] - right)]
        return (np.ascontiguousarray(g[tuple(sl)]),)

    return _result(out, "pad2d", (a,), vjp)


# ---- linear algebra ----

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, "matmul", (a, b), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _result(out, "softmax", (a,), vjp)


# ---- convolution and resampling ----

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(b, c * kh * kw, oh * ow)


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    b, c, h, w = x_shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    cols = cols.reshape(b, c, kh, kw, oh, ow)
    out = np.zeros(x_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    return out


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d convolution (cross-correlation) over [B,C,H,W] or [C,H,W] input."""
    x, w = _as_tensor(x), _as_tensor(w)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d needs [B,C,H,W] x and [O,C,kh,kw] w, got {x.shape}, {w.shape}")
    o, cin, kh, kw = w.shape
    if xd.shape[1] != cin:
        raise ValueError(f"conv2d channel mismatch: input {xd.shape[1]}, kernel {cin}")
    if padding:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = xd
    bsz = xp.shape[0]
    oh = (xp.shape[2] - kh) // stride + 1
    ow = (xp.shape[3] - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride)                       # [B, C*kh*kw, OH*OW]
    wmat = w.data.reshape(o, cin * kh * kw)
    out = np.matmul(wmat, cols).reshape(bsz, o, oh, ow)
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        out = out + b.data.reshape(1, o, 1, 1)
        parents.append(b)
    if squeeze:
        out = out[0]

    def vjp(g):
        gd = g[None] if squeeze else g
        gmat = gd.reshape(bsz, o, oh * ow)
        gw = np.einsum("boi,bci->oc", gmat, cols, optimize=True).reshape(w.shape)
        gcols = np.matmul(wmat.T, gmat)                      # [B, C*kh*kw, OH*OW]
        gxp = _col2im(gcols, xp.shape, kh, kw, stride)
        if padding:
            gx = gxp[:, :, padding:-padding or None, padding:-padding or None]
        else:
            gx = gxp
        gx = gx[0] if squeeze else gx
        grads = [np.ascontiguousarray(gx), gw]
        if b is not None:
            grads.append(gd.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _result(out, "conv2d", parents, vjp)


def upsample2x(x) -> Tensor:
    """Nearest-neighbour 2x upsampling of the last two axes."""
    x = _as_tensor(x)
    out = x.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def vjp(g):
        h, w = x.shape[-2], x.shape[-1]
        g4 = g.reshape(g.shape[:-2] + (h, 2, w, 2))
        return (g4.sum(axis=(-3, -1)),)

    return _result(out, "upsample2x", (x,), vjp)


# ---- constructors ----

def zeros(*shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(*shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def full(shape, value: float, requires_grad: bool = False) -> Tensor:
    return Tensor(np.full(shape, value), requires_grad=requires_grad)


def randn(shape, rng: np.random.Generator, requires_grad: bool = False) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=requires_grad)


# ---- the gradient oracle ----

def finite_difference_grad(f: Callable[[Tensor], Tensor], x: Tensor, eps: float) -> Tensor:
    """Central-difference gradient of a scalar-valued f at x.

    Independent of the tape: f is evaluated 2*size times on perturbed
    copies of x. f must be deterministic.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    flat = x.data.reshape(-1)
    grad = np.zeros_like(flat)
    work = x.data.copy()
    wflat = work.reshape(-1)
    for i in range(flat.size):
        orig = wflat[i]
        wflat[i] = orig + eps
        f_hi = f(Tensor(work.copy(), dtype=x.dtype)).item()
        wflat[i] = orig - eps
        f_lo = f(Tensor(work.copy(), dtype=x.dtype)).item()
        wflat[i] = orig
        grad[i] = (f_hi - f_lo) / (2.0 * eps)
    return Tensor(grad.reshape(x.shape), dtype=x.dtype)
