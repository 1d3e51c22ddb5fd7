"""Reusable network pieces: linear/conv layers and pre-norm transformer blocks.

Residual blocks zero-initialize their output projections, so a freshly built
block is the identity map; encoder unit tests rely on that.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    """Minimal parameter container; children are discovered by attribute walk."""

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for value in self.__dict__.values():
            out.extend(_collect(value))
        return out


def _collect(value):
    if isinstance(value, Parameter):
        return [value]
    if isinstance(value, Module):
        return value.parameters()
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out.extend(_collect(v))
        return out
    return []


def _normal(rng: np.random.Generator, shape, std, dtype):
    return (rng.standard_normal(shape) * std).astype(dtype)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, dtype=np.float64, zero=False, name="linear", bias=True):
        std = 0.0 if zero else 1.0 / np.sqrt(d_in)
        self.weight = Parameter(_normal(rng, (d_in, d_out), std, dtype), name=f"{name}.weight")
        self.bias = Parameter(np.zeros(d_out, dtype=dtype), name=f"{name}.bias", decay=False) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return T.add(y, self.bias) if self.bias is not None else y


class Conv2d(Module):
    """3x3/1x1 convolution in NHWC layout with He-normal init."""

    def __init__(self, c_in, c_out, rng, k=3, stride=1, pad=None, dtype=np.float64, name="conv"):
        self.stride = stride
        self.pad = (k // 2) if pad is None else pad
        std = np.sqrt(2.0 / (k * k * c_in))
        self.weight = Parameter(_normal(rng, (k, k, c_in, c_out), std, dtype), name=f"{name}.weight")
        self.bias = Parameter(np.zeros(c_out, dtype=dtype), name=f"{name}.bias", decay=False)

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.conv2d(x, self.weight, stride=self.stride, pad=self.pad), self.bias)


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float64, name="ln"):
        self.gain = Parameter(np.ones(dim, dtype=dtype), name=f"{name}.gain", decay=False)
        self.bias = Parameter(np.zeros(dim, dtype=dtype), name=f"{name}.bias", decay=False)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)


class TransformerBlock(Module):
    """Pre-norm multi-head self-attention + feed-forward with zero-init outputs.

    Positional encodings, when given, are added to the query/key path only, so
    the block stays an exact identity at initialization and constant inputs
    map to constant outputs.
    """

    def __init__(self, dim, heads, rng, ffn_mult=2, dtype=np.float64, name="block"):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.ln1 = LayerNorm(dim, dtype, f"{name}.ln1")
        self.w_q = Linear(dim, dim, rng, dtype, name=f"{name}.q")
        self.w_k = Linear(dim, dim, rng, dtype, name=f"{name}.k")
        self.w_v = Linear(dim, dim, rng, dtype, name=f"{name}.v")
        self.w_o = Linear(dim, dim, rng, dtype, zero=True, name=f"{name}.o")
        self.ln2 = LayerNorm(dim, dtype, f"{name}.ln2")
        self.ffn1 = Linear(dim, ffn_mult * dim, rng, dtype, name=f"{name}.ffn1")
        self.ffn2 = Linear(ffn_mult * dim, dim, rng, dtype, zero=True, name=f"{name}.ffn2")

    def __call__(self, x: Tensor, pos: np.ndarray | None = None) -> Tensor:
        b, t, c = x.shape
        h = self.heads
        d = c // h
        normed = self.ln1(x)
        qk_in = T.add(normed, T.as_tensor(pos.astype(x.dtype, copy=False))) if pos is not None else normed
        q = _split_heads(self.w_q(qk_in), b, t, h, d)
        k = _split_heads(self.w_k(qk_in), b, t, h, d)
        v = _split_heads(self.w_v(normed), b, t, h, d)
        scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d))
        attn = T.softmax_axis(scores, -1)
        ctx = T.matmul(attn, v)
        merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, t, c))
        x = T.add(x, self.w_o(merged))
        y = self.ffn2(T.relu(self.ffn1(self.ln2(x))))
        return T.add(x, y)


def _split_heads(x: Tensor, b, t, h, d) -> Tensor:
    return T.transpose(T.reshape(x, (b, t, h, d)), (0, 2, 1, 3))


def sinusoid_1d(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos position table, [length, dim]."""
    if dim % 2:
        raise ValueError("sinusoid dim must be even")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = np.exp(-np.log(10000.0) * np.arange(0, dim, 2, dtype=np.float64) / dim)
    angles = pos * freq[None, :]
    out = np.zeros((length, dim), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def sinusoid_2d(w: int, h: int, dim: int) -> np.ndarray:
    """Fixed 2-D sin/cos table over an x-major grid, [w, h, dim]."""
    if dim % 4:
        raise ValueError("2-D sinusoid dim must be divisible by 4")
    px = sinusoid_1d(w, dim // 2)
    py = sinusoid_1d(h, dim // 2)
    out = np.zeros((w, h, dim), dtype=np.float64)
    out[:, :, : dim // 2] = px[:, None, :]
    out[:, :, dim // 2 :] = py[None, :, :]
    return out
