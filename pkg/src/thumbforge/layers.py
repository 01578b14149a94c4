"""Architectural building blocks: dense layers, scaled dot-product and
multi-head attention, sinusoidal positional encoding, transformer encoder
blocks, and sigmoid context gating.

Layers are plain parameter containers; forward passes are reentrant, so a
trained layer can be shared read-only across threads.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional, Sequence

import numpy as np

from . import tensor as tf
from .errors import ConfigurationError, DimensionError
from .tensor import Tensor


def xavier_uniform(shape: tuple, rng: np.random.Generator,
                   fan_in: Optional[int] = None,
                   fan_out: Optional[int] = None) -> Tensor:
    """Seeded uniform Glorot initialization."""
    if fan_in is None or fan_out is None:
        if len(shape) == 2:
            fan_in, fan_out = shape
        elif len(shape) == 4:  # kh x kw x C x Cout kernels
            receptive = shape[0] * shape[1]
            fan_in, fan_out = receptive * shape[2], receptive * shape[3]
        else:
            fan_in = fan_out = int(np.prod(shape))
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-limit, limit, size=shape)
    return Tensor(data, requires_grad=True)


class DenseLayer:
    """Affine map with an optional relu/sigmoid activation."""

    ACTIVATIONS = ("relu", "sigmoid", "none")

    def __init__(self, d_in: int, d_out: int, activation: str = "none",
                 rng: Optional[np.random.Generator] = None):
        if activation not in self.ACTIVATIONS:
            raise ConfigurationError(
                f"unknown activation {activation!r}; expected one of {self.ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in = d_in
        self.d_out = d_out
        self.activation = activation
        self.weight = xavier_uniform((d_in, d_out), rng)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        out = tf.add(tf.matmul(x, self.weight), self.bias)
        if self.activation == "relu":
            return tf.relu(out)
        if self.activation == "sigmoid":
            return tf.sigmoid(out)
        return out

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "weight", self.weight
        yield "bias", self.bias


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V for 2-D Q, K, V."""
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise DimensionError(
            f"attention expects matrices, got {q.shape}/{k.shape}/{v.shape}")
    if q.shape[1] != k.shape[1]:
        raise DimensionError(
            f"attention: query width {q.shape[1]} != key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise DimensionError(
            f"attention: {k.shape[0]} keys but {v.shape[0]} values")
    d_k = q.shape[1]
    scores = tf.scale(tf.matmul(q, tf.transpose(k)), 1.0 / math.sqrt(d_k))
    return tf.matmul(tf.softmax(scores, axis=1), v)


class MultiHeadAttention:
    """h independent attention heads on learned projections, concatenated and
    projected back to d_model. Used in self-attention form."""

    def __init__(self, d_model: int, heads: int,
                 rng: Optional[np.random.Generator] = None):
        if d_model % heads != 0:
            raise ConfigurationError(
                f"d_model={d_model} is not divisible by heads={heads}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_model = d_model
        self.heads = heads
        self.d_k = d_model // heads
        self.w_q = [xavier_uniform((d_model, self.d_k), rng) for _ in range(heads)]
        self.w_k = [xavier_uniform((d_model, self.d_k), rng) for _ in range(heads)]
        self.w_v = [xavier_uniform((d_model, self.d_k), rng) for _ in range(heads)]
        self.w_o = xavier_uniform((heads * self.d_k, d_model), rng)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.d_model:
            raise DimensionError(
                f"multi_head: input width {x.shape} does not match d_model="
                f"{self.d_model}")
        outs = []
        for i in range(self.heads):
            q = tf.matmul(x, self.w_q[i])
            k = tf.matmul(x, self.w_k[i])
            v = tf.matmul(x, self.w_v[i])
            outs.append(attention(q, k, v))
        return tf.matmul(tf.concat(outs, axis=1), self.w_o)

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for i in range(self.heads):
            yield f"head{i}.wq", self.w_q[i]
            yield f"head{i}.wk", self.w_k[i]
            yield f"head{i}.wv", self.w_v[i]
        yield "wo", self.w_o


def positional_encoding(length: int, d_model: int) -> Tensor:
    """Sinusoidal position table: sin on even columns, cos on odd ones."""
    if length < 1 or d_model < 1:
        raise ConfigurationError("positional_encoding needs length, d_model >= 1")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return Tensor(pe)


class EncoderBlock:
    """Post-norm transformer encoder block: self-attention and a two-layer
    feed-forward net, each wrapped in residual + layer norm."""

    def __init__(self, d_model: int, heads: int, d_ff: int,
                 rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_model = d_model
        self.mha = MultiHeadAttention(d_model, heads, rng)
        self.ff1 = DenseLayer(d_model, d_ff, "relu", rng)
        self.ff2 = DenseLayer(d_ff, d_model, "none", rng)
        self.ln1_gain = Tensor(np.ones(d_model), requires_grad=True)
        self.ln1_bias = Tensor(np.zeros(d_model), requires_grad=True)
        self.ln2_gain = Tensor(np.ones(d_model), requires_grad=True)
        self.ln2_bias = Tensor(np.zeros(d_model), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        attn = tf.layer_norm(tf.add(x, self.mha(x)), self.ln1_gain, self.ln1_bias)
        ff = self.ff2(self.ff1(attn))
        return tf.layer_norm(tf.add(attn, ff), self.ln2_gain, self.ln2_bias)

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, p in self.mha.parameters():
            yield f"mha.{name}", p
        for name, p in self.ff1.parameters():
            yield f"ff1.{name}", p
        for name, p in self.ff2.parameters():
            yield f"ff2.{name}", p
        yield "ln1.gain", self.ln1_gain
        yield "ln1.bias", self.ln1_bias
        yield "ln2.gain", self.ln2_gain
        yield "ln2.bias", self.ln2_bias


def encoder_forward(x: Tensor, blocks: Sequence[EncoderBlock],
                    use_pe: bool = True) -> Tensor:
    """Run a stack of encoder blocks, optionally adding positional encoding
    first. Shape (T, d_model) is preserved."""
    for block in blocks:
        if block.d_model != x.shape[1]:
            raise ConfigurationError(
                f"encoder block width {block.d_model} does not match input "
                f"width {x.shape[1]}")
    if use_pe:
        pe = positional_encoding(x.shape[0], x.shape[1])
        x = tf.add(x, Tensor(pe.data.astype(x.dtype)))
    for block in blocks:
        x = block(x)
    return x


class ContextGate:
    """Elementwise sigmoid gate: sigmoid(W m + b) * m. The gate lies in (0,1)
    so the output never flips sign or grows in magnitude."""

    def __init__(self, dim: int, rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.weight = xavier_uniform((dim, dim), rng)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, m: Tensor) -> Tensor:
        if m.shape != (self.dim,):
            raise DimensionError(
                f"context gate expects shape ({self.dim},), got {m.shape}")
        gate = tf.sigmoid(tf.add(tf.matmul(m, self.weight), self.bias))
        return tf.mul(gate, m)

    def parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "weight", self.weight
        yield "bias", self.bias


def temporal_pool(x: Tensor, valid_rows: Optional[int] = None) -> Tensor:
    """Mean over the time axis of a (T, d) tensor. When ``valid_rows`` is
    given only that many leading rows participate (the rest is padding)."""
    if x.ndim != 2:
        raise DimensionError(f"temporal_pool expects (T, d), got {x.shape}")
    t = x.shape[0]
    if valid_rows is not None:
        if not 1 <= valid_rows <= t:
            raise DimensionError(
                f"temporal_pool: valid_rows={valid_rows} outside [1, {t}]")
        if valid_rows < t:
            x = tf.narrow(x, 0, 0, valid_rows)
            t = valid_rows
    ones = Tensor(np.full((1, t), 1.0 / t, dtype=x.dtype))
    return tf.reshape(tf.matmul(ones, x), (x.shape[1],))
