"""Parameter containers and transformer building blocks on top of :mod:`autograd`."""
from __future__ import annotations

import zlib
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class ModuleList(list):
    pass


class Module:
    """Holds named parameters and child modules.

    Parameters are created as zeros and filled by :meth:`initialize`, which
    seeds a fresh generator per parameter from ``(seed, crc32(full name))``.
    Two models that share a parameter name therefore share its initial
    value, whichever other modules they contain.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._inits: dict[str, tuple] = {}

    def add_param(self, name: str, shape: tuple, init: tuple) -> Tensor:
        t = ag.parameter(np.zeros(shape), name=name)
        self._params[name] = t
        self._inits[name] = init
        setattr(self, name, t)
        return t

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for key, val in vars(self).items():
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, ModuleList):
                for i, m in enumerate(val):
                    yield f"{key}.{i}", m

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for key, child in self.children():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for k, t in own.items():
            arr = np.asarray(state[k], dtype=ag.DTYPE)
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {k}: expected {t.shape}, got {arr.shape}")
            t.data = arr.copy()

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def initialize(self, seed: int, prefix: str = "") -> "Module":
        for name, t in self._params.items():
            full = prefix + name
            kind = self._inits[name]
            if kind[0] == "uniform":
                rng = np.random.default_rng([seed, zlib.crc32(full.encode())])
                bound = np.sqrt(1.0 / kind[1])
                t.data = rng.uniform(-bound, bound, size=t.shape)
            elif kind[0] == "ones":
                t.data = np.ones(t.shape)
            elif kind[0] == "zeros":
                t.data = np.zeros(t.shape)
            else:
                raise ValueError(f"unknown init {kind!r} for {full}")
        for key, child in self.children():
            child.initialize(seed, f"{prefix}{key}.")
        return self

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True):
        super().__init__()
        self.add_param("weight", (d_in, d_out), ("uniform", d_in))
        self.has_bias = bias
        if bias:
            self.add_param("bias", (d_out,), ("uniform", d_in))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.linear(x, self.weight, self.bias if self.has_bias else None)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, pad: int = 0, zero_init: bool = False):
        super().__init__()
        self.pad = pad
        init = ("zeros",) if zero_init else ("uniform", c_in * k * k)
        self.add_param("weight", (c_out, c_in, k, k), init)
        self.add_param("bias", (c_out,), init)

    def __call__(self, x: Tensor) -> Tensor:
        return ag.conv2d(x, self.weight, self.bias, self.pad)


class LayerNorm(Module):
    def __init__(self, d: int):
        super().__init__()
        self.add_param("gamma", (d,), ("ones",))
        self.add_param("beta", (d,), ("zeros",))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layernorm(x, self.gamma, self.beta)


class Embedding(Module):
    def __init__(self, num: int, d: int):
        super().__init__()
        self.scale = np.sqrt(d)
        self.add_param("weight", (num, d), ("uniform", d))

    def __call__(self, ids) -> Tensor:
        return ag.embedding_lookup(self.weight, ids) * self.scale


def sinusoidal(positions, d: int) -> np.ndarray:
    """Standard sine/cosine table for integer positions, shape (len, d)."""
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ValueError(f"embed dim {d} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(d, d)
        self.k = Linear(d, d)
        self.v = Linear(d, d)
        self.o = Linear(d, d)

    def __call__(self, xq: Tensor, xkv: Tensor, key_valid: np.ndarray | None = None,
                 causal: bool = False, return_weights: bool = False):
        b, lq, d = xq.shape
        lk = xkv.shape[1]
        h = self.heads
        dh = d // h
        q = self.q(xq).reshape(b, lq, h, dh).transpose(0, 2, 1, 3)
        k = self.k(xkv).reshape(b, lk, h, dh).transpose(0, 2, 3, 1)
        v = self.v(xkv).reshape(b, lk, h, dh).transpose(0, 2, 1, 3)
        scores = ag.matmul(q, k) * (1.0 / np.sqrt(dh))
        blocked = np.zeros((b, 1, lq, lk), dtype=bool)
        if key_valid is not None:
            blocked |= ~np.asarray(key_valid, dtype=bool)[:, None, None, :]
        if causal:
            blocked |= np.triu(np.ones((lq, lk), dtype=bool), k=1)[None, None]
        if blocked.any():
            scores = ag.masked_fill(scores, blocked)
        weights = ag.softmax(scores, axis=-1)
        ctx = ag.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, lq, d)
        out = self.o(ctx)
        return (out, weights) if return_weights else out


class FeedForward(Module):
    def __init__(self, d: int, hidden: int):
        super().__init__()
        self.up = Linear(d, hidden)
        self.down = Linear(hidden, d)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ag.relu(self.up(x)))


class EncoderLayer(Module):
    """Pre-norm self-attention block."""

    def __init__(self, d: int, heads: int, ffn: int):
        super().__init__()
        self.norm1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads)
        self.norm2 = LayerNorm(d)
        self.ffn = FeedForward(d, ffn)

    def __call__(self, x: Tensor, valid: np.ndarray) -> Tensor:
        y = self.norm1(x)
        x = x + self.attn(y, y, valid)
        return x + self.ffn(self.norm2(x))


class DecoderLayer(Module):
    """Pre-norm causal self-attention, cross-attention, feed-forward."""

    def __init__(self, d: int, heads: int, ffn: int):
        super().__init__()
        self.norm1 = LayerNorm(d)
        self.self_attn = MultiHeadAttention(d, heads)
        self.norm2 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, heads)
        self.norm3 = LayerNorm(d)
        self.ffn = FeedForward(d, ffn)

    def __call__(self, x: Tensor, memory: Tensor, mem_valid: np.ndarray) -> Tensor:
        y = self.norm1(x)
        x = x + self.self_attn(y, y, None, causal=True)
        x = x + self.cross_attn(self.norm2(x), memory, mem_valid)
        return x + self.ffn(self.norm3(x))
