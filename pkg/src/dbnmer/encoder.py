"""Dual-branch convolutional encoder with the context coupling module.

A local branch runs on every 30×30 symbol patch and a global branch on the
whole image rescaled to height 30.  Both share the pooling schedule, so
their feature maps have the same height at every stage.  After stage
``ccm_stage`` each symbol's local map attends over the global map (queries
from the local side, keys and values from the global side) and the aligned
context is concatenated back and mixed by a 1×1 convolution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import DimensionError, Tensor
from .nn import Conv2d, EncoderLayer, LayerNorm, Linear, Module, ModuleList, sinusoidal
from .segmentation import PATCH_SIZE

CHANNELS = 8
ENHANCERS = ("none", "ccm", "cbam", "self_attn")


class ConvStage(Module):
    """conv3×3 → relu → conv3×3 → relu → maxpool2×2."""

    def __init__(self, c_in: int, c_out: int = CHANNELS):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, pad=1)
        self.conv2 = Conv2d(c_out, c_out, 3, pad=1)

    def __call__(self, x: Tensor) -> Tensor:
        h, w = x.shape[-2:]
        if h < 2 or w < 2:
            raise DimensionError(f"conv stage needs spatial extents ≥ 2, got {h}×{w}")
        x = ag.relu(self.conv1(x))
        x = ag.relu(self.conv2(x))
        return ag.maxpool2x2(x)


def _batched(x: Tensor) -> Tensor:
    return x if x.ndim == 4 else x.reshape((1,) + x.shape)


class ContextCoupling(Module):
    def __init__(self, channels: int = CHANNELS, normalize: bool = True):
        super().__init__()
        self.channels = channels
        self.normalize = normalize
        self.theta = Conv2d(channels, channels, 1)
        self.phi = Conv2d(channels, channels, 1)
        self.g = Conv2d(channels, channels, 1)
        self.fuse = Conv2d(2 * channels, channels, 1)

    def _check(self, local: Tensor, glob: Tensor) -> None:
        if local.shape[-3] != glob.shape[-3] or local.shape[-3] != self.channels:
            raise DimensionError(
                f"CCM channel mismatch: local {local.shape}, global {glob.shape}, expected {self.channels}")
        if local.shape[-2] != glob.shape[-2]:
            raise DimensionError(f"CCM needs equal heights: local {local.shape}, global {glob.shape}")

    def weights(self, local: Tensor, glob: Tensor) -> Tensor:
        """Row-stochastic (n, H1·W1, H0·W0) relation between local and global positions."""
        self._check(local, glob)
        local, glob = _batched(local), _batched(glob)
        n, c = local.shape[:2]
        q = self.theta(local).reshape(n, c, -1).transpose(0, 2, 1)
        k = self.phi(glob).reshape(c, -1)
        return ag.softmax(ag.matmul(q, k), axis=-1)

    def align(self, local: Tensor, glob: Tensor) -> Tensor:
        """Global context re-weighted onto every local position, same shape as ``local``."""
        squeeze = local.ndim == 3
        w = self.weights(local, glob)
        local, glob = _batched(local), _batched(glob)
        n, c, h1, w1 = local.shape
        values = self.g(glob).reshape(c, -1).transpose(1, 0)
        y = ag.matmul(w, values)
        if self.normalize:
            y = y * (1.0 / c)
        y = y.transpose(0, 2, 1).reshape(n, c, h1, w1)
        return y.reshape(y.shape[1:]) if squeeze else y

    def couple(self, local: Tensor, y: Tensor) -> Tensor:
        if local.shape != y.shape:
            raise DimensionError(f"CCM fuse: local {local.shape} vs aligned {y.shape}")
        return self.fuse(ag.concat_channels(local, y))

    def __call__(self, local: Tensor, glob: Tensor) -> Tensor:
        return self.couple(local, self.align(local, glob))

    def set_passthrough(self) -> None:
        """Fuse weights [identity | zero]: the block returns its local input."""
        c = self.channels
        w = np.zeros((c, 2 * c, 1, 1))
        w[np.arange(c), np.arange(c), 0, 0] = 1.0
        self.fuse.weight.data = w
        self.fuse.bias.data = np.zeros(c)


class CBAM(Module):
    """Channel gate from pooled descriptors, then a spatial gate from channel statistics."""

    def __init__(self, channels: int = CHANNELS, reduction: int = 2, kernel: int = 7):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.mlp_in = Linear(channels, hidden)
        self.mlp_out = Linear(hidden, channels)
        self.spatial = Conv2d(2, 1, kernel, pad=kernel // 2)

    def _mlp(self, v: Tensor) -> Tensor:
        return self.mlp_out(ag.relu(self.mlp_in(v)))

    def __call__(self, x: Tensor) -> Tensor:
        x4 = _batched(x)
        n, c, h, w = x4.shape
        avg = x4.mean(axis=(2, 3))
        mx = ag.tmax(x4.reshape(n, c, h * w), axis=-1)
        gate = ag.sigmoid(self._mlp(avg) + self._mlp(mx)).reshape(n, c, 1, 1)
        x4 = x4 * gate
        stats = ag.concat([x4.mean(axis=1, keepdims=True), ag.tmax(x4, axis=1, keepdims=True)], axis=1)
        x4 = x4 * ag.sigmoid(self.spatial(stats))
        return x4 if x.ndim == 4 else x4.reshape(x.shape)


class NonLocal(Module):
    """Self-attention over one feature map with a zero-initialised residual projection."""

    def __init__(self, channels: int = CHANNELS):
        super().__init__()
        self.theta = Conv2d(channels, channels, 1)
        self.phi = Conv2d(channels, channels, 1)
        self.g = Conv2d(channels, channels, 1)
        self.out = Conv2d(channels, channels, 1, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        x4 = _batched(x)
        n, c, h, w = x4.shape
        q = self.theta(x4).reshape(n, c, h * w).transpose(0, 2, 1)
        k = self.phi(x4).reshape(n, c, h * w)
        v = self.g(x4).reshape(n, c, h * w).transpose(0, 2, 1)
        att = ag.softmax(ag.matmul(q, k), axis=-1)
        y = ag.matmul(att, v).transpose(0, 2, 1).reshape(n, c, h, w)
        z = x4 + self.out(y)
        return z if x.ndim == 4 else z.reshape(x.shape)


def alt_enhancer(kind: str, channels: int = CHANNELS) -> Module:
    if kind == "cbam":
        return CBAM(channels)
    if kind == "self_attn":
        return NonLocal(channels)
    raise ValueError(f"unknown enhancer {kind!r}; expected 'cbam' or 'self_attn'")


@dataclass
class EncoderInput:
    """Per-expression arrays fed to the encoder (intensities scaled to [0, 1])."""
    patches: np.ndarray  # (n, 30, 30)
    boxes: np.ndarray  # (n, 4) bbox normalised by image width/height
    order: np.ndarray  # (n,)
    global_image: np.ndarray  # (30, W)


class DualBranchEncoder(Module):
    def __init__(self, d: int = 256, layers: int = 4, heads: int = 8, ffn: int = 1024,
                 enhancer: str = "ccm", ccm_stage: int = 1, ccm_normalize: bool = True,
                 channels: int = CHANNELS):
        super().__init__()
        if enhancer not in ENHANCERS:
            raise ValueError(f"unknown enhancer {enhancer!r}; choose from {ENHANCERS}")
        if ccm_stage not in (1, 2, 3):
            raise ValueError(f"ccm_stage must be 1, 2 or 3, got {ccm_stage}")
        self.d = d
        self.enhancer = enhancer
        self.ccm_stage = ccm_stage
        self.n_stages = max(2, ccm_stage)
        self.local_stages = ModuleList(
            ConvStage(1 if i == 0 else channels, channels) for i in range(self.n_stages))
        if enhancer == "ccm":
            self.global_stages = ModuleList(
                ConvStage(1 if i == 0 else channels, channels) for i in range(ccm_stage))
            self.ccm = ContextCoupling(channels, ccm_normalize)
        elif enhancer != "none":
            self.enh = alt_enhancer(enhancer, channels)
        side = PATCH_SIZE
        for _ in range(self.n_stages):
            side //= 2
        self.proj = Linear(channels * side * side, d)
        self.box_proj = Linear(4, d)
        self.layers = ModuleList(EncoderLayer(d, heads, ffn) for _ in range(layers))
        self.norm = LayerNorm(d)

    def global_features(self, image: np.ndarray) -> Tensor:
        g = Tensor(np.asarray(image, dtype=np.float64)[None, None])
        for stage in self.global_stages:
            g = stage(g)
        return g

    def symbol_features(self, batch: list[EncoderInput]) -> Tensor:
        """Conv features (after enhancement) for every symbol of every expression, stacked."""
        x = Tensor(np.concatenate([b.patches for b in batch])[:, None])
        counts = [len(b.patches) for b in batch]
        for s, stage in enumerate(self.local_stages, start=1):
            x = stage(x)
            if s != self.ccm_stage or self.enhancer == "none":
                continue
            if self.enhancer == "ccm":
                parts, off = [], 0
                for b, n in zip(batch, counts):
                    parts.append(self.ccm(x[off:off + n], self.global_features(b.global_image)))
                    off += n
                x = parts[0] if len(parts) == 1 else ag.concat(parts, axis=0)
            else:
                x = self.enh(x)
        return x

    def __call__(self, batch: list[EncoderInput]) -> tuple[Tensor, np.ndarray]:
        """Returns padded memory (B, n_max, d) and its validity mask (B, n_max)."""
        if not batch or any(len(b.patches) == 0 for b in batch):
            raise ValueError("every expression needs at least one symbol patch")
        feats = self.symbol_features(batch)
        n_total = feats.shape[0]
        tokens = self.proj(feats.reshape(n_total, -1))
        boxes = np.concatenate([b.boxes for b in batch])
        order = np.concatenate([b.order for b in batch])
        tokens = tokens + self.box_proj(Tensor(boxes)) + Tensor(sinusoidal(order, self.d))
        counts = [len(b.patches) for b in batch]
        n_max = max(counts)
        index = np.full((len(batch), n_max), -1)
        off = 0
        for i, n in enumerate(counts):
            index[i, :n] = np.arange(off, off + n)
            off += n
        valid = index >= 0
        x = ag.pad_gather(tokens, index)
        for layer in self.layers:
            x = layer(x, valid)
        return self.norm(x), valid
