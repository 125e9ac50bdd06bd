"""Autoregressive transformer decoder over symbol embeddings."""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import DecoderLayer, Embedding, LayerNorm, Linear, Module, ModuleList, sinusoidal
from .vocab import EOS_ID, PAD_ID, SOS_ID, Vocabulary

__all__ = ["TransformerDecoder", "Vocabulary", "greedy_decode"]


class TransformerDecoder(Module):
    def __init__(self, vocab_size: int, d: int = 256, layers: int = 4, heads: int = 8,
                 ffn: int = 1024, max_len: int = 64):
        super().__init__()
        self.d = d
        self.max_len = max_len
        self.embed = Embedding(vocab_size, d)
        self.layers = ModuleList(DecoderLayer(d, heads, ffn) for _ in range(layers))
        self.norm = LayerNorm(d)
        self.out = Linear(d, vocab_size)

    def __call__(self, memory: Tensor, mem_valid: np.ndarray, tokens: np.ndarray) -> Tensor:
        """Logits (B, T, K) for every prefix of ``tokens`` (B, T)."""
        tokens = np.asarray(tokens)
        t = tokens.shape[1]
        x = self.embed(tokens) + Tensor(sinusoidal(np.arange(t), self.d))
        for layer in self.layers:
            x = layer(x, memory, mem_valid)
        return self.out(self.norm(x))

    def teacher_forced_logits(self, memory: Tensor, mem_valid: np.ndarray,
                              targets: np.ndarray) -> Tensor:
        """Row l of the result scores position l+1 given the target prefix up to l."""
        targets = np.asarray(targets)
        if targets.ndim == 1:
            targets = targets[None]
        if targets.shape[1] > self.max_len:
            raise ValueError(f"target length {targets.shape[1]} exceeds max_len {self.max_len}")
        if np.any(targets[:, 0] != SOS_ID):
            raise ValueError("targets must start with <sos>")
        return self(memory, mem_valid, targets[:, :-1])


def greedy_decode(decoder: TransformerDecoder, memory: Tensor, mem_valid: np.ndarray,
                  max_len: int | None = None) -> list[list[int]]:
    """Argmax decoding for a batch; each sequence stops at <eos> or ``max_len`` tokens.

    <pad> and <sos> are never emitted after the first position.
    """
    max_len = max_len or decoder.max_len
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    b = memory.shape[0]
    seqs = np.full((b, 1), SOS_ID, dtype=np.int64)
    done = np.zeros(b, dtype=bool)
    with ag.no_grad():
        while seqs.shape[1] < max_len and not done.all():
            logits = decoder(memory, mem_valid, seqs).data[:, -1, :].copy()
            logits[:, [PAD_ID, SOS_ID]] = -np.inf
            nxt = np.argmax(logits, axis=-1)
            nxt = np.where(done, PAD_ID, nxt)
            seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
            done |= nxt == EOS_ID
    out = []
    for row in seqs:
        ids = [int(i) for i in row]
        if EOS_ID in ids:
            ids = ids[:ids.index(EOS_ID) + 1]
        out.append(ids)
    return out
