"""The full recogniser: dual-branch encoder plus transformer decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autograd as ag
from .data import ExprSample, global_view
from .decoder import TransformerDecoder, greedy_decode
from .encoder import DualBranchEncoder, EncoderInput
from .nn import Module
from .segmentation import SymbolPatch, segment
from .vocab import PAD_ID, Vocabulary


@dataclass
class ModelConfig:
    embed_dim: int = 256
    enc_layers: int = 4
    enc_heads: int = 8
    dec_layers: int = 4
    dec_heads: int = 8
    ffn_dim: int = 1024
    enhancer: str = "ccm"
    ccm_stage: int = 1
    ccm_normalize: bool = True
    max_len: int = 64
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


def encoder_input(patches: list[SymbolPatch], image: np.ndarray) -> EncoderInput:
    h, w = image.shape
    bitmaps = np.stack([p.bitmap for p in patches]) / 255.0
    boxes = np.array([[p.bbox[0] / w, p.bbox[1] / h, p.bbox[2] / w, p.bbox[3] / h]
                      for p in patches], dtype=np.float64)
    order = np.array([p.order_index for p in patches])
    return EncoderInput(bitmaps, boxes, order, global_view(image, min_width=8))


class DBN(Module):
    def __init__(self, vocab: Vocabulary, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        self.vocab = vocab
        c = self.config
        self.encoder = DualBranchEncoder(c.embed_dim, c.enc_layers, c.enc_heads, c.ffn_dim,
                                         c.enhancer, c.ccm_stage, c.ccm_normalize)
        self.decoder = TransformerDecoder(len(vocab), c.embed_dim, c.dec_layers, c.dec_heads,
                                          c.ffn_dim, c.max_len)
        self.initialize(c.seed)
        self._inputs: dict[str, EncoderInput] = {}

    def prepare(self, sample: ExprSample) -> EncoderInput:
        cached = self._inputs.get(sample.id)
        if cached is None:
            cached = encoder_input(sample.patches, sample.image)
            self._inputs[sample.id] = cached
        return cached

    def target_ids(self, samples: list[ExprSample]) -> np.ndarray:
        """Padded (B, T) id matrix with <sos>/<eos> sentinels."""
        seqs = [self.vocab.encode(s.tokens) for s in samples]
        t = max(len(s) for s in seqs)
        out = np.full((len(seqs), t), PAD_ID, dtype=np.int64)
        for i, s in enumerate(seqs):
            out[i, :len(s)] = s
        return out

    def logits(self, samples: list[ExprSample], targets: np.ndarray | None = None):
        """Teacher-forced logits (B, T-1, K) and the target ids they score."""
        if targets is None:
            targets = self.target_ids(samples)
        memory, valid = self.encoder([self.prepare(s) for s in samples])
        return self.decoder.teacher_forced_logits(memory, valid, targets), targets[:, 1:]

    def predict(self, samples: list[ExprSample], max_len: int | None = None) -> list[list[str]]:
        return self._decode([self.prepare(s) for s in samples], max_len)

    def predict_image(self, image: np.ndarray, max_len: int | None = None) -> list[str]:
        """Transcribe a raw image (not cached, unlike dataset samples)."""
        image = np.asarray(image)
        return self._decode([encoder_input(segment(image), image)], max_len)[0]

    def _decode(self, inputs: list[EncoderInput], max_len: int | None) -> list[list[str]]:
        with ag.no_grad():
            memory, valid = self.encoder(inputs)
            ids = greedy_decode(self.decoder, memory, valid, max_len or self.config.max_len)
        return [self.vocab.decode(s) for s in ids]

