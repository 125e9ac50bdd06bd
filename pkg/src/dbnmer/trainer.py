"""Adam training loop with dynamic soft targets, evaluation and the ablation harness."""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autograd as ag
from . import checkpoint
from .data import ExprSample
from .dst import (DstConfig, EpochAccumulator, SoftLabelMatrix, accumulate_batch,
                  finalize_epoch, init_soft_labels, soft_loss)
from .metrics import METRIC_KEYS, corpus_report
from .model import DBN, ModelConfig
from .vocab import PAD_ID, Vocabulary

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 3e-4
    batch: int = 16
    epochs: int = 20
    seed: int = 0
    dst: bool = True
    beta: float = 0.5
    temperature: float = 10.0
    label_smoothing: float = 0.1
    loss_temperature: bool = False
    enhancer: str = "ccm"
    ccm_stage: int = 1
    ccm_normalize: bool = True
    embed_dim: int = 256
    enc_layers: int = 4
    enc_heads: int = 8
    dec_layers: int = 4
    dec_heads: int = 8
    ffn_dim: int = 1024
    max_len: int = 64
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch < 1:
            raise ValueError(f"batch must be at least 1, got {self.batch}")
        DstConfig(self.beta, self.temperature)

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(asdict(self))

    def dst_config(self) -> DstConfig:
        return DstConfig(self.beta, self.temperature)


# ------------------------------------------------------------------ config files

class ConfigError(ValueError):
    pass


def _coerce(kind, text: str):
    text = text.strip()
    if kind in (bool, "bool"):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def parse_key_values(text: str, source: str = "<config>") -> list[tuple[int, str, str]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out.append((lineno, key, value))
    return out


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def config_overrides(pairs, source: str = "<config>", extra_keys: Sequence[str] = ()) -> dict:
    values = {}
    for lineno, key, value in pairs:
        if key in extra_keys:
            values[key] = value
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(_FIELD_TYPES[key], value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path) -> TrainConfig:
    text = Path(path).read_text(encoding="utf-8")
    return TrainConfig(**config_overrides(parse_key_values(text, str(path)), str(path)))


# ------------------------------------------------------------------ Adam

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; arrays in ``params`` are updated in place and returned."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
    return params, state


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ------------------------------------------------------------------ training

@dataclass
class EpochResult:
    losses: list
    token_accuracy: float
    soft_labels: SoftLabelMatrix


class Trainer:
    def __init__(self, vocab: Vocabulary, cfg: TrainConfig | None = None, model: DBN | None = None):
        self.cfg = cfg or TrainConfig()
        self.vocab = vocab
        self.model = model or DBN(vocab, self.cfg.model_config())
        self.adam = AdamState()
        # with DST off the targets are frozen one-hot columns, i.e. plain cross-entropy
        eps = self.cfg.label_smoothing if self.cfg.dst else 0.0
        self.soft_labels = init_soft_labels(len(vocab), eps)
        self.epoch = 0
        self.history: list[EpochResult] = []

    def _batches(self, n: int):
        rng = np.random.default_rng([self.cfg.seed, self.epoch])
        order = rng.permutation(n)
        return [order[i:i + self.cfg.batch] for i in range(0, n, self.cfg.batch)]

    def train_step(self, batch: list[ExprSample], acc: EpochAccumulator | None):
        cfg, model = self.cfg, self.model
        model.zero_grad()
        logits, targets = model.logits(batch)
        temp = cfg.temperature if cfg.loss_temperature else 1.0
        loss = soft_loss(logits, targets, self.soft_labels, temperature=temp, validate=False)
        ag.backward(loss)
        named = dict(model.named_parameters())
        grads = {k: t.grad for k, t in named.items() if t.grad is not None}
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        clip_global_norm(grads, cfg.clip_norm)
        adam_step({k: t.data for k, t in named.items()}, grads, self.adam, cfg.lr)
        keep = targets != PAD_ID
        pred = np.argmax(logits.data, axis=-1)
        if acc is not None:
            accumulate_batch(acc, logits.data, targets, keep)
        return loss.item(), int(((pred == targets) & keep).sum()), int(keep.sum())

    def train_epoch(self, data: Sequence[ExprSample]) -> EpochResult:
        """One pass over ``data``; the soft labels read here were fixed after the previous epoch."""
        self._check_vocab(data)
        cfg = self.cfg
        acc = EpochAccumulator(len(self.vocab), cfg.temperature) if cfg.dst else None
        losses, hit, tot = [], 0, 0
        for idx in self._batches(len(data)):
            loss, h, t = self.train_step([data[i] for i in idx], acc)
            if not np.isfinite(loss):
                raise FloatingPointError(f"loss became {loss} in epoch {self.epoch}")
            losses.append(loss)
            hit += h
            tot += t
        if acc is not None:
            self.soft_labels = finalize_epoch(acc, self.soft_labels, cfg.beta)
        self.epoch += 1
        result = EpochResult(losses, hit / max(tot, 1), self.soft_labels)
        self.history.append(result)
        return result

    def fit(self, data: Sequence[ExprSample], epochs: int | None = None, verbose: bool = False):
        for _ in range(epochs if epochs is not None else self.cfg.epochs):
            t0 = time.time()
            res = self.train_epoch(data)
            if verbose:
                log.info("epoch %d loss %.4f acc %.4f (%.1fs)", self.epoch,
                         float(np.mean(res.losses)), res.token_accuracy, time.time() - t0)
        return self.history

    def _check_vocab(self, data):
        for s in data:
            bad = [t for t in s.tokens if t not in self.vocab]
            if bad:
                raise ValueError(f"sample {s.id} uses tokens outside the vocabulary: {bad}")

    def save(self, path, dump_soft_labels: bool = True, every_epoch: bool = False) -> None:
        """Checkpoint the model; optionally include the current S (and every epoch's S)."""
        extra = {"dst/S": self.soft_labels.S} if dump_soft_labels else {}
        if every_epoch:
            for i, r in enumerate(self.history, start=1):
                extra[f"dst/S/epoch{i:04d}"] = r.soft_labels.S
        checkpoint.save_model(path, self.model, extra,
                              {"epoch": self.epoch, "train": asdict(self.cfg)})


def token_accuracy(model: DBN, data: Sequence[ExprSample], batch: int = 32) -> float:
    """Teacher-forced argmax accuracy over all non-pad target positions."""
    hit = tot = 0
    with ag.no_grad():
        for i in range(0, len(data), batch):
            logits, targets = model.logits(list(data[i:i + batch]))
            keep = targets != PAD_ID
            hit += int(((np.argmax(logits.data, -1) == targets) & keep).sum())
            tot += int(keep.sum())
    return hit / max(tot, 1)


def evaluate(model: DBN, data: Sequence[ExprSample], batch: int = 32, pooled_bleu: bool = True,
             records: list | None = None) -> dict:
    """Greedy-decode every sample and score it; ``records`` collects per-sample rows."""
    preds = []
    for i in range(0, len(data), batch):
        preds += model.predict(list(data[i:i + batch]))
    pairs = [(p, s.tokens) for p, s in zip(preds, data)]
    rows: list = []
    report = corpus_report(pairs, pooled_bleu, per_sample=rows)
    if records is not None:
        for s, p, r in zip(data, preds, rows):
            records.append({"id": s.id, "prediction": " ".join(p), **r})
    return report


# ------------------------------------------------------------------ ablations

def ccm_dst_grid() -> list[dict]:
    return [{"enhancer": e, "dst": d} for e, d in itertools.product(("none", "ccm"), (False, True))]


def stage_grid() -> list[dict]:
    return [{"enhancer": "ccm", "ccm_stage": s, "dst": False} for s in (1, 2, 3)]


def enhancer_grid() -> list[dict]:
    return [{"enhancer": e, "dst": False} for e in ("none", "cbam", "self_attn", "ccm")]


def beta_grid() -> list[dict]:
    return [{"beta": round(0.1 * i, 1)} for i in range(1, 11)]


def temperature_grid(values=(1, 2, 4, 6, 8, 10, 15, 20)) -> list[dict]:
    return [{"temperature": float(t)} for t in values]


def _cell(value) -> str:
    if isinstance(value, bool):
        return "✓" if value else "×"
    return str(value)


def run_ablation(grid: Sequence[dict], train: Sequence[ExprSample], val: Sequence[ExprSample],
                 base: TrainConfig | None = None, vocab: Vocabulary | None = None,
                 epochs: int | None = None) -> list[dict]:
    """Train one fresh model per grid row with the shared seed and data; score on ``val``."""
    from .data import default_vocabulary

    base = base or TrainConfig()
    vocab = vocab or default_vocabulary()
    rows = []
    for overrides in grid:
        cfg = replace(base, **overrides)
        trainer = Trainer(vocab, cfg)
        trainer.fit(train, epochs)
        report = evaluate(trainer.model, val)
        losses = [l for r in trainer.history for l in r.losses]
        rows.append({"config": dict(overrides), "report": report, "losses": losses})
        log.info("ablation %s -> %s", overrides, report)
    return rows


def ablation_table(rows: list[dict]) -> str:
    """Tab-separated table: one column per varied key, then the four metrics."""
    keys: list[str] = []
    for r in rows:
        for k in r["config"]:
            if k not in keys:
                keys.append(k)
    # an enhancer column that only toggles ccm on and off reads as a check mark
    toggles = all(r["config"].get("enhancer", "none") in ("none", "ccm") for r in rows)
    header = []
    for k in keys:
        if k == "enhancer":
            header.append("CCM" if toggles else "enhancer")
        else:
            header.append("DST" if k == "dst" else k)
    lines = ["\t".join(header + list(METRIC_KEYS))]
    for r in rows:
        cells = []
        for k in keys:
            v = r["config"].get(k, "")
            if k == "enhancer" and toggles:
                v = v == "ccm"
            cells.append(_cell(v))
        cells += [f"{r['report'][m]:.2f}" for m in METRIC_KEYS]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
