"""Stochastic expression grammar, dataset files and binary PGM I/O."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import render as rd
from .segmentation import PATCH_SIZE, SymbolPatch, segment, resize_bilinear
from .vocab import Vocabulary

MANIFEST = "manifest.tsv"
VOCAB_FILE = "vocab.txt"


def default_vocabulary() -> Vocabulary:
    return Vocabulary(rd.markup_tokens())


# ------------------------------------------------------------------ PGM

def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {img.shape}")
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pos += 1
    body = raw[pos:pos + w * h]
    if len(body) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


# ------------------------------------------------------------------ grammar

PRODUCTIONS = ("atom", "chain", "superscript", "subscript", "group", "fraction")


@dataclass
class GrammarConfig:
    max_depth: int = 3
    max_length: int = 20
    weights: dict = field(default_factory=lambda: {
        "atom": 0.30, "chain": 0.34, "superscript": 0.11,
        "subscript": 0.07, "group": 0.10, "fraction": 0.08,
    })

    def __post_init__(self):
        if set(self.weights) != set(PRODUCTIONS):
            raise ValueError(f"grammar weights must cover exactly {PRODUCTIONS}")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9 or min(self.weights.values()) < 0:
            raise ValueError(f"grammar weights must be a distribution (sum {total})")


ATOMS = rd.DIGITS + rd.LETTERS
OPS = rd.OPERATORS


def _expr(rng: np.random.Generator, g: GrammarConfig, depth: int) -> list[str]:
    if depth >= g.max_depth:
        return [str(rng.choice(ATOMS))]
    probs = np.array([g.weights[p] for p in PRODUCTIONS])
    kind = PRODUCTIONS[rng.choice(len(PRODUCTIONS), p=probs)]
    if kind == "atom":
        return [str(rng.choice(ATOMS))]
    if kind == "chain":
        return _expr(rng, g, depth + 1) + [str(rng.choice(OPS))] + _expr(rng, g, depth + 1)
    if kind in ("superscript", "subscript"):
        mark = "^" if kind == "superscript" else "_"
        return [str(rng.choice(ATOMS)), mark, "{"] + _expr(rng, g, depth + 1) + ["}"]
    if kind == "group":
        return ["("] + _expr(rng, g, depth + 1) + [")"]
    return ["\\frac", "{"] + _expr(rng, g, depth + 1) + ["}", "{"] + _expr(rng, g, depth + 1) + ["}"]


def sample_expression(seed, grammar: GrammarConfig | None = None) -> list[str]:
    """Draw one well-formed token sequence; over-long derivations are redrawn."""
    grammar = grammar or GrammarConfig()
    rng = np.random.default_rng(seed)
    while True:
        toks = _expr(rng, grammar, 0)
        if len(toks) <= grammar.max_length:
            return toks


# ------------------------------------------------------------------ samples

@dataclass
class ExprSample:
    id: str
    tokens: list[str]
    image: np.ndarray
    _patches: list | None = field(default=None, repr=False, compare=False)

    @property
    def patches(self) -> list[SymbolPatch]:
        if self._patches is None:
            self._patches = segment(self.image)
        return self._patches


def sample_id(index: int) -> str:
    return f"expr{index:06d}"


def make_sample(index: int, seed: int, grammar: GrammarConfig | None = None) -> ExprSample:
    toks = sample_expression([seed, index], grammar)
    return ExprSample(sample_id(index), toks, rd.render(toks, strict=True))


def generate(n: int, seed: int, grammar: GrammarConfig | None = None) -> list[ExprSample]:
    return [make_sample(i, seed, grammar) for i in range(n)]


def split_of(ids: Sequence[str], fractions=(0.8, 0.1, 0.1)) -> dict[str, str]:
    """Assign train/val/test by ranking ids on their SHA-256 digest."""
    ranked = sorted(ids, key=lambda s: hashlib.sha256(s.encode()).hexdigest())
    n = len(ranked)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    out = {}
    for i, sid in enumerate(ranked):
        out[sid] = "train" if i < n_train else "val" if i < n_train + n_val else "test"
    return out


def split_samples(samples: Sequence[ExprSample]) -> dict[str, list[ExprSample]]:
    which = split_of([s.id for s in samples])
    out = {"train": [], "val": [], "test": []}
    for s in samples:
        out[which[s.id]].append(s)
    return out


def build_dataset(n: int, seed: int, out_path, grammar: GrammarConfig | None = None) -> list[str]:
    """Write ``n`` samples as PGMs plus a manifest; returns the manifest lines."""
    if n < 1:
        raise ValueError("n must be at least 1")
    root = Path(out_path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in generate(n, seed, grammar):
        rel = f"images/{s.id}.pgm"
        write_pgm(root / rel, s.image)
        lines.append(f"{s.id}\t{rel}\t{' '.join(s.tokens)}")
    (root / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    default_vocabulary().save(root / VOCAB_FILE)
    return lines


class DatasetError(ValueError):
    pass


def load_dataset(path, vocab: Vocabulary | None = None) -> list[ExprSample]:
    root = Path(path)
    manifest = root / MANIFEST
    if not manifest.exists():
        raise DatasetError(f"no manifest at {manifest}")
    if vocab is None:
        vfile = root / VOCAB_FILE
        vocab = Vocabulary.load(vfile) if vfile.exists() else default_vocabulary()
    samples, seen = [], set()
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not parts[2].strip():
            raise DatasetError(f"{manifest}:{lineno}: expected 3 tab-separated fields")
        sid, rel, toks = parts[0], parts[1], parts[2].split()
        if sid in seen:
            raise DatasetError(f"{manifest}:{lineno}: duplicate id {sid}")
        seen.add(sid)
        bad = [t for t in toks if t not in vocab]
        if bad:
            raise DatasetError(f"{manifest}:{lineno}: tokens not in vocabulary: {bad}")
        img_path = root / rel
        if not img_path.exists():
            raise DatasetError(f"{manifest}:{lineno}: missing image {img_path}")
        samples.append(ExprSample(sid, toks, read_pgm(img_path)))
    return samples


# ------------------------------------------------------------------ model inputs

GLOBAL_HEIGHT = PATCH_SIZE


def global_view(img: np.ndarray, min_width: int = 8) -> np.ndarray:
    """Whole image rescaled to height 30 at preserved aspect ratio, values in [0, 1]."""
    h, w = img.shape
    new_w = max(min_width, int(round(w * GLOBAL_HEIGHT / h)))
    return resize_bilinear(np.asarray(img, dtype=np.float64) / 255.0, GLOBAL_HEIGHT, new_w)
