"""Token vocabulary with fixed reserved ids."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

PAD, SOS, EOS = "<pad>", "<sos>", "<eos>"
PAD_ID, SOS_ID, EOS_ID = 0, 1, 2
RESERVED = (PAD, SOS, EOS)


class Vocabulary:
    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        if tuple(tokens[:3]) != RESERVED:
            tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, tok: str) -> int:
        try:
            return self.index[tok]
        except KeyError:
            raise KeyError(f"token {tok!r} not in vocabulary") from None

    def encode(self, tokens: Sequence[str], sentinels: bool = True) -> list[int]:
        ids = [self.id(t) for t in tokens]
        return [SOS_ID] + ids + [EOS_ID] if sentinels else ids

    def decode(self, ids: Sequence[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i in (PAD_ID, SOS_ID):
                continue
            if strip and i == EOS_ID:
                break
            out.append(self.tokens[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)
