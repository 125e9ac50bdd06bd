"""Procedural glyphs and a deterministic box-layout renderer for the synthetic grammar.

Markup: glyph tokens draw a 12×12 bitmap; ``^ { .. }`` and ``_ { .. }``
raise or lower their argument; ``\\frac { .. } { .. }`` stacks two rows
around a bar; bare ``{ .. }`` only groups.  Layout is baseline anchored.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

INK = 255
SCALE = 2
GAP = 2
SCRIPT_SHIFT = 6
FRAC_PAD = 2
BAR = 2
MARGIN = 4

_ART = {
    "0": [".####.", "#...##", "#..#.#", "#.#..#", "##...#", ".####."],
    "1": ["..#...", ".##...", "..#...", "..#...", "..#...", ".###.."],
    "2": [".###..", "#...#.", "...#..", "..#...", ".#....", "#####."],
    "3": ["####..", "....#.", ".###..", "....#.", "....#.", "####.."],
    "4": ["...#..", "..##..", ".#.#..", "#..#..", "#####.", "...#.."],
    "5": ["#####.", "#.....", "####..", "....#.", "....#.", "####.."],
    "6": [".###..", "#.....", "####..", "#...#.", "#...#.", ".###.."],
    "7": ["#####.", "....#.", "...#..", "..#...", "..#...", "..#..."],
    "8": [".###..", "#...#.", ".###..", "#...#.", "#...#.", ".###.."],
    "9": [".###..", "#...#.", "#...#.", ".####.", "....#.", ".###.."],
    "a": ["......", ".###..", "....#.", ".####.", "#...#.", ".####."],
    "b": ["#.....", "#.....", "####..", "#...#.", "#...#.", "####.."],
    "c": ["......", "......", ".###..", "#.....", "#.....", ".###.."],
    "C": [".####.", "#.....", "#.....", "#.....", "#.....", ".####."],
    "i": ["..#...", "......", ".##...", "..#...", "..#...", ".###.."],
    "n": ["......", "......", "####..", "#...#.", "#...#.", "#...#."],
    "o": ["......", "......", ".###..", "#...#.", "#...#.", ".###.."],
    "O": [".####.", "#....#", "#....#", "#....#", "#....#", ".####."],
    "s": ["......", ".###..", "#.....", ".##...", "...#..", "###..."],
    "S": [".####.", "#.....", ".###..", "....#.", "....#.", "####.."],
    "x": ["......", "#...#.", ".#.#..", "..#...", ".#.#..", "#...#."],
    "y": ["......", "#...#.", "#...#.", ".####.", "....#.", ".###.."],
    "+": ["......", "..#...", "..#...", "#####.", "..#...", "..#..."],
    "-": ["......", "......", "......", "#####.", "......", "......"],
    "=": ["......", "......", "#####.", "......", "#####.", "......"],
    "(": ["...#..", "..#...", ".#....", ".#....", "..#...", "...#.."],
    ")": [".#....", "..#...", "...#..", "...#..", "..#...", ".#...."],
    "/": ["....#.", "....#.", "...#..", "..#...", ".#....", ".#...."],
}

DIGITS = tuple("0123456789")
LETTERS = ("a", "b", "c", "C", "i", "n", "o", "O", "s", "S", "x", "y")
OPERATORS = ("+", "-", "=", "/")
PARENS = ("(", ")")
STRUCTURAL = ("^", "_", "{", "}", "\\frac")
MULTI_PART = ("=", "i")
CASE_PAIRS = (("c", "C"), ("o", "O"), ("s", "S"))


class RenderError(ValueError):
    pass


def _bitmap(rows: Sequence[str]) -> np.ndarray:
    base = np.array([[c == "#" for c in r] for r in rows], dtype=np.uint8)
    return np.kron(base, np.ones((SCALE, SCALE), dtype=np.uint8)) * INK


GLYPHS: dict[str, np.ndarray] = {tok: _bitmap(rows) for tok, rows in _ART.items()}
GLYPH_H, GLYPH_W = next(iter(GLYPHS.values())).shape


def glyph_tokens() -> list[str]:
    return list(GLYPHS)


def markup_tokens() -> list[str]:
    """Every non-reserved token of the synthetic markup language, in vocabulary order."""
    return list(DIGITS) + list(LETTERS) + list(OPERATORS) + list(PARENS) + list(STRUCTURAL)


# ------------------------------------------------------------------ layout tree

@dataclass
class Glyph:
    tok: str


@dataclass
class Row:
    items: list = field(default_factory=list)


@dataclass
class Script:
    base: object
    kind: str  # "^" or "_"
    body: Row


@dataclass
class Frac:
    num: Row
    den: Row


class _Parser:
    def __init__(self, tokens: Sequence[str], strict: bool):
        self.toks = list(tokens)
        self.i = 0
        self.strict = strict

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def fail(self, msg):
        if self.strict:
            raise RenderError(msg)

    def row(self, closing: bool) -> Row:
        row = Row()
        while True:
            tok = self.peek()
            if tok is None:
                if closing:
                    self.fail("missing '}'")
                return row
            if tok == "}":
                if closing:
                    self.i += 1
                    return row
                self.fail("unbalanced '}'")
                self.i += 1
                continue
            node = self.atom()
            if node is None:
                continue
            while self.peek() in ("^", "_"):
                kind = self.toks[self.i]
                self.i += 1
                node = Script(node, kind, self.argument())
            row.items.append(node)

    def argument(self) -> Row:
        tok = self.peek()
        if tok == "{":
            self.i += 1
            return self.row(closing=True)
        self.fail("script or fraction argument without braces")
        if tok is None or tok == "}":
            return Row()
        node = self.atom()
        return Row([node] if node is not None else [])

    def atom(self):
        tok = self.toks[self.i]
        self.i += 1
        if tok == "{":
            return self.row(closing=True)
        if tok == "\\frac":
            return Frac(self.argument(), self.argument())
        if tok in ("^", "_"):
            self.fail(f"dangling {tok!r}")
            return None
        if tok not in GLYPHS:
            raise RenderError(f"token {tok!r} has no glyph")
        return Glyph(tok)


def parse(tokens: Sequence[str], strict: bool = False) -> Row:
    for t in tokens:
        if t not in GLYPHS and t not in STRUCTURAL:
            raise RenderError(f"token {t!r} has no glyph")
    p = _Parser(tokens, strict)
    return p.row(closing=False)


# ------------------------------------------------------------------ boxes

@dataclass
class _Box:
    """Ink placed relative to a baseline: ``h`` rows, baseline at row ``base``."""
    w: int
    h: int
    base: int
    ink: list  # (token, x, y, bitmap)


def _place(box: _Box, dx: int, dy: int) -> list:
    return [(t, x + dx, y + dy, bm) for t, x, y, bm in box.ink]


def _hcat(boxes: list[_Box]) -> _Box:
    boxes = [b for b in boxes if b.w > 0]
    if not boxes:
        return _Box(0, 0, 0, [])
    asc = max(b.base for b in boxes)
    desc = max(b.h - b.base for b in boxes)
    ink, x = [], 0
    for b in boxes:
        ink += _place(b, x, asc - b.base)
        x += b.w + GAP
    return _Box(x - GAP, asc + desc, asc, ink)


def _layout(node) -> _Box:
    if isinstance(node, Glyph):
        bm = GLYPHS[node.tok]
        return _Box(GLYPH_W, GLYPH_H, GLYPH_H, [(node.tok, 0, 0, bm)])
    if isinstance(node, Row):
        return _hcat([_layout(n) for n in node.items])
    if isinstance(node, Script):
        base = _layout(node.base)
        body = _layout(node.body)
        if body.w == 0:
            return base
        shift = SCRIPT_SHIFT if node.kind == "^" else -SCRIPT_SHIFT
        # pretend the script's baseline sits `shift` rows above the base's
        lifted = _Box(body.w, body.h, body.base + shift, body.ink)
        return _hcat([base, lifted])
    if isinstance(node, Frac):
        num, den = _layout(node.num), _layout(node.den)
        w = max(num.w, den.w, GLYPH_W) + 2 * FRAC_PAD
        bar_y = num.h + FRAC_PAD
        ink = _place(num, (w - num.w) // 2, 0)
        bar = np.full((BAR, w), INK, dtype=np.uint8)
        ink.append(("\\frac", 0, bar_y, bar))
        ink += _place(den, (w - den.w) // 2, bar_y + BAR + FRAC_PAD)
        h = bar_y + BAR + FRAC_PAD + max(den.h, 0)
        return _Box(w, h, bar_y + GLYPH_H // 2, ink)
    raise TypeError(node)


@dataclass
class Rendered:
    image: np.ndarray
    glyph_boxes: list  # (token, x_min, y_min, x_max, y_max) of every inked piece
    groups: int  # expected symbol count after fragment merging


def _count_groups(node, in_frac: bool = False) -> int:
    if isinstance(node, Glyph):
        return 0 if in_frac else 1
    if isinstance(node, Row):
        return sum(_count_groups(n, in_frac) for n in node.items)
    if isinstance(node, Script):
        return _count_groups(node.base, in_frac) + _count_groups(node.body, in_frac)
    if isinstance(node, Frac):
        return 0 if in_frac else 1
    raise TypeError(node)


def render_full(tokens: Sequence[str], strict: bool = False) -> Rendered:
    tree = parse(tokens, strict)
    box = _layout(tree)
    h, w = box.h + 2 * MARGIN, box.w + 2 * MARGIN
    img = np.zeros((h, w), dtype=np.uint8)
    boxes = []
    for tok, x, y, bm in box.ink:
        x, y = x + MARGIN, y + MARGIN
        bh, bw = bm.shape
        np.maximum(img[y:y + bh, x:x + bw], bm, out=img[y:y + bh, x:x + bw])
        ys, xs = np.nonzero(bm)
        boxes.append((tok, x + int(xs.min()), y + int(ys.min()), x + int(xs.max()), y + int(ys.max())))
    return Rendered(img, boxes, _count_groups(tree))


def render(tokens: Sequence[str], strict: bool = False) -> np.ndarray:
    """Binary (0/255) uint8 image of a markup token sequence."""
    return render_full(tokens, strict).image
