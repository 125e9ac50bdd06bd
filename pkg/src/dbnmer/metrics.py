"""BLEU-4, ROUGE-4 and rendered-image exact match (with and without blank columns)."""
from __future__ import annotations

import logging
import math
from collections import Counter
from typing import Sequence

import numpy as np

from .render import RenderError, render

log = logging.getLogger(__name__)

MAX_N = 4
METRIC_KEYS = ("bleu4", "rouge4", "match", "match_ws")


def ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(cand: Sequence, ref: Sequence, n: int) -> tuple[int, int, int]:
    """(clipped matches, candidate n-gram count, reference n-gram count)."""
    c, r = ngrams(cand, n), ngrams(ref, n)
    hit = sum(min(cnt, r[g]) for g, cnt in c.items())
    return hit, max(0, len(cand) - n + 1), max(0, len(ref) - n + 1)


def _bleu_from_counts(hits, totals, cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if any(t == 0 or h == 0 for h, t in zip(hits, totals)):
        return 0.0
    log_p = sum(math.log(h / t) for h, t in zip(hits, totals)) / MAX_N
    bp = math.exp(min(0.0, 1.0 - ref_len / cand_len))
    return bp * math.exp(log_p)


def bleu4(candidate: Sequence, reference: Sequence) -> float:
    """Unsmoothed sentence BLEU with n = 1..4 and the usual brevity penalty."""
    if len(candidate) == 0:
        log.warning("empty candidate scores BLEU 0")
        return 0.0
    counts = [_clipped_matches(candidate, reference, n) for n in range(1, MAX_N + 1)]
    return _bleu_from_counts([c[0] for c in counts], [c[1] for c in counts],
                             len(candidate), len(reference))


def rouge4(candidate: Sequence, reference: Sequence) -> float:
    """Clipped 4-gram recall; references shorter than 4 tokens score 0."""
    hit, _, ref_total = _clipped_matches(candidate, reference, 4)
    return hit / ref_total if ref_total else 0.0


def match_exact(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and bool(np.array_equal(a, b))


def strip_blank_columns(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    return img[:, (img != 0).any(axis=0)]


def match_ws(a: np.ndarray, b: np.ndarray) -> bool:
    """Exact match after deleting all-background columns; heights padded at the top."""
    a, b = strip_blank_columns(a), strip_blank_columns(b)
    if a.shape[1] != b.shape[1]:
        return False
    h = max(a.shape[0], b.shape[0])
    a = np.pad(a, ((h - a.shape[0], 0), (0, 0)))
    b = np.pad(b, ((h - b.shape[0], 0), (0, 0)))
    return bool(np.array_equal(a, b))


def _render_or_none(tokens):
    try:
        return render(tokens)
    except RenderError:
        return None


def pair_metrics(candidate: Sequence[str], reference: Sequence[str]) -> dict:
    ref_img = render(reference)
    cand_img = _render_or_none(candidate)
    ok = cand_img is not None
    return {
        "bleu4": bleu4(candidate, reference),
        "rouge4": rouge4(candidate, reference),
        "match": ok and match_exact(cand_img, ref_img),
        "match_ws": ok and match_ws(cand_img, ref_img),
    }


def corpus_bleu4(pairs: Sequence[tuple[Sequence, Sequence]]) -> float:
    """BLEU-4 with n-gram counts and lengths pooled over the corpus."""
    hits, totals = [0] * MAX_N, [0] * MAX_N
    cand_len = ref_len = 0
    for cand, ref in pairs:
        for n in range(1, MAX_N + 1):
            h, t, _ = _clipped_matches(cand, ref, n)
            hits[n - 1] += h
            totals[n - 1] += t
        cand_len += len(cand)
        ref_len += len(ref)
    return _bleu_from_counts(hits, totals, cand_len, ref_len)


def corpus_report(pairs: Sequence[tuple[Sequence[str], Sequence[str]]], pooled_bleu: bool = True,
                  per_sample: list | None = None) -> dict:
    """Percentages (two decimals) of the four metrics over (candidate, reference) pairs.

    When ``per_sample`` is a list, the individual pair scores are appended to it.
    """
    if not pairs:
        raise ValueError("corpus_report needs at least one pair")
    rows = [pair_metrics(c, r) for c, r in pairs]
    if per_sample is not None:
        per_sample.extend(rows)
    if pooled_bleu:
        bleu = corpus_bleu4(pairs)
    else:
        bleu = float(np.mean([r["bleu4"] for r in rows]))
    report = {
        "bleu4": bleu,
        "rouge4": float(np.mean([r["rouge4"] for r in rows])),
        "match": float(np.mean([r["match"] for r in rows])),
        "match_ws": float(np.mean([r["match_ws"] for r in rows])),
    }
    return {k: round(100.0 * v, 2) for k, v in report.items()}


def format_table(report: dict) -> str:
    return "".join(f"{k}\t{report[k]:.2f}\n" for k in METRIC_KEYS)
