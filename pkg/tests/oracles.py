"""Independent reference implementations used only by the tests.

Nothing here imports the code under test; each oracle restates the
definition in the most direct (slow) way available.
"""
from __future__ import annotations

import math
import sys

import numpy as np


# ---------------------------------------------------------------- connected components

def flood_fill_labels(binary: np.ndarray) -> tuple[np.ndarray, int]:
    """Recursive 8-connected flood fill, labels in raster order of first pixel."""
    h, w = binary.shape
    labels = np.zeros((h, w), dtype=int)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * h * w + 100))

    def fill(y, x, lab):
        if y < 0 or y >= h or x < 0 or x >= w:
            return
        if not binary[y, x] or labels[y, x]:
            return
        labels[y, x] = lab
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy or dx:
                    fill(y + dy, x + dx, lab)

    n = 0
    try:
        for y in range(h):
            for x in range(w):
                if binary[y, x] and not labels[y, x]:
                    n += 1
                    fill(y, x, n)
    finally:
        sys.setrecursionlimit(old)
    return labels, n


def partition(labels: np.ndarray) -> set[frozenset]:
    """Label-free view: the set of pixel sets."""
    out = {}
    for (y, x), v in np.ndenumerate(labels):
        if v:
            out.setdefault(v, set()).add((y, x))
    return {frozenset(s) for s in out.values()}


def union_find_groups(intervals: list[tuple[int, int]], threshold: float) -> list[set[int]]:
    """Connected groups of the 'overlap ratio > threshold' graph by repeated BFS."""
    n = len(intervals)

    def ratio(a, b):
        inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
        if inter <= 0:
            return 0.0
        return inter / min(a[1] - a[0] + 1, b[1] - b[0] + 1)

    adj = [[j for j in range(n) if j != i and ratio(intervals[i], intervals[j]) > threshold]
           for i in range(n)]
    seen, groups = set(), []
    for i in range(n):
        if i in seen:
            continue
        stack, g = [i], set()
        while stack:
            k = stack.pop()
            if k in g:
                continue
            g.add(k)
            stack.extend(adj[k])
        seen |= g
        groups.append(g)
    return groups


# ---------------------------------------------------------------- bilinear

def bilinear_point(img: np.ndarray, out_h: int, out_w: int, i: int, j: int) -> float:
    """One output pixel from the half-pixel-centre bilinear formula."""
    h, w = img.shape
    sy = min(max((i + 0.5) * h / out_h - 0.5, 0.0), h - 1)
    sx = min(max((j + 0.5) * w / out_w - 0.5, 0.0), w - 1)
    y0, x0 = int(math.floor(sy)), int(math.floor(sx))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    ay, ax = sy - y0, sx - x0
    return ((1 - ay) * ((1 - ax) * img[y0, x0] + ax * img[y0, x1])
            + ay * ((1 - ax) * img[y1, x0] + ax * img[y1, x1]))


# ---------------------------------------------------------------- n-gram metrics

def _grams(seq, n):
    return [tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)]


def clipped_count(cand, ref, n):
    """Clipped matches by explicit removal from a copy of the reference list."""
    pool = list(_grams(ref, n))
    hit = 0
    for g in _grams(cand, n):
        if g in pool:
            pool.remove(g)
            hit += 1
    return hit


def bleu4_bruteforce(cand, ref) -> float:
    if not cand:
        return 0.0
    precisions = []
    for n in range(1, 5):
        total = len(_grams(cand, n))
        hit = clipped_count(cand, ref, n)
        if total == 0 or hit == 0:
            return 0.0
        precisions.append(hit / total)
    geo = math.prod(precisions) ** 0.25
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * geo


def rouge4_bruteforce(cand, ref) -> float:
    total = len(_grams(ref, 4))
    if total == 0:
        return 0.0
    return clipped_count(cand, ref, 4) / total


def corpus_bleu4_bruteforce(pairs) -> float:
    hits, totals = [0] * 4, [0] * 4
    clen = rlen = 0
    for cand, ref in pairs:
        for n in range(1, 5):
            hits[n - 1] += clipped_count(cand, ref, n)
            totals[n - 1] += len(_grams(cand, n))
        clen += len(cand)
        rlen += len(ref)
    if clen == 0 or any(h == 0 or t == 0 for h, t in zip(hits, totals)):
        return 0.0
    geo = math.prod(h / t for h, t in zip(hits, totals)) ** 0.25
    bp = 1.0 if clen >= rlen else math.exp(1 - rlen / clen)
    return bp * geo


# ---------------------------------------------------------------- context coupling

def ccm_double_loop(L, G, theta_w, theta_b, phi_w, phi_b, g_w, g_b, normalize=True):
    """y_i = 1/C(L) * sum_j softmax_j(theta(L_i) . phi(G_j)) * g(G_j) with explicit loops.

    L is (C, H1, W1), G is (C, H0, W0); 1×1 conv weights are (C, C, 1, 1).
    Returns (weights (H1*W1, H0*W0), y (C, H1, W1)).
    """
    C, H1, W1 = L.shape
    _, H0, W0 = G.shape
    locs = [(a, b) for a in range(H1) for b in range(W1)]
    globs = [(a, b) for a in range(H0) for b in range(W0)]

    def conv1(w, b, X, pos):
        return [sum(w[o, c, 0, 0] * X[c, pos[0], pos[1]] for c in range(C)) + b[o] for o in range(C)]

    th = [conv1(theta_w, theta_b, L, p) for p in locs]
    ph = [conv1(phi_w, phi_b, G, p) for p in globs]
    gg = [conv1(g_w, g_b, G, p) for p in globs]
    weights = np.zeros((len(locs), len(globs)))
    y = np.zeros((C, H1, W1))
    norm = C if normalize else 1
    for i, p in enumerate(locs):
        scores = [sum(th[i][c] * ph[j][c] for c in range(C)) for j in range(len(globs))]
        m = max(scores)
        ex = [math.exp(s - m) for s in scores]
        tot = sum(ex)
        for j in range(len(globs)):
            weights[i, j] = ex[j] / tot
        for c in range(C):
            y[c, p[0], p[1]] = sum(weights[i, j] * gg[j][c] for j in range(len(globs))) / norm
    return weights, y


# ---------------------------------------------------------------- dynamic soft targets

def dst_list_average(prev_S: np.ndarray, records, beta: float, temperature: float, reserved=(0, 1, 2)):
    """Keep every correctly predicted token's softened distribution in a list, average at the end.

    ``records`` is an iterable of (logits vector, target id).
    """
    K = prev_S.shape[0]
    per_class = {k: [] for k in range(K)}
    for z, t in records:
        z = np.asarray(z, dtype=float)
        if int(np.argmax(z)) != t:
            continue
        e = [math.exp((v - max(z)) / temperature) for v in z]
        s = sum(e)
        per_class[t].append([v / s for v in e])
    S = prev_S.copy()
    for k in range(K):
        if k in reserved or not per_class[k]:
            continue
        avg = np.mean(np.array(per_class[k]), axis=0)
        S[:, k] = beta * prev_S[:, k] + (1 - beta) * avg
    return S
