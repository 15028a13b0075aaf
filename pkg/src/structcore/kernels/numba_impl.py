"""Numba-jitted kernel implementations (default path).

Parallelism is only ever over independent output rows, so results are
bitwise identical for any thread count. No fastmath: IEEE semantics keep
the two backends within rounding noise of each other.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def knn_mean_sqdist(queries, bank, k):
    p, d = queries.shape
    n = bank.shape[0]
    kk = min(k, n)
    bank_sq = np.empty(n, dtype=np.float64)
    for j in prange(n):
        acc = 0.0
        for c in range(d):
            v = np.float64(bank[j, c])
            acc += v * v
        bank_sq[j] = acc
    out = np.empty(p, dtype=np.float64)
    for i in prange(p):
        q_sq = 0.0
        for c in range(d):
            v = np.float64(queries[i, c])
            q_sq += v * v
        # insertion buffer of the kk smallest distances, kept sorted
        best = np.full(kk, np.inf, dtype=np.float64)
        for j in range(n):
            dot = 0.0
            for c in range(d):
                dot += np.float64(queries[i, c]) * np.float64(bank[j, c])
            d2 = q_sq + bank_sq[j] - 2.0 * dot
            if d2 < 0.0:
                d2 = 0.0
            if d2 < best[kk - 1]:
                pos = kk - 1
                while pos > 0 and best[pos - 1] > d2:
                    best[pos] = best[pos - 1]
                    pos -= 1
                best[pos] = d2
        acc = 0.0
        for j in range(kk):
            acc += best[j]
        out[i] = acc / kk
    return out


@njit(cache=True, parallel=True)
def _update_min_d2(points, center_idx, min_d2):
    t, d = points.shape
    for i in prange(t):
        if min_d2[i] < 0.0:
            continue
        acc = 0.0
        for c in range(d):
            diff = points[i, c] - points[center_idx, c]
            acc += diff * diff
        if acc < min_d2[i]:
            min_d2[i] = acc


@njit(cache=True)
def _argmax_first(a):
    best = a[0]
    idx = 0
    for i in range(1, a.shape[0]):
        if a[i] > best:
            best = a[i]
            idx = i
    return idx


def kcenter_greedy(points, m):
    t = points.shape[0]
    selected = np.empty(m, dtype=np.int64)
    selected[0] = 0
    min_d2 = np.full(t, np.inf, dtype=np.float64)
    _update_min_d2(points, 0, min_d2)
    min_d2[0] = -1.0
    for i in range(1, m):
        nxt = int(_argmax_first(min_d2))
        selected[i] = nxt
        _update_min_d2(points, nxt, min_d2)
        min_d2[nxt] = -1.0
    return selected


@njit(cache=True, parallel=True)
def bilinear_upsample(src, out_h, out_w):
    h, w = src.shape
    scale_y = h / out_h
    scale_x = w / out_w
    out = np.empty((out_h, out_w), dtype=np.float64)
    for i in prange(out_h):
        sy = (i + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1.0:
            sy = h - 1.0
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(out_w):
            sx = (j + 0.5) * scale_x - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1.0:
                sx = w - 1.0
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            a = src[y0, x0]
            b = src[y0, x1]
            c = src[y1, x0]
            d = src[y1, x1]
            top = a + fx * (b - a)
            bot = c + fx * (d - c)
            out[i, j] = top + fy * (bot - top)
    return out


@njit(cache=True)
def _reflect(i, n):
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        else:
            i = 2 * n - 1 - i
    return i


@njit(cache=True, parallel=True)
def gaussian_blur(img, kern):
    h, w = img.shape
    taps = kern.shape[0]
    r = (taps - 1) // 2
    tmp = np.empty_like(img)
    for i in prange(h):
        for j in range(w):
            acc = 0.0
            for t in range(taps):
                acc += img[i, _reflect(j + t - r, w)] * kern[t]
            tmp[i, j] = acc
    out = np.empty_like(img)
    for i in prange(h):
        for j in range(w):
            acc = 0.0
            for t in range(taps):
                acc += tmp[_reflect(i + t - r, h), j] * kern[t]
            out[i, j] = acc
    return out


@njit(cache=True, parallel=True)
def matmul_f64acc(a, b):
    n, m = a.shape
    k = b.shape[1]
    out = np.empty((n, k), dtype=np.float32)
    for i in prange(n):
        for j in range(k):
            acc = 0.0
            for c in range(m):
                acc += np.float64(a[i, c]) * np.float64(b[c, j])
            out[i, j] = np.float32(acc)
    return out


@njit(cache=True, parallel=True)
def _min_sqdist_per_patch(patches, protos, out):
    p, d = patches.shape
    n = protos.shape[0]
    for i in prange(p):
        best = np.inf
        for j in range(n):
            acc = 0.0
            for c in range(d):
                diff = np.float64(patches[i, c]) - np.float64(protos[j, c])
                acc += diff * diff
            if acc < best:
                best = acc
        out[i] = best


def routing_mean_min_sqdist(patches, protos):
    out = np.empty(patches.shape[0], dtype=np.float64)
    _min_sqdist_per_patch(patches, protos, out)
    acc = 0.0
    for v in out:
        acc += v
    return float(acc / out.shape[0])
